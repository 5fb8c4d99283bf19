//! Limit interfaces with multiplicities, diffuse measures of solutions,
//! tensor pairings and the first and second variations of the limit
//! varifold.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::ConformalTorus;

mod extract;
mod measures;

pub use extract::{extract_interface, multiplicity_from_ratio, TUBE_RADIUS};
pub use measures::{
    diffuse_measures, first_variation_varifold, limit_second_variation, limit_tensor_pairing,
    q_form, second_variation_varifold, tensor_pairing, DiffuseMeasures, LimitSecondVariation,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentKind {
    ClosedCurve,
    Slice { axis: usize, offset: f64 },
}

/// One connected component of the interface, sampled at uniform intrinsic
/// spacing. Curves have one parameter direction, planar slices in 3D two.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterfaceComponent {
    pub kind: ComponentKind,
    pub multiplicity: u32,
    /// nodes per parameter direction (odd for curves)
    pub param_counts: Vec<usize>,
    /// intrinsic period of each parameter direction
    pub param_lengths: Vec<f64>,
    /// positions, unwrapped along the component
    pub nodes: Vec<[f64; 3]>,
    /// lattice translation closing the curve: node N = node 0 + closing
    pub closing: [f64; 3],
    /// g-unit tangents per parameter direction
    pub tangents: Vec<Vec<[f64; 3]>>,
    pub normals: Vec<[f64; 3]>,
    /// scalar second fundamental form (signed geodesic curvature for curves)
    #[serde(rename = "A")]
    pub second_fundamental: Vec<f64>,
    /// Gaussian curvature of the ambient metric at the nodes
    pub gauss: Vec<f64>,
    /// e^{2φ} at the nodes
    pub metric_factor: Vec<f64>,
    pub length_or_area: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Interface {
    pub components: Vec<InterfaceComponent>,
    pub sigma: f64,
}

/// Odd node count closest to `length / spacing`, at least 9.
pub fn odd_count(length: f64, spacing: f64) -> usize {
    let n = ((length / spacing).round() as usize).max(9);
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

fn g_norm(m: &ConformalTorus, x: &[f64; 3], v: &[f64; 3]) -> f64 {
    let (p, _, _) = m.phi_jets(x);
    let e: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    e * p.exp()
}

/// `∫_0^x e^{φ(c e_axis + t e_other)} dt` by composite Gauss-Legendre.
fn slice_arclength(m: &ConformalTorus, axis: usize, offset: f64, other: usize, x: f64) -> f64 {
    const NODES: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    if m.flat {
        return x;
    }
    let panels = ((x.abs() * 256.0).ceil() as usize).max(1);
    let w = x / panels as f64;
    let mut s = 0.0;
    let mut pt = [0.0; 3];
    pt[axis] = offset;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * w;
        for (t, wt) in NODES.iter().zip(WEIGHTS) {
            pt[other] = mid + 0.5 * w * t;
            s += 0.5 * w * wt * m.phi_jets(&pt).0.exp();
        }
    }
    s
}

impl InterfaceComponent {
    /// The coordinate slice `{x_axis = offset}`, sampled at about the grid
    /// spacing (or `nodes` per direction). Normal is `+e_axis`.
    pub fn slice(
        m: &ConformalTorus,
        axis: usize,
        offset: f64,
        multiplicity: u32,
        nodes: Option<usize>,
    ) -> Result<Self> {
        let dim = m.dim();
        if axis >= dim {
            return invalid(format!("axis {axis} out of range"));
        }
        if multiplicity == 0 {
            return invalid("multiplicity must be positive");
        }
        let h = m.grid.max_spacing();
        let others: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
        if dim == 2 {
            let o = others[0];
            let lo = m.grid.lengths[o];
            let total = slice_arclength(m, axis, offset, o, lo);
            let n = nodes.unwrap_or_else(|| odd_count(total, h));
            let mut pts = Vec::with_capacity(n);
            for k in 0..n {
                let target = total * k as f64 / n as f64;
                // Newton on s(x) = target, s' = e^φ
                let mut x = lo * k as f64 / n as f64;
                for _ in 0..50 {
                    let mut p = [0.0; 3];
                    p[axis] = offset;
                    p[o] = x;
                    let r = slice_arclength(m, axis, offset, o, x) - target;
                    let step = r / m.phi_jets(&p).0.exp();
                    x -= step;
                    if step.abs() < 1e-15 {
                        break;
                    }
                }
                let mut p = [0.0; 3];
                p[axis] = offset;
                p[o] = x;
                pts.push(p);
            }
            let mut closing = [0.0; 3];
            closing[o] = lo;
            let mut comp = Self::assemble(m, ComponentKind::Slice { axis, offset }, multiplicity, pts, closing, vec![n], vec![total]);
            // exact tangent and normal directions
            for (i, p) in comp.nodes.iter().enumerate() {
                let (phi, dphi, _) = m.phi_jets(p);
                let mut t = [0.0; 3];
                t[o] = (-phi).exp();
                let mut nn = [0.0; 3];
                nn[axis] = (-phi).exp();
                comp.tangents[0][i] = t;
                comp.normals[i] = nn;
                comp.second_fundamental[i] = -(-phi).exp() * dphi[axis];
            }
            Ok(comp)
        } else {
            if !m.flat {
                return invalid("slices in dimension 3 require a flat metric");
            }
            let (b, c) = (others[0], others[1]);
            let (lb, lc) = (m.grid.lengths[b], m.grid.lengths[c]);
            let nb = nodes.unwrap_or_else(|| odd_count(lb, h));
            let nc = nodes.unwrap_or_else(|| odd_count(lc, h));
            let mut pts = Vec::with_capacity(nb * nc);
            for i in 0..nb {
                for j in 0..nc {
                    let mut p = [0.0; 3];
                    p[axis] = offset;
                    p[b] = lb * i as f64 / nb as f64;
                    p[c] = lc * j as f64 / nc as f64;
                    pts.push(p);
                }
            }
            let count = pts.len();
            let mut tb = [0.0; 3];
            tb[b] = 1.0;
            let mut tc = [0.0; 3];
            tc[c] = 1.0;
            let mut nn = [0.0; 3];
            nn[axis] = 1.0;
            Ok(InterfaceComponent {
                kind: ComponentKind::Slice { axis, offset },
                multiplicity,
                param_counts: vec![nb, nc],
                param_lengths: vec![lb, lc],
                nodes: pts,
                closing: [0.0; 3],
                tangents: vec![vec![tb; count], vec![tc; count]],
                normals: vec![nn; count],
                second_fundamental: vec![0.0; count],
                gauss: vec![0.0; count],
                metric_factor: vec![1.0; count],
                length_or_area: lb * lc,
            })
        }
    }

    /// Closed curve through the polyline `points` (unwrapped, last point not
    /// repeated, `points[0] + closing` following the last), resampled at
    /// uniform g-arclength with about `spacing` between nodes.
    pub fn closed_curve(
        m: &ConformalTorus,
        points: &[[f64; 3]],
        closing: [f64; 3],
        multiplicity: u32,
        spacing: f64,
    ) -> Result<Self> {
        if m.dim() != 2 {
            return invalid("closed curves are supported in dimension 2");
        }
        if multiplicity == 0 {
            return invalid("multiplicity must be positive");
        }
        if points.len() < 3 {
            return invalid("a closed curve needs at least 3 points");
        }
        let (pts, total) = resample_closed(m, points, &closing, spacing, None);
        let n = pts.len();
        Ok(Self::assemble(m, ComponentKind::ClosedCurve, multiplicity, pts, closing, vec![n], vec![total]))
    }

    /// Circle of Euclidean radius `r` sampled at `n` equally spaced angles
    /// (uniform g-arclength on flat metrics only).
    pub fn circle(m: &ConformalTorus, center: [f64; 2], r: f64, multiplicity: u32, n: usize) -> Result<Self> {
        if !m.flat {
            return invalid("exact circles are sampled on flat metrics only");
        }
        if n < 9 || !(r > 0.0) {
            return invalid("need r > 0 and at least 9 nodes");
        }
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [center[0] + r * t.cos(), center[1] + r * t.sin(), 0.0]
            })
            .collect();
        let mut comp = Self::assemble(
            m,
            ComponentKind::ClosedCurve,
            multiplicity,
            pts,
            [0.0; 3],
            vec![n],
            vec![2.0 * std::f64::consts::PI * r],
        );
        for k in 0..n {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            comp.tangents[0][k] = [-t.sin(), t.cos(), 0.0];
            comp.normals[k] = [-t.cos(), -t.sin(), 0.0];
            comp.second_fundamental[k] = 1.0 / r;
        }
        Ok(comp)
    }

    /// Fills tangents, normals and curvature of a 2D curve from its nodes.
    fn assemble(
        m: &ConformalTorus,
        kind: ComponentKind,
        multiplicity: u32,
        pts: Vec<[f64; 3]>,
        closing: [f64; 3],
        param_counts: Vec<usize>,
        param_lengths: Vec<f64>,
    ) -> Self {
        let n = pts.len();
        let mut tangents = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut curv = Vec::with_capacity(n);
        let mut gauss = Vec::with_capacity(n);
        let mut factor = Vec::with_capacity(n);
        for i in 0..n {
            let (prev, next) = neighbours(&pts, &closing, i);
            let p = pts[i];
            let a = [p[0] - prev[0], p[1] - prev[1]];
            let b = [next[0] - p[0], next[1] - p[1]];
            let c = [next[0] - prev[0], next[1] - prev[1]];
            let la = a[0].hypot(a[1]);
            let lb = b[0].hypot(b[1]);
            let lc = c[0].hypot(c[1]);
            let tau = [c[0] / lc, c[1] / lc];
            let nrm = [-tau[1], tau[0]];
            let ke = 2.0 * (a[0] * b[1] - a[1] * b[0]) / (la * lb * lc);
            let (phi, dphi, _) = m.phi_jets(&p);
            let s = (-phi).exp();
            tangents.push([tau[0] * s, tau[1] * s, 0.0]);
            normals.push([nrm[0] * s, nrm[1] * s, 0.0]);
            curv.push(s * (ke - (nrm[0] * dphi[0] + nrm[1] * dphi[1])));
            gauss.push(m.gauss_at(&p));
            factor.push((2.0 * phi).exp());
        }
        InterfaceComponent {
            kind,
            multiplicity,
            param_counts,
            length_or_area: param_lengths.iter().product(),
            param_lengths,
            nodes: pts,
            closing,
            tangents: vec![tangents],
            normals,
            second_fundamental: curv,
            gauss,
            metric_factor: factor,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature weight of every node (uniform intrinsic sampling).
    pub fn weight(&self) -> f64 {
        self.length_or_area / self.nodes.len() as f64
    }

    /// `Ric(n, n)` at the nodes; the metric is conformal to flat, so in
    /// two dimensions this is the Gaussian curvature.
    pub fn ricci_nn(&self) -> &[f64] {
        &self.gauss
    }

    pub fn flip_normal(&mut self) {
        for n in self.normals.iter_mut() {
            for c in n.iter_mut() {
                *c = -*c;
            }
        }
        for a in self.second_fundamental.iter_mut() {
            *a = -*a;
        }
    }

    /// Largest deviation of `|n|_g` from 1.
    pub fn normal_defect(&self) -> f64 {
        self.normals
            .iter()
            .zip(&self.metric_factor)
            .map(|(n, g)| ((n.iter().map(|c| c * c).sum::<f64>() * g).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn neighbours(pts: &[[f64; 3]], closing: &[f64; 3], i: usize) -> ([f64; 3], [f64; 3]) {
    let n = pts.len();
    let shift = |p: [f64; 3], s: f64| [p[0] + s * closing[0], p[1] + s * closing[1], p[2] + s * closing[2]];
    let prev = if i == 0 { shift(pts[n - 1], -1.0) } else { pts[i - 1] };
    let next = if i + 1 == n { shift(pts[0], 1.0) } else { pts[i + 1] };
    (prev, next)
}

/// G-length of the segment `a -> b` by Simpson's rule on `e^φ`.
fn segment_length(m: &ConformalTorus, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    if m.flat {
        return (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    }
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    (g_norm(m, a, &d) + 4.0 * g_norm(m, &mid, &d) + g_norm(m, b, &d)) / 6.0
}

/// Uniform g-arclength resampling of a closed polyline; `project` is
/// applied to every new node. Returns the nodes and the total length.
pub(crate) fn resample_closed(
    m: &ConformalTorus,
    points: &[[f64; 3]],
    closing: &[f64; 3],
    spacing: f64,
    project: Option<&dyn Fn(&mut [f64; 3])>,
) -> (Vec<[f64; 3]>, f64) {
    let n = points.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        let (_, next) = neighbours(points, closing, i);
        let l = segment_length(m, &points[i], &next);
        cum.push(cum[i] + l);
    }
    let total = cum[n];
    let count = odd_count(total, spacing);
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = total * k as f64 / count as f64;
        while seg + 1 < n && cum[seg + 1] <= s {
            seg += 1;
        }
        let (_, next) = neighbours(points, closing, seg);
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let a = points[seg];
        let mut p = [
            a[0] + t * (next[0] - a[0]),
            a[1] + t * (next[1] - a[1]),
            a[2] + t * (next[2] - a[2]),
        ];
        if let Some(f) = project {
            f(&mut p);
        }
        out.push(p);
    }
    (out, total)
}

impl Interface {
    pub fn new(components: Vec<InterfaceComponent>, sigma: f64) -> Self {
        Interface { components, sigma }
    }

    /// Coordinate slices `{x_axis = offset_j}` with the given multiplicities.
    pub fn slices(
        m: &ConformalTorus,
        axis: usize,
        offsets: &[f64],
        multiplicities: &[u32],
        sigma: f64,
    ) -> Result<Self> {
        if offsets.len() != multiplicities.len() {
            return invalid("one multiplicity per slice is required");
        }
        let components = offsets
            .iter()
            .zip(multiplicities)
            .map(|(&o, &mj)| InterfaceComponent::slice(m, axis, o, mj, None))
            .collect::<Result<Vec<_>>>()?;
        Ok(Interface { components, sigma })
    }

    /// `Σ m_j |Γ_j|`.
    pub fn weighted_size(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.multiplicity as f64 * c.length_or_area)
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{TorusGrid, TrigScalar};

    fn flat(n: usize) -> ConformalTorus {
        ConformalTorus::flat(TorusGrid::unit(2, n).unwrap())
    }

    #[test]
    fn flat_slice_is_a_unit_circle() {
        let m = flat(64);
        let c = InterfaceComponent::slice(&m, 0, 0.25, 1, None).unwrap();
        assert_eq!(c.len() % 2, 1);
        assert!((c.length_or_area - 1.0).abs() < 1e-14);
        assert!(c.normal_defect() < 1e-14);
        assert!(c.second_fundamental.iter().all(|a| a.abs() < 1e-14));
        assert_eq!(c.normals[3], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn conformal_slice_arclength_is_uniform() {
        let phi = TrigScalar::cosine(2, 1, 1, 0.2);
        let m = ConformalTorus::conformal(TorusGrid::unit(2, 64).unwrap(), phi).unwrap();
        let c = InterfaceComponent::slice(&m, 0, 0.3, 1, Some(33)).unwrap();
        let l = c.length_or_area;
        // e^{0.2 cos} integrates to I_0(0.2)
        let i0: f64 = (0..20)
            .map(|k| {
                let f: f64 = (1..=k).map(|j| j as f64).product();
                0.1f64.powi(2 * k as i32) / (f * f)
            })
            .sum();
        assert!((l - i0).abs() < 1e-12, "{l} vs {i0}");
        for i in 0..c.len() {
            let (prev, _) = neighbours(&c.nodes, &c.closing, i);
            let d = segment_length(&m, &prev, &c.nodes[i]);
            assert!((d - l / 33.0).abs() < 1e-6);
        }
        assert!(c.normal_defect() < 1e-12);
    }

    #[test]
    fn resampled_circle_curvature() {
        let m = flat(64);
        let r = 0.2;
        let poly: Vec<[f64; 3]> = (0..20000)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 20000.0;
                [0.5 + r * t.cos(), 0.5 + r * t.sin(), 0.0]
            })
            .collect();
        let c = InterfaceComponent::closed_curve(&m, &poly, [0.0; 3], 1, 1.0 / 64.0).unwrap();
        assert!((c.length_or_area - 2.0 * std::f64::consts::PI * r).abs() < 1e-4);
        for a in &c.second_fundamental {
            assert!((a - 1.0 / r).abs() < 1e-2, "{a}");
        }
    }

    #[test]
    fn json_roundtrip_uses_a_key() {
        let m = flat(32);
        let itf = Interface::slices(&m, 0, &[0.25, 0.75], &[1, 2], 0.5).unwrap();
        let s = itf.to_json().unwrap();
        assert!(s.contains("\"A\""));
        let back = Interface::from_json(&s).unwrap();
        assert_eq!(back.components[1].multiplicity, 2);
        assert!((back.weighted_size() - 3.0).abs() < 1e-14);
    }
}
