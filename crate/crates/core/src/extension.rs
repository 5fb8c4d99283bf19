//! Extension of a normal field on an interface component to the ambient
//! torus with vanishing normal-normal derivative, through a Fermi chart of
//! the tube around the component.

use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::geometry::io::{read_fields, write_fields};
use crate::geometry::{covariant_jet, ConformalTorus, GridVectorSource, ScalarField, TorusGrid, VectorFieldGrid};
use crate::varifold::{ComponentKind, Interface, InterfaceComponent};

/// Tube coordinates around one interface component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FermiChart {
    pub component: usize,
    pub delta: f64,
    pub grid: TorusGrid,
    /// signed geodesic distance along the component normal (zero outside
    /// the tube)
    pub signed_distance: ScalarField,
    /// arclength coordinate of the foot point (first parameter in 3D)
    pub projection: Vec<f64>,
    /// fractional node index of the foot point per parameter direction
    pub foot_param: Vec<[f64; 2]>,
    /// foot points, unwrapped to the image nearest the node
    pub foot: Vec<[f64; 3]>,
    /// unit normal transported along the normal geodesic to the node
    pub normal: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
    pub param_counts: Vec<usize>,
}

impl FermiChart {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Plateau radii of the cutoff `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    /// `1` for `|d| ≤ inner`, `0` for `|d| ≥ outer`, quintic in between (C²).
    pub fn rho(&self, d: f64) -> f64 {
        let a = d.abs();
        if a <= self.inner {
            1.0
        } else if a >= self.outer {
            0.0
        } else {
            let t = (a - self.inner) / (self.outer - self.inner);
            1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        }
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Closed polyline with the lattice shift applied on wrap-around.
struct Curve<'a> {
    c: &'a InterfaceComponent,
}

impl Curve<'_> {
    fn n(&self) -> usize {
        self.c.nodes.len()
    }

    fn point(&self, i: i64) -> [f64; 3] {
        let n = self.n() as i64;
        let k = i.div_euclid(n);
        let p = self.c.nodes[i.rem_euclid(n) as usize];
        let s = k as f64;
        [
            p[0] + s * self.c.closing[0],
            p[1] + s * self.c.closing[1],
            p[2] + s * self.c.closing[2],
        ]
    }

    /// Local quadratic through nodes `i-1, i, i+1`: value, first and second
    /// derivative in `t`.
    fn quad(&self, i: i64, t: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let (a, b, c) = (self.point(i - 1), self.point(i), self.point(i + 1));
        let mut q = [0.0; 3];
        let mut dq = [0.0; 3];
        let mut ddq = [0.0; 3];
        for k in 0..3 {
            let d1 = 0.5 * (c[k] - a[k]);
            let d2 = c[k] - 2.0 * b[k] + a[k];
            q[k] = b[k] + t * d1 + 0.5 * t * t * d2;
            dq[k] = d1 + t * d2;
            ddq[k] = d2;
        }
        (q, dq, ddq)
    }

    /// Flat foot point of `x` starting from node `i`.
    fn project(&self, x: &[f64; 3], mut i: i64) -> (i64, f64) {
        let mut t = 0.0;
        for _ in 0..60 {
            let (q, dq, ddq) = self.quad(i, t);
            let r = sub(&q, x);
            let f = dot(&r, &dq);
            let df = dot(&dq, &dq) + dot(&r, &ddq);
            let step = if df > 0.0 { f / df } else { f / dot(&dq, &dq) };
            t -= step.clamp(-0.5, 0.5);
            if t > 0.5 {
                i += 1;
                t -= 1.0;
            } else if t < -0.5 {
                i -= 1;
                t += 1.0;
            } else if step.abs() < 1e-15 {
                break;
            }
        }
        (i, t)
    }

    fn sample(&self, f: &[f64], i: i64, t: f64) -> f64 {
        let n = self.n() as i64;
        let g = |j: i64| f[j.rem_euclid(n) as usize];
        let (a, b, c) = (g(i - 1), g(i), g(i + 1));
        b + 0.5 * t * (c - a) + 0.5 * t * t * (c - 2.0 * b + a)
    }
}

/// Geodesic with initial point `p` and velocity `v`, integrated to time `s`.
fn geodesic(m: &ConformalTorus, p: &[f64; 3], v: &[f64; 3], s: f64) -> ([f64; 3], [f64; 3]) {
    let steps = 32;
    let h = s / steps as f64;
    let rhs = |x: &[f64; 3], v: &[f64; 3]| {
        let (_, dphi, _) = m.phi_jets(x);
        let vd = v[0] * dphi[0] + v[1] * dphi[1];
        let vv = v[0] * v[0] + v[1] * v[1];
        [-(2.0 * vd * v[0] - vv * dphi[0]), -(2.0 * vd * v[1] - vv * dphi[1]), 0.0]
    };
    let (mut x, mut u) = (*p, *v);
    let add = |a: &[f64; 3], b: &[f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], 0.0];
    for _ in 0..steps {
        let k1x = u;
        let k1v = rhs(&x, &u);
        let x2 = add(&x, &k1x, 0.5 * h);
        let v2 = add(&u, &k1v, 0.5 * h);
        let k2v = rhs(&x2, &v2);
        let x3 = add(&x, &v2, 0.5 * h);
        let v3 = add(&u, &k2v, 0.5 * h);
        let k3v = rhs(&x3, &v3);
        let x4 = add(&x, &v3, h);
        let v4 = add(&u, &k3v, h);
        let k4v = rhs(&x4, &v4);
        for k in 0..2 {
            x[k] += h / 6.0 * (k1x[k] + 2.0 * v2[k] + 2.0 * v3[k] + v4[k]);
            u[k] += h / 6.0 * (k1v[k] + 2.0 * k2v[k] + 2.0 * k3v[k] + k4v[k]);
        }
    }
    (x, u)
}

fn overlap(msg: String) -> Error {
    Error::TubeOverlap(msg)
}

fn metric_scale(m: &ConformalTorus) -> (f64, f64) {
    let f = m.metric_factor();
    let lo = f.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
    let hi = f.iter().cloned().fold(0.0, f64::max).sqrt();
    (lo, hi)
}

/// Foot-point uniqueness sampling: other components, non-adjacent parts of
/// the same curve, curvature radius and the torus itself.
fn check_tube(m: &ConformalTorus, itf: &Interface, index: usize, delta: f64) -> Result<()> {
    let c = &itf.components[index];
    let (_, hi) = metric_scale(m);
    let lmin = m.grid.lengths[..m.dim()].iter().cloned().fold(f64::INFINITY, f64::min);
    if delta * hi >= 0.5 * lmin {
        return Err(overlap(format!("delta {delta} reaches around the torus")));
    }
    let kmax = c.second_fundamental.iter().fold(0.0f64, |a, k| a.max(k.abs()));
    if delta * kmax >= 1.0 {
        return Err(overlap(format!("delta {delta} exceeds the curvature radius {}", 1.0 / kmax)));
    }
    for (j, o) in itf.components.iter().enumerate() {
        if j == index {
            continue;
        }
        for p in &c.nodes {
            for q in &o.nodes {
                if dot(&m.grid.min_image(p, q), &m.grid.min_image(p, q)).sqrt() * hi < 2.0 * delta {
                    return Err(overlap(format!("tube around component {index} meets component {j}")));
                }
            }
        }
    }
    if c.param_counts.len() == 1 {
        // vertices further apart along the curve than a half turn of radius
        // delta must stay 2·delta apart
        let n = c.nodes.len();
        let w = c.weight();
        for a in 0..n {
            for b in a + 1..n {
                let gap = (b - a).min(n + a - b) as f64 * w;
                if gap <= std::f64::consts::PI * delta {
                    continue;
                }
                let d = m.grid.min_image(&c.nodes[a], &c.nodes[b]);
                if dot(&d, &d).sqrt() * hi < 2.0 * delta {
                    return Err(overlap(format!("tube around component {index} meets itself")));
                }
            }
        }
    }
    Ok(())
}

/// Fermi chart of component `index` of `itf` with tube radius `delta`.
pub fn fermi_chart(m: &ConformalTorus, itf: &Interface, index: usize, delta: f64) -> Result<FermiChart> {
    let c = itf
        .components
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("no component {index}")))?;
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    if c.is_empty() {
        return Err(Error::EmptyInterface);
    }
    check_tube(m, itf, index, delta)?;
    let nodes = m.grid.len();
    let mut chart = FermiChart {
        component: index,
        delta,
        grid: m.grid.clone(),
        signed_distance: ScalarField::zeros(&m.grid),
        projection: vec![f64::NAN; nodes],
        foot_param: vec![[f64::NAN; 2]; nodes],
        foot: vec![[f64::NAN; 3]; nodes],
        normal: vec![[0.0; 3]; nodes],
        valid: vec![false; nodes],
        param_counts: c.param_counts.clone(),
    };
    if m.dim() == 3 {
        slice_chart_3d(m, c, &mut chart)?;
    } else {
        curve_chart(m, c, &mut chart)?;
    }
    Ok(chart)
}

fn slice_chart_3d(m: &ConformalTorus, c: &InterfaceComponent, chart: &mut FermiChart) -> Result<()> {
    let ComponentKind::Slice { axis, offset } = c.kind else {
        return Err(Error::Unsupported("closed surfaces in dimension 3".into()));
    };
    if !m.flat {
        return Err(Error::Unsupported("conformal metrics in dimension 3".into()));
    }
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let sign = c.normals[0][axis].signum();
    let la = m.grid.lengths[axis];
    for node in 0..m.grid.len() {
        let x = m.grid.coords(node);
        let mut d = x[axis] - offset;
        d -= la * (d / la).round();
        if d.abs() >= chart.delta {
            continue;
        }
        let mut foot = x;
        foot[axis] = x[axis] - d;
        let mut fp = [0.0; 2];
        for (q, &o) in others.iter().enumerate() {
            fp[q] = x[o] / c.param_lengths[q] * c.param_counts[q] as f64;
        }
        let mut nn = [0.0; 3];
        nn[axis] = sign;
        chart.signed_distance.values[node] = sign * d;
        chart.projection[node] = x[others[0]];
        chart.foot_param[node] = fp;
        chart.foot[node] = foot;
        chart.normal[node] = nn;
        chart.valid[node] = true;
    }
    Ok(())
}

fn curve_chart(m: &ConformalTorus, c: &InterfaceComponent, chart: &mut FermiChart) -> Result<()> {
    let curve = Curve { c };
    let n = curve.n();
    let w = c.weight();
    let (lo, hi) = metric_scale(m);
    let delta = chart.delta;
    for node in 0..m.grid.len() {
        let x = m.grid.coords(node);
        // nearest vertex, then the image of x next to it
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..n {
            let d = m.grid.min_image(&c.nodes[i], &x);
            let r = dot(&d, &d);
            if r < best.0 {
                best = (r, i);
            }
        }
        if best.0.sqrt() * lo > 1.5 * delta + 2.0 * w * hi {
            continue;
        }
        let p0 = c.nodes[best.1];
        let dx = m.grid.min_image(&p0, &x);
        let xl = [p0[0] + dx[0], p0[1] + dx[1], 0.0];
        let (mut i, mut t) = curve.project(&xl, best.1 as i64);
        let normal_at = |i: i64, t: f64| {
            let (q, dq, _) = curve.quad(i, t);
            let len = dq[0].hypot(dq[1]);
            let mut nf = [-dq[1] / len, dq[0] / len, 0.0];
            if dot(&nf, &c.normals[i.rem_euclid(n as i64) as usize]) < 0.0 {
                nf = [-nf[0], -nf[1], 0.0];
            }
            let s = if m.flat { 1.0 } else { (-m.phi_jets(&q).0).exp() };
            (q, [nf[0] * s, nf[1] * s, 0.0])
        };
        let (q, nq) = normal_at(i, t);
        let (d, nx) = if m.flat {
            (dot(&sub(&xl, &q), &nq), nq)
        } else {
            // shoot normal geodesics, Newton on (t, d)
            let g = m.phi_jets(&q).0.exp();
            let mut d = g * g * dot(&sub(&xl, &q), &nq);
            let shoot = |i: i64, t: f64, d: f64| {
                let (q, nq) = normal_at(i, t);
                geodesic(m, &q, &nq, d)
            };
            let mut converged = false;
            for _ in 0..40 {
                let (e, _) = shoot(i, t, d);
                let r = [e[0] - xl[0], e[1] - xl[1]];
                if r[0].hypot(r[1]) < 1e-13 {
                    converged = true;
                    break;
                }
                let (ht, hd) = (1e-6, 1e-7);
                let (ep, _) = shoot(i, t + ht, d);
                let (em, _) = shoot(i, t - ht, d);
                let (dp, _) = shoot(i, t, d + hd);
                let (dm, _) = shoot(i, t, d - hd);
                let j = [
                    [(ep[0] - em[0]) / (2.0 * ht), (dp[0] - dm[0]) / (2.0 * hd)],
                    [(ep[1] - em[1]) / (2.0 * ht), (dp[1] - dm[1]) / (2.0 * hd)],
                ];
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det.abs() < 1e-300 {
                    break;
                }
                let st = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
                let sd = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
                t -= st;
                d -= sd;
                while t > 0.5 {
                    i += 1;
                    t -= 1.0;
                }
                while t < -0.5 {
                    i -= 1;
                    t += 1.0;
                }
            }
            if !converged {
                return Err(Error::ShootingDiverged("normal geodesic shooting did not converge".into()));
            }
            let (_, v) = shoot(i, t, d);
            (d, v)
        };
        if d.abs() >= delta {
            continue;
        }
        let (q, _) = normal_at(i, t);
        let fi = i as f64 + t;
        chart.signed_distance.values[node] = d;
        chart.projection[node] = fi.rem_euclid(n as f64) * w;
        chart.foot_param[node] = [fi, 0.0];
        chart.foot[node] = q;
        chart.normal[node] = nx;
        chart.valid[node] = true;
    }
    Ok(())
}

fn amplitude_at(c: &InterfaceComponent, f: &[f64], fp: &[f64; 2]) -> f64 {
    let curve = Curve { c };
    if c.param_counts.len() == 1 {
        let i = fp[0].round();
        return curve.sample(f, i as i64, fp[0] - i);
    }
    // tensor-product local quadratic on the periodic parameter lattice
    let (nb, nc) = (c.param_counts[0] as i64, c.param_counts[1] as i64);
    let (ib, ic) = (fp[0].round(), fp[1].round());
    let (tb, tc) = (fp[0] - ib, fp[1] - ic);
    let weights = |t: f64| [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)];
    let (wb, wc) = (weights(tb), weights(tc));
    let mut s = 0.0;
    for (a, wa) in wb.iter().enumerate() {
        for (b, wbb) in wc.iter().enumerate() {
            let j = (ib as i64 + a as i64 - 1).rem_euclid(nb);
            let k = (ic as i64 + b as i64 - 1).rem_euclid(nc);
            s += wa * wbb * f[(j * nc + k) as usize];
        }
    }
    s
}

/// `X̃ = ρ(d) f(p(x)) n(x)`, with `n` the transported normal.
pub fn normal_extension(itf: &Interface, chart: &FermiChart, f: &[f64], cutoff: Cutoff) -> Result<VectorFieldGrid> {
    if !(0.0 < cutoff.inner && cutoff.inner < cutoff.outer && cutoff.outer <= chart.delta) {
        return invalid("cutoff radii must satisfy 0 < inner < outer <= delta");
    }
    let c = itf
        .components
        .get(chart.component)
        .ok_or_else(|| Error::InvalidArgument(format!("no component {}", chart.component)))?;
    if f.len() != c.len() {
        return Err(Error::ShapeMismatch(format!("{} amplitudes for {} nodes", f.len(), c.len())));
    }
    let mut out = VectorFieldGrid::zeros(&chart.grid);
    for node in 0..chart.grid.len() {
        if !chart.valid[node] {
            continue;
        }
        let r = cutoff.rho(chart.signed_distance.values[node]);
        if r == 0.0 {
            continue;
        }
        let a = r * amplitude_at(c, f, &chart.foot_param[node]);
        for k in 0..chart.grid.dim {
            out.components[k].values[node] = a * chart.normal[node][k];
        }
    }
    Ok(out)
}

/// Sum of the extensions of every component with a common tube radius.
pub fn extend_interface(
    m: &ConformalTorus,
    itf: &Interface,
    amplitudes: &[Vec<f64>],
    delta: f64,
    cutoff: Cutoff,
) -> Result<VectorFieldGrid> {
    if amplitudes.len() != itf.components.len() {
        return invalid("one amplitude list per component is required");
    }
    let mut out = VectorFieldGrid::zeros(&m.grid);
    for (j, f) in amplitudes.iter().enumerate() {
        let chart = fermi_chart(m, itf, j, delta)?;
        let x = normal_extension(itf, &chart, f, cutoff)?;
        for k in 0..m.dim() {
            for (o, v) in out.components[k].values.iter_mut().zip(&x.components[k].values) {
                *o += v;
            }
        }
    }
    Ok(out)
}

/// Writes a chart as a field file: signed distance, foot-point arclength
/// and the tube indicator.
pub fn save_chart(path: &Path, chart: &FermiChart) -> Result<()> {
    let proj = ScalarField::from_values(&chart.grid, chart.projection.iter().map(|p| if p.is_nan() { 0.0 } else { *p }).collect())?;
    let valid = ScalarField::from_values(&chart.grid, chart.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect())?;
    write_fields(
        path,
        &chart.grid,
        &["signed_distance", "projection", "valid"],
        &[&chart.signed_distance, &proj, &valid],
        serde_json::json!({ "delta": chart.delta, "component": chart.component }),
    )
}

/// Writes an extension with its `{delta, inner, outer}` metadata.
pub fn save_extension(path: &Path, grid: &TorusGrid, x: &VectorFieldGrid, delta: f64, cutoff: Cutoff) -> Result<()> {
    x.check(grid)?;
    let names: Vec<String> = (0..grid.dim).map(|k| format!("X{k}")).collect();
    let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let fields: Vec<&ScalarField> = x.components.iter().collect();
    write_fields(
        path,
        grid,
        &names,
        &fields,
        serde_json::json!({ "delta": delta, "inner": cutoff.inner, "outer": cutoff.outer }),
    )
}

pub fn load_extension(path: &Path) -> Result<(VectorFieldGrid, f64, Cutoff)> {
    let (meta, fields) = read_fields(path)?;
    let get = |k: &str| {
        meta.extra
            .get(k)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::InvalidArgument(format!("extension metadata lacks {k}")))
    };
    if fields.len() != meta.grid.dim {
        return Err(Error::ShapeMismatch(format!("{} components on a {}-dimensional grid", fields.len(), meta.grid.dim)));
    }
    let cutoff = Cutoff { inner: get("inner")?, outer: get("outer")? };
    Ok((VectorFieldGrid { components: fields }, get("delta")?, cutoff))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    /// `sup |⟨∇_n X̃, n⟩_g|` over the interface nodes
    pub normal_derivative: f64,
    /// `sup |X̃ - f n|_g` over the interface nodes, when amplitudes are given
    pub restriction_error: Option<f64>,
    pub grid_spacing: f64,
}

pub fn verify_extension(
    m: &ConformalTorus,
    itf: &Interface,
    x: &VectorFieldGrid,
    amplitudes: Option<&[Vec<f64>]>,
) -> Result<ExtensionReport> {
    x.check(&m.grid)?;
    if let Some(a) = amplitudes {
        if a.len() != itf.components.len() || a.iter().zip(&itf.components).any(|(f, c)| f.len() != c.len()) {
            return Err(Error::ShapeMismatch("amplitudes do not match the interface".into()));
        }
    }
    let src = GridVectorSource { grid: &m.grid, field: x };
    let n = m.dim();
    let mut nd: f64 = 0.0;
    let mut re: f64 = 0.0;
    for (j, c) in itf.components.iter().enumerate() {
        for (node, p) in c.nodes.iter().enumerate() {
            let (v, d) = covariant_jet(m, &src, p);
            let g = c.metric_factor[node];
            let nv = &c.normals[node];
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..n {
                    s += nv[i] * d[i][k] * nv[k];
                }
            }
            nd = nd.max((g * s).abs());
            if let Some(a) = amplitudes {
                let f = a[j][node];
                let e: f64 = (0..n).map(|k| (v[k] - f * nv[k]).powi(2)).sum();
                re = re.max((g * e).sqrt());
            }
        }
    }
    Ok(ExtensionReport {
        normal_derivative: nd,
        restriction_error: amplitudes.map(|_| re),
        grid_spacing: m.grid.max_spacing(),
    })
}
