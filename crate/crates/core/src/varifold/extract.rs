//! Zero-level extraction: marching squares in 2D, planar slices in 3D,
//! multiplicities from tube masses.

use std::collections::HashMap;

use super::{resample_closed, ComponentKind, Interface, InterfaceComponent};
use crate::error::{Error, Result};
use crate::geometry::interp::interpolate_jet;
use crate::geometry::{ConformalTorus, TorusGrid};
use crate::potential::surface_tension;
use crate::solver::ACSolution;

/// Tube radius for multiplicity masses, in units of epsilon.
pub const TUBE_RADIUS: f64 = 5.0;

/// Nearest integer to a tube-mass ratio, rejecting ratios more than 0.25
/// from an integer or below one half.
pub fn multiplicity_from_ratio(component: usize, ratio: f64) -> Result<u32> {
    let r = ratio.round();
    if !ratio.is_finite() || r < 1.0 || (ratio - r).abs() > 0.25 {
        return Err(Error::MultiplicityAmbiguous { component, ratio });
    }
    Ok(r as u32)
}

/// Extracts the level set `{u = level}` as an [`Interface`].
pub fn extract_interface(sol: &ACSolution, level: f64) -> Result<Interface> {
    let m = sol.manifold();
    let sigma = surface_tension(&sol.problem.potential, 1e-12)?;
    let mut comps = match m.dim() {
        2 => curves_2d(m, &sol.u.values, level)?,
        _ => slices_3d(m, &sol.u.values, level)?,
    };
    if comps.is_empty() {
        return Err(Error::EmptyInterface);
    }
    assign_multiplicities(sol, sigma, &mut comps)?;
    Ok(Interface::new(comps, sigma))
}

/// Root of the interpolant on the segment `a + t (b - a)`, `t ∈ [0, 1]`.
fn edge_root(grid: &TorusGrid, u: &[f64], level: f64, a: [f64; 3], b: [f64; 3], fa: f64, fb: f64) -> [f64; 3] {
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut flo, _fhi) = (fa - level, fb - level);
    let mut t = flo / (flo - (fb - level));
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
    for _ in 0..60 {
        let (v, g) = interpolate_jet(grid, u, &at(t));
        let f = v - level;
        if f == 0.0 {
            break;
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = t;
            flo = f;
        } else {
            hi = t;
        }
        let slope: f64 = (0..3).map(|i| g[i] * (b[i] - a[i])).sum();
        let newton = t - f / slope;
        t = if slope != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-14 || (f / slope).abs() < 1e-15 {
            break;
        }
    }
    at(t)
}

/// Moves a point onto the level set along the flat gradient.
fn project_to_level(grid: &TorusGrid, u: &[f64], level: f64, p: &mut [f64; 3]) {
    for _ in 0..4 {
        let (v, g) = interpolate_jet(grid, u, p);
        let g2: f64 = g.iter().map(|c| c * c).sum();
        if g2 == 0.0 {
            return;
        }
        let s = (v - level) / g2;
        for i in 0..3 {
            p[i] -= s * g[i];
        }
        if (s * g2.sqrt()).abs() < 1e-15 {
            return;
        }
    }
}

fn curves_2d(m: &ConformalTorus, u: &[f64], level: f64) -> Result<Vec<InterfaceComponent>> {
    let grid = &m.grid;
    let (n0, n1) = (grid.counts[0], grid.counts[1]);
    let h = grid.spacing();
    let nn = n0 * n1;
    let idx = |i: usize, j: usize| (i % n0) * n1 + (j % n1);
    let inside = |k: usize| u[k] >= level;
    // crossing points on edges; edge id = node for axis-0 edges, nn + node for axis-1 edges
    let mut points: HashMap<usize, [f64; 3]> = HashMap::new();
    for i in 0..n0 {
        for j in 0..n1 {
            let k = idx(i, j);
            let a = [i as f64 * h[0], j as f64 * h[1], 0.0];
            for (axis, nb) in [(0usize, idx(i + 1, j)), (1, idx(i, j + 1))] {
                if inside(k) != inside(nb) {
                    let mut b = a;
                    b[axis] += h[axis];
                    let p = edge_root(grid, u, level, a, b, u[k], u[nb]);
                    points.insert(axis * nn + k, p);
                }
            }
        }
    }
    if points.is_empty() {
        return Ok(vec![]);
    }
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut link = |a: usize, b: usize| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for i in 0..n0 {
        for j in 0..n1 {
            let c = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
            // edges: 0 = c0-c1, 1 = c1-c2, 2 = c3-c2, 3 = c0-c3
            let e = [c[0], nn + c[1], c[3], nn + c[0]];
            let s: Vec<bool> = c.iter().map(|&k| inside(k)).collect();
            let cut: Vec<usize> = (0..4)
                .filter(|&q| match q {
                    0 => s[0] != s[1],
                    1 => s[1] != s[2],
                    2 => s[3] != s[2],
                    _ => s[0] != s[3],
                })
                .collect();
            match cut.len() {
                0 => {}
                2 => link(e[cut[0]], e[cut[1]]),
                4 => {
                    let centre = 0.25 * c.iter().map(|&k| u[k]).sum::<f64>();
                    if (centre >= level) == s[0] {
                        link(e[0], e[1]);
                        link(e[2], e[3]);
                    } else {
                        link(e[3], e[0]);
                        link(e[1], e[2]);
                    }
                }
                _ => unreachable!("a cell has an even number of sign changes"),
            }
        }
    }
    let mut keys: Vec<usize> = points.keys().copied().collect();
    keys.sort_unstable();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut comps = vec![];
    for &start in &keys {
        if visited.contains_key(&start) {
            continue;
        }
        let mut loop_pts = vec![points[&start]];
        visited.insert(start, true);
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let nbrs = &adj[&cur];
            let next = if nbrs[0] != prev || nbrs.len() < 2 { nbrs[0] } else { nbrs[1] };
            if next == start {
                break;
            }
            if visited.contains_key(&next) {
                break;
            }
            visited.insert(next, true);
            let last = *loop_pts.last().unwrap();
            let d = grid.min_image(&last, &points[&next]);
            loop_pts.push([last[0] + d[0], last[1] + d[1], 0.0]);
            prev = cur;
            cur = next;
        }
        if loop_pts.len() < 3 {
            continue;
        }
        let last = *loop_pts.last().unwrap();
        let first = loop_pts[0];
        let d = grid.min_image(&last, &first);
        let mut closing = [0.0; 3];
        for a in 0..2 {
            let raw = last[a] + d[a] - first[a];
            closing[a] = grid.lengths[a] * (raw / grid.lengths[a]).round();
        }
        comps.push(curve_component(m, u, level, &loop_pts, closing));
    }
    Ok(comps)
}

fn curve_component(m: &ConformalTorus, u: &[f64], level: f64, poly: &[[f64; 3]], closing: [f64; 3]) -> InterfaceComponent {
    let grid = &m.grid;
    let h = grid.max_spacing();
    let proj = |p: &mut [f64; 3]| project_to_level(grid, u, level, p);
    let (first, _) = resample_closed(m, poly, &closing, h, Some(&proj));
    let (pts, total) = resample_closed(m, &first, &closing, h, Some(&proj));
    let n = pts.len();
    let mut comp = InterfaceComponent::assemble(m, ComponentKind::ClosedCurve, 1, pts, closing, vec![n], vec![total]);
    for i in 0..n {
        let (_, g) = interpolate_jet(grid, u, &comp.nodes[i]);
        let (phi, _, _) = m.phi_jets(&comp.nodes[i]);
        let gn = g[0].hypot(g[1]);
        let nu = [g[0] / gn * (-phi).exp(), g[1] / gn * (-phi).exp(), 0.0];
        let left = comp.normals[i];
        if left[0] * nu[0] + left[1] * nu[1] < 0.0 {
            comp.second_fundamental[i] = -comp.second_fundamental[i];
        }
        comp.normals[i] = nu;
    }
    comp
}

/// Planar zero sets of slab-like fields in 3D.
fn slices_3d(m: &ConformalTorus, u: &[f64], level: f64) -> Result<Vec<InterfaceComponent>> {
    let grid = &m.grid;
    let strides = grid.strides();
    let h = grid.spacing();
    for axis in 0..3 {
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let n = grid.counts[axis];
        let (nb, nc) = (grid.counts[others[0]], grid.counts[others[1]]);
        // crossing positions along every line parallel to `axis`
        let mut lines: Vec<Vec<f64>> = Vec::with_capacity(nb * nc);
        for ib in 0..nb {
            for ic in 0..nc {
                let base = ib * strides[others[0]] + ic * strides[others[1]];
                let mut xs = vec![];
                for i in 0..n {
                    let k0 = base + i * strides[axis];
                    let k1 = base + ((i + 1) % n) * strides[axis];
                    if (u[k0] >= level) != (u[k1] >= level) {
                        let mut a = [0.0; 3];
                        a[others[0]] = ib as f64 * h[others[0]];
                        a[others[1]] = ic as f64 * h[others[1]];
                        a[axis] = i as f64 * h[axis];
                        let mut b = a;
                        b[axis] += h[axis];
                        let p = edge_root(grid, u, level, a, b, u[k0], u[k1]);
                        xs.push(p[axis]);
                    }
                }
                lines.push(xs);
            }
        }
        if lines[0].is_empty() {
            if lines.iter().any(|l| !l.is_empty()) {
                return Err(Error::Unsupported("non-planar zero set in dimension 3".into()));
            }
            continue;
        }
        let count = lines[0].len();
        let mut offsets = vec![0.0; count];
        for l in &lines {
            if l.len() != count {
                return Err(Error::Unsupported("non-planar zero set in dimension 3".into()));
            }
            for (j, x) in l.iter().enumerate() {
                if grid.min_image(&[lines[0][j], 0.0, 0.0], &[*x, 0.0, 0.0])[0].abs() > 0.5 * h[axis] {
                    return Err(Error::Unsupported("non-planar zero set in dimension 3".into()));
                }
                offsets[j] += x / lines.len() as f64;
            }
        }
        return offsets
            .iter()
            .map(|&o| InterfaceComponent::slice(m, axis, o, 1, None))
            .collect();
    }
    Ok(vec![])
}

fn assign_multiplicities(sol: &ACSolution, sigma: f64, comps: &mut [InterfaceComponent]) -> Result<()> {
    let m = sol.manifold();
    let grid = &m.grid;
    let eps = sol.epsilon();
    let radius = TUBE_RADIUS * eps;
    let grad = m.gradient_flat_raw(&sol.u.values);
    let cell = grid.cell_volume();
    let fac = m.metric_factor();
    let dim = grid.dim;
    let mut mass = vec![0.0; comps.len()];
    let mut x = [0.0; 3];
    for idx in 0..grid.len() {
        grid.coords_into(idx, &mut x);
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, c) in comps.iter().enumerate() {
            let d = match c.kind {
                ComponentKind::Slice { axis, offset } if dim == 3 || m.flat => {
                    let mut o = [0.0; 3];
                    o[axis] = offset;
                    let mut xx = [0.0; 3];
                    xx[axis] = x[axis];
                    grid.min_image(&o, &xx)[axis].abs()
                }
                _ => c
                    .nodes
                    .iter()
                    .map(|p| {
                        let d = grid.min_image(p, &x);
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min),
            };
            if d < best.0 {
                best = (d, j);
            }
        }
        let g_dist = best.0 * fac[idx].sqrt();
        if g_dist < radius {
            let g2: f64 = (0..dim).map(|a| grad[a][idx] * grad[a][idx]).sum();
            // ε|∇u|_g²/2 dvol_g with |∇u|_g² = e^{-2φ}|∂u|²
            let dens = 0.5 * eps * g2 / fac[idx] * m.volume_density(idx);
            mass[best.1] += dens * cell;
        }
    }
    for (j, c) in comps.iter_mut().enumerate() {
        let ratio = mass[j] / (sigma * c.length_or_area);
        c.multiplicity = multiplicity_from_ratio(j, ratio)?;
    }
    Ok(())
}
