//! First and second inner variations of the Allen-Cahn energy: the
//! closed formula, the bilinear form on `⟨∇u, X⟩`, and finite differences
//! of the energy along the flow; plus the metric variation identities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::interp::interpolate_jet;
use crate::geometry::{
    contract_jacobian, flow_map_fixed, pullback_metric, ConformalTorus, ScalarField, TensorField2,
    TrigSource, TrigVector, VectorFieldGrid, VectorSource,
};
use crate::solver::{density_parts, residual, ACProblem, ACSolution};

/// RK4 steps per flow evaluation in the finite-difference oracles.
pub const FLOW_STEPS: usize = 16;

#[derive(Debug, Clone)]
pub struct VariationTensors {
    /// `S_X(Y₁, Y₂) = ⟨∇_{Y₁}X, ∇_{Y₂}X⟩`
    pub s: TensorField2,
    /// `h_X(Y₁, Y₂) = ⟨∇_{Y₁}X, Y₂⟩ + ⟨Y₁, ∇_{Y₂}X⟩`
    pub h: TensorField2,
    /// `T_X(Y₁, Y₂) = Σ_a ⟨∇_{e_a}X, Y₁⟩⟨∇_{e_a}X, Y₂⟩`, `e_a` orthonormal
    pub t: TensorField2,
    pub div: ScalarField,
    /// `∇_X X`
    pub nabla_xx: VectorFieldGrid,
    pub div_nabla_xx: ScalarField,
    /// `D[i][k] = (∇_i X)^k`
    pub jacobian: TensorField2,
}

pub fn variation_tensors(m: &ConformalTorus, x: &VectorFieldGrid) -> Result<VariationTensors> {
    let d = m.covariant_jacobian(x)?;
    let n = m.dim();
    let fac = m.metric_factor();
    let mut s = TensorField2::zeros(&m.grid);
    let mut h = TensorField2::zeros(&m.grid);
    let mut t = TensorField2::zeros(&m.grid);
    for node in 0..m.grid.len() {
        let dd = d.at(node);
        let g = fac[node];
        let mut sm = [[0.0; 3]; 3];
        let mut hm = [[0.0; 3]; 3];
        let mut tm = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                sm[i][j] = g * (0..n).map(|k| dd[i][k] * dd[j][k]).sum::<f64>();
                hm[i][j] = g * (dd[i][j] + dd[j][i]);
                tm[i][j] = g * (0..n).map(|a| dd[a][i] * dd[a][j]).sum::<f64>();
            }
        }
        s.set(node, &sm);
        h.set(node, &hm);
        t.set(node, &tm);
    }
    let z = contract_jacobian(&d, x);
    let div = m.divergence(x)?;
    let div_nabla_xx = m.divergence(&z)?;
    Ok(VariationTensors {
        s,
        h,
        t,
        div,
        nabla_xx: z,
        div_nabla_xx,
        jacobian: d,
    })
}

/// `∫ e_ε Div X - ε ⟨∇_{∇u}X, ∇u⟩`.
pub fn first_inner_variation(p: &ACProblem, u: &ScalarField, x: &VectorFieldGrid) -> Result<f64> {
    let m = &p.manifold;
    u.check(&m.grid)?;
    let d = m.covariant_jacobian(x)?;
    let div = m.divergence_raw(x);
    let w = m.gradient_raw(&u.values);
    let (gp, pp) = density_parts(p, &u.values);
    let n = m.dim();
    let fac = m.metric_factor();
    let e = p.epsilon;
    let vals: Vec<f64> = (0..m.grid.len())
        .map(|node| {
            let dd = d.at(node);
            let mut q = 0.0;
            for i in 0..n {
                for k in 0..n {
                    q += w[i][node] * dd[i][k] * w[k][node];
                }
            }
            (gp[node] + pp[node]) * div[node] - e * fac[node] * q
        })
        .collect();
    Ok(m.integrate_raw(&vals))
}

/// The closed second inner variation formula, valid for any `u`.
pub fn second_inner_variation_formula(p: &ACProblem, u: &ScalarField, x: &VectorFieldGrid) -> Result<f64> {
    let m = &p.manifold;
    u.check(&m.grid)?;
    let vt = variation_tensors(m, x)?;
    let dz = m.covariant_jacobian(&vt.nabla_xx)?;
    let curv = m.curvature();
    let w = m.gradient_raw(&u.values);
    let (gp, pp) = density_parts(p, &u.values);
    let n = m.dim();
    let fac = m.metric_factor();
    let e = p.epsilon;
    let vals: Vec<f64> = (0..m.grid.len())
        .map(|node| {
            let g = fac[node];
            let k = curv.gauss.values[node];
            let d = vt.jacobian.at(node);
            let dzm = dz.at(node);
            let xv = x.at(node);
            let wv = [w[0][node], w[1][node], if n == 3 { w[2][node] } else { 0.0 }];
            let div = vt.div.values[node];
            let x2: f64 = (0..n).map(|i| xv[i] * xv[i]).sum();
            // first group, against the energy density
            let mut tr_s = 0.0;
            let mut h2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    tr_s += d[i][j] * d[i][j];
                    h2 += (d[i][j] + d[j][i]).powi(2);
                }
            }
            let g1 = vt.div_nabla_xx.values[node] - k * g * x2 + tr_s - 0.5 * h2 + div * div;
            // second group, against ε
            let mut dw = [0.0; 3]; // (∇_w X)^k
            let mut wd = [0.0; 3]; // Σ_i D[a][i] w^i
            for a in 0..n {
                for i in 0..n {
                    dw[a] += wv[i] * d[i][a];
                    wd[a] += d[a][i] * wv[i];
                }
            }
            let t_ww = g * wd[..n].iter().map(|v| v * v).sum::<f64>();
            let mut yy = 0.0; // ⟨∇_{∇_w X} X, w⟩ / g
            let mut wzw = 0.0; // ⟨∇_w Z, w⟩ / g
            for i in 0..n {
                for kk in 0..n {
                    yy += dw[i] * d[i][kk] * wv[kk];
                    wzw += wv[i] * dzm[i][kk] * wv[kk];
                }
            }
            let dww: f64 = (0..n).map(|a| dw[a] * wv[a]).sum();
            let w2: f64 = (0..n).map(|a| wv[a] * wv[a]).sum();
            let xw: f64 = (0..n).map(|a| xv[a] * wv[a]).sum();
            let r = k * g * g * (x2 * w2 - xw * xw);
            let g2 = t_ww + 2.0 * g * yy - g * wzw - 2.0 * g * dww * div + r;
            g1 * (gp[node] + pp[node]) + e * g2
        })
        .collect();
    Ok(m.integrate_raw(&vals))
}

/// `E''(u)(v, v)` with `v = ⟨∇u, X⟩`; valid only at critical points.
pub fn second_inner_variation_bilinear(sol: &ACSolution, x: &VectorFieldGrid) -> Result<f64> {
    let p = &sol.problem;
    let m = &p.manifold;
    x.check(&m.grid)?;
    let res = residual(p, &sol.u)?.sup_norm();
    if res > sol.tol {
        return Err(Error::NotCritical { residual: res, tol: sol.tol });
    }
    let du = m.gradient_flat_raw(&sol.u.values);
    let n = m.dim();
    let v: Vec<f64> = (0..m.grid.len())
        .map(|node| (0..n).map(|i| du[i][node] * x.components[i].values[node]).sum())
        .collect();
    let dv = m.gradient_flat_raw(&v);
    let fac = m.metric_factor();
    let e = p.epsilon;
    let vals: Vec<f64> = (0..m.grid.len())
        .map(|node| {
            let g2: f64 = (0..n).map(|i| dv[i][node] * dv[i][node]).sum();
            let g2 = if m.flat { g2 } else { g2 / fac[node] };
            e * g2 + p.potential.d2w(sol.u.values[node]) * v[node] * v[node] / e
        })
        .collect();
    Ok(m.integrate_raw(&vals))
}

fn energy_of(p: &ACProblem, u: &[f64]) -> f64 {
    let (gp, pp) = density_parts(p, u);
    let d: Vec<f64> = gp.iter().zip(&pp).map(|(a, b)| a + b).collect();
    p.manifold.integrate_raw(&d)
}

/// `E_ε(u ∘ Φ^{-t})` for each `t`, sampling `u` at the back-flowed nodes.
pub fn energy_along_flow(
    p: &ACProblem,
    u: &ScalarField,
    x: &dyn VectorSource,
    ts: &[f64],
) -> Result<Vec<f64>> {
    let m = &p.manifold;
    u.check(&m.grid)?;
    ts.iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(energy_of(p, &u.values));
            }
            let f = flow_map_fixed(m, x, -t, FLOW_STEPS)?;
            let ut: Vec<f64> = f
                .unwrapped
                .iter()
                .map(|q| interpolate_jet(&m.grid, &u.values, q).0)
                .collect();
            Ok(energy_of(p, &ut))
        })
        .collect()
}

/// The same energies by change of variables: the pulled-back metric
/// `g^t = (Φ^t)^* g` and its volume element, without interpolation.
pub fn energy_along_flow_pullback(
    p: &ACProblem,
    u: &ScalarField,
    x: &dyn VectorSource,
    ts: &[f64],
) -> Result<Vec<f64>> {
    let m = &p.manifold;
    u.check(&m.grid)?;
    let du = m.gradient_flat_raw(&u.values);
    let n = m.dim();
    let e = p.epsilon;
    let cell = m.grid.cell_volume();
    ts.iter()
        .map(|&t| {
            let f = flow_map_fixed(m, x, t, FLOW_STEPS)?;
            let gt = pullback_metric(m, &f)?;
            let mut total = 0.0;
            for node in 0..m.grid.len() {
                let g = gt.at(node);
                let a = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i][j]);
                let det = a.determinant();
                let inv = a.try_inverse().ok_or_else(|| Error::FlowBlowup("degenerate pulled-back metric".into()))?;
                let mut q = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        q += inv[(i, j)] * du[i][node] * du[j][node];
                    }
                }
                let dens = 0.5 * e * q + p.potential.w(u.values[node]) / e;
                total += dens * det.sqrt();
            }
            Ok(total * cell)
        })
        .collect()
}

/// Five-point finite differences in `t` at steps `h` and `h/2` and their
/// Richardson extrapolation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdEstimate {
    pub h: f64,
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
    pub ts: Vec<f64>,
    pub energies: Vec<f64>,
}

/// Stencil times `-2h, -h, -h/2, 0, h/2, h, 2h`.
fn stencil(h: f64) -> Vec<f64> {
    vec![-2.0 * h, -h, -0.5 * h, 0.0, 0.5 * h, h, 2.0 * h]
}

fn second_difference(e: &[f64], h: f64) -> FdEstimate {
    let d = |m2: f64, m1: f64, z: f64, p1: f64, p2: f64, k: f64| {
        (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * k * k)
    };
    let coarse = d(e[0], e[1], e[3], e[5], e[6], h);
    let fine = d(e[1], e[2], e[3], e[4], e[5], 0.5 * h);
    FdEstimate {
        h,
        coarse,
        fine,
        extrapolated: (16.0 * fine - coarse) / 15.0,
        ts: stencil(h),
        energies: e.to_vec(),
    }
}

fn first_difference(e: &[f64], h: f64) -> FdEstimate {
    let d = |m2: f64, m1: f64, p1: f64, p2: f64, k: f64| (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * k);
    let coarse = d(e[0], e[1], e[5], e[6], h);
    let fine = d(e[1], e[2], e[4], e[5], 0.5 * h);
    FdEstimate {
        h,
        coarse,
        fine,
        extrapolated: (16.0 * fine - coarse) / 15.0,
        ts: stencil(h),
        energies: e.to_vec(),
    }
}

/// `d²/dt² E_ε(u ∘ Φ^{-t})` at `t = 0` from the direct route.
pub fn fd_second_variation(p: &ACProblem, u: &ScalarField, x: &dyn VectorSource, h: f64) -> Result<FdEstimate> {
    let e = energy_along_flow(p, u, x, &stencil(h))?;
    Ok(second_difference(&e, h))
}

/// The same from the change-of-variables route.
pub fn fd_second_variation_pullback(
    p: &ACProblem,
    u: &ScalarField,
    x: &dyn VectorSource,
    h: f64,
) -> Result<FdEstimate> {
    let e = energy_along_flow_pullback(p, u, x, &stencil(h))?;
    Ok(second_difference(&e, h))
}

/// `d/dt E_ε(u ∘ Φ^{-t})` at `t = 0`.
pub fn fd_first_variation(p: &ACProblem, u: &ScalarField, x: &dyn VectorSource, h: f64) -> Result<FdEstimate> {
    let e = energy_along_flow(p, u, x, &stencil(h))?;
    Ok(first_difference(&e, h))
}

/// The three routes to `δ²E_ε(u, X)` on one field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationRoutes {
    pub formula: f64,
    pub bilinear: f64,
    pub fd: f64,
    pub fd_pullback: f64,
    pub fd_h: f64,
}

impl VariationRoutes {
    pub fn bilinear_error(&self) -> f64 {
        (self.formula - self.bilinear).abs() / (1.0 + self.formula.abs())
    }

    pub fn fd_error(&self) -> f64 {
        (self.formula - self.fd).abs() / (1.0 + self.formula.abs())
    }
}

pub fn compare_routes(sol: &ACSolution, x: &TrigVector, h: f64) -> Result<VariationRoutes> {
    let p = &sol.problem;
    let m = &p.manifold;
    x.check_dim(m.dim())?;
    let xg = x.sample(&m.grid);
    let src = TrigSource {
        field: x,
        lengths: &m.grid.lengths,
    };
    let formula = second_inner_variation_formula(p, &sol.u, &xg)?;
    let bilinear = second_inner_variation_bilinear(sol, &xg)?;
    let fd = fd_second_variation(p, &sol.u, &src, h)?.extrapolated;
    let fd_pullback = fd_second_variation_pullback(p, &sol.u, &src, h)?.extrapolated;
    Ok(VariationRoutes {
        formula,
        bilinear,
        fd,
        fd_pullback,
        fd_h: h,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricItem {
    pub name: String,
    /// sup-norm error per time step
    pub errors: Vec<f64>,
    /// observed orders between consecutive time steps
    pub orders: Vec<f64>,
}

impl MetricItem {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricVariationReport {
    pub dts: Vec<f64>,
    pub grid_spacing: f64,
    pub items: Vec<MetricItem>,
    /// agreement of the inverse-metric items with the identity
    /// `(g^{-1})' = -g^{-1} g' g^{-1}` and its derivative, at the nodes
    pub inverse_identity_error: f64,
}

fn invert(g: &[[f64; 3]; 3], n: usize) -> [[f64; 3]; 3] {
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i][j]);
    let inv = a.try_inverse().expect("metric is positive definite");
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = inv[(i, j)];
        }
    }
    out
}

/// Finite-difference check of the first and second `t`-derivatives of
/// `g^t_{ij}` and `(g^t)^{ij}` at `t = 0` against their closed forms.
pub fn metric_variation_check(m: &ConformalTorus, x: &TrigVector, dts: &[f64]) -> Result<MetricVariationReport> {
    x.check_dim(m.dim())?;
    if dts.len() < 2 {
        return crate::error::invalid("at least two time steps are required");
    }
    let n = m.dim();
    let xg = x.sample(&m.grid);
    let vt = variation_tensors(m, &xg)?;
    let dz = m.covariant_jacobian(&vt.nabla_xx)?;
    let curv = m.curvature();
    let fac = m.metric_factor();
    let nodes = m.grid.len();
    // closed forms at every node
    let mut f1 = vec![[[0.0; 3]; 3]; nodes];
    let mut f2 = vec![[[0.0; 3]; 3]; nodes];
    let mut f3 = vec![[[0.0; 3]; 3]; nodes];
    let mut f4 = vec![[[0.0; 3]; 3]; nodes];
    let mut identity_err: f64 = 0.0;
    for node in 0..nodes {
        let g = fac[node];
        let k = curv.gauss.values[node];
        let d = vt.jacobian.at(node);
        let dzm = dz.at(node);
        let xv = xg.at(node);
        let x2: f64 = (0..n).map(|i| xv[i] * xv[i]).sum();
        let h = vt.h.at(node);
        let mut ginv = [[0.0; 3]; 3];
        let mut gm = [[0.0; 3]; 3];
        for i in 0..n {
            ginv[i][i] = 1.0 / g;
            gm[i][i] = g;
        }
        let ginv_general = invert(&gm, n);
        for i in 0..n {
            for j in 0..n {
                f1[node][i][j] = h[i][j];
                f2[node][i][j] = -h[i][j] / (g * g);
                let sij: f64 = (0..n).map(|a| d[i][a] * d[j][a]).sum();
                let delta = if i == j { 1.0 } else { 0.0 };
                f3[node][i][j] = g * (dzm[i][j] + dzm[j][i]) + 2.0 * g * sij
                    - 2.0 * k * g * g * (x2 * delta - xv[i] * xv[j]);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let hh: f64 = (0..n).map(|a| h[i][a] * h[a][j]).sum();
                f4[node][i][j] = 2.0 * hh / (g * g * g) - f3[node][i][j] / (g * g);
                // the same two items through a general inverse
                let mut a2 = 0.0;
                let mut a4 = 0.0;
                for r in 0..n {
                    for s in 0..n {
                        a2 -= ginv_general[i][r] * h[r][s] * ginv_general[s][j];
                        a4 -= ginv_general[i][r] * f3[node][r][s] * ginv_general[s][j];
                        for q in 0..n {
                            for l in 0..n {
                                a4 += 2.0
                                    * ginv_general[i][r]
                                    * h[r][s]
                                    * ginv_general[s][q]
                                    * h[q][l]
                                    * ginv_general[l][j];
                            }
                        }
                    }
                }
                identity_err = identity_err
                    .max((a2 - f2[node][i][j]).abs())
                    .max((a4 - f4[node][i][j]).abs());
            }
        }
    }
    let src = TrigSource {
        field: x,
        lengths: &m.grid.lengths,
    };
    let names = ["metric first derivative", "inverse first derivative", "metric second derivative", "inverse second derivative"];
    let mut errors = vec![vec![]; 4];
    for &dt in dts {
        let gp = pullback_metric(m, &flow_map_fixed(m, &src, dt, FLOW_STEPS)?)?;
        let gm = pullback_metric(m, &flow_map_fixed(m, &src, -dt, FLOW_STEPS)?)?;
        let mut e = [0.0f64; 4];
        for node in 0..nodes {
            let g0 = fac[node];
            let a = gp.at(node);
            let b = gm.at(node);
            let ai = invert(&a, n);
            let bi = invert(&b, n);
            for i in 0..n {
                for j in 0..n {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let d1 = (a[i][j] - b[i][j]) / (2.0 * dt);
                    let d2 = (ai[i][j] - bi[i][j]) / (2.0 * dt);
                    let d3 = (a[i][j] - 2.0 * g0 * delta + b[i][j]) / (dt * dt);
                    let d4 = (ai[i][j] - 2.0 * delta / g0 + bi[i][j]) / (dt * dt);
                    e[0] = e[0].max((d1 - f1[node][i][j]).abs());
                    e[1] = e[1].max((d2 - f2[node][i][j]).abs());
                    e[2] = e[2].max((d3 - f3[node][i][j]).abs());
                    e[3] = e[3].max((d4 - f4[node][i][j]).abs());
                }
            }
        }
        for q in 0..4 {
            errors[q].push(e[q]);
        }
    }
    let items = names
        .iter()
        .zip(errors)
        .map(|(name, errs)| {
            let orders = errs
                .windows(2)
                .zip(dts.windows(2))
                .map(|(e, d)| (e[0] / e[1]).ln() / (d[0] / d[1]).ln())
                .collect();
            MetricItem {
                name: name.to_string(),
                errors: errs,
                orders,
            }
        })
        .collect();
    Ok(MetricVariationReport {
        dts: dts.to_vec(),
        grid_spacing: m.grid.max_spacing(),
        items,
        inverse_identity_error: identity_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{TorusGrid, TrigScalar};
    use crate::potential::DoubleWellPotential;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn flat(n: usize) -> Arc<ConformalTorus> {
        Arc::new(ConformalTorus::flat(TorusGrid::unit(2, n).unwrap()))
    }

    fn shear(m: &ConformalTorus) -> VectorFieldGrid {
        let mut x = VectorFieldGrid::zeros(&m.grid);
        x.components[0] = ScalarField::from_fn(&m.grid, |p| (2.0 * PI * p[1]).sin());
        x
    }

    #[test]
    fn tensors_of_a_shear() {
        let m = flat(32);
        let vt = variation_tensors(&m, &shear(&m)).unwrap();
        for node in 0..m.grid.len() {
            let y = m.grid.coords(node)[1];
            let c = (2.0 * PI * y).cos();
            assert!((vt.h.get(0, 1).values[node] - 2.0 * PI * c).abs() < 1e-10);
            assert!((vt.s.get(1, 1).values[node] - 4.0 * PI * PI * c * c).abs() < 1e-9);
            assert!(vt.div.values[node].abs() < 1e-10);
            assert!(vt.s.get(1, 1).values[node] >= 0.0);
        }
        assert!(vt.h.asymmetry() < 1e-14);
        let z = variation_tensors(&m, &VectorFieldGrid::zeros(&m.grid)).unwrap();
        assert_eq!(z.s.sup_norm() + z.h.sup_norm() + z.t.sup_norm(), 0.0);
    }

    #[test]
    fn killing_fields_on_flat_tori() {
        let m = flat(64);
        let p = ACProblem::new(m.clone(), DoubleWellPotential::quartic(), 0.1).unwrap();
        let u = ScalarField::from_fn(&m.grid, |x| 0.7 * (2.0 * PI * x[0]).cos() + 0.2 * (4.0 * PI * x[1]).sin());
        let x = VectorFieldGrid::constant(&m.grid, &[0.3, -0.8]);
        assert!(first_inner_variation(&p, &u, &x).unwrap().abs() < 1e-12);
        assert!(second_inner_variation_formula(&p, &u, &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn first_variation_matches_fd_off_critical() {
        let m = flat(64);
        let p = ACProblem::new(m.clone(), DoubleWellPotential::quartic(), 0.1).unwrap();
        let u = ScalarField::from_fn(&m.grid, |x| (2.0 * PI * x[0]).cos());
        let tv = TrigVector {
            components: vec![TrigScalar::cosine(2, 0, 1, 0.5).add(&TrigScalar::constant(1.0)), TrigScalar::sine(2, 0, 1, 0.3)],
        };
        let xg = tv.sample(&m.grid);
        let src = TrigSource { field: &tv, lengths: &m.grid.lengths };
        let formula = first_inner_variation(&p, &u, &xg).unwrap();
        let fd = fd_first_variation(&p, &u, &src, 0.01).unwrap();
        assert!((formula - fd.extrapolated).abs() < 1e-5, "{formula} vs {}", fd.extrapolated);
        let second = second_inner_variation_formula(&p, &u, &xg).unwrap();
        let fd2 = fd_second_variation(&p, &u, &src, 0.01).unwrap();
        assert!((second - fd2.extrapolated).abs() < 1e-4 * (1.0 + second.abs()), "{second} vs {}", fd2.extrapolated);
        let fd3 = fd_second_variation_pullback(&p, &u, &src, 0.01).unwrap();
        assert!((second - fd3.extrapolated).abs() < 1e-4 * (1.0 + second.abs()), "{second} vs {}", fd3.extrapolated);
    }

    #[test]
    fn conformal_formula_matches_both_flow_routes() {
        let phi = TrigScalar::cosine(2, 0, 1, 0.2);
        let m = Arc::new(ConformalTorus::conformal(TorusGrid::unit(2, 64).unwrap(), phi).unwrap());
        let p = ACProblem::new(m.clone(), DoubleWellPotential::quartic(), 0.15).unwrap();
        let u = ScalarField::from_fn(&m.grid, |x| 0.8 * (2.0 * PI * x[1]).sin() + 0.3 * (2.0 * PI * x[0]).cos());
        let tv = TrigVector::random(2, 1, 0.3, 7);
        let xg = tv.sample(&m.grid);
        let src = TrigSource { field: &tv, lengths: &m.grid.lengths };
        let second = second_inner_variation_formula(&p, &u, &xg).unwrap();
        let fd = fd_second_variation(&p, &u, &src, 0.01).unwrap().extrapolated;
        let fdp = fd_second_variation_pullback(&p, &u, &src, 0.01).unwrap().extrapolated;
        assert!((second - fd).abs() < 1e-4 * (1.0 + second.abs()), "{second} vs {fd}");
        assert!((second - fdp).abs() < 1e-4 * (1.0 + second.abs()), "{second} vs {fdp}");
    }

    #[test]
    fn energy_along_flow_at_zero_is_the_energy() {
        let m = flat(32);
        let p = ACProblem::new(m.clone(), DoubleWellPotential::quartic(), 0.2).unwrap();
        let u = ScalarField::from_fn(&m.grid, |x| (2.0 * PI * x[0]).sin());
        let tv = TrigVector::random(2, 1, 0.4, 3);
        let src = TrigSource { field: &tv, lengths: &m.grid.lengths };
        let e = energy_along_flow(&p, &u, &src, &[0.0]).unwrap();
        assert_eq!(e[0], crate::solver::energy(&p, &u).unwrap());
        let c = TrigVector::constant(&[1.0, 0.0]);
        let sc = TrigSource { field: &c, lengths: &m.grid.lengths };
        let v = energy_along_flow(&p, &u, &sc, &[0.0, 0.01, 0.05]).unwrap();
        assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-8));
    }

    #[test]
    fn metric_identities_on_a_shear() {
        let m = flat(32);
        let tv = TrigVector {
            components: vec![TrigScalar::sine(2, 1, 1, 1.0), TrigScalar::zero()],
        };
        // the shear flow is affine in t, so every difference is exact
        let rep = metric_variation_check(&m, &tv, &[0.04, 0.02, 0.01]).unwrap();
        assert!(rep.items.iter().all(|i| i.errors.iter().all(|e| *e < 1e-8)), "{:?}", rep.items);
        assert!(rep.inverse_identity_error < 1e-10);
        let r = metric_variation_check(&m, &TrigVector::random(2, 2, 0.3, 11), &[0.04, 0.02, 0.01]).unwrap();
        for item in &r.items {
            assert!(item.min_order() >= 1.9, "{item:?}");
        }
        let c = metric_variation_check(&m, &TrigVector::constant(&[0.5, 0.2]), &[0.02, 0.01]).unwrap();
        assert!(c.items.iter().all(|i| i.errors.iter().all(|e| *e < 1e-10)));
    }
}
