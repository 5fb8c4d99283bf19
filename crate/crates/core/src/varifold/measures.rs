//! Diffuse measures of solutions and the pairings and variations of the
//! limit varifold.

use serde::{Deserialize, Serialize};

use super::Interface;
use crate::error::{invalid, Result};
use crate::geometry::interp::interpolate_jet;
use crate::geometry::{covariant_jet, ConformalTorus, TensorField2, VectorFieldGrid, VectorSource};
use crate::solver::{density_parts, ACSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffuseMeasures {
    /// `∫ ε|∇u|²/2`
    pub mass: f64,
    /// `∫ W(u)/ε`
    pub potential_mass: f64,
    /// `∫ |ε|∇u|²/2 - W(u)/ε|`
    pub defect: f64,
    pub energy: f64,
}

pub fn diffuse_measures(sol: &ACSolution) -> DiffuseMeasures {
    let m = sol.manifold();
    let (grad, pot) = density_parts(&sol.problem, &sol.u.values);
    let mass = m.integrate_raw(&grad);
    let potential_mass = m.integrate_raw(&pot);
    let diff: Vec<f64> = grad.iter().zip(&pot).map(|(a, b)| (a - b).abs()).collect();
    DiffuseMeasures {
        mass,
        potential_mass,
        defect: m.integrate_raw(&diff),
        energy: mass + potential_mass,
    }
}

fn check_symmetric(t: &TensorField2) -> Result<()> {
    let scale = t.sup_norm().max(1.0);
    if t.asymmetry() > 1e-12 * scale {
        return invalid("tensor field is not symmetric");
    }
    Ok(())
}

/// `∫ ε T(∇u, ∇u) dvol_g` with `∇u` the metric gradient.
pub fn tensor_pairing(sol: &ACSolution, t: &TensorField2) -> Result<f64> {
    let m = sol.manifold();
    check_symmetric(t)?;
    if t.dim != m.dim() || t.components[0].values.len() != m.grid.len() {
        return Err(crate::Error::ShapeMismatch("tensor does not match the grid".into()));
    }
    let du = m.gradient_raw(&sol.u.values);
    let n = m.dim();
    let e = sol.epsilon();
    let vals: Vec<f64> = (0..m.grid.len())
        .map(|node| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += t.get(i, j).values[node] * du[i][node] * du[j][node];
                }
            }
            e * s
        })
        .collect();
    Ok(m.integrate_raw(&vals))
}

/// `2σ Σ m_j ∫_{Γ_j} T(n, n)`, with `T` interpolated to the nodes.
pub fn limit_tensor_pairing(m: &ConformalTorus, itf: &Interface, t: &TensorField2) -> Result<f64> {
    check_symmetric(t)?;
    let n = m.dim();
    let mut total = 0.0;
    for c in &itf.components {
        let mut s = 0.0;
        for (p, nv) in c.nodes.iter().zip(&c.normals) {
            for i in 0..n {
                for j in 0..n {
                    let tij = interpolate_jet(&m.grid, &t.get(i, j).values, p).0;
                    s += tij * nv[i] * nv[j];
                }
            }
        }
        total += c.multiplicity as f64 * c.weight() * s;
    }
    Ok(2.0 * itf.sigma * total)
}

/// `ε ∫ ⟨∇u, Z⟩_g² dvol_g`.
pub fn q_form(sol: &ACSolution, z: &VectorFieldGrid) -> Result<f64> {
    let m = sol.manifold();
    z.check(&m.grid)?;
    let du = m.gradient_flat_raw(&sol.u.values);
    let e = sol.epsilon();
    let vals: Vec<f64> = (0..m.grid.len())
        .map(|node| {
            let s: f64 = (0..m.dim()).map(|i| du[i][node] * z.components[i].values[node]).sum();
            e * s * s
        })
        .collect();
    Ok(m.integrate_raw(&vals))
}

fn ginner(g: f64, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    g * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
}

fn along(v: &[f64; 3], d: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        for k in 0..3 {
            out[k] += v[i] * d[i][k];
        }
    }
    out
}

/// `Σ σ m_j ∫_{Γ_j} div^{Γ_j} X`.
pub fn first_variation_varifold(m: &ConformalTorus, itf: &Interface, x: &dyn VectorSource) -> Result<f64> {
    if x.dim() != m.dim() {
        return invalid("vector field dimension does not match the manifold");
    }
    let mut total = 0.0;
    for c in &itf.components {
        let mut s = 0.0;
        for (node, p) in c.nodes.iter().enumerate() {
            let (_, d) = covariant_jet(m, x, p);
            let g = c.metric_factor[node];
            for t in &c.tangents {
                s += ginner(g, &along(&t[node], &d), &t[node]);
            }
        }
        total += c.multiplicity as f64 * c.weight() * s;
    }
    Ok(itf.sigma * total)
}

/// `Q_V` on normal amplitudes; the same form that defines the Jacobi
/// spectrum.
pub fn second_variation_varifold(itf: &Interface, f: &[Vec<f64>]) -> Result<f64> {
    crate::spectrum::jacobi_quadratic_form(itf, f)
}

/// Limit of `δ²E_ε(X)/(2σ)` split into its parts, each weighted by the
/// multiplicities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSecondVariation {
    /// second variation of the varifold
    pub delta2_v: f64,
    /// `∫ ⟨∇_n X, n⟩²`
    pub normal_term: f64,
    /// `∫ R(X, n, X, n)`
    pub curvature_term: f64,
    pub total: f64,
}

pub fn limit_second_variation(
    m: &ConformalTorus,
    itf: &Interface,
    x: &dyn VectorSource,
) -> Result<LimitSecondVariation> {
    if x.dim() != m.dim() {
        return invalid("vector field dimension does not match the manifold");
    }
    let (mut dv, mut nt, mut ct) = (0.0, 0.0, 0.0);
    for c in &itf.components {
        let (mut a, mut b, mut r) = (0.0, 0.0, 0.0);
        for (node, p) in c.nodes.iter().enumerate() {
            let (v, d) = covariant_jet(m, x, p);
            let g = c.metric_factor[node];
            let k = c.gauss[node];
            let n = &c.normals[node];
            let grads: Vec<[f64; 3]> = c.tangents.iter().map(|t| along(&t[node], &d)).collect();
            let div: f64 = grads.iter().zip(&c.tangents).map(|(gl, t)| ginner(g, gl, &t[node])).sum();
            let perp: f64 = grads.iter().map(|gl| ginner(g, gl, n).powi(2)).sum();
            let mut cross = 0.0;
            for (l, gl) in grads.iter().enumerate() {
                for (mm, gm) in grads.iter().enumerate() {
                    cross += ginner(g, gl, &c.tangents[mm][node]) * ginner(g, gm, &c.tangents[l][node]);
                }
            }
            let xx = ginner(g, &v, &v);
            let xn = ginner(g, &v, n);
            // Ric = K g for conformally flat surfaces; zero on flat tori
            let ric = k * xx;
            a += div * div + perp - cross - ric;
            b += ginner(g, &along(n, &d), n).powi(2);
            r += k * (xx - xn * xn);
        }
        let w = c.multiplicity as f64 * c.weight();
        dv += w * a;
        nt += w * b;
        ct += w * r;
    }
    Ok(LimitSecondVariation {
        delta2_v: dv,
        normal_term: nt,
        curvature_term: ct,
        total: dv + nt + ct,
    })
}
