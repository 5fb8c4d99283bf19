//! Critical points of the Allen-Cahn energy on a torus: residual, energy,
//! damped Newton, slab seeds and a stabilized gradient flow.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ConformalTorus, ScalarField};
use crate::linalg::minres;
use crate::potential::{cyclic_sign_changes, tanh_seed, DoubleWellPotential};

/// Minimum interface separation for slab seeds, in units of epsilon.
pub const MIN_SEPARATION: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct ACProblem {
    pub manifold: Arc<ConformalTorus>,
    pub potential: DoubleWellPotential,
    pub epsilon: f64,
    /// non-fatal diagnostics recorded at construction
    pub warnings: Vec<String>,
}

impl ACProblem {
    pub fn new(
        manifold: Arc<ConformalTorus>,
        potential: DoubleWellPotential,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return invalid("epsilon must be positive");
        }
        let h = manifold.grid.max_spacing();
        if epsilon < 4.0 * h {
            return invalid(format!(
                "epsilon {epsilon} is below 4 grid spacings ({})",
                4.0 * h
            ));
        }
        let mut warnings = vec![];
        if epsilon < 8.0 * h {
            warnings.push(format!(
                "epsilon {epsilon} resolves the interface layer with fewer than 8 grid spacings"
            ));
        }
        Ok(ACProblem {
            manifold,
            potential,
            epsilon,
            warnings,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ACSolution {
    pub problem: ACProblem,
    pub u: ScalarField,
    pub residual_norm: f64,
    pub energy: f64,
    pub newton_iters: usize,
    pub tol: f64,
    /// no sign change left anywhere
    pub collapsed: bool,
    /// cyclic sign changes along the first axis through the origin
    pub transitions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionCertificate {
    pub epsilon: f64,
    pub residual_norm: f64,
    pub energy: f64,
    pub iterations: usize,
    pub transitions: usize,
    pub collapsed: bool,
    pub sup_abs_u: f64,
}

impl ACSolution {
    pub fn epsilon(&self) -> f64 {
        self.problem.epsilon
    }

    pub fn manifold(&self) -> &ConformalTorus {
        &self.problem.manifold
    }

    pub fn certificate(&self) -> SolutionCertificate {
        SolutionCertificate {
            epsilon: self.problem.epsilon,
            residual_norm: self.residual_norm,
            energy: self.energy,
            iterations: self.newton_iters,
            transitions: self.transitions,
            collapsed: self.collapsed,
            sup_abs_u: self.u.sup_norm(),
        }
    }

    /// Wraps a field after independently verifying its residual.
    pub fn certify(p: &ACProblem, u: ScalarField, tol: f64) -> Result<Self> {
        u.check(&p.manifold.grid)?;
        let res = residual(p, &u)?.sup_norm();
        if res > tol {
            return Err(Error::NotCritical { residual: res, tol });
        }
        build_solution(p, u, res, 0, tol)
    }
}

fn residual_raw(p: &ACProblem, u: &[f64]) -> Vec<f64> {
    let lap = p.manifold.laplace_beltrami_raw(u);
    let e = p.epsilon;
    lap.iter()
        .zip(u)
        .map(|(l, &v)| -e * l + p.potential.dw(v) / e)
        .collect()
}

/// `-ε Δ_g u + W'(u)/ε` at every node.
pub fn residual(p: &ACProblem, u: &ScalarField) -> Result<ScalarField> {
    u.check(&p.manifold.grid)?;
    ScalarField::from_values(&p.manifold.grid, residual_raw(p, &u.values))
}

/// `ε |∇u|_g^2 / 2 + W(u)/ε`.
pub fn energy_density(p: &ACProblem, u: &ScalarField) -> Result<ScalarField> {
    u.check(&p.manifold.grid)?;
    let (grad, pot) = density_parts(p, &u.values);
    ScalarField::from_values(
        &p.manifold.grid,
        grad.iter().zip(&pot).map(|(a, b)| a + b).collect(),
    )
}

/// Gradient part `ε|∇u|²/2` and potential part `W(u)/ε` of the density.
pub(crate) fn density_parts(p: &ACProblem, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = &p.manifold;
    let du = m.gradient_flat_raw(u);
    let e = p.epsilon;
    let fac = m.metric_factor();
    let grad = (0..u.len())
        .map(|i| {
            let s: f64 = du.iter().map(|d| d[i] * d[i]).sum();
            let s = if m.flat { s } else { s / fac[i] };
            e * s / 2.0
        })
        .collect();
    let pot = u.iter().map(|&v| p.potential.w(v) / e).collect();
    (grad, pot)
}

pub fn energy(p: &ACProblem, u: &ScalarField) -> Result<f64> {
    let d = energy_density(p, u)?;
    p.manifold.integrate(&d)
}

fn count_transitions(m: &ConformalTorus, u: &[f64]) -> (usize, bool) {
    let n0 = m.grid.counts[0];
    let stride = m.grid.strides()[0];
    let line: Vec<f64> = (0..n0).map(|i| u[i * stride]).collect();
    let collapsed = {
        let pos = u.iter().any(|&v| v > 0.0);
        let neg = u.iter().any(|&v| v < 0.0);
        !(pos && neg)
    };
    (cyclic_sign_changes(&line), collapsed)
}

fn build_solution(
    p: &ACProblem,
    u: ScalarField,
    residual_norm: f64,
    iters: usize,
    tol: f64,
) -> Result<ACSolution> {
    if p.potential.is_standard_quartic() {
        let sup = u.sup_norm();
        if sup > 1.0 + 1e-6 {
            return Err(Error::MaximumPrinciple(sup));
        }
    }
    let energy = energy(p, &u)?;
    let (transitions, collapsed) = count_transitions(&p.manifold, &u.values);
    Ok(ACSolution {
        problem: p.clone(),
        u,
        residual_norm,
        energy,
        newton_iters: iters,
        tol,
        collapsed,
        transitions,
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton iteration on `F(u) = -εΔ_g u + W'(u)/ε`.
///
/// Each step solves the linearization multiplied through by `e^{2φ}`, which
/// makes it symmetric in the Euclidean node inner product:
/// `(-ε Δ_flat + e^{2φ} W''(u)/ε) δ = -e^{2φ} F(u)`, by preconditioned
/// MINRES with an inexact (Eisenstat-Walker) tolerance.
pub fn newton_solve(
    p: &ACProblem,
    u0: &ScalarField,
    tol: f64,
    max_iter: usize,
) -> Result<ACSolution> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    u0.check(&p.manifold.grid)?;
    let m = &p.manifold;
    let e = p.epsilon;
    let n = u0.len();
    let fac: Vec<f64> = m.metric_factor().to_vec();
    let mean_fac = fac.iter().sum::<f64>() / n as f64;
    let (wa, wb) = p.potential.wells;
    let curv = p.potential.d2w(wa).max(p.potential.d2w(wb));
    let shift = mean_fac * curv / e;
    let spectral = m.spectral();

    let mut u = u0.values.clone();
    let mut f = residual_raw(p, &u);
    let mut iters = 0;
    let mut prev_norm = f64::INFINITY;
    while sup(&f) > tol {
        if iters >= max_iter {
            return Err(Error::NewtonDiverged(format!(
                "residual {:e} after {max_iter} iterations",
                sup(&f)
            )));
        }
        iters += 1;
        let diag: Vec<f64> = u
            .iter()
            .zip(&fac)
            .map(|(&v, g)| g * p.potential.d2w(v) / e)
            .collect();
        let precond = |x: &[f64]| spectral.solve_shifted(x, shift, e);
        let rhs: Vec<f64> = f.iter().zip(&fac).map(|(fi, g)| -g * fi).collect();
        let fnorm = norm2(&f);
        let eta = if prev_norm.is_finite() {
            (0.9 * (fnorm / prev_norm).powi(2)).clamp(1e-12, 1e-2)
        } else {
            1e-2
        };
        let eta = eta.min(1e-2 * (tol / sup(&f)).max(1e-12)).max(1e-13);
        prev_norm = fnorm;

        // near-degenerate translation modes make the plain step overshoot;
        // a growing diagonal shift (Levenberg) tames them
        let mut accepted = false;
        for lm in [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0] {
            let reg = lm * shift;
            let apply = |x: &[f64]| -> Vec<f64> {
                let lap = spectral.laplacian(x);
                lap.iter()
                    .zip(x)
                    .zip(&diag)
                    .map(|((l, xi), d)| -e * l + (d + reg) * xi)
                    .collect()
            };
            let (delta, _) = minres(&apply, &precond, &rhs, eta, 2000);
            let mut alpha = 1.0;
            for _ in 0..30 {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
                let ft = residual_raw(p, &trial);
                if norm2(&ft) < (1.0 - 1e-4 * alpha) * fnorm || sup(&ft) <= tol {
                    u = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            return Err(Error::NewtonDiverged(format!(
                "line search failed 30 times at iteration {iters}, residual {:e}",
                sup(&f)
            )));
        }
    }
    let uf = ScalarField::from_values(&m.grid, u)?;
    // independent re-evaluation of the certificate
    let res = residual(p, &uf)?.sup_norm();
    build_solution(p, uf, res, iters, tol)
}

/// Product tanh profile with transitions at `positions` along `axis`.
///
/// `first_sign` is the sign just after the first transition; signs
/// alternate. With no positions the field is the constant `first_sign`.
pub fn seed_slab(
    m: &ConformalTorus,
    eps: f64,
    axis: usize,
    positions: &[f64],
    first_sign: f64,
) -> Result<ScalarField> {
    if axis >= m.dim() {
        return invalid(format!("axis {axis} out of range"));
    }
    if !(eps > 0.0) {
        return invalid("epsilon must be positive");
    }
    let period = m.grid.lengths[axis];
    if positions.is_empty() {
        return Ok(ScalarField::constant(&m.grid, first_sign.signum()));
    }
    if positions.len() % 2 != 0 {
        return invalid("a periodic seed needs an even number of transitions");
    }
    if positions.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("positions must be strictly increasing");
    }
    let k = positions.len();
    let minimum = MIN_SEPARATION * eps;
    for j in 0..k {
        let next = if j + 1 < k { positions[j + 1] } else { positions[0] + period };
        let sep = next - positions[j];
        if sep < minimum {
            return Err(Error::SeparationTooSmall {
                separation: sep,
                minimum,
            });
        }
    }
    Ok(ScalarField::from_fn(&m.grid, |x| {
        tanh_seed(x[axis], period, positions, first_sign, eps)
    }))
}

/// Stabilized semi-implicit gradient descent
/// `((1 + dt S) - dt ε Δ) u^{n+1} = (1 + dt S) u^n - dt e^{2φ} W'(u^n)/ε`,
/// which is energy-stable for any `dt`; the energy decrease is checked at
/// every step.
pub fn gradient_flow(p: &ACProblem, u0: &ScalarField, dt: f64, steps: usize) -> Result<ACSolution> {
    if !(dt > 0.0) {
        return invalid("time step must be positive");
    }
    u0.check(&p.manifold.grid)?;
    let m = &p.manifold;
    let e = p.epsilon;
    let fac = m.metric_factor();
    let max_fac = fac.iter().cloned().fold(0.0, f64::max);
    let lo = u0.values.iter().cloned().fold(-1.0, f64::min).min(p.potential.wells.0);
    let hi = u0.values.iter().cloned().fold(1.0, f64::max).max(p.potential.wells.1);
    let max_w2 = (0..=200)
        .map(|i| p.potential.d2w(lo + (hi - lo) * i as f64 / 200.0).abs())
        .fold(0.0, f64::max);
    let s = max_fac * max_w2 / e;
    let spectral = m.spectral();
    let mut u = u0.values.clone();
    let mut before = energy(p, u0)?;
    for step in 0..steps {
        let rhs: Vec<f64> = u
            .iter()
            .zip(fac)
            .map(|(&v, g)| (1.0 + dt * s) * v - dt * g * p.potential.dw(v) / e)
            .collect();
        u = spectral.solve_shifted(&rhs, 1.0 + dt * s, dt * e);
        let uf = ScalarField::from_values(&m.grid, u.clone())?;
        let after = energy(p, &uf)?;
        if after > before + 1e-12 * (1.0 + before.abs()) {
            return Err(Error::EnergyIncrease {
                step,
                before,
                after,
            });
        }
        before = after;
    }
    let uf = ScalarField::from_values(&m.grid, u)?;
    let res = residual(p, &uf)?.sup_norm();
    let energy = energy(p, &uf)?;
    let (transitions, collapsed) = count_transitions(m, &uf.values);
    Ok(ACSolution {
        problem: p.clone(),
        u: uf,
        residual_norm: res,
        energy,
        newton_iters: 0,
        tol: f64::INFINITY,
        collapsed,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusGrid;
    use crate::potential::{periodic_1d_solution, periodic_profile_energy, surface_tension};

    fn problem(n: usize, eps: f64) -> ACProblem {
        let m = Arc::new(ConformalTorus::flat(TorusGrid::unit(2, n).unwrap()));
        ACProblem::new(m, DoubleWellPotential::quartic(), eps).unwrap()
    }

    #[test]
    fn constants_are_exact_solutions() {
        let p = problem(64, 0.1);
        for c in [1.0, 0.0, -1.0] {
            let u = ScalarField::constant(&p.manifold.grid, c);
            assert_eq!(residual(&p, &u).unwrap().sup_norm(), 0.0);
        }
        let one = ScalarField::constant(&p.manifold.grid, 1.0);
        assert_eq!(energy(&p, &one).unwrap(), 0.0);
        let zero = ScalarField::constant(&p.manifold.grid, 0.0);
        let p05 = problem(128, 0.05);
        let z = ScalarField::constant(&p05.manifold.grid, 0.0);
        assert!((energy(&p05, &z).unwrap() - 5.0).abs() < 1e-12);
        let s = newton_solve(&p, &zero, 1e-10, 10).unwrap();
        assert_eq!(s.newton_iters, 0);
        assert!(s.u.sup_norm() == 0.0);
    }

    #[test]
    fn newton_collapses_constant_seed() {
        let p = problem(64, 0.1);
        let u0 = ScalarField::constant(&p.manifold.grid, 0.9);
        let s = newton_solve(&p, &u0, 1e-12, 50).unwrap();
        assert!(s.collapsed);
        assert!((s.u.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_resolution_rules() {
        let m = Arc::new(ConformalTorus::flat(TorusGrid::unit(2, 64).unwrap()));
        assert!(ACProblem::new(m.clone(), DoubleWellPotential::quartic(), 0.05).is_err());
        let p = ACProblem::new(m, DoubleWellPotential::quartic(), 0.1).unwrap();
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn seed_examples() {
        let m = ConformalTorus::flat(TorusGrid::unit(2, 64).unwrap());
        let u = seed_slab(&m, 0.05, 0, &[0.25, 0.75], 1.0).unwrap();
        assert!(u.values[m.grid.flat_index(&[0, 5])] < -0.99);
        assert!(u.values[m.grid.flat_index(&[32, 5])] > 0.99);
        assert!(u.values.iter().all(|v| v.abs() <= 1.0));
        let c = seed_slab(&m, 0.05, 0, &[], -1.0).unwrap();
        assert!(c.values.iter().all(|&v| v == -1.0));
        assert!(matches!(
            seed_slab(&m, 0.05, 0, &[0.25, 0.3], 1.0),
            Err(Error::SeparationTooSmall { .. })
        ));
        assert!(seed_slab(&m, 0.05, 0, &[0.25], 1.0).is_err());
    }

    #[test]
    fn two_slab_solution_matches_one_dimensional_oracle() {
        let eps = 0.05;
        let p = problem(128, eps);
        let m = &p.manifold;
        let u0 = seed_slab(m, eps, 0, &[0.25, 0.75], 1.0).unwrap();
        let s = newton_solve(&p, &u0, 1e-10, 30).unwrap();
        assert!(s.residual_norm <= 1e-10);
        assert_eq!(s.transitions, 2);
        assert!(!s.collapsed);
        // independence in x2
        for i in 0..128 {
            let a = s.u.values[m.grid.flat_index(&[i, 0])];
            for j in 1..128 {
                assert!((s.u.values[m.grid.flat_index(&[i, j])] - a).abs() < 1e-9);
            }
        }
        // same profile as the 1-D Newton solution and the same energy
        let prof = periodic_1d_solution(&p.potential, eps, 1.0, 2, 128).unwrap();
        for i in 0..128 {
            assert!((s.u.values[m.grid.flat_index(&[i, 3])] - prof.samples[i].1).abs() < 1e-8);
        }
        let e1 = periodic_profile_energy(&p.potential, &prof, 1.0);
        assert!((s.energy - e1).abs() < 1e-8);
        let sigma = surface_tension(&p.potential, 1e-12).unwrap();
        assert!((s.energy - 4.0 * sigma).abs() / (4.0 * sigma) < 0.03);
    }

    #[test]
    fn four_slab_seed_gives_four_interfaces() {
        let eps = 0.04;
        let p = problem(128, eps);
        let u0 = seed_slab(&p.manifold, eps, 0, &[0.125, 0.375, 0.625, 0.875], 1.0).unwrap();
        let s = newton_solve(&p, &u0, 1e-10, 30).unwrap();
        assert_eq!(s.transitions, 4);
    }

    #[test]
    fn gradient_flow_then_newton() {
        let eps = 0.05;
        let p = problem(128, eps);
        let u0 = seed_slab(&p.manifold, eps, 0, &[0.25, 0.75], 1.0).unwrap();
        let flowed = gradient_flow(&p, &u0, 1e-3, 20).unwrap();
        assert!(flowed.energy <= energy(&p, &u0).unwrap());
        let a = newton_solve(&p, &flowed.u, 1e-10, 30).unwrap();
        let b = newton_solve(&p, &u0, 1e-10, 30).unwrap();
        let diff = a.u.zip_map(&b.u, |x, y| x - y).sup_norm();
        assert!(diff < 1e-7, "endpoints differ by {diff:e}");
        let one = ScalarField::constant(&p.manifold.grid, 1.0);
        let fixed = gradient_flow(&p, &one, 0.1, 5).unwrap();
        assert_eq!(fixed.u.values, one.values);
    }

    #[test]
    fn conformal_newton_converges() {
        use crate::geometry::TrigScalar;
        let eps = 0.05;
        let grid = TorusGrid::unit(2, 128).unwrap();
        let m = Arc::new(ConformalTorus::conformal(grid, TrigScalar::cosine(2, 0, 1, 0.2)).unwrap());
        let p = ACProblem::new(m.clone(), DoubleWellPotential::quartic(), eps).unwrap();
        let u0 = seed_slab(&m, eps, 0, &[0.0, 0.5], 1.0).unwrap();
        let s = newton_solve(&p, &u0, 1e-10, 40).unwrap();
        assert!(s.residual_norm <= 1e-10);
        assert_eq!(s.transitions, 2);
    }
}
