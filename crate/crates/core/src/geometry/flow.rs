//! Time-`t` flows of vector fields from every grid node, with the
//! deformation gradient integrated alongside.

use serde::{Deserialize, Serialize};

use super::interp::GridVectorSource;
use super::trig::TrigVector;
use super::{ConformalTorus, TensorField2, VectorFieldGrid};
use crate::error::{invalid, Error, Result};

/// A vector field that can be evaluated, with its Jacobian
/// `J[k][i] = ∂_i X^k`, at arbitrary points.
pub trait VectorSource: Sync {
    fn dim(&self) -> usize;
    fn eval_jet(&self, x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]);
}

/// A trigonometric field paired with the torus lengths it lives on.
pub struct TrigSource<'a> {
    pub field: &'a TrigVector,
    pub lengths: &'a [f64],
}

impl VectorSource for TrigSource<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval_jet(&self, x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        self.field.eval_jet(&x[..self.dim()], self.lengths)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowMap {
    pub t: f64,
    /// mapped positions reduced to the fundamental domain
    pub positions: Vec<[f64; 3]>,
    /// mapped positions without periodic reduction
    pub unwrapped: Vec<[f64; 3]>,
    /// Riemannian Jacobian `|JΦ^t|` (ratio of volume elements)
    pub jacobian: Vec<f64>,
    /// deformation gradient `F[k][i] = ∂_i Φ^k`
    pub deformation: Vec<[[f64; 3]; 3]>,
    pub steps: usize,
    /// sup-norm position difference against the half-step-count run
    pub halving_error: f64,
}

const HALVING_TOL: f64 = 1e-8;
const MAX_STEPS: usize = 1 << 16;

#[inline]
fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3], n: usize) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            c[i][j] = (0..n).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn det(f: &[[f64; 3]; 3], n: usize) -> f64 {
    if n == 2 {
        f[0][0] * f[1][1] - f[0][1] * f[1][0]
    } else {
        f[0][0] * (f[1][1] * f[2][2] - f[1][2] * f[2][1])
            - f[0][1] * (f[1][0] * f[2][2] - f[1][2] * f[2][0])
            + f[0][2] * (f[1][0] * f[2][1] - f[1][1] * f[2][0])
    }
}

/// RK4 of `x' = X(x)`, `F' = DX(x) F` from one start point.
fn integrate_point(
    src: &dyn VectorSource,
    x0: [f64; 3],
    t: f64,
    steps: usize,
    n: usize,
) -> ([f64; 3], [[f64; 3]; 3]) {
    let dt = t / steps as f64;
    let mut x = x0;
    let mut f = [[0.0; 3]; 3];
    for (i, row) in f.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    let axpy = |x: &[f64; 3], k: &[f64; 3], s: f64| -> [f64; 3] {
        let mut y = *x;
        for i in 0..n {
            y[i] += s * k[i];
        }
        y
    };
    let maxpy = |a: &[[f64; 3]; 3], k: &[[f64; 3]; 3], s: f64| -> [[f64; 3]; 3] {
        let mut y = *a;
        for i in 0..n {
            for j in 0..n {
                y[i][j] += s * k[i][j];
            }
        }
        y
    };
    for _ in 0..steps {
        let (k1, j1) = src.eval_jet(&x);
        let l1 = matmul(&j1, &f, n);
        let (k2, j2) = src.eval_jet(&axpy(&x, &k1, 0.5 * dt));
        let l2 = matmul(&j2, &maxpy(&f, &l1, 0.5 * dt), n);
        let (k3, j3) = src.eval_jet(&axpy(&x, &k2, 0.5 * dt));
        let l3 = matmul(&j3, &maxpy(&f, &l2, 0.5 * dt), n);
        let (k4, j4) = src.eval_jet(&axpy(&x, &k3, dt));
        let l4 = matmul(&j4, &maxpy(&f, &l3, dt), n);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            for j in 0..n {
                f[i][j] += dt / 6.0 * (l1[i][j] + 2.0 * l2[i][j] + 2.0 * l3[i][j] + l4[i][j]);
            }
        }
    }
    (x, f)
}

fn run(
    m: &ConformalTorus,
    src: &dyn VectorSource,
    t: f64,
    steps: usize,
) -> Result<(Vec<[f64; 3]>, Vec<[[f64; 3]; 3]>)> {
    let n = m.dim();
    let mut pos = Vec::with_capacity(m.grid.len());
    let mut def = Vec::with_capacity(m.grid.len());
    for idx in 0..m.grid.len() {
        let (x, f) = integrate_point(src, m.grid.coords(idx), t, steps, n);
        if x[..n].iter().any(|v| !v.is_finite()) {
            return Err(Error::FlowBlowup(format!("non-finite position from node {idx}")));
        }
        pos.push(x);
        def.push(f);
    }
    Ok((pos, def))
}

/// Flow of a continuous field from every node; the step count is doubled
/// until consecutive runs agree to 1e-8.
pub fn flow_map_source(
    m: &ConformalTorus,
    src: &dyn VectorSource,
    t: f64,
    steps: usize,
) -> Result<FlowMap> {
    if steps < 8 {
        return invalid("at least 8 time steps are required");
    }
    if src.dim() != m.dim() {
        return Err(Error::ShapeMismatch("vector field dimension differs from manifold".into()));
    }
    if !t.is_finite() {
        return invalid("flow time must be finite");
    }
    let n = m.dim();
    let mut steps = steps;
    let (mut coarse, _) = run(m, src, t, steps)?;
    loop {
        let (fine, def) = run(m, src, t, 2 * steps)?;
        let err = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (0..n).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if err <= HALVING_TOL {
            return Ok(assemble(m, t, fine, def, 2 * steps, err));
        }
        steps *= 2;
        if 2 * steps > MAX_STEPS {
            return Err(Error::FlowBlowup(format!(
                "step-halving error {err:e} above {HALVING_TOL:e} at {steps} steps"
            )));
        }
        coarse = fine;
    }
}

/// Flow with exactly `steps` RK4 steps. The result is then a smooth
/// function of `t`, which finite differences in `t` rely on;
/// `halving_error` is left unset (NaN).
pub fn flow_map_fixed(
    m: &ConformalTorus,
    src: &dyn VectorSource,
    t: f64,
    steps: usize,
) -> Result<FlowMap> {
    if steps == 0 {
        return invalid("at least one time step is required");
    }
    if src.dim() != m.dim() {
        return Err(Error::ShapeMismatch("vector field dimension differs from manifold".into()));
    }
    if !t.is_finite() {
        return invalid("flow time must be finite");
    }
    let (pos, def) = run(m, src, t, steps)?;
    Ok(assemble(m, t, pos, def, steps, f64::NAN))
}

fn assemble(
    m: &ConformalTorus,
    t: f64,
    unwrapped: Vec<[f64; 3]>,
    deformation: Vec<[[f64; 3]; 3]>,
    steps: usize,
    halving_error: f64,
) -> FlowMap {
    let n = m.dim();
    let mut positions = unwrapped.clone();
    for p in positions.iter_mut() {
        m.grid.wrap(p);
    }
    let jacobian = (0..m.grid.len())
        .map(|idx| {
            let d = det(&deformation[idx], n);
            if m.flat {
                d
            } else {
                let p0 = m.phi.values[idx];
                let p1 = m.phi_jets(&unwrapped[idx]).0;
                d * ((n as f64) * (p1 - p0)).exp()
            }
        })
        .collect();
    FlowMap {
        t,
        positions,
        unwrapped,
        jacobian,
        deformation,
        steps,
        halving_error,
    }
}

/// Flow of a grid field, interpolated between nodes.
pub fn flow_map(m: &ConformalTorus, x: &VectorFieldGrid, t: f64, steps: usize) -> Result<FlowMap> {
    x.check(&m.grid)?;
    let src = GridVectorSource {
        grid: &m.grid,
        field: x,
    };
    flow_map_source(m, &src, t, steps)
}

/// Flow of a trigonometric field, evaluated exactly between nodes.
pub fn flow_map_trig(m: &ConformalTorus, x: &TrigVector, t: f64, steps: usize) -> Result<FlowMap> {
    x.check_dim(m.dim())?;
    let src = TrigSource {
        field: x,
        lengths: &m.grid.lengths,
    };
    flow_map_source(m, &src, t, steps)
}

/// `g^t_{ij}(x) = e^{2φ(Φ^t x)} Σ_k ∂_iΦ^k ∂_jΦ^k`.
pub fn pullback_metric(m: &ConformalTorus, f: &FlowMap) -> Result<TensorField2> {
    if f.deformation.len() != m.grid.len() {
        return Err(Error::ShapeMismatch("flow map built on a different grid".into()));
    }
    let n = m.dim();
    let mut g = TensorField2::zeros(&m.grid);
    for idx in 0..m.grid.len() {
        let fac = if m.flat {
            1.0
        } else {
            (2.0 * m.phi_jets(&f.unwrapped[idx]).0).exp()
        };
        let d = &f.deformation[idx];
        let mut gm = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..n).map(|k| d[k][i] * d[k][j]).sum();
                gm[i][j] = fac * s;
                gm[j][i] = fac * s;
            }
        }
        g.set(idx, &gm);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ScalarField, TorusGrid, TrigScalar};
    use std::f64::consts::PI;

    fn flat(n: usize) -> ConformalTorus {
        ConformalTorus::flat(TorusGrid::unit(2, n).unwrap())
    }

    fn shear() -> TrigVector {
        TrigVector {
            components: vec![TrigScalar::sine(2, 1, 1, 1.0), TrigScalar::zero()],
        }
    }

    #[test]
    fn zero_and_constant_fields() {
        let m = flat(16);
        let f = flow_map_trig(&m, &TrigVector::zero(2), 0.7, 8).unwrap();
        for idx in 0..m.grid.len() {
            assert_eq!(f.positions[idx], m.grid.coords(idx));
            assert_eq!(f.jacobian[idx], 1.0);
        }
        let c = TrigVector::constant(&[1.0, 0.0]);
        let f = flow_map_trig(&m, &c, 0.3, 8).unwrap();
        for idx in 0..m.grid.len() {
            let x = m.grid.coords(idx);
            assert!((f.unwrapped[idx][0] - x[0] - 0.3).abs() < 1e-14);
            assert!((f.jacobian[idx] - 1.0).abs() < 1e-14);
        }
        let g = pullback_metric(&m, &f).unwrap();
        assert!((g.get(0, 0).values[3] - 1.0).abs() < 1e-14);
        assert!(g.get(0, 1).values[3].abs() < 1e-14);
        assert!(flow_map_trig(&m, &c, 0.3, 4).is_err());
    }

    #[test]
    fn shear_flow_is_exact() {
        let m = flat(32);
        let t = 0.37;
        let f = flow_map_trig(&m, &shear(), t, 8).unwrap();
        for idx in 0..m.grid.len() {
            let x = m.grid.coords(idx);
            let expect = x[0] + t * (2.0 * PI * x[1]).sin();
            assert!((f.unwrapped[idx][0] - expect).abs() < 1e-12);
            assert!((f.unwrapped[idx][1] - x[1]).abs() < 1e-15);
            assert!((f.jacobian[idx] - 1.0).abs() < 1e-12);
        }
        // grid-interpolated route agrees
        let fg = flow_map(&m, &shear().sample(&m.grid), t, 8).unwrap();
        for idx in 0..m.grid.len() {
            assert!((fg.unwrapped[idx][0] - f.unwrapped[idx][0]).abs() < 1e-6);
        }
    }

    #[test]
    fn pullback_derivative_matches_killing_defect() {
        // X = (sin 2πx2, 0): d/dt g^t_12 at 0 is 2π cos(2πx2)
        let m = flat(32);
        let dt = 1e-4;
        let gp = pullback_metric(&m, &flow_map_trig(&m, &shear(), dt, 8).unwrap()).unwrap();
        let gm = pullback_metric(&m, &flow_map_trig(&m, &shear(), -dt, 8).unwrap()).unwrap();
        for idx in (0..m.grid.len()).step_by(13) {
            let x = m.grid.coords(idx);
            let d = (gp.get(0, 1).values[idx] - gm.get(0, 1).values[idx]) / (2.0 * dt);
            assert!((d - 2.0 * PI * (2.0 * PI * x[1]).cos()).abs() < 1e-6);
        }
        let g0 = pullback_metric(&m, &flow_map_trig(&m, &shear(), 0.0, 8).unwrap()).unwrap();
        assert_eq!(g0.get(0, 0).values[5], 1.0);
        assert_eq!(g0.get(0, 1).values[5], 0.0);
    }

    #[test]
    fn group_property_and_conformal_start() {
        let phi = TrigScalar::cosine(2, 0, 1, 0.2);
        let m = ConformalTorus::conformal(TorusGrid::unit(2, 16).unwrap(), phi).unwrap();
        let x = TrigVector::random(2, 1, 0.2, 3);
        let src = TrigSource {
            field: &x,
            lengths: &m.grid.lengths,
        };
        let f0 = flow_map_trig(&m, &x, 0.0, 8).unwrap();
        let g0 = pullback_metric(&m, &f0).unwrap();
        for idx in 0..m.grid.len() {
            assert!((g0.get(0, 0).values[idx] - m.metric_factor()[idx]).abs() < 1e-14);
        }
        let (s, t) = (0.11, 0.07);
        let fst = flow_map_trig(&m, &x, s + t, 8).unwrap();
        let fs = flow_map_trig(&m, &x, s, 8).unwrap();
        for idx in (0..m.grid.len()).step_by(7) {
            let (y, _) = integrate_point(&src, fs.unwrapped[idx], t, 64, 2);
            for a in 0..2 {
                assert!((y[a] - fst.unwrapped[idx][a]).abs() < 1e-8);
            }
        }
        // Jacobian equals the pullback volume ratio
        let g = pullback_metric(&m, &fst).unwrap();
        for idx in 0..m.grid.len() {
            let gm = g.at(idx);
            let dg = gm[0][0] * gm[1][1] - gm[0][1] * gm[1][0];
            let ratio = dg.sqrt() / m.metric_factor()[idx];
            assert!((ratio - fst.jacobian[idx]).abs() < 1e-12);
        }
        let _ = ScalarField::zeros(&m.grid);
    }
}
