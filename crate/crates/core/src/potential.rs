//! Double-well potentials, the surface-tension constant and one-dimensional
//! profile solutions (heteroclinic on a line, periodic multi-transition).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dense::{periodic_d1, periodic_d2, sorted_symmetric_eigen};
use crate::error::{invalid, Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Quartic { scale: f64 },
    Polynomial { coefficients: Vec<f64> },
    Custom { w: ScalarFn, dw: ScalarFn, d2w: ScalarFn },
}

/// A nonnegative potential with two non-degenerate wells.
///
/// The default is the quartic `W(u) = (1 - u^2)^2 / 4`. Other potentials can
/// be given by polynomial coefficients (ascending powers) or by three
/// callables for `W`, `W'` and `W''`.
#[derive(Clone)]
pub struct DoubleWellPotential {
    name: String,
    shape: Shape,
    pub wells: (f64, f64),
    pub params: BTreeMap<String, f64>,
}

impl fmt::Debug for DoubleWellPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DoubleWellPotential")
            .field("name", &self.name)
            .field("wells", &self.wells)
            .field("params", &self.params)
            .finish()
    }
}

/// Serializable description of a potential, as used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Quartic {
        #[serde(default = "one")]
        scale: f64,
    },
    Polynomial {
        coefficients: Vec<f64>,
        #[serde(default = "default_wells")]
        wells: (f64, f64),
    },
}

fn one() -> f64 {
    1.0
}

fn default_wells() -> (f64, f64) {
    (-1.0, 1.0)
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Quartic { scale: 1.0 }
    }
}

impl DoubleWellPotential {
    pub fn quartic() -> Self {
        Self::scaled_quartic(1.0)
    }

    /// `c (1 - u^2)^2 / 4`.
    pub fn scaled_quartic(scale: f64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("scale".to_string(), scale);
        DoubleWellPotential {
            name: "quartic".into(),
            shape: Shape::Quartic { scale },
            wells: (-1.0, 1.0),
            params,
        }
    }

    /// Polynomial `sum_i c_i u^i`.
    pub fn polynomial(coefficients: Vec<f64>, wells: (f64, f64)) -> Self {
        let params = coefficients
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("c{i}"), c))
            .collect();
        DoubleWellPotential {
            name: "polynomial".into(),
            shape: Shape::Polynomial { coefficients },
            wells,
            params,
        }
    }

    pub fn custom<W, DW, D2W>(name: &str, wells: (f64, f64), w: W, dw: DW, d2w: D2W) -> Self
    where
        W: Fn(f64) -> f64 + Send + Sync + 'static,
        DW: Fn(f64) -> f64 + Send + Sync + 'static,
        D2W: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        DoubleWellPotential {
            name: name.into(),
            shape: Shape::Custom {
                w: Arc::new(w),
                dw: Arc::new(dw),
                d2w: Arc::new(d2w),
            },
            wells,
            params: BTreeMap::new(),
        }
    }

    pub fn from_spec(spec: &PotentialSpec) -> Self {
        match spec {
            PotentialSpec::Quartic { scale } => Self::scaled_quartic(*scale),
            PotentialSpec::Polynomial {
                coefficients,
                wells,
            } => Self::polynomial(coefficients.clone(), *wells),
        }
    }

    /// Looks a potential up by its registered name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "quartic" => Ok(Self::quartic()),
            other => invalid(format!("unknown potential '{other}'")),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// True for the unscaled quartic, whose solutions obey `|u| <= 1`.
    pub fn is_standard_quartic(&self) -> bool {
        matches!(self.shape, Shape::Quartic { scale } if scale == 1.0)
    }

    #[inline]
    pub fn w(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Quartic { scale } => {
                let a = 1.0 - u * u;
                scale * 0.25 * a * a
            }
            Shape::Polynomial { coefficients } => horner(coefficients, u),
            Shape::Custom { w, .. } => w(u),
        }
    }

    #[inline]
    pub fn dw(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Quartic { scale } => scale * (u * u * u - u),
            Shape::Polynomial { coefficients } => {
                let d: Vec<f64> = derivative_coefficients(coefficients);
                horner(&d, u)
            }
            Shape::Custom { dw, .. } => dw(u),
        }
    }

    #[inline]
    pub fn d2w(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Quartic { scale } => scale * (3.0 * u * u - 1.0),
            Shape::Polynomial { coefficients } => {
                let d = derivative_coefficients(&derivative_coefficients(coefficients));
                horner(&d, u)
            }
            Shape::Custom { d2w, .. } => d2w(u),
        }
    }
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * u + ci)
}

fn derivative_coefficients(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| i as f64 * ci)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub critical_points: Vec<(f64, CriticalKind)>,
    pub w_at_wells: (f64, f64),
    pub d2w_at_wells: (f64, f64),
    pub min_sampled_w: f64,
}

const VALIDATION_POINTS: usize = 10_000;
const WELL_TOL: f64 = 1e-12;

/// Checks the double-well assumption on a fixed validation grid over
/// `[-1.5, 1.5]`: `W >= 0`, zeros with vanishing slope and positive
/// curvature at the wells, and exactly three critical points.
pub fn validate_double_well(p: &DoubleWellPotential) -> Result<ValidationReport> {
    let (a, b) = p.wells;
    let hi = 1.5_f64.max(1.25 * a.abs().max(b.abs()));
    let lo = -hi;
    let xs: Vec<f64> = (0..VALIDATION_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (VALIDATION_POINTS - 1) as f64)
        .collect();

    let min_sampled_w = xs.iter().map(|&x| p.w(x)).fold(f64::INFINITY, f64::min);
    if min_sampled_w < -WELL_TOL {
        return Err(Error::NotDoubleWell(format!(
            "W takes the negative value {min_sampled_w:e}"
        )));
    }
    let w_at_wells = (p.w(a), p.w(b));
    if w_at_wells.0.abs() > WELL_TOL || w_at_wells.1.abs() > WELL_TOL {
        return Err(Error::NotDoubleWell(format!(
            "W does not vanish at the wells: W({a}) = {:e}, W({b}) = {:e}",
            w_at_wells.0, w_at_wells.1
        )));
    }
    if p.dw(a).abs() > WELL_TOL || p.dw(b).abs() > WELL_TOL {
        return Err(Error::NotDoubleWell("W' does not vanish at the wells".into()));
    }
    let d2w_at_wells = (p.d2w(a), p.d2w(b));
    if d2w_at_wells.0 <= 0.0 || d2w_at_wells.1 <= 0.0 {
        return Err(Error::NotDoubleWell(format!(
            "degenerate well: W'' = ({}, {})",
            d2w_at_wells.0, d2w_at_wells.1
        )));
    }

    // sign changes of W', skipping exact zeros
    let mut critical_points = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for &x in &xs {
        let d = p.dw(x);
        if d == 0.0 {
            continue;
        }
        if let Some((x0, d0)) = last {
            if d0.signum() != d.signum() {
                let root = bisect(|s| p.dw(s), x0, x, d0);
                let kind = if d0 < 0.0 {
                    CriticalKind::Minimum
                } else {
                    CriticalKind::Maximum
                };
                critical_points.push((root, kind));
            }
        }
        last = Some((x, d));
    }

    let report = ValidationReport {
        critical_points: critical_points.clone(),
        w_at_wells,
        d2w_at_wells,
        min_sampled_w,
    };
    let ok = critical_points.len() == 3
        && critical_points[0].1 == CriticalKind::Minimum
        && critical_points[1].1 == CriticalKind::Maximum
        && critical_points[2].1 == CriticalKind::Minimum
        && critical_points[1].0 > a
        && critical_points[1].0 < b;
    if !ok {
        return Err(Error::NotDoubleWell(format!(
            "expected minimum/maximum/minimum, found {} critical points {:?}",
            critical_points.len(),
            critical_points
        )));
    }
    Ok(report)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let sa = fa.signum();
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Surface tension `σ = ∫ sqrt(W/2)` between the wells, by adaptive
/// Gauss–Kronrod quadrature with absolute error at most `tol`.
pub fn surface_tension(p: &DoubleWellPotential, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let f = |u: f64| (p.w(u).max(0.0) / 2.0).sqrt();
    adaptive_gauss_kronrod(f, p.wells.0, p.wells.1, tol)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

pub(crate) fn adaptive_gauss_kronrod(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if err <= tol {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure { tol, estimate: err });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::QuadratureFailure { tol, estimate: err });
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    HeteroclinicOnLine,
    PeriodicTransitions { transitions: usize },
}

/// Sampled one-dimensional solution of `ε q'' = W'(q)/ε`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Profile1D {
    pub epsilon: f64,
    pub samples: Vec<(f64, f64)>,
    pub kind: ProfileKind,
    /// Sup norm of `ε q'' - W'(q)/ε` re-evaluated on the samples.
    pub residual: f64,
}

impl Profile1D {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }
}

/// Eighth-order central second difference.
const FD8: [f64; 9] = [
    -1.0 / 560.0,
    8.0 / 315.0,
    -1.0 / 5.0,
    8.0 / 5.0,
    -205.0 / 72.0,
    8.0 / 5.0,
    -1.0 / 5.0,
    8.0 / 315.0,
    -1.0 / 560.0,
];

/// Sup norm of `ε q'' - W'(q)/ε` on the interior samples of a uniform grid,
/// using an eighth-order difference for `q''`.
pub fn profile_residual(p: &DoubleWellPotential, epsilon: f64, q: &[f64], ds: f64) -> f64 {
    let n = q.len();
    let mut worst: f64 = 0.0;
    for i in 4..n.saturating_sub(4) {
        let d2: f64 = FD8
            .iter()
            .enumerate()
            .map(|(j, c)| c * q[i + j - 4])
            .sum::<f64>()
            / (ds * ds);
        worst = worst.max((epsilon * d2 - p.dw(q[i]) / epsilon).abs());
    }
    worst
}

/// Heteroclinic profile through `q(0) = 0` on `[-halfwidth, halfwidth]`,
/// integrated from the first integral `q' = sqrt(2 W(q)) / ε`.
pub fn heteroclinic_profile(
    p: &DoubleWellPotential,
    epsilon: f64,
    halfwidth: f64,
    n: usize,
) -> Result<Profile1D> {
    if !(epsilon > 0.0) {
        return invalid("epsilon must be positive");
    }
    if halfwidth < 12.0 * epsilon {
        return invalid(format!(
            "halfwidth {halfwidth} must be at least 12 epsilon = {}",
            12.0 * epsilon
        ));
    }
    if n < 16 {
        return invalid("at least 16 samples are required");
    }
    let ds = 2.0 * halfwidth / (n - 1) as f64;
    if ds > epsilon / 20.0 {
        return invalid(format!(
            "sample spacing {ds:e} exceeds epsilon/20; use more samples"
        ));
    }
    let rhs = |q: f64| (2.0 * p.w(q).max(0.0)).sqrt() / epsilon;

    let s_of = |i: usize| -halfwidth + ds * i as f64;
    let mut q = vec![0.0; n];
    // index of the first sample with s >= 0
    let first_nonneg = (0..n).find(|&i| s_of(i) >= -1e-14 * halfwidth).unwrap_or(n);

    let rk4_march = |q0: f64, span: f64, steps: usize| -> f64 {
        let h = span / steps as f64;
        let mut y = q0;
        for _ in 0..steps {
            let k1 = rhs(y);
            let k2 = rhs(y + 0.5 * h * k1);
            let k3 = rhs(y + 0.5 * h * k2);
            let k4 = rhs(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    };

    // march outward from s = 0 in both directions
    let mut prev_s = 0.0;
    let mut prev_q = 0.0;
    for i in first_nonneg..n {
        let s = s_of(i);
        let span = s - prev_s;
        let steps = ((span.abs() / (epsilon / 400.0)).ceil() as usize).max(1);
        prev_q = rk4_march(prev_q, span, steps);
        prev_s = s;
        q[i] = prev_q;
    }
    prev_s = 0.0;
    prev_q = 0.0;
    for i in (0..first_nonneg).rev() {
        let s = s_of(i);
        let span = s - prev_s;
        let steps = ((span.abs() / (epsilon / 400.0)).ceil() as usize).max(1);
        prev_q = rk4_march(prev_q, span, steps);
        prev_s = s;
        q[i] = prev_q;
    }

    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::ShootingDiverged("non-finite profile value".into()));
    }
    if q.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ShootingDiverged("profile is not strictly increasing".into()));
    }
    let (a, b) = p.wells;
    let gap = (q[0] - a).abs().max((q[n - 1] - b).abs());
    if gap > 1e-6 {
        return Err(Error::ShootingDiverged(format!(
            "profile ends {gap:e} away from the wells"
        )));
    }
    let residual = profile_residual(p, epsilon, &q, ds);
    if residual > 1e-8 {
        return Err(Error::ShootingDiverged(format!(
            "profile residual {residual:e} exceeds 1e-8"
        )));
    }
    Ok(Profile1D {
        epsilon,
        samples: (0..n).map(|i| (s_of(i), q[i])).collect(),
        kind: ProfileKind::HeteroclinicOnLine,
        residual,
    })
}

/// Matched tanh seed on a periodic interval: transitions at `positions`
/// (sorted), with value sign `first_sign` just after the first one.
pub fn tanh_seed(x: f64, period: f64, positions: &[f64], first_sign: f64, epsilon: f64) -> f64 {
    if positions.is_empty() {
        return first_sign.signum();
    }
    let xr = x.rem_euclid(period);
    // nearest transition in periodic distance, plus the region index
    let mut best = f64::INFINITY;
    let mut best_signed = 0.0;
    let mut best_j = 0;
    for (j, &p) in positions.iter().enumerate() {
        let mut d = xr - p;
        d -= period * (d / period).round();
        if d.abs() < best {
            best = d.abs();
            best_signed = d;
            best_j = j;
        }
    }
    // sign just after transition j alternates starting from first_sign
    let after = if best_j % 2 == 0 { first_sign.signum() } else { -first_sign.signum() };
    after * (best_signed / (std::f64::consts::SQRT_2 * epsilon)).tanh()
}

/// Counts cyclic sign changes of a periodic sequence.
pub fn cyclic_sign_changes(values: &[f64]) -> usize {
    let signs: Vec<f64> = values.iter().filter(|v| **v != 0.0).map(|v| v.signum()).collect();
    if signs.is_empty() {
        return 0;
    }
    let n = signs.len();
    (0..n).filter(|&i| signs[i] != signs[(i + 1) % n]).count()
}

/// Periodic solution with exactly `k` transitions by dense spectral Newton.
pub fn periodic_1d_solution(
    p: &DoubleWellPotential,
    epsilon: f64,
    period: f64,
    k: usize,
    n: usize,
) -> Result<Profile1D> {
    if k < 2 || k % 2 != 0 {
        return invalid(format!("transition count must be even and at least 2, got {k}"));
    }
    if period / (k as f64) < 4.0 * epsilon {
        return invalid(format!(
            "period/k = {} is below 4 epsilon = {}",
            period / k as f64,
            4.0 * epsilon
        ));
    }
    if n < 16 {
        return invalid("at least 16 grid points are required");
    }
    let h = period / n as f64;
    let positions: Vec<f64> = (0..k).map(|j| (j as f64 + 0.5) * period / k as f64).collect();
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let mut q = DVector::from_iterator(
        n,
        xs.iter().map(|&x| tanh_seed(x, period, &positions, 1.0, epsilon)),
    );
    let d2 = periodic_d2(n, period);
    let res = |q: &DVector<f64>| -> DVector<f64> {
        let lap = &d2 * q;
        DVector::from_fn(n, |i, _| -epsilon * lap[i] + p.dw(q[i]) / epsilon)
    };
    let mut f = res(&q);
    let mut converged = false;
    for _ in 0..60 {
        if f.amax() <= 1e-10 {
            converged = true;
            break;
        }
        let mut jac = &d2 * (-epsilon);
        for i in 0..n {
            jac[(i, i)] += p.d2w(q[i]) / epsilon;
        }
        let (vals, vecs) = sorted_symmetric_eigen(jac);
        let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let coeffs = vecs.transpose() * &f;
        let mut step = DVector::zeros(n);
        for (j, &lam) in vals.iter().enumerate() {
            if lam.abs() > 1e-10 * scale {
                step -= vecs.column(j) * (coeffs[j] / lam);
            }
        }
        let f0 = f.norm();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &q + &step * alpha;
            let ft = res(&trial);
            if ft.norm() < f0 * (1.0 - 1e-4 * alpha) || ft.amax() <= 1e-10 {
                q = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        return Err(Error::NewtonDiverged(format!(
            "periodic profile residual {:e} after Newton",
            f.amax()
        )));
    }
    let changes = cyclic_sign_changes(q.as_slice());
    if changes == 0 {
        return Err(Error::CollapsedToConstant);
    }
    if changes != k {
        return Err(Error::NewtonDiverged(format!(
            "converged to {changes} transitions instead of {k}"
        )));
    }
    Ok(Profile1D {
        epsilon,
        samples: xs.iter().zip(q.iter()).map(|(&s, &v)| (s, v)).collect(),
        kind: ProfileKind::PeriodicTransitions { transitions: k },
        residual: f.amax(),
    })
}

/// Energy per unit length `∫ ε q'^2/2 + W(q)/ε` of a periodic profile,
/// with spectral derivative and trapezoidal sum.
pub fn periodic_profile_energy(p: &DoubleWellPotential, profile: &Profile1D, period: f64) -> f64 {
    let n = profile.samples.len();
    let q = DVector::from_iterator(n, profile.samples.iter().map(|s| s.1));
    let dq = periodic_d1(n, period) * &q;
    let h = period / n as f64;
    let eps = profile.epsilon;
    (0..n)
        .map(|i| eps * dq[i] * dq[i] / 2.0 + p.w(q[i]) / eps)
        .sum::<f64>()
        * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartic_is_a_double_well() {
        let p = DoubleWellPotential::quartic();
        let r = validate_double_well(&p).unwrap();
        assert_eq!(r.critical_points.len(), 3);
        assert!((r.critical_points[0].0 + 1.0).abs() < 1e-9);
        assert!(r.critical_points[1].0.abs() < 1e-9);
        assert!((r.critical_points[2].0 - 1.0).abs() < 1e-9);
        // W'' = 3u^2 - 1 by hand
        assert_eq!(r.d2w_at_wells, (2.0, 2.0));
    }

    #[test]
    fn single_well_and_lifted_quartic_are_rejected() {
        let single = DoubleWellPotential::polynomial(vec![0.0, 0.0, 1.0], (-1.0, 1.0));
        assert!(matches!(validate_double_well(&single), Err(Error::NotDoubleWell(_))));
        let lifted = DoubleWellPotential::custom(
            "lifted",
            (-1.0, 1.0),
            |u| (1.0 - u * u).powi(2) / 4.0 + 0.5,
            |u| u * u * u - u,
            |u| 3.0 * u * u - 1.0,
        );
        let err = validate_double_well(&lifted).unwrap_err();
        assert!(err.to_string().contains("does not vanish"), "{err}");
    }

    #[test]
    fn polynomial_matches_quartic() {
        let poly = DoubleWellPotential::polynomial(vec![0.25, 0.0, -0.5, 0.0, 0.25], (-1.0, 1.0));
        let q = DoubleWellPotential::quartic();
        for i in 0..50 {
            let u = -1.4 + 0.057 * i as f64;
            assert!((poly.w(u) - q.w(u)).abs() < 1e-14);
            assert!((poly.dw(u) - q.dw(u)).abs() < 1e-13);
            assert!((poly.d2w(u) - q.d2w(u)).abs() < 1e-13);
        }
        validate_double_well(&poly).unwrap();
    }

    #[test]
    fn surface_tension_closed_form() {
        let p = DoubleWellPotential::quartic();
        let s = surface_tension(&p, 1e-12).unwrap();
        assert!((s - 2f64.sqrt() / 3.0).abs() <= 1e-12);
        let s4 = surface_tension(&DoubleWellPotential::scaled_quartic(4.0), 1e-12).unwrap();
        assert!((s4 - 2.0 * s).abs() < 1e-12);
        assert!(surface_tension(&p, 0.0).is_err());
    }

    #[test]
    fn custom_nonpolynomial_potential_integrates() {
        // W = (1-u^2)^2/4 * (1 + u^2/2): sqrt is not a polynomial
        let p = DoubleWellPotential::custom(
            "bumped",
            (-1.0, 1.0),
            |u| (1.0 - u * u).powi(2) / 4.0 * (1.0 + 0.5 * u * u),
            |u| 0.0 * u,
            |u| 0.0 * u,
        );
        let fine = surface_tension(&p, 1e-13).unwrap();
        let coarse = surface_tension(&p, 1e-6).unwrap();
        assert!((fine - coarse).abs() < 1e-6);
    }

    #[test]
    fn heteroclinic_matches_tanh() {
        let p = DoubleWellPotential::quartic();
        let eps = 0.05;
        let prof = heteroclinic_profile(&p, eps, 0.75, 1001).unwrap();
        for &(s, q) in &prof.samples {
            let exact = (s / (2f64.sqrt() * eps)).tanh();
            assert!((q - exact).abs() < 1e-6, "s={s}: {q} vs {exact}");
        }
        let mid = prof.samples.len() / 2;
        assert!(prof.samples[mid].1.abs() < 1e-14);
        assert!(prof.residual <= 1e-8);
    }

    #[test]
    fn heteroclinic_equipartition() {
        let p = DoubleWellPotential::quartic();
        let eps = 0.05;
        let prof = heteroclinic_profile(&p, eps, 0.75, 1201).unwrap();
        let q = prof.values();
        let ds = prof.samples[1].0 - prof.samples[0].0;
        // eighth-order first difference, independent of the integrator
        let c = [1.0 / 280.0, -4.0 / 105.0, 0.2, -0.8, 0.0, 0.8, -0.2, 4.0 / 105.0, -1.0 / 280.0];
        for i in 4..q.len() - 4 {
            let dq: f64 = (0..9).map(|j| c[j] * q[i + j - 4]).sum::<f64>() / ds;
            let defect = eps * dq * dq / 2.0 - p.w(q[i]) / eps;
            assert!(defect.abs() < 1e-8, "defect {defect:e} at {i}");
        }
    }

    #[test]
    fn heteroclinic_preconditions() {
        let p = DoubleWellPotential::quartic();
        assert!(heteroclinic_profile(&p, 0.05, 0.3, 1001).is_err());
        assert!(heteroclinic_profile(&p, 0.05, 0.75, 101).is_err());
        assert!(heteroclinic_profile(&p, -1.0, 0.75, 101).is_err());
    }

    #[test]
    fn periodic_two_transition_solution() {
        let p = DoubleWellPotential::quartic();
        let eps = 0.05;
        let prof = periodic_1d_solution(&p, eps, 1.0, 2, 256).unwrap();
        assert!(prof.residual <= 1e-10);
        let q = prof.values();
        assert_eq!(cyclic_sign_changes(&q), 2);
        // zero crossings near 0.25 and 0.75
        let n = q.len();
        let mut crossings = vec![];
        for i in 0..n {
            let (a, b) = (q[i], q[(i + 1) % n]);
            if a.signum() != b.signum() {
                let x = (i as f64 + a / (a - b)) / n as f64;
                crossings.push(x);
            }
        }
        assert!((crossings[0] - 0.25).abs() < 1e-6 && (crossings[1] - 0.75).abs() < 1e-6);
        // energy close to 2 interfaces * 2 sigma
        let sigma = 2f64.sqrt() / 3.0;
        let e = periodic_profile_energy(&p, &prof, 1.0);
        assert!((e - 4.0 * sigma).abs() / (4.0 * sigma) < 0.01, "energy {e}");
        // re-evaluated residual agrees with the certificate
        let d2 = periodic_d2(n, 1.0);
        let qv = DVector::from_vec(q.clone());
        let lap = &d2 * &qv;
        let worst = (0..n)
            .map(|i| (-eps * lap[i] + p.dw(q[i]) / eps).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-10);
    }

    #[test]
    fn periodic_energy_approaches_four_sigma() {
        let p = DoubleWellPotential::quartic();
        let sigma = 2f64.sqrt() / 3.0;
        let mut prev = f64::INFINITY;
        for &eps in &[0.1, 0.05, 0.025] {
            let prof = periodic_1d_solution(&p, eps, 1.0, 2, 256).unwrap();
            let gap = (periodic_profile_energy(&p, &prof, 1.0) - 4.0 * sigma).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn periodic_preconditions() {
        let p = DoubleWellPotential::quartic();
        assert!(periodic_1d_solution(&p, 0.05, 1.0, 0, 256).is_err());
        assert!(periodic_1d_solution(&p, 0.05, 1.0, 3, 256).is_err());
        assert!(periodic_1d_solution(&p, 0.2, 1.0, 2, 256).is_err());
    }

    #[test]
    fn seed_signs() {
        let pos = [0.25, 0.75];
        assert!(tanh_seed(0.0, 1.0, &pos, 1.0, 0.05) < -0.99);
        assert!(tanh_seed(0.5, 1.0, &pos, 1.0, 0.05) > 0.99);
        assert!(tanh_seed(0.25, 1.0, &pos, 1.0, 0.05).abs() < 1e-15);
        assert_eq!(tanh_seed(0.3, 1.0, &[], -1.0, 0.05), -1.0);
    }

    proptest! {
        #[test]
        fn surface_tension_is_monotone(c in 1.0f64..5.0, bump in 0.0f64..1.0) {
            // c W + bump * W^2 >= W pointwise, with the same wells
            let p = DoubleWellPotential::quartic();
            let lifted = DoubleWellPotential::custom(
                "lifted",
                (-1.0, 1.0),
                move |u| { let w = (1.0 - u * u).powi(2) / 4.0; c * w + bump * w * w },
                |u| u,
                |u| u,
            );
            let s0 = surface_tension(&p, 1e-10).unwrap();
            let s1 = surface_tension(&lifted, 1e-10).unwrap();
            prop_assert!(s1 >= s0 - 1e-10);
        }
    }
}
