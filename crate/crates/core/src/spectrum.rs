//! Spectra of the linearized Allen-Cahn operator and of the weighted
//! Jacobi form of the limit interface, and the reports comparing them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dense::{generalized_symmetric_eigen, periodic_d1};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ScalarField, TorusGrid};
use crate::linalg::{lobpcg, LobpcgOptions};
use crate::solver::ACSolution;
use crate::varifold::{Interface, InterfaceComponent};

/// Largest supported eigenvalue count.
pub const MAX_EIGENVALUES: usize = 50;
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Open subset of the torus given by the nodes it contains; eigenproblems
/// use zero values outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMask {
    pub grid: TorusGrid,
    pub inside: Vec<bool>,
}

impl DomainMask {
    pub fn full(grid: &TorusGrid) -> Self {
        DomainMask {
            grid: grid.clone(),
            inside: vec![true; grid.len()],
        }
    }

    pub fn from_fn(grid: &TorusGrid, pred: impl Fn(&[f64; 3]) -> bool) -> Result<Self> {
        let inside: Vec<bool> = (0..grid.len()).map(|i| pred(&grid.coords(i))).collect();
        Self::from_flags(grid, inside)
    }

    pub fn from_flags(grid: &TorusGrid, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(Error::ShapeMismatch("mask does not match the grid".into()));
        }
        if !inside.iter().any(|&b| b) {
            return invalid("mask is empty");
        }
        Ok(DomainMask {
            grid: grid.clone(),
            inside,
        })
    }

    pub fn is_full(&self) -> bool {
        self.inside.iter().all(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.inside.len()).filter(|&i| self.inside[i]).collect()
    }

    /// Inside nodes with an outside neighbour along some axis.
    pub fn boundary_layer(&self) -> Vec<usize> {
        let g = &self.grid;
        self.indices()
            .into_iter()
            .filter(|&i| {
                let mi = g.multi_index(i);
                (0..g.dim).any(|a| {
                    [-1i64, 1].iter().any(|&s| {
                        let mut mm = [mi[0] as i64, mi[1] as i64, mi[2] as i64];
                        mm[a] += s;
                        !self.inside[g.wrapped_index(&mm[..g.dim])]
                    })
                })
            })
            .collect()
    }

    /// Whether the node nearest to `x` is inside.
    pub fn contains_point(&self, x: &[f64; 3]) -> bool {
        let g = &self.grid;
        let h = g.spacing();
        let mi: Vec<i64> = (0..g.dim).map(|a| (x[a] / h[a]).round() as i64).collect();
        self.inside[g.wrapped_index(&mi)]
    }

    pub fn is_subset_of(&self, other: &DomainMask) -> bool {
        self.inside.len() == other.inside.len()
            && self.inside.iter().zip(&other.inside).all(|(&a, &b)| !a || b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    Ac,
    JacobiWeighted,
    JacobiHat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub kind: SpectrumKind,
    pub eigenvalues: Vec<f64>,
    /// AC: node values on the full grid (zero outside the mask), unit in
    /// `L²(dvol_g)`. Jacobi: amplitudes of all components concatenated,
    /// see `offsets`.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub eigenfields: Vec<Vec<f64>>,
    /// start of each component's block in a Jacobi eigenfield
    #[serde(default)]
    pub offsets: Vec<usize>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub mask_nodes: usize,
    pub full_mask: bool,
}

impl SpectrumResult {
    /// Per-component amplitudes of Jacobi eigenfield `l`.
    pub fn amplitudes(&self, l: usize) -> Vec<Vec<f64>> {
        let f = &self.eigenfields[l];
        let mut out = vec![];
        for (j, &o) in self.offsets.iter().enumerate() {
            let end = self.offsets.get(j + 1).copied().unwrap_or(f.len());
            out.push(f[o..end].to_vec());
        }
        out
    }

    pub fn field(&self, grid: &TorusGrid, l: usize) -> Result<ScalarField> {
        ScalarField::from_values(grid, self.eigenfields[l].clone())
    }
}

/// `-ε Δ_g φ + W''(u) φ / ε`.
pub fn ac_operator_apply(sol: &ACSolution, phi: &ScalarField) -> Result<ScalarField> {
    let m = sol.manifold();
    phi.check(&m.grid)?;
    let e = sol.epsilon();
    let lap = m.laplace_beltrami_raw(&phi.values);
    let pot = &sol.problem.potential;
    let vals = lap
        .iter()
        .zip(&phi.values)
        .zip(&sol.u.values)
        .map(|((l, p), &u)| -e * l + pot.d2w(u) * p / e)
        .collect();
    ScalarField::from_values(&m.grid, vals)
}

/// `E''(u)(v, v) / ∫ v² dvol_g`.
pub fn ac_rayleigh_quotient(sol: &ACSolution, v: &ScalarField) -> Result<f64> {
    let m = sol.manifold();
    v.check(&m.grid)?;
    let lv = ac_operator_apply(sol, v)?;
    let num: Vec<f64> = lv.values.iter().zip(&v.values).map(|(a, b)| a * b).collect();
    let den: Vec<f64> = v.values.iter().map(|b| b * b).collect();
    Ok(m.integrate_raw(&num) / m.integrate_raw(&den))
}

#[derive(Debug, Clone, Copy)]
pub struct AcEigenOptions {
    /// residual bound for unit eigenvectors of the symmetrized operator
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for AcEigenOptions {
    fn default() -> Self {
        AcEigenOptions {
            tol: 1e-8,
            max_iter: 3000,
            seed: DEFAULT_SEED,
        }
    }
}

pub fn ac_eigenvalues(sol: &ACSolution, mask: &DomainMask, count: usize) -> Result<SpectrumResult> {
    ac_eigenvalues_with(sol, mask, count, AcEigenOptions::default())
}

/// Lowest eigenpairs of the linearized operator on the mask.
///
/// The operator is self-adjoint for `e^{2φ} dx`; the eigensolver works
/// with the conjugate `e^{φ} L e^{-φ}`, which is symmetric for the node
/// inner product, restricted to the inside nodes.
pub fn ac_eigenvalues_with(
    sol: &ACSolution,
    mask: &DomainMask,
    count: usize,
    opts: AcEigenOptions,
) -> Result<SpectrumResult> {
    if count == 0 || count > MAX_EIGENVALUES {
        return invalid(format!("eigenvalue count must lie in 1..={MAX_EIGENVALUES}"));
    }
    let m = sol.manifold();
    if mask.grid != m.grid {
        return Err(Error::ShapeMismatch("mask grid differs from the solution grid".into()));
    }
    let e = sol.epsilon();
    let idx = mask.indices();
    let n_full = m.grid.len();
    let n = idx.len();
    let pot = &sol.problem.potential;
    let diag: Vec<f64> = sol.u.values.iter().map(|&u| pot.d2w(u) / e).collect();
    let inv_half: Vec<f64> = m.phi.values.iter().map(|p| (-p).exp()).collect();
    let half: Vec<f64> = m.phi.values.iter().map(|p| p.exp()).collect();
    let fac = m.metric_factor();
    let mean_fac = fac.iter().sum::<f64>() / n_full as f64;
    let (wa, wb) = pot.wells;
    let shift = mean_fac * pot.d2w(wa).max(pot.d2w(wb)) / e;
    let spectral = m.spectral();
    let flat = m.flat;

    let scatter = |y: &[f64], w: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; n_full];
        for (k, &i) in idx.iter().enumerate() {
            full[i] = if flat { y[k] } else { y[k] * w[i] };
        }
        full
    };
    let apply = |y: &[f64]| -> Vec<f64> {
        let full = scatter(y, &inv_half);
        let lap = spectral.laplacian(&full);
        idx.iter()
            .enumerate()
            .map(|(k, &i)| {
                let l = if flat { lap[i] } else { lap[i] * inv_half[i] };
                -e * l + diag[i] * y[k]
            })
            .collect()
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        let full = scatter(r, &half);
        let s = spectral.solve_shifted(&full, shift, e);
        idx.iter()
            .map(|&i| if flat { s[i] } else { s[i] * half[i] })
            .collect()
    };
    let guard = (count / 4).max(4);
    let out = lobpcg(
        n,
        &apply,
        &precond,
        LobpcgOptions {
            count,
            guard,
            tol: opts.tol,
            max_iter: opts.max_iter,
            seed: opts.seed,
        },
    )?;
    let norm = m.grid.cell_volume().sqrt();
    let eigenfields = out
        .vectors
        .iter()
        .map(|y| {
            let mut v = scatter(y, &inv_half);
            for x in v.iter_mut() {
                *x /= norm;
            }
            v
        })
        .collect();
    Ok(SpectrumResult {
        kind: SpectrumKind::Ac,
        eigenvalues: out.values,
        eigenfields,
        offsets: vec![],
        residuals: out.residuals,
        iterations: out.iterations,
        seed: opts.seed,
        mask_nodes: n,
        full_mask: n == n_full,
    })
}

/// Zero-mode threshold `1e-6 / ε` for Morse indices.
pub fn default_zero_mode_tol(epsilon: f64) -> f64 {
    1e-6 / epsilon
}

/// Number of eigenvalues below `-tol` on the whole torus. Computes 8
/// eigenvalues and doubles the count while all of them are negative.
pub fn morse_index(sol: &ACSolution, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let mask = DomainMask::full(&sol.manifold().grid);
    let mut count = 8.min(sol.manifold().grid.len());
    loop {
        let spec = ac_eigenvalues(sol, &mask, count)?;
        let neg = spec.eigenvalues.iter().filter(|&&l| l < -tol).count();
        if neg < count {
            return Ok(neg);
        }
        if count == MAX_EIGENVALUES {
            return Err(Error::Unsupported(format!(
                "Morse index exceeds {MAX_EIGENVALUES}"
            )));
        }
        count = (2 * count).min(MAX_EIGENVALUES);
    }
}

/// Stiffness (`∫|∇^Γ f|²`) and the diagonal of the mass matrix of one
/// component.
fn component_stiffness(c: &InterfaceComponent) -> (DMatrix<f64>, f64) {
    let w = c.weight();
    match c.param_counts.len() {
        1 => {
            let d = periodic_d1(c.param_counts[0], c.param_lengths[0]);
            (d.transpose() * &d * w, w)
        }
        _ => {
            let (n1, n2) = (c.param_counts[0], c.param_counts[1]);
            let d1 = periodic_d1(n1, c.param_lengths[0]);
            let d2 = periodic_d1(n2, c.param_lengths[1]);
            let k1 = d1.transpose() * &d1;
            let k2 = d2.transpose() * &d2;
            let n = n1 * n2;
            let k = DMatrix::from_fn(n, n, |r, s| {
                let (i, j) = (r / n2, r % n2);
                let (p, q) = (s / n2, s % n2);
                let mut v = 0.0;
                if j == q {
                    v += k1[(i, p)];
                }
                if i == p {
                    v += k2[(j, q)];
                }
                v * w
            });
            (k, w)
        }
    }
}

/// `V = Ric(n, n) + |A|²` at the nodes.
fn jacobi_potential(c: &InterfaceComponent) -> Vec<f64> {
    c.ricci_nn()
        .iter()
        .zip(&c.second_fundamental)
        .map(|(r, a)| r + a * a)
        .collect()
}

/// `Q_V(f) = Σ m_j ∫ |∇^Γ f_j|² - (Ric(n, n) + |A_j|²) f_j²`.
pub fn jacobi_quadratic_form(itf: &Interface, f: &[Vec<f64>]) -> Result<f64> {
    if f.len() != itf.components.len() {
        return invalid("one amplitude vector per component is required");
    }
    let mut total = 0.0;
    for (c, fj) in itf.components.iter().zip(f) {
        if fj.len() != c.len() {
            return Err(Error::ShapeMismatch("amplitude length differs from the component".into()));
        }
        let (k, w) = component_stiffness(c);
        let v = jacobi_potential(c);
        let fv = nalgebra::DVector::from_column_slice(fj);
        let grad = (fv.transpose() * &k * &fv)[(0, 0)];
        let pot: f64 = fj.iter().zip(&v).map(|(x, vv)| vv * x * x).sum::<f64>() * w;
        total += c.multiplicity as f64 * (grad - pot);
    }
    Ok(total)
}

/// Lowest eigenpairs of `Q_V` against `Σ m_j ∫ f_j²` (weighted) or of the
/// unweighted pencil satisfied by `m_j^{1/2} f_j` (hat).
fn jacobi_pencil(
    itf: &Interface,
    mask: Option<&DomainMask>,
    count: usize,
    weighted: bool,
) -> Result<SpectrumResult> {
    if itf.components.is_empty() {
        return Err(Error::EmptyInterface);
    }
    if count == 0 || count > MAX_EIGENVALUES {
        return invalid(format!("eigenvalue count must lie in 1..={MAX_EIGENVALUES}"));
    }
    let mut offsets = vec![];
    let mut total = 0;
    for c in &itf.components {
        offsets.push(total);
        total += c.len();
    }
    let mut kmat = DMatrix::zeros(total, total);
    let mut mdiag = vec![0.0; total];
    let mut keep = vec![];
    for (c, &o) in itf.components.iter().zip(&offsets) {
        let (k, w) = component_stiffness(c);
        let v = jacobi_potential(c);
        let s = if weighted { c.multiplicity as f64 } else { 1.0 };
        let n = c.len();
        for i in 0..n {
            for j in 0..n {
                kmat[(o + i, o + j)] = s * k[(i, j)];
            }
            kmat[(o + i, o + i)] -= s * w * v[i];
            mdiag[o + i] = s * w;
            if mask.map_or(true, |mk| mk.contains_point(&c.nodes[i])) {
                keep.push(o + i);
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyInterface);
    }
    let nk = keep.len();
    let kr = DMatrix::from_fn(nk, nk, |i, j| kmat[(keep[i], keep[j])]);
    let mr = DMatrix::from_fn(nk, nk, |i, j| if i == j { mdiag[keep[i]] } else { 0.0 });
    let (vals, vecs) = generalized_symmetric_eigen(&kr, &mr).ok_or(Error::EigensolverStagnation {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let count = count.min(nk);
    let mut eigenfields = vec![];
    let mut residuals = vec![];
    for l in 0..count {
        let col = vecs.column(l);
        let r = &kr * col - &mr * col * vals[l];
        residuals.push(r.norm());
        let mut f = vec![0.0; total];
        for (k, &i) in keep.iter().enumerate() {
            f[i] = col[k];
        }
        eigenfields.push(f);
    }
    Ok(SpectrumResult {
        kind: if weighted {
            SpectrumKind::JacobiWeighted
        } else {
            SpectrumKind::JacobiHat
        },
        eigenvalues: vals[..count].to_vec(),
        eigenfields,
        offsets,
        residuals,
        iterations: 1,
        seed: 0,
        mask_nodes: nk,
        full_mask: nk == total,
    })
}

/// Weighted Jacobi spectrum; `None` is the whole interface.
pub fn jacobi_eigenvalues(itf: &Interface, mask: Option<&DomainMask>, count: usize) -> Result<SpectrumResult> {
    jacobi_pencil(itf, mask, count, true)
}

/// The same spectrum through the rescaled fields `m_j^{1/2} f_j`, which
/// turn the weighted norm into the plain `L²` norm.
pub fn jacobi_eigenvalues_hat(itf: &Interface, mask: Option<&DomainMask>, count: usize) -> Result<SpectrumResult> {
    jacobi_pencil(itf, mask, count, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemicontinuityRow {
    pub epsilon: f64,
    pub ell: usize,
    /// `λ_ℓ^ε / ε`
    pub scaled: f64,
    /// `λ_ℓ` of the limit interface
    pub limit: f64,
    pub slack: f64,
    /// running maximum of `scaled` over the rows so far (coarse to fine)
    pub running_max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SemicontinuityOptions {
    /// allowed excess `λ^ε/ε - λ` at the finest ε, relative to `1 + |λ|`
    pub tol: f64,
    /// slack increases below `tie_tol (1 + |λ|)` count as ties
    pub tie_tol: f64,
    /// threshold for negative limit eigenvalues
    pub negative_tol: f64,
}

impl Default for SemicontinuityOptions {
    fn default() -> Self {
        SemicontinuityOptions {
            tol: 0.1,
            tie_tol: 1e-6,
            negative_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemicontinuityReport {
    pub rows: Vec<SemicontinuityRow>,
    pub limit_eigenvalues: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub morse_indices: Vec<usize>,
    /// `#{ℓ : λ_ℓ < -negative_tol}` over the whole interface
    pub limit_index: usize,
    pub violations: Vec<String>,
    pub slack_monotone: bool,
    pub seed: u64,
}

impl SemicontinuityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,ell,scaled,limit,slack,running_max\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.epsilon, r.ell, r.scaled, r.limit, r.slack, r.running_max
            ));
        }
        s
    }
}

/// Compares `λ_ℓ^ε / ε` on the mask with the Jacobi eigenvalues of the
/// interface, along a sweep of decreasing ε.
pub fn semicontinuity_report(
    sols: &[ACSolution],
    itf: &Interface,
    mask: &DomainMask,
    count: usize,
    opts: SemicontinuityOptions,
) -> Result<SemicontinuityReport> {
    if itf.components.is_empty() {
        return Err(Error::EmptyInterface);
    }
    if sols.is_empty() {
        return invalid("no solutions given");
    }
    if sols.windows(2).any(|w| w[1].epsilon() >= w[0].epsilon()) {
        return invalid("epsilons must be strictly decreasing");
    }
    let jmask = if mask.is_full() { None } else { Some(mask) };
    let limit = jacobi_eigenvalues(itf, jmask, count)?.eigenvalues;
    let full_limit = match jmask {
        None => limit.clone(),
        Some(_) => jacobi_eigenvalues(itf, None, count)?.eigenvalues,
    };
    let limit_index = full_limit.iter().filter(|&&l| l < -opts.negative_tol).count();
    let mut rows = vec![];
    let mut morse = vec![];
    let mut running = vec![f64::NEG_INFINITY; limit.len()];
    let mut violations = vec![];
    let mut prev_slack: Option<Vec<f64>> = None;
    let mut monotone = true;
    for (s_idx, sol) in sols.iter().enumerate() {
        let e = sol.epsilon();
        let spec = ac_eigenvalues(sol, mask, limit.len())?;
        let tol0 = default_zero_mode_tol(e);
        let neg = spec.eigenvalues.iter().filter(|&&l| l < -tol0).count();
        let index = if mask.is_full() && neg < spec.eigenvalues.len() {
            neg
        } else {
            morse_index(sol, tol0)?
        };
        morse.push(index);
        let mut slacks = vec![];
        for (l, (&lam, &lim)) in spec.eigenvalues.iter().zip(&limit).enumerate() {
            let scaled = lam / e;
            running[l] = running[l].max(scaled);
            let slack = lim - scaled;
            slacks.push(slack);
            rows.push(SemicontinuityRow {
                epsilon: e,
                ell: l + 1,
                scaled,
                limit: lim,
                slack,
                running_max: running[l],
            });
            if s_idx + 1 == sols.len() && scaled > lim + opts.tol * (1.0 + lim.abs()) {
                violations.push(format!(
                    "ell={}: lambda^eps/eps = {scaled:.6e} exceeds {lim:.6e} by more than {}(1+|lambda|) at eps={e}",
                    l + 1,
                    opts.tol
                ));
            }
        }
        if let Some(prev) = &prev_slack {
            for (l, (a, b)) in prev.iter().zip(&slacks).enumerate() {
                if *b > a + opts.tie_tol * (1.0 + limit[l].abs()) {
                    monotone = false;
                    violations.push(format!(
                        "ell={}: slack grew from {a:.6e} to {b:.6e} at eps={e}",
                        l + 1
                    ));
                }
            }
        }
        prev_slack = Some(slacks);
    }
    let max_index = morse.iter().copied().max().unwrap_or(0);
    if limit_index > max_index {
        violations.push(format!(
            "limit index {limit_index} exceeds the largest recorded Morse index {max_index}"
        ));
    }
    Ok(SemicontinuityReport {
        rows,
        limit_eigenvalues: limit,
        epsilons: sols.iter().map(|s| s.epsilon()).collect(),
        morse_indices: morse,
        limit_index,
        violations,
        slack_monotone: monotone,
        seed: DEFAULT_SEED,
    })
}
