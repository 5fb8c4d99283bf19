//! Trigonometric polynomials on the torus, evaluable at arbitrary points
//! with exact derivatives.

use rustfft::num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ScalarField, TorusGrid, VectorFieldGrid};
use crate::error::{invalid, Result};

/// `cos * cos(θ) + sin * sin(θ)` with `θ = 2π Σ k_i x_i / L_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigScalar {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

/// A trigonometric vector field, one `TrigScalar` per Cartesian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigVector {
    pub components: Vec<TrigScalar>,
}

/// Per-axis tables of `exp(2πi k x / L)` for `|k| <= kmax`.
pub(crate) struct PhaseTable {
    kmax: usize,
    rows: Vec<Vec<Complex64>>,
}

impl PhaseTable {
    pub(crate) fn new(x: &[f64], lengths: &[f64], kmax: usize) -> Self {
        let rows = x
            .iter()
            .zip(lengths)
            .map(|(&xi, &li)| {
                let theta = 2.0 * std::f64::consts::PI * xi / li;
                let base = Complex64::new(theta.cos(), theta.sin());
                let mut row = vec![Complex64::new(0.0, 0.0); 2 * kmax + 1];
                row[kmax] = Complex64::new(1.0, 0.0);
                let mut p = Complex64::new(1.0, 0.0);
                for k in 1..=kmax {
                    // recompute every 8 steps to bound drift
                    p = if k % 8 == 0 {
                        let t = theta * k as f64;
                        Complex64::new(t.cos(), t.sin())
                    } else {
                        p * base
                    };
                    row[kmax + k] = p;
                    row[kmax - k] = p.conj();
                }
                row
            })
            .collect();
        PhaseTable { kmax, rows }
    }

    #[inline]
    fn phase(&self, k: &[i32]) -> Complex64 {
        let mut z = Complex64::new(1.0, 0.0);
        for (row, &ki) in self.rows.iter().zip(k) {
            z *= row[(self.kmax as i64 + ki as i64) as usize];
        }
        z
    }
}

impl TrigScalar {
    pub fn zero() -> Self {
        TrigScalar {
            constant: 0.0,
            terms: vec![],
        }
    }

    pub fn constant(c: f64) -> Self {
        TrigScalar {
            constant: c,
            terms: vec![],
        }
    }

    /// `a cos(2π k x_axis / L_axis)` in dimension `dim`.
    pub fn cosine(dim: usize, axis: usize, k: i32, a: f64) -> Self {
        let mut kv = vec![0; dim];
        kv[axis] = k;
        TrigScalar {
            constant: 0.0,
            terms: vec![TrigTerm {
                k: kv,
                cos: a,
                sin: 0.0,
            }],
        }
    }

    pub fn sine(dim: usize, axis: usize, k: i32, a: f64) -> Self {
        let mut kv = vec![0; dim];
        kv[axis] = k;
        TrigScalar {
            constant: 0.0,
            terms: vec![TrigTerm {
                k: kv,
                cos: 0.0,
                sin: a,
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| (t.cos == 0.0 && t.sin == 0.0) || t.k.iter().all(|&k| k == 0))
    }

    pub fn kmax(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.k.iter().map(|k| k.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.terms.iter().any(|t| t.k.len() != dim) {
            return invalid(format!("trigonometric term has wrong dimension (expected {dim})"));
        }
        Ok(())
    }

    pub fn add(&self, other: &TrigScalar) -> TrigScalar {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        TrigScalar {
            constant: self.constant + other.constant,
            terms,
        }
    }

    pub fn scaled(&self, s: f64) -> TrigScalar {
        TrigScalar {
            constant: self.constant * s,
            terms: self
                .terms
                .iter()
                .map(|t| TrigTerm {
                    k: t.k.clone(),
                    cos: t.cos * s,
                    sin: t.sin * s,
                })
                .collect(),
        }
    }

    /// Value, gradient and Hessian from a precomputed phase table.
    fn jets_from(
        &self,
        table: &PhaseTable,
        lengths: &[f64],
        want_hessian: bool,
    ) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let tau = 2.0 * std::f64::consts::PI;
        let mut v = self.constant;
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for term in &self.terms {
            let z = table.phase(&term.k);
            // f = a cos θ + b sin θ, f' = -a sin θ + b cos θ
            let c = z.re;
            let s = z.im;
            let f0 = term.cos * c + term.sin * s;
            let f1 = -term.cos * s + term.sin * c;
            v += f0;
            let n = term.k.len();
            let mut w = [0.0; 3];
            for i in 0..n {
                w[i] = tau * term.k[i] as f64 / lengths[i];
                g[i] += f1 * w[i];
            }
            if want_hessian {
                for i in 0..n {
                    for j in 0..n {
                        h[i][j] -= f0 * w[i] * w[j];
                    }
                }
            }
        }
        (v, g, h)
    }

    pub fn value(&self, x: &[f64], lengths: &[f64]) -> f64 {
        self.jets(x, lengths).0
    }

    pub fn gradient(&self, x: &[f64], lengths: &[f64]) -> [f64; 3] {
        self.jets(x, lengths).1
    }

    pub fn jets(&self, x: &[f64], lengths: &[f64]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let table = PhaseTable::new(x, lengths, self.kmax());
        self.jets_from(&table, lengths, true)
    }

    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        let k = self.kmax();
        let mut out = ScalarField::zeros(grid);
        let mut x = [0.0; 3];
        for idx in 0..grid.len() {
            grid.coords_into(idx, &mut x);
            let table = PhaseTable::new(&x[..grid.dim], &grid.lengths, k);
            out.values[idx] = self.jets_from(&table, &grid.lengths, false).0;
        }
        out
    }

    /// Samples of the value, each partial derivative and the flat Laplacian.
    pub fn sample_jets(&self, grid: &TorusGrid) -> (ScalarField, Vec<ScalarField>, ScalarField) {
        let k = self.kmax();
        let n = grid.dim;
        let mut val = ScalarField::zeros(grid);
        let mut grad = vec![ScalarField::zeros(grid); n];
        let mut lap = ScalarField::zeros(grid);
        let mut x = [0.0; 3];
        for idx in 0..grid.len() {
            grid.coords_into(idx, &mut x);
            let table = PhaseTable::new(&x[..n], &grid.lengths, k);
            let (v, g, h) = self.jets_from(&table, &grid.lengths, true);
            val.values[idx] = v;
            for i in 0..n {
                grad[i].values[idx] = g[i];
            }
            lap.values[idx] = (0..n).map(|i| h[i][i]).sum();
        }
        (val, grad, lap)
    }
}

impl TrigVector {
    pub fn zero(dim: usize) -> Self {
        TrigVector {
            components: vec![TrigScalar::zero(); dim],
        }
    }

    pub fn constant(v: &[f64]) -> Self {
        TrigVector {
            components: v.iter().map(|&c| TrigScalar::constant(c)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn kmax(&self) -> usize {
        self.components.iter().map(|c| c.kmax()).max().unwrap_or(0)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.components.len() != dim {
            return invalid(format!(
                "vector field has {} components, expected {dim}",
                self.components.len()
            ));
        }
        self.components.iter().try_for_each(|c| c.check_dim(dim))
    }

    /// Random field with every wavenumber component in `[-kmax, kmax]` and
    /// normal coefficients of standard deviation `amplitude`.
    pub fn random(dim: usize, kmax: i32, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = move || -> f64 {
            // Box-Muller
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut wavevectors: Vec<Vec<i32>> = vec![vec![]];
        for _ in 0..dim {
            wavevectors = wavevectors
                .into_iter()
                .flat_map(|w| {
                    (-kmax..=kmax).map(move |k| {
                        let mut w2 = w.clone();
                        w2.push(k);
                        w2
                    })
                })
                .collect();
        }
        // keep one representative of each ±k pair
        wavevectors.retain(|w| {
            let first = w.iter().find(|&&k| k != 0);
            matches!(first, Some(&k) if k > 0)
        });
        let components = (0..dim)
            .map(|_| TrigScalar {
                constant: amplitude * gauss(),
                terms: wavevectors
                    .iter()
                    .map(|w| TrigTerm {
                        k: w.clone(),
                        cos: amplitude * gauss(),
                        sin: amplitude * gauss(),
                    })
                    .collect(),
            })
            .collect();
        TrigVector { components }
    }

    /// Value and Jacobian `J[k][i] = ∂_i X^k` at a point.
    pub fn eval_jet(&self, x: &[f64], lengths: &[f64]) -> ([f64; 3], [[f64; 3]; 3]) {
        let table = PhaseTable::new(x, lengths, self.kmax());
        let mut v = [0.0; 3];
        let mut j = [[0.0; 3]; 3];
        for (k, c) in self.components.iter().enumerate() {
            let (val, g, _) = c.jets_from(&table, lengths, false);
            v[k] = val;
            j[k] = g;
        }
        (v, j)
    }

    pub fn sample(&self, grid: &TorusGrid) -> VectorFieldGrid {
        VectorFieldGrid {
            components: self.components.iter().map(|c| c.sample(grid)).collect(),
        }
    }
}
