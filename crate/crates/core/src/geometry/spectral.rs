//! Fourier pseudo-spectral differentiation on the periodic grid.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::TorusGrid;

/// FFT plans and wavenumbers for one grid.
///
/// First derivatives discard the Nyquist mode (so they stay real and
/// antisymmetric); second derivatives keep it with symbol `-k^2`.
pub struct Spectral {
    counts: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// angular wavenumber `2π m / L` per axis, signed
    wavenumbers: Vec<Vec<f64>>,
    /// same, with the Nyquist entry (even counts) set to zero
    first: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("counts", &self.counts).finish()
    }
}

impl Spectral {
    pub fn new(grid: &TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let mut forward = vec![];
        let mut inverse = vec![];
        let mut wavenumbers = vec![];
        let mut first = vec![];
        for a in 0..grid.dim {
            let n = grid.counts[a];
            forward.push(planner.plan_fft_forward(n));
            inverse.push(planner.plan_fft_inverse(n));
            let k: Vec<f64> = (0..n)
                .map(|m| {
                    let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                    2.0 * PI * s / grid.lengths[a]
                })
                .collect();
            let mut k1 = k.clone();
            if n % 2 == 0 {
                k1[n / 2] = 0.0;
            }
            wavenumbers.push(k);
            first.push(k1);
        }
        Spectral {
            counts: grid.counts.clone(),
            forward,
            inverse,
            wavenumbers,
            first,
        }
    }

    fn strides(&self) -> Vec<usize> {
        let d = self.counts.len();
        let mut s = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.counts[a + 1];
        }
        s
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let strides = self.strides();
        let total = buf.len();
        for a in 0..self.counts.len() {
            let n = self.counts[a];
            let stride = strides[a];
            let plan = if inverse { &self.inverse[a] } else { &self.forward[a] };
            if stride == 1 {
                plan.process(buf);
                continue;
            }
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let block = n * stride;
            for start in 0..total / block {
                for off in 0..stride {
                    let base = start * block + off;
                    for m in 0..n {
                        line[m] = buf[base + m * stride];
                    }
                    plan.process(&mut line);
                    for m in 0..n {
                        buf[base + m * stride] = line[m];
                    }
                }
            }
        }
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut buf, true);
        let scale = 1.0 / buf.len() as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }

    /// Applies a Fourier multiplier given as a function of the per-axis
    /// mode indices.
    pub fn multiply(&self, f: &[f64], symbol: impl Fn(&[usize]) -> Complex64) -> Vec<f64> {
        let mut hat = self.forward(f);
        let d = self.counts.len();
        let mut m = vec![0usize; d];
        for z in hat.iter_mut() {
            *z *= symbol(&m);
            for a in (0..d).rev() {
                m[a] += 1;
                if m[a] < self.counts[a] {
                    break;
                }
                m[a] = 0;
            }
        }
        self.inverse_real(hat)
    }

    fn ksq(&self, m: &[usize]) -> f64 {
        m.iter()
            .enumerate()
            .map(|(a, &i)| self.wavenumbers[a][i].powi(2))
            .sum()
    }

    pub fn derivative(&self, f: &[f64], axis: usize) -> Vec<f64> {
        self.multiply(f, |m| Complex64::new(0.0, self.first[axis][m[axis]]))
    }

    /// All first partial derivatives from one forward transform.
    pub fn gradient(&self, f: &[f64]) -> Vec<Vec<f64>> {
        let hat = self.forward(f);
        let d = self.counts.len();
        (0..d)
            .map(|axis| {
                let mut h = hat.clone();
                self.scale_by(&mut h, |m| Complex64::new(0.0, self.first[axis][m[axis]]));
                self.inverse_real(h)
            })
            .collect()
    }

    fn scale_by(&self, hat: &mut [Complex64], symbol: impl Fn(&[usize]) -> Complex64) {
        let d = self.counts.len();
        let mut m = vec![0usize; d];
        for z in hat.iter_mut() {
            *z *= symbol(&m);
            for a in (0..d).rev() {
                m[a] += 1;
                if m[a] < self.counts[a] {
                    break;
                }
                m[a] = 0;
            }
        }
    }

    /// `∂_a ∂_b f`; on the diagonal this keeps the Nyquist mode.
    pub fn second_derivative(&self, f: &[f64], a: usize, b: usize) -> Vec<f64> {
        if a == b {
            self.multiply(f, |m| Complex64::new(-self.wavenumbers[a][m[a]].powi(2), 0.0))
        } else {
            self.multiply(f, |m| {
                Complex64::new(-self.first[a][m[a]] * self.first[b][m[b]], 0.0)
            })
        }
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.multiply(f, |m| Complex64::new(-self.ksq(m), 0.0))
    }

    /// Solves `(shift - scale Δ) v = f` for `shift > 0`, `scale >= 0`.
    pub fn solve_shifted(&self, f: &[f64], shift: f64, scale: f64) -> Vec<f64> {
        self.multiply(f, |m| Complex64::new(1.0 / (shift + scale * self.ksq(m)), 0.0))
    }

    /// Zeroes the Nyquist content along every even axis.
    pub fn bandlimit(&self, f: &[f64]) -> Vec<f64> {
        let counts = self.counts.clone();
        self.multiply(f, |m| {
            let nyq = m
                .iter()
                .enumerate()
                .any(|(a, &i)| counts[a] % 2 == 0 && i == counts[a] / 2);
            Complex64::new(if nyq { 0.0 } else { 1.0 }, 0.0)
        })
    }
}
