//! Small dense helpers: periodic spectral differentiation matrices and
//! sorted symmetric eigendecompositions.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// First-derivative matrix of trigonometric interpolation on `n` equispaced
/// nodes of a periodic interval of length `period`.
///
/// For even `n` the Nyquist mode is differentiated to zero.
pub fn periodic_d1(n: usize, period: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    let scale = 2.0 * PI / period;
    let h = 2.0 * PI / n as f64;
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let m = j as i64 - k as i64;
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let x = m as f64 * h / 2.0;
            let v = if n % 2 == 0 {
                0.5 * sign / x.tan()
            } else {
                0.5 * sign / x.sin()
            };
            d[(j, k)] = scale * v;
        }
    }
    d
}

/// Second-derivative matrix of trigonometric interpolation (symbol `-k^2`
/// on every mode, Nyquist included). Symmetric.
pub fn periodic_d2(n: usize, period: f64) -> DMatrix<f64> {
    let scale = (2.0 * PI / period).powi(2);
    let h = 2.0 * PI / n as f64;
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let m = j as i64 - k as i64;
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let v = if n % 2 == 0 {
                if j == k {
                    -PI * PI / (3.0 * h * h) - 1.0 / 6.0
                } else {
                    let s = (m as f64 * h / 2.0).sin();
                    -0.5 * sign / (s * s)
                }
            } else if j == k {
                -PI * PI / (3.0 * h * h) + 1.0 / 12.0
            } else {
                let x = m as f64 * h / 2.0;
                -0.5 * sign * x.cos() / (x.sin() * x.sin())
            };
            d[(j, k)] = scale * v;
        }
    }
    d
}

/// Eigenpairs of a symmetric matrix sorted by ascending eigenvalue.
pub fn sorted_symmetric_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Generalized symmetric-definite eigenproblem `K v = λ M v` via Cholesky
/// reduction. Eigenvectors are `M`-orthonormal.
pub fn generalized_symmetric_eigen(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let (vals, y) = sorted_symmetric_eigen(c);
    let v = linv.transpose() * y;
    Some((vals, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn d1_differentiates_low_modes_exactly() {
        for &n in &[16usize, 17] {
            let period = 2.5;
            let d = periodic_d1(n, period);
            let w = 2.0 * PI / period;
            let x: Vec<f64> = (0..n).map(|i| i as f64 * period / n as f64).collect();
            let f = dvec(&x.iter().map(|&s| (3.0 * w * s).sin()).collect::<Vec<_>>());
            let df = &d * f;
            for i in 0..n {
                assert!((df[i] - 3.0 * w * (3.0 * w * x[i]).cos()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn d2_is_symmetric_and_exact() {
        for &n in &[16usize, 17] {
            let d = periodic_d2(n, 1.0);
            assert!((&d - d.transpose()).amax() < 1e-9);
            let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            let f = dvec(&x.iter().map(|&s| (2.0 * PI * 2.0 * s).cos()).collect::<Vec<_>>());
            let df = &d * &f;
            for i in 0..n {
                assert!((df[i] + 16.0 * PI * PI * f[i]).abs() < 1e-8);
            }
            // constants are annihilated
            let ones = DVector::from_element(n, 1.0);
            assert!((&d * ones).amax() < 1e-9);
        }
        // Nyquist mode of even grids gets -k^2
        let n = 16;
        let d = periodic_d2(n, 1.0);
        let f = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let df = &d * &f;
        let k = 2.0 * PI * 8.0;
        assert!((df[0] + k * k).abs() < 1e-6);
    }
}
