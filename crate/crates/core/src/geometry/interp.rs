//! Periodic tensor-product Lagrange interpolation (8 points per axis, degree 7).

use super::flow::VectorSource;
use super::{ConformalTorus, ScalarField, TorusGrid, VectorFieldGrid};
use crate::error::{Error, Result};

pub const STENCIL: usize = 8;
const HALF: i64 = 3;

/// Weights along one axis for a query coordinate.
#[derive(Debug, Clone, Copy)]
pub struct LagrangeStencil {
    pub first: i64,
    pub weights: [f64; STENCIL],
    pub derivative: [f64; STENCIL],
}

impl LagrangeStencil {
    /// `x` in grid units is `s = x / h`; the stencil covers nodes
    /// `floor(s) - 3 ..= floor(s) + 4`.
    pub fn new(x: f64, h: f64) -> Self {
        let mut s = x / h;
        let r = s.round();
        if (s - r).abs() < 1e-11 {
            s = r;
        }
        let base = s.floor();
        let t = s - base; // in [0, 1)
        let first = base as i64 - HALF;
        let nodes: [f64; STENCIL] = std::array::from_fn(|j| (j as i64 - HALF) as f64);
        let mut weights = [0.0; STENCIL];
        let mut derivative = [0.0; STENCIL];
        if t == 0.0 {
            weights[HALF as usize] = 1.0;
            // derivative of the cardinal functions at a node
            for j in 0..STENCIL {
                let xj = nodes[j];
                if j == HALF as usize {
                    derivative[j] = nodes
                        .iter()
                        .enumerate()
                        .filter(|&(m, _)| m != j)
                        .map(|(_, &xm)| 1.0 / (xj - xm))
                        .sum();
                } else {
                    let mut num = 1.0;
                    let mut den = 1.0;
                    for m in 0..STENCIL {
                        if m != j && m != HALF as usize {
                            num *= 0.0 - nodes[m];
                        }
                        if m != j {
                            den *= xj - nodes[m];
                        }
                    }
                    derivative[j] = num / den;
                }
            }
        } else {
            for j in 0..STENCIL {
                let mut w = 1.0;
                let mut dsum = 0.0;
                for m in 0..STENCIL {
                    if m != j {
                        w *= (t - nodes[m]) / (nodes[j] - nodes[m]);
                        dsum += 1.0 / (t - nodes[m]);
                    }
                }
                weights[j] = w;
                derivative[j] = w * dsum;
            }
        }
        for d in derivative.iter_mut() {
            *d /= h;
        }
        LagrangeStencil {
            first,
            weights,
            derivative,
        }
    }
}

/// Value and gradient of the interpolant at one point.
pub(crate) fn interpolate_jet(grid: &TorusGrid, f: &[f64], x: &[f64]) -> (f64, [f64; 3]) {
    let h = grid.spacing();
    let st: Vec<LagrangeStencil> = (0..grid.dim).map(|a| LagrangeStencil::new(x[a], h[a])).collect();
    let strides = grid.strides();
    let wrap = |a: usize, i: i64| -> usize {
        (i.rem_euclid(grid.counts[a] as i64)) as usize * strides[a]
    };
    let mut v = 0.0;
    let mut g = [0.0; 3];
    match grid.dim {
        2 => {
            for p in 0..STENCIL {
                let ip = wrap(0, st[0].first + p as i64);
                let (w0, d0) = (st[0].weights[p], st[0].derivative[p]);
                let mut row_v = 0.0;
                let mut row_d = 0.0;
                for q in 0..STENCIL {
                    let fv = f[ip + wrap(1, st[1].first + q as i64)];
                    row_v += st[1].weights[q] * fv;
                    row_d += st[1].derivative[q] * fv;
                }
                v += w0 * row_v;
                g[0] += d0 * row_v;
                g[1] += w0 * row_d;
            }
        }
        _ => {
            for p in 0..STENCIL {
                let ip = wrap(0, st[0].first + p as i64);
                for q in 0..STENCIL {
                    let iq = wrap(1, st[1].first + q as i64);
                    let mut line_v = 0.0;
                    let mut line_d = 0.0;
                    for r in 0..STENCIL {
                        let fv = f[ip + iq + wrap(2, st[2].first + r as i64)];
                        line_v += st[2].weights[r] * fv;
                        line_d += st[2].derivative[r] * fv;
                    }
                    let (w0, d0) = (st[0].weights[p], st[0].derivative[p]);
                    let (w1, d1) = (st[1].weights[q], st[1].derivative[q]);
                    v += w0 * w1 * line_v;
                    g[0] += d0 * w1 * line_v;
                    g[1] += w0 * d1 * line_v;
                    g[2] += w0 * w1 * line_d;
                }
            }
        }
    }
    (v, g)
}

/// Interpolated values of `f` at the given points (any real coordinates;
/// periodicity is applied).
pub fn interpolate(m: &ConformalTorus, f: &ScalarField, pts: &[[f64; 3]]) -> Result<Vec<f64>> {
    f.check(&m.grid)?;
    if pts.iter().any(|p| p[..m.grid.dim].iter().any(|c| !c.is_finite())) {
        return Err(Error::InvalidArgument("non-finite query point".into()));
    }
    Ok(pts
        .iter()
        .map(|p| interpolate_jet(&m.grid, &f.values, p).0)
        .collect())
}

/// A grid vector field viewed as a continuous field through interpolation.
pub struct GridVectorSource<'a> {
    pub grid: &'a TorusGrid,
    pub field: &'a VectorFieldGrid,
}

impl VectorSource for GridVectorSource<'_> {
    fn dim(&self) -> usize {
        self.grid.dim
    }

    fn eval_jet(&self, x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut v = [0.0; 3];
        let mut j = [[0.0; 3]; 3];
        for k in 0..self.grid.dim {
            let (val, g) = interpolate_jet(self.grid, &self.field.components[k].values, x);
            v[k] = val;
            j[k] = g;
        }
        (v, j)
    }
}
