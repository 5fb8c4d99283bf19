//! Periodic grids, conformally flat torus metrics and the differential
//! operators, curvature and flows built on them.
//!
//! Derivatives are Fourier pseudo-spectral. Metrics are `g = e^{2φ} δ` with
//! `φ` a trigonometric polynomial, so that `φ` and its derivatives can be
//! evaluated exactly at arbitrary points.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub mod flow;
pub mod interp;
pub mod io;
pub mod spectral;
pub mod trig;

pub use flow::{
    flow_map, flow_map_fixed, flow_map_source, flow_map_trig, pullback_metric, FlowMap, TrigSource,
    VectorSource,
};
pub use interp::{interpolate, GridVectorSource, LagrangeStencil};
pub use spectral::Spectral;
pub use trig::{TrigScalar, TrigTerm, TrigVector};

const MIN_COUNT: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub counts: Vec<usize>,
}

impl TorusGrid {
    pub fn new(lengths: &[f64], counts: &[usize]) -> Result<Self> {
        let dim = lengths.len();
        if !(dim == 2 || dim == 3) {
            return invalid(format!("dimension must be 2 or 3, got {dim}"));
        }
        if counts.len() != dim {
            return invalid("lengths and counts differ in dimension");
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return invalid("lengths must be positive");
        }
        if counts.iter().any(|&n| n < MIN_COUNT) {
            return invalid(format!("every axis needs at least {MIN_COUNT} nodes"));
        }
        Ok(TorusGrid {
            dim,
            lengths: lengths.to_vec(),
            counts: counts.to_vec(),
        })
    }

    /// Unit square or cube with `n` nodes per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(&vec![1.0; dim], &vec![n; dim])
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lengths
            .iter()
            .zip(&self.counts)
            .map(|(l, &n)| l / n as f64)
            .collect()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing().into_iter().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Row-major strides, axis 0 slowest.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim];
        for a in (0..self.dim - 1).rev() {
            s[a] = s[a + 1] * self.counts[a + 1];
        }
        s
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut m = [0; 3];
        for a in (0..self.dim).rev() {
            m[a] = idx % self.counts[a];
            idx /= self.counts[a];
        }
        m
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        let mut idx = 0;
        for a in 0..self.dim {
            idx = idx * self.counts[a] + m[a] % self.counts[a];
        }
        idx
    }

    /// Flat index with periodic wraparound of signed multi-indices.
    pub fn wrapped_index(&self, m: &[i64]) -> usize {
        let mut idx = 0;
        for a in 0..self.dim {
            let n = self.counts[a] as i64;
            idx = idx * self.counts[a] + m[a].rem_euclid(n) as usize;
        }
        idx
    }

    pub fn coords_into(&self, idx: usize, x: &mut [f64; 3]) {
        let m = self.multi_index(idx);
        for a in 0..self.dim {
            x[a] = m[a] as f64 * self.lengths[a] / self.counts[a] as f64;
        }
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        self.coords_into(idx, &mut x);
        x
    }

    /// Reduces a point into the fundamental domain.
    pub fn wrap(&self, x: &mut [f64; 3]) {
        for a in 0..self.dim {
            x[a] = x[a].rem_euclid(self.lengths[a]);
            if x[a] >= self.lengths[a] {
                x[a] = 0.0;
            }
        }
    }

    /// Minimum-image difference `b - a`.
    pub fn min_image(&self, a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for i in 0..self.dim {
            let l = self.lengths[i];
            d[i] = b[i] - a[i];
            d[i] -= l * (d[i] / l).round();
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        ScalarField {
            counts: grid.counts.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField {
            counts: grid.counts.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        ScalarField {
            counts: grid.counts.clone(),
            values,
        }
    }

    pub fn check(&self, grid: &TorusGrid) -> Result<()> {
        if self.counts != grid.counts || self.values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "field of shape {:?} on grid {:?}",
                self.counts, grid.counts
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            counts: self.counts.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        ScalarField {
            counts: self.counts.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        ScalarField {
            counts: self.counts.clone(),
            values,
        }
    }
}

/// Vector field by contravariant components `X^i` in the coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldGrid {
    pub components: Vec<ScalarField>,
}

impl VectorFieldGrid {
    pub fn zeros(grid: &TorusGrid) -> Self {
        VectorFieldGrid {
            components: vec![ScalarField::zeros(grid); grid.dim],
        }
    }

    pub fn constant(grid: &TorusGrid, v: &[f64]) -> Self {
        VectorFieldGrid {
            components: (0..grid.dim).map(|i| ScalarField::constant(grid, v[i])).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn check(&self, grid: &TorusGrid) -> Result<()> {
        if self.components.len() != grid.dim {
            return Err(Error::ShapeMismatch(format!(
                "vector field with {} components on a {}-dimensional grid",
                self.components.len(),
                grid.dim
            )));
        }
        self.components.iter().try_for_each(|c| c.check(grid))
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (k, c) in self.components.iter().enumerate() {
            v[k] = c.values[idx];
        }
        v
    }

    pub fn sup_norm(&self) -> f64 {
        self.components.iter().map(|c| c.sup_norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorFieldGrid {
            components: self.components.iter().map(|c| c.map(|v| v * s)).collect(),
        }
    }
}

/// Field of `dim × dim` matrices, component `(i, j)` stored at `i * dim + j`.
///
/// Used for symmetric (0,2)-tensors and for the mixed tensor
/// `D[i][k] = (∇_i X)^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorField2 {
    pub dim: usize,
    pub components: Vec<ScalarField>,
}

impl TensorField2 {
    pub fn zeros(grid: &TorusGrid) -> Self {
        TensorField2 {
            dim: grid.dim,
            components: vec![ScalarField::zeros(grid); grid.dim * grid.dim],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        &self.components[i * self.dim + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut ScalarField {
        &mut self.components[i * self.dim + j]
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[i][j] = self.components[i * self.dim + j].values[idx];
            }
        }
        m
    }

    pub fn set(&mut self, idx: usize, m: &[[f64; 3]; 3]) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.components[i * self.dim + j].values[idx] = m[i][j];
            }
        }
    }

    /// `dx_a ⊗ dx_a` on the coordinate frame.
    pub fn coordinate_square(grid: &TorusGrid, a: usize) -> Self {
        let mut t = Self::zeros(grid);
        *t.get_mut(a, a) = ScalarField::constant(grid, 1.0);
        t
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                for (a, b) in self.get(i, j).values.iter().zip(&self.get(j, i).values) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }

    pub fn sup_norm(&self) -> f64 {
        self.components.iter().map(|c| c.sup_norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &TensorField2) -> TensorField2 {
        TensorField2 {
            dim: self.dim,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.zip_map(b, |x, y| x - y))
                .collect(),
        }
    }
}

/// `Γ^k_{ij}` per node, stored at `((node * n + k) * n + i) * n + j`.
#[derive(Debug, Clone)]
pub struct Christoffel {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.dim;
        self.values[((node * n + k) * n + i) * n + j]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Curvature of a conformally flat surface (and the flat 3-torus).
#[derive(Debug, Clone)]
pub struct Curvature {
    pub dim: usize,
    /// conformal factors `e^{2φ}` per node
    metric_factor: Vec<f64>,
    pub gauss: ScalarField,
    pub ricci: TensorField2,
}

impl Curvature {
    /// `R(X,Y,Z,W) = K (⟨X,Z⟩⟨Y,W⟩ - ⟨X,W⟩⟨Y,Z⟩)` at a node.
    pub fn riemann(&self, node: usize, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> f64 {
        let g = self.metric_factor[node];
        let ip = |a: &[f64], b: &[f64]| g * (0..self.dim).map(|i| a[i] * b[i]).sum::<f64>();
        self.gauss.values[node] * (ip(x, z) * ip(y, w) - ip(x, w) * ip(y, z))
    }

    pub fn ricci_at(&self, node: usize, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.ricci.get(i, j).values[node] * x[i] * y[j];
            }
        }
        s
    }
}

/// Periodic torus with conformally flat metric `g = e^{2φ} δ`.
#[derive(Clone)]
pub struct ConformalTorus {
    pub grid: TorusGrid,
    pub phi: ScalarField,
    pub flat: bool,
    phi_spec: TrigScalar,
    dphi: Vec<Vec<f64>>,
    lap_phi: Vec<f64>,
    factor: Vec<f64>,
    spectral: Arc<Spectral>,
}

impl std::fmt::Debug for ConformalTorus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConformalTorus")
            .field("grid", &self.grid)
            .field("flat", &self.flat)
            .field("phi", &self.phi_spec)
            .finish()
    }
}

/// Serializable description of a manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub lengths: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub phi: Option<TrigScalar>,
}

impl ConformalTorus {
    pub fn flat(grid: TorusGrid) -> Self {
        Self::build(grid, TrigScalar::zero())
    }

    pub fn conformal(grid: TorusGrid, phi: TrigScalar) -> Result<Self> {
        phi.check_dim(grid.dim)?;
        if grid.dim == 3 && !phi.is_zero() {
            return Err(Error::Unsupported(
                "conformal metrics are only supported in dimension 2".into(),
            ));
        }
        Ok(Self::build(grid, phi))
    }

    pub fn from_spec(spec: &ManifoldSpec) -> Result<Self> {
        let grid = TorusGrid::new(&spec.lengths, &spec.counts)?;
        match &spec.phi {
            Some(phi) if !phi.is_zero() => Self::conformal(grid, phi.clone()),
            _ => Ok(Self::flat(grid)),
        }
    }

    fn build(grid: TorusGrid, phi: TrigScalar) -> Self {
        let flat = phi.is_zero();
        let (val, grad, lap) = phi.sample_jets(&grid);
        let factor = val.values.iter().map(|p| (2.0 * p).exp()).collect();
        let spectral = Arc::new(Spectral::new(&grid));
        ConformalTorus {
            phi: val,
            flat,
            phi_spec: phi,
            dphi: grad.into_iter().map(|g| g.values).collect(),
            lap_phi: lap.values,
            factor,
            spectral,
            grid,
        }
    }

    /// Same metric on a different grid resolution.
    pub fn with_counts(&self, counts: &[usize]) -> Result<Self> {
        let grid = TorusGrid::new(&self.grid.lengths, counts)?;
        Ok(Self::build(grid, self.phi_spec.clone()))
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn phi_spec(&self) -> &TrigScalar {
        &self.phi_spec
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// `e^{2φ}` at each node.
    pub fn metric_factor(&self) -> &[f64] {
        &self.factor
    }

    /// `g_ij = e^{2φ} δ_ij` as a tensor field.
    pub fn metric_tensor(&self) -> TensorField2 {
        let mut t = TensorField2::zeros(&self.grid);
        for a in 0..self.dim() {
            t.get_mut(a, a).values.copy_from_slice(&self.factor);
        }
        t
    }

    /// `∂_i φ` at each node.
    pub fn dphi(&self) -> &[Vec<f64>] {
        &self.dphi
    }

    /// `√det g = e^{nφ}` at a node.
    #[inline]
    pub fn volume_density(&self, idx: usize) -> f64 {
        if self.flat {
            1.0
        } else {
            self.factor[idx].powf(self.grid.dim as f64 / 2.0)
        }
    }

    /// `φ`, `∇φ` and the Hessian of `φ` at an arbitrary point.
    pub fn phi_jets(&self, x: &[f64]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        if self.flat {
            return (0.0, [0.0; 3], [[0.0; 3]; 3]);
        }
        self.phi_spec.jets(&x[..self.grid.dim], &self.grid.lengths)
    }

    /// Gaussian curvature at an arbitrary point.
    pub fn gauss_at(&self, x: &[f64]) -> f64 {
        if self.flat {
            return 0.0;
        }
        let (p, _, h) = self.phi_jets(x);
        let lap: f64 = (0..self.grid.dim).map(|i| h[i][i]).sum();
        -(-2.0 * p).exp() * lap
    }

    pub(crate) fn gradient_flat_raw(&self, f: &[f64]) -> Vec<Vec<f64>> {
        self.spectral.gradient(f)
    }

    pub(crate) fn laplace_beltrami_raw(&self, f: &[f64]) -> Vec<f64> {
        let mut lap = self.spectral.laplacian(f);
        if !self.flat {
            for (l, g) in lap.iter_mut().zip(&self.factor) {
                *l /= g;
            }
        }
        lap
    }

    pub(crate) fn integrate_raw(&self, f: &[f64]) -> f64 {
        let cell = self.grid.cell_volume();
        if self.flat {
            f.iter().sum::<f64>() * cell
        } else {
            f.iter()
                .enumerate()
                .map(|(i, v)| v * self.volume_density(i))
                .sum::<f64>()
                * cell
        }
    }

    /// Contravariant gradient `(∇u)^i = e^{-2φ} ∂_i u`.
    pub(crate) fn gradient_raw(&self, f: &[f64]) -> Vec<Vec<f64>> {
        let mut g = self.spectral.gradient(f);
        if !self.flat {
            for comp in g.iter_mut() {
                for (c, gf) in comp.iter_mut().zip(&self.factor) {
                    *c /= gf;
                }
            }
        }
        g
    }

    pub fn laplace_beltrami(&self, f: &ScalarField) -> Result<ScalarField> {
        f.check(&self.grid)?;
        Ok(f.with_values(self.laplace_beltrami_raw(&f.values)))
    }

    pub fn integrate(&self, f: &ScalarField) -> Result<f64> {
        f.check(&self.grid)?;
        Ok(self.integrate_raw(&f.values))
    }

    pub fn gradient(&self, f: &ScalarField) -> Result<VectorFieldGrid> {
        f.check(&self.grid)?;
        Ok(VectorFieldGrid {
            components: self
                .gradient_raw(&f.values)
                .into_iter()
                .map(|c| f.with_values(c))
                .collect(),
        })
    }

    /// Pointwise `⟨X, Y⟩_g`.
    pub fn inner(&self, x: &VectorFieldGrid, y: &VectorFieldGrid) -> Result<ScalarField> {
        x.check(&self.grid)?;
        y.check(&self.grid)?;
        let n = self.grid.len();
        let values = (0..n)
            .map(|i| {
                let s: f64 = (0..self.dim())
                    .map(|k| x.components[k].values[i] * y.components[k].values[i])
                    .sum();
                s * self.factor[i]
            })
            .collect();
        ScalarField::from_values(&self.grid, values)
    }

    /// `Div X = ∂_i X^i + n X^i ∂_i φ`.
    pub fn divergence(&self, x: &VectorFieldGrid) -> Result<ScalarField> {
        x.check(&self.grid)?;
        Ok(ScalarField {
            counts: self.grid.counts.clone(),
            values: self.divergence_raw(x),
        })
    }

    pub(crate) fn divergence_raw(&self, x: &VectorFieldGrid) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; self.grid.len()];
        for k in 0..n {
            let d = self.spectral.derivative(&x.components[k].values, k);
            for (o, v) in out.iter_mut().zip(d) {
                *o += v;
            }
        }
        if !self.flat {
            for k in 0..n {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += n as f64 * x.components[k].values[i] * self.dphi[k][i];
                }
            }
        }
        out
    }

    pub fn christoffel(&self) -> Christoffel {
        let n = self.dim();
        let nodes = self.grid.len();
        let mut values = vec![0.0; nodes * n * n * n];
        if !self.flat {
            for node in 0..nodes {
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = 0.0;
                            if k == i {
                                v += self.dphi[j][node];
                            }
                            if k == j {
                                v += self.dphi[i][node];
                            }
                            if i == j {
                                v -= self.dphi[k][node];
                            }
                            values[((node * n + k) * n + i) * n + j] = v;
                        }
                    }
                }
            }
        }
        Christoffel { dim: n, values }
    }

    pub fn curvature(&self) -> Curvature {
        let n = self.dim();
        let nodes = self.grid.len();
        let mut gauss = ScalarField::zeros(&self.grid);
        let mut ricci = TensorField2::zeros(&self.grid);
        if !self.flat {
            for node in 0..nodes {
                let k = -self.lap_phi[node] / self.factor[node];
                gauss.values[node] = k;
                for i in 0..n {
                    ricci.get_mut(i, i).values[node] = k * self.factor[node];
                }
            }
        }
        Curvature {
            dim: n,
            metric_factor: self.factor.clone(),
            gauss,
            ricci,
        }
    }

    /// `D[i][k] = (∇_i X)^k = ∂_i X^k + Γ^k_{ij} X^j`.
    pub fn covariant_jacobian(&self, x: &VectorFieldGrid) -> Result<TensorField2> {
        x.check(&self.grid)?;
        let n = self.dim();
        let mut d = TensorField2::zeros(&self.grid);
        for k in 0..n {
            let grad = self.spectral.gradient(&x.components[k].values);
            for (i, gi) in grad.into_iter().enumerate() {
                d.get_mut(i, k).values = gi;
            }
        }
        if !self.flat {
            for node in 0..self.grid.len() {
                let xv = x.at(node);
                let xdphi: f64 = (0..n).map(|j| xv[j] * self.dphi[j][node]).sum();
                for i in 0..n {
                    for k in 0..n {
                        // Γ^k_{ij} X^j = δ_ik (X·dφ) + X^k ∂_iφ - X^i ∂_kφ
                        let mut g = xv[k] * self.dphi[i][node] - xv[i] * self.dphi[k][node];
                        if i == k {
                            g += xdphi;
                        }
                        d.get_mut(i, k).values[node] += g;
                    }
                }
            }
        }
        Ok(d)
    }

    /// `(∇_Y X)^k = Y^i (∇_i X)^k`.
    pub fn covariant_derivative(
        &self,
        x: &VectorFieldGrid,
        y: &VectorFieldGrid,
    ) -> Result<VectorFieldGrid> {
        y.check(&self.grid)?;
        let d = self.covariant_jacobian(x)?;
        Ok(contract_jacobian(&d, y))
    }
}

/// `X` and `D[i][k] = (∇_i X)^k` at an arbitrary point, with the
/// connection terms taken from the exact jets of `φ`.
pub fn covariant_jet(
    m: &ConformalTorus,
    src: &dyn VectorSource,
    x: &[f64; 3],
) -> ([f64; 3], [[f64; 3]; 3]) {
    let n = m.dim();
    let (v, j) = src.eval_jet(x);
    let mut d = [[0.0; 3]; 3];
    for i in 0..n {
        for k in 0..n {
            d[i][k] = j[k][i];
        }
    }
    if !m.flat {
        let (_, dphi, _) = m.phi_jets(x);
        let xdphi: f64 = (0..n).map(|a| v[a] * dphi[a]).sum();
        for i in 0..n {
            for k in 0..n {
                d[i][k] += v[k] * dphi[i] - v[i] * dphi[k];
                if i == k {
                    d[i][k] += xdphi;
                }
            }
        }
    }
    (v, d)
}

/// `Y^i D[i][k]` for a covariant Jacobian `D`.
pub(crate) fn contract_jacobian(d: &TensorField2, y: &VectorFieldGrid) -> VectorFieldGrid {
    let n = d.dim;
    let mut out: Vec<ScalarField> = (0..n)
        .map(|_| y.components[0].map(|_| 0.0))
        .collect();
    for k in 0..n {
        for i in 0..n {
            let dik = &d.get(i, k).values;
            let yi = &y.components[i].values;
            for ((o, a), b) in out[k].values.iter_mut().zip(dik).zip(yi) {
                *o += a * b;
            }
        }
    }
    VectorFieldGrid { components: out }
}

pub fn laplace_beltrami(m: &ConformalTorus, f: &ScalarField) -> Result<ScalarField> {
    m.laplace_beltrami(f)
}

pub fn christoffel(m: &ConformalTorus) -> Christoffel {
    m.christoffel()
}

pub fn curvature(m: &ConformalTorus) -> Curvature {
    m.curvature()
}

pub fn covariant_derivative(
    m: &ConformalTorus,
    x: &VectorFieldGrid,
    y: &VectorFieldGrid,
) -> Result<VectorFieldGrid> {
    m.covariant_derivative(x, y)
}

pub fn integrate(m: &ConformalTorus, f: &ScalarField) -> Result<f64> {
    m.integrate(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(n: usize) -> TorusGrid {
        TorusGrid::unit(2, n).unwrap()
    }

    fn conformal(n: usize, a: f64) -> ConformalTorus {
        ConformalTorus::conformal(unit(n), TrigScalar::cosine(2, 0, 1, a)).unwrap()
    }

    #[test]
    fn grid_validation_and_indexing() {
        assert!(TorusGrid::unit(2, 8).is_err());
        assert!(TorusGrid::unit(4, 16).is_err());
        let g = TorusGrid::new(&[1.0, 2.0, 3.0], &[16, 18, 20]).unwrap();
        let idx = g.flat_index(&[3, 5, 7]);
        assert_eq!(g.multi_index(idx), [3, 5, 7]);
        assert_eq!(g.wrapped_index(&[-1, 18, 20]), g.flat_index(&[15, 0, 0]));
        let x = g.coords(idx);
        assert!((x[1] - 5.0 * 2.0 / 18.0).abs() < 1e-15);
        assert!(ConformalTorus::conformal(g, TrigScalar::cosine(3, 0, 1, 0.1)).is_err());
    }

    #[test]
    fn flat_laplacian_of_fourier_mode() {
        let m = ConformalTorus::flat(unit(64));
        let f = ScalarField::from_fn(&m.grid, |x| (2.0 * PI * x[0]).cos());
        let lap = m.laplace_beltrami(&f).unwrap();
        let err = lap.zip_map(&f, |l, v| l + 4.0 * PI * PI * v).sup_norm();
        assert!(err < 1e-10);
        let c = m.laplace_beltrami(&ScalarField::constant(&m.grid, 3.0)).unwrap();
        assert!(c.sup_norm() < 1e-12);
        let f3 = TorusGrid::unit(3, 16).unwrap();
        let m3 = ConformalTorus::flat(f3);
        let g = ScalarField::from_fn(&m3.grid, |x| (2.0 * PI * (x[0] + 2.0 * x[2])).sin());
        let l3 = m3.laplace_beltrami(&g).unwrap();
        let e3 = l3.zip_map(&g, |l, v| l + 20.0 * PI * PI * v).sup_norm();
        assert!(e3 < 1e-9);
    }

    #[test]
    fn constant_conformal_factor_scales_laplacian() {
        let c = 0.3;
        let flat = ConformalTorus::flat(unit(32));
        let m = ConformalTorus::conformal(unit(32), TrigScalar::constant(c)).unwrap();
        let f = ScalarField::from_fn(&m.grid, |x| (2.0 * PI * x[1]).sin() * (4.0 * PI * x[0]).cos());
        let a = m.laplace_beltrami(&f).unwrap();
        let b = flat.laplace_beltrami(&f).unwrap();
        let err = a.zip_map(&b, |p, q| p - (-2.0 * c).exp() * q).sup_norm();
        assert!(err < 1e-10);
        let vol = m.integrate(&ScalarField::constant(&m.grid, 1.0)).unwrap();
        assert!((vol - (2.0 * c).exp()).abs() < 1e-12);
        assert!(m.christoffel().sup_norm() == 0.0);
    }

    #[test]
    fn integration_examples() {
        let m = ConformalTorus::flat(unit(32));
        assert!((m.integrate(&ScalarField::constant(&m.grid, 1.0)).unwrap() - 1.0).abs() < 1e-14);
        let f = ScalarField::from_fn(&m.grid, |x| (2.0 * PI * x[0]).cos());
        assert!(m.integrate(&f).unwrap().abs() < 1e-12);
        let wrong = ScalarField::zeros(&unit(16));
        assert!(matches!(m.integrate(&wrong), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn christoffel_closed_form() {
        let a = 0.2;
        let m = conformal(64, a);
        let ch = m.christoffel();
        for node in [0, 5, 100, 2000] {
            let x = m.grid.coords(node);
            let d1 = -2.0 * PI * a * (2.0 * PI * x[0]).sin();
            assert!((ch.get(node, 0, 0, 0) - d1).abs() < 1e-12);
            // Γ^0_{11} = -∂_0 φ, Γ^1_{01} = ∂_0 φ
            assert!((ch.get(node, 0, 1, 1) + d1).abs() < 1e-12);
            assert!((ch.get(node, 1, 0, 1) - d1).abs() < 1e-12);
            assert!(ch.get(node, 1, 1, 1).abs() < 1e-12);
        }
        assert_eq!(ConformalTorus::flat(unit(16)).christoffel().sup_norm(), 0.0);
    }

    #[test]
    fn gauss_curvature_closed_form() {
        let a = 0.2;
        let m = conformal(64, a);
        let curv = m.curvature();
        for node in 0..m.grid.len() {
            let x = m.grid.coords(node);
            let phi = a * (2.0 * PI * x[0]).cos();
            let k = 4.0 * PI * PI * a * (2.0 * PI * x[0]).cos() * (-2.0 * phi).exp();
            assert!((curv.gauss.values[node] - k).abs() < 1e-10);
        }
        let flat = ConformalTorus::flat(unit(16)).curvature();
        assert_eq!(flat.gauss.sup_norm(), 0.0);
        assert_eq!(flat.ricci.sup_norm(), 0.0);
    }

    #[test]
    fn covariant_derivative_examples() {
        let flat = ConformalTorus::flat(unit(64));
        let g = &flat.grid;
        let c = VectorFieldGrid::constant(g, &[0.3, -1.2]);
        let e2 = VectorFieldGrid::constant(g, &[0.0, 1.0]);
        assert!(flat.covariant_derivative(&c, &e2).unwrap().sup_norm() < 1e-12);
        let x = VectorFieldGrid {
            components: vec![
                ScalarField::from_fn(g, |p| (2.0 * PI * p[1]).sin()),
                ScalarField::zeros(g),
            ],
        };
        let d = flat.covariant_derivative(&x, &e2).unwrap();
        for node in 0..g.len() {
            let p = g.coords(node);
            assert!((d.components[0].values[node] - 2.0 * PI * (2.0 * PI * p[1]).cos()).abs() < 1e-10);
            assert!(d.components[1].values[node].abs() < 1e-12);
        }
        // conformal, X = Y = e1: (∇_1 e1)^k = Γ^k_11 = (∂_1φ, -∂_2φ)
        let a = 0.2;
        let m = conformal(64, a);
        let e1 = VectorFieldGrid::constant(&m.grid, &[1.0, 0.0]);
        let d = m.covariant_derivative(&e1, &e1).unwrap();
        for node in [0, 17, 999] {
            let p = m.grid.coords(node);
            let s = -2.0 * PI * a * (2.0 * PI * p[0]).sin();
            assert!((d.components[0].values[node] - s).abs() < 1e-10);
            assert!(d.components[1].values[node].abs() < 1e-12);
        }
    }

    #[test]
    fn metric_compatibility() {
        let m = conformal(64, 0.2);
        let g = &m.grid;
        let tv = |seed| TrigVector::random(2, 2, 0.3, seed).sample(g);
        let (x, y, z) = (tv(1), tv(2), tv(3));
        let xy = m.inner(&x, &y).unwrap();
        let dz_xy: Vec<f64> = {
            let grad = m.spectral().gradient(&xy.values);
            (0..g.len())
                .map(|i| (0..2).map(|k| z.components[k].values[i] * grad[k][i]).sum())
                .collect()
        };
        let a = m.inner(&m.covariant_derivative(&x, &z).unwrap(), &y).unwrap();
        let b = m.inner(&x, &m.covariant_derivative(&y, &z).unwrap()).unwrap();
        for i in 0..g.len() {
            assert!((dz_xy[i] - a.values[i] - b.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn ricci_is_gauss_times_norm() {
        let m = conformal(32, 0.25);
        let curv = m.curvature();
        let x = TrigVector::random(2, 1, 1.0, 5).sample(&m.grid);
        for node in 0..m.grid.len() {
            let v = x.at(node);
            let norm2 = m.metric_factor()[node] * (v[0] * v[0] + v[1] * v[1]);
            let r = curv.ricci_at(node, &v, &v);
            assert!((r - curv.gauss.values[node] * norm2).abs() < 1e-12 * (1.0 + r.abs()));
        }
    }

    fn bandlimited(g: &TorusGrid, seed: u64) -> ScalarField {
        let s = TrigVector::random(2, 3, 1.0, seed).components[0].clone();
        s.sample(g)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn integration_by_parts(seed in 0u64..1000, a in -0.3f64..0.3) {
            let m = conformal(32, a);
            let f = bandlimited(&m.grid, seed);
            let h = bandlimited(&m.grid, seed + 7);
            let lap = m.laplace_beltrami(&h).unwrap();
            let lhs = m.integrate(&f.zip_map(&lap, |p, q| p * q)).unwrap();
            let gf = m.gradient(&f).unwrap();
            let gh = m.gradient(&h).unwrap();
            let rhs = m.integrate(&m.inner(&gf, &gh).unwrap()).unwrap();
            let nf = m.integrate(&f.map(|v| v * v)).unwrap().sqrt();
            let nh = m.integrate(&h.map(|v| v * v)).unwrap().sqrt();
            prop_assert!((lhs + rhs).abs() <= 1e-10 * nf * nh);
        }

        #[test]
        fn laplacian_is_symmetric(seed in 0u64..1000) {
            let m = conformal(32, 0.2);
            let f = bandlimited(&m.grid, seed);
            let h = ScalarField::from_fn(&m.grid, |x| (x[0] * 3.0).sin().exp());
            let a = m.integrate(&f.zip_map(&m.laplace_beltrami(&h).unwrap(), |p, q| p * q)).unwrap();
            let b = m.integrate(&h.zip_map(&m.laplace_beltrami(&f).unwrap(), |p, q| p * q)).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }
}
