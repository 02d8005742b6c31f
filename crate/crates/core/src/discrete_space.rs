//! The discretized interval `(0, L)` with homogeneous Dirichlet data.
//!
//! Scalar fields live on the `n` interior nodes `x_i = i h`, `i = 1..n`, with
//! `h = L / (n + 1)`. Edge fields live on the `n + 1` cells between
//! consecutive nodes of the zero-padded vector `(0, u_1, .., u_n, 0)`, so the
//! two boundary edges carry the jump of the zero extension. With this
//! layout `divergence` is exactly the negative adjoint of `gradient` in the
//! `h`-weighted inner products, and the edge total variation includes the
//! boundary trace term.

use std::f64::consts::PI;

use crate::convex_kernel::RegEps;
use crate::error::{Error, Result};
use crate::tridiag::Tridiagonal;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    n: usize,
    length: f64,
    h: f64,
}

impl Grid1D {
    pub fn new(n_interior: usize, length: f64) -> Result<Self> {
        if n_interior < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 interior nodes, got {n_interior}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "domain length {length} must be positive"
            )));
        }
        Ok(Self {
            n: n_interior,
            length,
            h: length / (n_interior as f64 + 1.0),
        })
    }

    #[inline]
    pub fn n_interior(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Interior node positions `i h`, `i = 1..n`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|i| i as f64 * self.h).collect()
    }

    /// Edge midpoints `(e + 1/2) h`, `e = 0..=n`.
    pub fn edge_midpoints(&self) -> Vec<f64> {
        (0..=self.n).map(|e| (e as f64 + 0.5) * self.h).collect()
    }

    /// Continuum Dirichlet eigenvalue `(k pi / L)^2`.
    pub fn continuum_eigenvalue(&self, k: usize) -> f64 {
        let w = k as f64 * PI / self.length;
        w * w
    }

    /// Eigenvalue of the three-point Dirichlet Laplacian for mode `k`.
    pub fn discrete_eigenvalue(&self, k: usize) -> f64 {
        let s = (k as f64 * PI * self.h / (2.0 * self.length)).sin();
        4.0 / (self.h * self.h) * s * s
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField {
            grid: *self,
            values: vec![0.0; self.n],
        }
    }

    pub fn edge_zeros(&self) -> EdgeField {
        EdgeField {
            grid: *self,
            values: vec![0.0; self.n + 1],
        }
    }

    /// `I - eps Delta_h` as a tridiagonal matrix.
    pub fn shifted_laplacian(&self, eps: f64) -> Tridiagonal {
        let c = eps / (self.h * self.h);
        Tridiagonal::new(
            vec![-c; self.n - 1],
            vec![1.0 + 2.0 * c; self.n],
            vec![-c; self.n - 1],
        )
    }

    /// `-Delta_h` as a tridiagonal matrix.
    pub fn neg_laplacian(&self) -> Tridiagonal {
        let c = 1.0 / (self.h * self.h);
        Tridiagonal::new(vec![-c; self.n - 1], vec![2.0 * c; self.n], vec![-c; self.n - 1])
    }

    pub(crate) fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.n, self.length, other.n, other.length
            )));
        }
        Ok(())
    }
}

/// A function on the interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} interior nodes",
                values.len(),
                grid.n_interior()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the interior nodes.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_interior());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `h`-weighted inner product.
    pub fn dot_h(&self, other: &ScalarField) -> f64 {
        self.grid.h * dot(&self.values, &other.values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot_h(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &ScalarField) -> ScalarField {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + factor * b)
                .collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.add_scaled(-1.0, other)
    }

    /// `(1 - t) self + t other`.
    pub fn lerp(&self, other: &ScalarField, t: f64) -> ScalarField {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
        }
    }
}

/// A field on the `n + 1` edges of the zero-padded grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl EdgeField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_edges() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} edges",
                values.len(),
                grid.n_edges()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("edge values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the edge midpoints.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.edge_midpoints().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_edges());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot_h(&self, other: &EdgeField) -> f64 {
        self.grid.h * dot(&self.values, &other.values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot_h(self).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> EdgeField {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_scaled(&self, factor: f64, other: &EdgeField) -> EdgeField {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + factor * b)
                .collect(),
        }
    }

    pub fn lerp(&self, other: &EdgeField, t: f64) -> EdgeField {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward differences of the zero-padded field.
pub fn gradient(u: &ScalarField) -> EdgeField {
    let grid = u.grid;
    EdgeField::from_vec_unchecked(grid, gradient_values(&u.values, grid.h))
}

pub(crate) fn gradient_values(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let inv_h = 1.0 / h;
    let mut g = Vec::with_capacity(n + 1);
    g.push(u[0] * inv_h);
    for i in 1..n {
        g.push((u[i] - u[i - 1]) * inv_h);
    }
    g.push(-u[n - 1] * inv_h);
    g
}

/// Node `i` receives `(v_i - v_{i-1}) / h`, the negative adjoint of
/// [`gradient`].
pub fn divergence(v: &EdgeField) -> ScalarField {
    let grid = v.grid;
    ScalarField::from_vec_unchecked(grid, divergence_values(&v.values, grid.h))
}

pub(crate) fn divergence_values(v: &[f64], h: f64) -> Vec<f64> {
    let inv_h = 1.0 / h;
    v.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()
}

/// Three-point Dirichlet Laplacian, `divergence(gradient(u))`.
pub fn laplacian_apply(u: &ScalarField) -> ScalarField {
    divergence(&gradient(u))
}

/// `R_eps u = (I - eps Delta_h)^-1 u` by tridiagonal elimination.
pub fn resolvent_apply(eps: RegEps, u: &ScalarField) -> ScalarField {
    let grid = u.grid;
    let values = grid
        .shifted_laplacian(eps.value())
        .solve(&u.values)
        .expect("I - eps Delta_h is strictly diagonally dominant");
    ScalarField::from_vec_unchecked(grid, values)
}

/// `(-Delta_h)^-1 u`.
pub fn inverse_neg_laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid;
    let values = grid
        .neg_laplacian()
        .solve(&u.values)
        .expect("-Delta_h is symmetric positive definite");
    ScalarField::from_vec_unchecked(grid, values)
}

/// `H^-1` inner product `<(-Delta_h)^-1 u, v>_h`.
pub fn hminus1_dot(u: &ScalarField, v: &ScalarField) -> f64 {
    inverse_neg_laplacian(u).dot_h(v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    L2,
    Hminus1,
    /// Seminorm `(sum_e h |grad u|_e^p)^(1/p)`, boundary edges included.
    W1p(f64),
    /// Edge total variation of the zero extension.
    TV,
}

pub fn norm(u: &ScalarField, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::L2 => Ok(u.l2_norm()),
        NormKind::Hminus1 => Ok(hminus1_dot(u, u).max(0.0).sqrt()),
        NormKind::W1p(p) => {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "W1p norm needs p in (1, 2], got {p}"
                )));
            }
            Ok(w1p_power(u, p).powf(1.0 / p))
        }
        NormKind::TV => Ok(total_variation(u)),
    }
}

/// `sum_e h |grad u|_e^p`, i.e. the `p`-th power of the `W1p` seminorm.
pub fn w1p_power(u: &ScalarField, p: f64) -> f64 {
    let h = u.grid.h;
    gradient_values(&u.values, h)
        .iter()
        .map(|g| if *g == 0.0 { 0.0 } else { g.abs().powf(p) })
        .sum::<f64>()
        * h
}

/// `sum_e h |grad u|_e` over all edges, including the boundary jumps.
pub fn total_variation(u: &ScalarField) -> f64 {
    let h = u.grid.h;
    gradient_values(&u.values, h).iter().map(|g| g.abs()).sum::<f64>() * h
}

/// Total variation restricted to the interior edges (no boundary jumps).
pub fn interior_total_variation(u: &ScalarField) -> f64 {
    u.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// A sampled Dirichlet eigenfunction `sqrt(2/L) sin(k pi x / L)`.
#[derive(Clone, Debug)]
pub struct SpectralMode {
    pub k: usize,
    pub field: ScalarField,
    pub continuum_eigenvalue: f64,
    pub discrete_eigenvalue: f64,
}

pub fn spectral_mode(grid: &Grid1D, k: usize) -> Result<SpectralMode> {
    if k == 0 || k > grid.n_interior() {
        return Err(Error::InvalidParameter(format!(
            "mode index {k} outside 1..={}",
            grid.n_interior()
        )));
    }
    let amp = (2.0 / grid.length()).sqrt();
    let w = k as f64 * PI / grid.length();
    Ok(SpectralMode {
        k,
        field: ScalarField::from_fn(*grid, |x| amp * (w * x).sin()),
        continuum_eigenvalue: grid.continuum_eigenvalue(k),
        discrete_eigenvalue: grid.discrete_eigenvalue(k),
    })
}

/// All `n` sampled eigenfunctions as rows of a dense `n x n` table.
pub fn mode_table(grid: &Grid1D) -> Vec<Vec<f64>> {
    (1..=grid.n_interior())
        .map(|k| spectral_mode(grid, k).expect("k in range").field.into_values())
        .collect()
}
