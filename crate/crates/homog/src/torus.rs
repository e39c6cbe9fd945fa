//! Uniform grids and sampled fields on the unit torus Tⁿ = [0,1)ⁿ, n ≤ 3.
//!
//! All derivative operators are second-order centered differences:
//!
//! * first derivative:  (f(y + h eᵢ) − f(y − h eᵢ)) / (2h)
//! * pure second:       (f(y + h eᵢ) − 2 f(y) + f(y − h eᵢ)) / h²
//! * mixed second:      four-point centered cross stencil, the composition of
//!   the two centered first differences, so ∂ᵢⱼ = ∂ⱼᵢ holds exactly.
//!
//! Integration is the rectangle rule hⁿ Σ f, which is spectrally accurate for
//! smooth periodic integrands. Periodicity is handled by index wrapping, so no
//! interpolation is ever needed: every sampling in the crate is arranged to
//! land on grid nodes.

use crate::error::{HomogError, Result};
use crate::matrix::{sym_index, sym_len, SymMat, MAX_DIM};

/// Uniform periodic grid on [0,1)ⁿ with the same resolution along every axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    strides: [usize; MAX_DIM],
    len: usize,
}

impl PeriodicGrid {
    /// A grid with `n` nodes per axis in dimension `dim`.
    ///
    /// `n` must be even and at least 4 so that every centered stencil and every
    /// half-grid reflection is representable.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(HomogError::InvalidGrid(format!(
                "dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        if n < 4 || n % 2 != 0 {
            return Err(HomogError::InvalidGrid(format!(
                "nodes per axis must be even and >= 4, got {n}"
            )));
        }
        let mut strides = [0usize; MAX_DIM];
        let mut len = 1usize;
        // Row-major: axis 0 slowest, last axis fastest.
        for a in (0..dim).rev() {
            strides[a] = len;
            len = len.checked_mul(n).ok_or_else(|| {
                HomogError::InvalidGrid(format!("grid size overflow: {n}^{dim}"))
            })?;
        }
        Ok(PeriodicGrid { dim, n, strides, len })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    /// Mesh width h = 1/n.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of nodes nᵈⁱᵐ.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight hᵈⁱᵐ of a single node.
    pub fn node_weight(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Multi-index (i₀, …) of a flat index.
    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        debug_assert!(flat < self.len);
        let mut idx = [0usize; MAX_DIM];
        for a in 0..self.dim {
            idx[a] = (flat / self.strides[a]) % self.n;
        }
        idx
    }

    /// Flat index of a multi-index (entries beyond `dim` ignored).
    pub fn flat_index(&self, idx: &[usize; MAX_DIM]) -> usize {
        let mut f = 0usize;
        for a in 0..self.dim {
            debug_assert!(idx[a] < self.n);
            f += idx[a] * self.strides[a];
        }
        f
    }

    /// Coordinates of a node (unused axes are 0).
    pub fn coords(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let h = self.h();
        let mut y = [0.0; MAX_DIM];
        for a in 0..self.dim {
            y[a] = idx[a] as f64 * h;
        }
        y
    }

    /// Flat index of the node shifted `offset` steps along `axis`, wrapping.
    pub fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> usize {
        debug_assert!(axis < self.dim);
        let stride = self.strides[axis];
        let i = (flat / stride) % self.n;
        let j = (i as isize + offset).rem_euclid(self.n as isize) as usize;
        flat + j * stride - i * stride
    }

    fn require_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            return Err(HomogError::AxisOutOfRange { axis, dim: self.dim });
        }
        Ok(())
    }
}

/// Scalar samples on a [`PeriodicGrid`], one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Field with every node equal to `value`.
    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        ScalarField { grid, values: vec![value; grid.len()] }
    }

    /// Sample a function of the node coordinates.
    pub fn from_fn(grid: PeriodicGrid, mut f: impl FnMut(&[f64; MAX_DIM]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        ScalarField { grid, values }
    }

    /// Wrap an existing value vector (length must match the grid).
    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(HomogError::DimensionMismatch(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// Centered first difference along `axis`.
    pub fn derivative(&self, axis: usize) -> Result<ScalarField> {
        self.grid.require_axis(axis)?;
        let inv_2h = 0.5 / self.grid.h();
        let mut out = vec![0.0; self.values.len()];
        for (flat, o) in out.iter_mut().enumerate() {
            let p = self.values[self.grid.neighbor(flat, axis, 1)];
            let m = self.values[self.grid.neighbor(flat, axis, -1)];
            *o = (p - m) * inv_2h;
        }
        Ok(ScalarField { grid: self.grid, values: out })
    }

    /// Centered second difference ∂ᵢⱼ: three-point along a single axis for
    /// i = j, four-point cross stencil for i ≠ j (symmetric in i, j by
    /// construction).
    pub fn second_derivative(&self, i: usize, j: usize) -> Result<ScalarField> {
        self.grid.require_axis(i)?;
        self.grid.require_axis(j)?;
        let h = self.grid.h();
        let mut out = vec![0.0; self.values.len()];
        if i == j {
            let inv_h2 = 1.0 / (h * h);
            for (flat, o) in out.iter_mut().enumerate() {
                let p = self.values[self.grid.neighbor(flat, i, 1)];
                let m = self.values[self.grid.neighbor(flat, i, -1)];
                *o = (p - 2.0 * self.values[flat] + m) * inv_h2;
            }
        } else {
            let inv_4h2 = 0.25 / (h * h);
            for (flat, o) in out.iter_mut().enumerate() {
                let pi = self.grid.neighbor(flat, i, 1);
                let mi = self.grid.neighbor(flat, i, -1);
                let pp = self.values[self.grid.neighbor(pi, j, 1)];
                let pm = self.values[self.grid.neighbor(pi, j, -1)];
                let mp = self.values[self.grid.neighbor(mi, j, 1)];
                let mm = self.values[self.grid.neighbor(mi, j, -1)];
                *o = (pp - pm - mp + mm) * inv_4h2;
            }
        }
        Ok(ScalarField { grid: self.grid, values: out })
    }

    /// Rectangle-rule integral over the torus.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.node_weight()
    }

    /// Reflection about `center`: g(y) = f(2c − y), with each center component
    /// snapped to the nearest half-grid multiple so 2c lies on the grid.
    pub fn shift_reflect(&self, center: &[f64]) -> Result<ScalarField> {
        if center.len() < self.grid.dim() {
            return Err(HomogError::DimensionMismatch(format!(
                "reflection center has {} components for a {}-dimensional grid",
                center.len(),
                self.grid.dim()
            )));
        }
        let n = self.grid.nodes_per_axis();
        // k[a] = 2 c_a / h rounded to an integer (c snapped to multiples of h/2).
        let mut k = [0isize; MAX_DIM];
        for a in 0..self.grid.dim() {
            k[a] = (2.0 * center[a] * n as f64).round() as isize;
        }
        let mut out = vec![0.0; self.values.len()];
        for (flat, o) in out.iter_mut().enumerate() {
            let idx = self.grid.multi_index(flat);
            let mut src = [0usize; MAX_DIM];
            for a in 0..self.grid.dim() {
                src[a] = (k[a] - idx[a] as isize).rem_euclid(n as isize) as usize;
            }
            *o = self.values[self.grid.flat_index(&src)];
        }
        Ok(ScalarField { grid: self.grid, values: out })
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid, "fields must share a grid");
        let values =
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { grid: self.grid, values }
    }

    /// Maximum absolute value over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Minimum value over all nodes.
    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Maximum value over all nodes.
    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Mean value (integral, since the torus has unit volume).
    pub fn mean(&self) -> f64 {
        self.integrate()
    }

    /// Subtract the mean in place so the field integrates to zero.
    pub fn remove_mean(&mut self) {
        let m = self.values.iter().sum::<f64>() / self.values.len() as f64;
        for v in self.values.iter_mut() {
            *v -= m;
        }
    }

    /// Error if any sample is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (node, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(HomogError::NonFiniteSample { node, context: context.to_string() });
            }
        }
        Ok(())
    }
}

/// Symmetric-matrix-valued field: packed upper-triangle scalar fields on a
/// shared grid, checked pointwise symmetric positive definite at construction.
#[derive(Debug, Clone)]
pub struct SymMatrixField {
    grid: PeriodicGrid,
    entries: Vec<ScalarField>,
    min_eig: f64,
    max_abs: f64,
}

impl SymMatrixField {
    /// Build from packed entries in the order (0,0), (0,1), (1,1), (0,2), ….
    ///
    /// Checks that every sample is finite and that the matrix at every node is
    /// positive definite; reports the offending node otherwise.
    pub fn new(grid: PeriodicGrid, entries: Vec<ScalarField>) -> Result<Self> {
        let dim = grid.dim();
        if entries.len() != sym_len(dim) {
            return Err(HomogError::DimensionMismatch(format!(
                "expected {} packed entries in dimension {dim}, got {}",
                sym_len(dim),
                entries.len()
            )));
        }
        for e in &entries {
            if e.grid() != grid {
                return Err(HomogError::DimensionMismatch(
                    "matrix entries sampled on different grids".to_string(),
                ));
            }
            e.check_finite("coefficient matrix entry")?;
        }
        let mut field = SymMatrixField { grid, entries, min_eig: f64::INFINITY, max_abs: 0.0 };
        let mut min_eig = f64::INFINITY;
        let mut min_node = 0;
        let mut max_abs = 0.0f64;
        for node in 0..grid.len() {
            let m = field.at(node);
            let eig = m.min_eigenvalue();
            if eig < min_eig {
                min_eig = eig;
                min_node = node;
            }
            max_abs = max_abs.max(m.max_abs());
        }
        if !(min_eig > 0.0) {
            return Err(HomogError::NotPositiveDefinite { node: min_node, min_eig });
        }
        field.min_eig = min_eig;
        field.max_abs = max_abs;
        Ok(field)
    }

    /// Identity coefficient field.
    pub fn identity(grid: PeriodicGrid) -> Result<Self> {
        let dim = grid.dim();
        let entries = (0..sym_len(dim))
            .map(|idx| {
                let (i, j) = crate::matrix::sym_pair(idx);
                ScalarField::constant(grid, if i == j { 1.0 } else { 0.0 })
            })
            .collect();
        SymMatrixField::new(grid, entries)
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Entry (i, j) as a scalar field (order of i, j irrelevant).
    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        &self.entries[sym_index(i, j)]
    }

    /// Entry (i, j) sampled at a node.
    pub fn value(&self, flat: usize, i: usize, j: usize) -> f64 {
        self.entries[sym_index(i, j)].value(flat)
    }

    /// Full matrix at a node.
    pub fn at(&self, flat: usize) -> SymMat {
        let dim = self.dim();
        let mut m = SymMat::zeros(dim).expect("dimension validated at construction");
        for j in 0..dim {
            for i in 0..=j {
                m.set(i, j, self.value(flat, i, j));
            }
        }
        m
    }

    /// Smallest eigenvalue over all nodes (positivity margin).
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    /// Largest absolute entry over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    /// Pointwise scaling sA (s > 0 preserves positive definiteness).
    pub fn scaled(&self, s: f64) -> Result<SymMatrixField> {
        let entries = self.entries.iter().map(|e| e.map(|v| s * v)).collect();
        SymMatrixField::new(self.grid, entries)
    }

    /// Quadrature mean of each entry, as a constant matrix.
    ///
    /// A convex combination of the pointwise matrices, hence positive definite
    /// whenever the field is.
    pub fn mean_matrix(&self) -> Result<SymMat> {
        let dim = self.dim();
        let mut m = SymMat::zeros(dim)?;
        for j in 0..dim {
            for i in 0..=j {
                m.set(i, j, self.entry(i, j).integrate());
            }
        }
        Ok(m)
    }
}
