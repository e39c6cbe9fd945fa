//! Small dense symmetric matrices (dimension 1 to 3).
//!
//! Coefficient matrices and effective matrices in this crate are at most 3×3,
//! so a fixed-size value type with closed-form eigenvalue bounds is all the
//! linear algebra needed outside the iterative solvers.

use crate::error::{HomogError, Result};

/// Maximum spatial dimension supported by the crate.
pub const MAX_DIM: usize = 3;

/// Dense symmetric matrix of dimension 1..=3, stored row-major in a fixed array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMat {
    dim: usize,
    data: [f64; MAX_DIM * MAX_DIM],
}

impl SymMat {
    /// Zero matrix of the given dimension.
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(HomogError::DimensionMismatch(format!(
                "matrix dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        Ok(SymMat { dim, data: [0.0; MAX_DIM * MAX_DIM] })
    }

    /// Identity matrix of the given dimension.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        Ok(m)
    }

    /// Build from a row-major slice of `dim * dim` entries; symmetrizes the input.
    pub fn from_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        if rows.len() != dim * dim {
            return Err(HomogError::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                rows.len()
            )));
        }
        for i in 0..dim {
            for j in 0..dim {
                let v = 0.5 * (rows[i * dim + j] + rows[j * dim + i]);
                m.data[i * MAX_DIM + j] = v;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.data[i * MAX_DIM + j]
    }

    /// Set entry (i, j) and its mirror (j, i).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.data[i * MAX_DIM + j] = v;
        self.data[j * MAX_DIM + i] = v;
    }

    /// Scale every entry by `s`.
    pub fn scaled(&self, s: f64) -> SymMat {
        let mut out = *self;
        for v in out.data.iter_mut() {
            *v *= s;
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.get(i, j).abs());
            }
        }
        m
    }

    /// Smallest eigenvalue, by closed form (trigonometric method for 3×3).
    pub fn min_eigenvalue(&self) -> f64 {
        match self.dim {
            1 => self.get(0, 0),
            2 => {
                let a = self.get(0, 0);
                let d = self.get(1, 1);
                let b = self.get(0, 1);
                let tr = a + d;
                let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
                0.5 * (tr - disc)
            }
            3 => self.eig3().0,
            _ => unreachable!("dimension checked at construction"),
        }
    }

    /// Largest eigenvalue (same closed forms).
    pub fn max_eigenvalue(&self) -> f64 {
        match self.dim {
            1 => self.get(0, 0),
            2 => {
                let a = self.get(0, 0);
                let d = self.get(1, 1);
                let b = self.get(0, 1);
                let tr = a + d;
                let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
                0.5 * (tr + disc)
            }
            3 => self.eig3().1,
            _ => unreachable!("dimension checked at construction"),
        }
    }

    /// (min, max) eigenvalues of a symmetric 3×3 matrix via the standard
    /// trigonometric solution of the characteristic cubic.
    fn eig3(&self) -> (f64, f64) {
        let a = self;
        let p1 = a.get(0, 1).powi(2) + a.get(0, 2).powi(2) + a.get(1, 2).powi(2);
        if p1 == 0.0 {
            // Diagonal matrix.
            let d = [a.get(0, 0), a.get(1, 1), a.get(2, 2)];
            let mut lo = d[0];
            let mut hi = d[0];
            for &v in &d[1..] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            return (lo, hi);
        }
        let q = (a.get(0, 0) + a.get(1, 1) + a.get(2, 2)) / 3.0;
        let p2 = (a.get(0, 0) - q).powi(2)
            + (a.get(1, 1) - q).powi(2)
            + (a.get(2, 2) - q).powi(2)
            + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        // B = (A - q I) / p; r = det(B) / 2 clamped to [-1, 1].
        let b = |i: usize, j: usize| (a.get(i, j) - if i == j { q } else { 0.0 }) / p;
        let det_b = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
            - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
            + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let eig_max = q + 2.0 * p * phi.cos();
        let eig_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        (eig_min, eig_max)
    }

    /// Apply to a vector (first `dim` entries of the fixed-size arrays used).
    pub fn apply(&self, x: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut y = [0.0; MAX_DIM];
        for i in 0..self.dim {
            let mut s = 0.0;
            for j in 0..self.dim {
                s += self.get(i, j) * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// Rows as nested vectors (for JSON reports).
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Number of independent entries of a symmetric `dim`×`dim` matrix.
pub fn sym_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index of entry (i, j), i ≤ j, in the packed upper-triangle ordering
/// (0,0), (0,1), (1,1), (0,2), (1,2), (2,2).
pub fn sym_index(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

/// Inverse of [`sym_index`]: the (i, j) pair (i ≤ j) stored at packed position `idx`.
pub fn sym_pair(idx: usize) -> (usize, usize) {
    let mut hi = 0;
    while (hi + 1) * (hi + 2) / 2 <= idx {
        hi += 1;
    }
    let lo = idx - hi * (hi + 1) / 2;
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_indexing_round_trips() {
        for dim in 1..=3 {
            for j in 0..dim {
                for i in 0..=j {
                    let idx = sym_index(i, j);
                    assert_eq!(sym_pair(idx), (i, j));
                    assert_eq!(sym_index(j, i), idx, "order of (i,j) must not matter");
                }
            }
            assert_eq!(sym_len(dim), (0..dim).map(|j| j + 1).sum::<usize>());
        }
    }

    #[test]
    fn eigenvalues_match_known_2x2() {
        let m = SymMat::from_rows(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((m.min_eigenvalue() - 1.0).abs() < 1e-14);
        assert!((m.max_eigenvalue() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_match_known_3x3() {
        // Eigenvalues of the classic tridiagonal [2,-1] 3x3: 2 - sqrt(2), 2, 2 + sqrt(2).
        let m =
            SymMat::from_rows(3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]).unwrap();
        let lo = 2.0 - std::f64::consts::SQRT_2;
        let hi = 2.0 + std::f64::consts::SQRT_2;
        assert!((m.min_eigenvalue() - lo).abs() < 1e-12);
        assert!((m.max_eigenvalue() - hi).abs() < 1e-12);
    }

    #[test]
    fn diagonal_3x3_takes_fast_path() {
        let m = SymMat::from_rows(3, &[3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 7.0]).unwrap();
        assert_eq!(m.min_eigenvalue(), -1.0);
        assert_eq!(m.max_eigenvalue(), 7.0);
    }

    #[test]
    fn from_rows_symmetrizes() {
        let m = SymMat::from_rows(2, &[1.0, 0.4, 0.2, 1.0]).unwrap();
        assert!((m.get(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(SymMat::zeros(0).is_err());
        assert!(SymMat::zeros(4).is_err());
    }
}
