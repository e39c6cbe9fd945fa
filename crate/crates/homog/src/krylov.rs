//! Matrix-free linear solves.
//!
//! Everything in the crate funnels through one deterministic BiCGStab
//! implementation with right preconditioning — Jacobi by default, or any
//! [`Preconditioner`] supplied by the caller. Determinism matters for
//! reproducible outputs, so all inner products and updates are plain
//! sequential loops — parallelism is allowed only *inside* an operator's
//! `apply`, where each output entry is computed independently.
//!
//! Singular-but-bordered systems (periodic operators whose kernel is the
//! constants) are handled by [`BorderedOp`], which augments an operator with a
//! rank-one border enforcing a weighted-sum constraint.

use crate::error::{HomogError, Result};

/// A square linear operator given by its action on a vector.
pub trait LinearOp: Sync {
    /// Number of rows = number of columns.
    fn dim(&self) -> usize;

    /// out ← A x. Both slices have length `dim()`.
    fn apply(&self, x: &[f64], out: &mut [f64]);

    /// Main diagonal of A, used for Jacobi preconditioning. Entries that are
    /// zero or non-finite are replaced by 1 before use, so operators with a
    /// structurally zero diagonal entry may return it as-is.
    fn diagonal(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }
}

/// Augments a (possibly singular) operator L with one constraint row/column:
///
/// ```text
/// [ L   1 ] [x]   [b]
/// [ wᵀ  0 ] [λ] = [m]
/// ```
///
/// The extra column adds λ times the all-ones vector to each residual row and
/// the extra row pins the weighted sum Σ wᵢ xᵢ to a prescribed value. When the
/// kernel of L is spanned by a vector not orthogonal to 1 (or the kernel of Lᵀ
/// is the constants), the bordered system is nonsingular even though L is not.
pub struct BorderedOp<'a, L: LinearOp + ?Sized> {
    inner: &'a L,
    weights: &'a [f64],
}

impl<'a, L: LinearOp + ?Sized> BorderedOp<'a, L> {
    pub fn new(inner: &'a L, weights: &'a [f64]) -> Self {
        assert_eq!(weights.len(), inner.dim(), "constraint weights must match operator size");
        BorderedOp { inner, weights }
    }

    /// Right-hand side [b; constraint] for the bordered system.
    pub fn rhs(&self, b: &[f64], constraint: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(b.len() + 1);
        out.extend_from_slice(b);
        out.push(constraint);
        out
    }
}

impl<L: LinearOp + ?Sized> LinearOp for BorderedOp<'_, L> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.inner.dim();
        self.inner.apply(&x[..n], &mut out[..n]);
        let lambda = x[n];
        for o in out[..n].iter_mut() {
            *o += lambda;
        }
        out[n] = self.weights.iter().zip(&x[..n]).map(|(w, v)| w * v).sum();
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.inner.diagonal();
        // The corner entry is structurally zero; for preconditioning purposes
        // any positive stand-in is valid, and √dim balances the all-ones
        // border column (whose ℓ² norm is √dim) against the other columns.
        d.push((self.inner.dim() as f64).sqrt());
        d
    }
}

/// An approximate inverse M⁻¹ applied on the right inside the iteration.
pub trait Preconditioner: Sync {
    fn dim(&self) -> usize;

    /// out ← M⁻¹ x. Both slices have length `dim()`.
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// Diagonal (Jacobi) preconditioning: divide by the operator diagonal.
pub struct JacobiPreconditioner {
    inv: Vec<f64>,
}

impl JacobiPreconditioner {
    /// Zero or non-finite entries are replaced by 1, so operators with a
    /// structurally zero diagonal entry are accepted as-is.
    pub fn from_diagonal(diag: Vec<f64>) -> Self {
        let inv = diag
            .into_iter()
            .map(|d| if d.is_finite() && d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        JacobiPreconditioner { inv }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn dim(&self) -> usize {
        self.inv.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, v), s) in out.iter_mut().zip(x).zip(&self.inv) {
            *o = v * s;
        }
    }
}

/// Extends a preconditioner of the physical block to a bordered system: the
/// border slot is divided by the same positive stand-in used for the Jacobi
/// corner (see [`BorderedOp::diagonal`]).
pub struct BorderedPreconditioner<'a> {
    inner: &'a dyn Preconditioner,
    corner: f64,
}

impl<'a> BorderedPreconditioner<'a> {
    pub fn new(inner: &'a dyn Preconditioner, corner: f64) -> Self {
        assert!(corner > 0.0, "corner stand-in must be positive");
        BorderedPreconditioner { inner, corner }
    }
}

impl Preconditioner for BorderedPreconditioner<'_> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.inner.dim();
        self.inner.apply(&x[..n], &mut out[..n]);
        out[n] = x[n] / self.corner;
    }
}

/// Iteration controls for [`bicgstab`].
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Convergence target: ‖b − Ax‖∞ ≤ tol · max(1, ‖b‖∞).
    pub tol: f64,
    /// Cap on preconditioned matrix applications (two per full iteration).
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-10, max_iter: 50_000 }
    }
}

/// Convergence report for a successful solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    /// Matrix applications consumed (excluding the initial residual).
    pub iterations: usize,
    /// Final true residual in the convergence norm (see [`bicgstab_scaled`]):
    /// by default ‖b − Ax‖∞ / max(1, ‖b‖∞).
    pub residual: f64,
    /// Number of times the recurrence was rebuilt after a stall.
    pub restarts: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Preconditioned BiCGStab with a true-residual convergence contract:
/// ‖b − Ax‖∞ ≤ tol · max(1, ‖b‖∞).
pub fn bicgstab<L: LinearOp + ?Sized>(
    op: &L,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    bicgstab_scaled(op, b, x0, cfg, None)
}

/// [`bicgstab`] with an explicit row weighting for the convergence test.
///
/// Converges once max_i |(b − Ax)_i| · w_i ≤ tol, verified against a freshly
/// computed residual (not the recurred one). With `row_weights = None` the
/// uniform weight 1/max(1, ‖b‖∞) is used, which reduces to the plain relative
/// contract. Explicit weights matter for bordered systems whose constraint row
/// lives on a completely different scale than the physical rows: each block
/// can then be held to its own tolerance. Stalled or diverging recurrences are
/// restarted from the best iterate seen, a few times, before giving up with a
/// non-convergence error.
pub fn bicgstab_scaled<L: LinearOp + ?Sized>(
    op: &L,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
    row_weights: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveStats)> {
    let jacobi = JacobiPreconditioner::from_diagonal(op.diagonal());
    bicgstab_preconditioned(op, b, x0, cfg, row_weights, &jacobi)
}

/// [`bicgstab_scaled`] with an explicit preconditioner in place of Jacobi.
pub fn bicgstab_preconditioned<L: LinearOp + ?Sized>(
    op: &L,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
    row_weights: Option<&[f64]>,
    precond: &dyn Preconditioner,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    assert_eq!(b.len(), n, "right-hand side must match operator size");
    assert_eq!(precond.dim(), n, "preconditioner must match operator size");
    if let Some(w) = row_weights {
        assert_eq!(w.len(), n, "row weights must match operator size");
    }
    let uniform = 1.0 / max_norm(b).max(1.0);
    let scaled_norm = |v: &[f64]| -> f64 {
        match row_weights {
            Some(w) => v.iter().zip(w).fold(0.0f64, |m, (x, s)| m.max(x.abs() * s)),
            None => max_norm(v) * uniform,
        }
    };
    let thresh = cfg.tol;

    let mut x = match x0 {
        Some(v) => {
            assert_eq!(v.len(), n, "initial guess must match operator size");
            v.to_vec()
        }
        None => vec![0.0; n],
    };

    let mut r = vec![0.0; n];
    let mut rhat = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];

    let mut iters = 0usize;
    let max_restarts = 6usize;
    let mut restarts = 0usize;
    let mut true_residual;
    let mut best_x = x.clone();
    let mut best_residual = f64::INFINITY;

    'outer: loop {
        // Fresh true residual r = b − A x.
        op.apply(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        true_residual = scaled_norm(&r);
        if true_residual <= thresh {
            return Ok((x, SolveStats { iterations: iters, residual: true_residual, restarts }));
        }
        if true_residual < best_residual {
            best_residual = true_residual;
            best_x.copy_from_slice(&x);
        } else {
            // A stalled or diverged pass: resume from the best iterate seen.
            x.copy_from_slice(&best_x);
            op.apply(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            true_residual = best_residual;
        }
        if iters >= cfg.max_iter || restarts > max_restarts {
            return Err(HomogError::NonConvergence {
                residual: true_residual,
                iterations: iters,
                tol: thresh,
            });
        }
        restarts += 1;
        let blowup = 1e8 * true_residual.max(1.0);

        rhat.copy_from_slice(&r);
        p.iter_mut().for_each(|z| *z = 0.0);
        v.iter_mut().for_each(|z| *z = 0.0);
        let mut rho = 1.0f64;
        let mut alpha = 1.0f64;
        let mut omega = 1.0f64;

        while iters < cfg.max_iter {
            let rho_new = dot(&rhat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                continue 'outer; // shadow vector stalled; rebuild from current x
            }
            let beta = (rho_new / rho) * (alpha / omega);
            if !beta.is_finite() {
                continue 'outer;
            }
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond.apply(&p, &mut phat);
            op.apply(&phat, &mut v);
            iters += 1;
            let denom = dot(&rhat, &v);
            if denom == 0.0 || !denom.is_finite() {
                continue 'outer;
            }
            alpha = rho_new / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if scaled_norm(&s) <= thresh {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                continue 'outer; // verification pass will confirm and return
            }
            precond.apply(&s, &mut shat);
            op.apply(&shat, &mut t);
            iters += 1;
            let tt = dot(&t, &t);
            if tt == 0.0 || !tt.is_finite() {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                continue 'outer;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
            }
            for i in 0..n {
                r[i] = s[i] - omega * t[i];
            }
            rho = rho_new;
            let recurred = scaled_norm(&r);
            if recurred <= thresh {
                continue 'outer; // verify against a fresh residual
            }
            if recurred > blowup || !recurred.is_finite() {
                continue 'outer; // diverging; the outer loop falls back to best_x
            }
            if omega == 0.0 || !omega.is_finite() {
                continue 'outer;
            }
        }
        // Iteration budget exhausted; let the verification pass report.
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::test_support::Lcg;

    /// Dense row-major matrix as a [`LinearOp`], for oracle comparisons.
    struct DenseOp {
        n: usize,
        rows: Vec<f64>,
    }

    impl DenseOp {
        fn new(n: usize, rows: Vec<f64>) -> Self {
            assert_eq!(rows.len(), n * n);
            DenseOp { n, rows }
        }
    }

    impl LinearOp for DenseOp {
        fn dim(&self) -> usize {
            self.n
        }

        fn apply(&self, x: &[f64], out: &mut [f64]) {
            for i in 0..self.n {
                out[i] = dot(&self.rows[i * self.n..(i + 1) * self.n], x);
            }
        }

        fn diagonal(&self) -> Vec<f64> {
            (0..self.n).map(|i| self.rows[i * self.n + i]).collect()
        }
    }

    fn lu_solve(op: &DenseOp, b: &[f64]) -> Vec<f64> {
        let a = nalgebra::DMatrix::from_row_slice(op.n, op.n, &op.rows);
        let rhs = nalgebra::DVector::from_column_slice(b);
        let sol = a.lu().solve(&rhs).expect("oracle matrix must be invertible");
        sol.iter().copied().collect()
    }

    #[test]
    fn matches_dense_lu_on_diagonally_dominant_system() {
        let n = 24;
        let mut rng = Lcg(2024);
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            let mut off_sum = 0.0;
            for j in 0..n {
                if i != j {
                    let v = rng.uniform(-1.0, 1.0);
                    rows[i * n + j] = v;
                    off_sum += v.abs();
                }
            }
            rows[i * n + i] = off_sum + 2.0;
        }
        let op = DenseOp::new(n, rows);
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();

        let cfg = SolverConfig { tol: 1e-12, ..Default::default() };
        let (x, stats) = bicgstab(&op, &b, None, &cfg).unwrap();
        let exact = lu_solve(&op, &b);
        let diff =
            x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        assert!(diff <= 1e-9, "solution differs from LU oracle by {diff}");
        assert!(stats.residual <= 1e-12 * 1.001, "contract violated: {}", stats.residual);
    }

    #[test]
    fn pure_diagonal_system_converges_immediately_under_jacobi() {
        let n = 6;
        let mut rows = vec![0.0; n * n];
        let scales = [1.0, 1e8, 1e-6, 42.0, 3.0, 1e5];
        for (i, s) in scales.iter().enumerate() {
            rows[i * n + i] = *s;
        }
        let op = DenseOp::new(n, rows);
        let b = vec![1.0; n];
        let (x, stats) = bicgstab(&op, &b, None, &SolverConfig::default()).unwrap();
        for (xi, s) in x.iter().zip(&scales) {
            assert!((xi - 1.0 / s).abs() <= 1e-9 / s.min(1.0));
        }
        assert!(
            stats.iterations <= 4,
            "Jacobi should make a diagonal system trivial, used {}",
            stats.iterations
        );
    }

    #[test]
    fn warm_start_at_the_solution_does_no_work() {
        let op = DenseOp::new(2, vec![2.0, 1.0, 1.0, 3.0]);
        let x_exact = [1.0, -1.0];
        let b = [2.0 - 1.0, 1.0 - 3.0];
        let (x, stats) = bicgstab(&op, &b, Some(&x_exact), &SolverConfig::default()).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(x, x_exact.to_vec());
    }

    #[test]
    fn bordered_periodic_laplacian_pins_the_mean() {
        // Singular operator: second difference on a 16-node circle (kernel =
        // constants). The border makes the system uniquely solvable.
        let n = 16;
        let h2 = 1.0 / (n as f64 * n as f64);
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            rows[i * n + i] = 2.0 / h2;
            rows[i * n + (i + 1) % n] = -1.0 / h2;
            rows[i * n + (i + n - 1) % n] = -1.0 / h2;
        }
        let lap = DenseOp::new(n, rows);
        let weights = vec![1.0 / n as f64; n];
        let bordered = BorderedOp::new(&lap, &weights);

        // Mean-zero rhs (exactly, by construction) and a nonzero mean target.
        let mut b: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let rhs = bordered.rhs(&b, 0.7);

        let (sol, _) = bicgstab(&bordered, &rhs, None, &SolverConfig::default()).unwrap();
        let x = &sol[..n];
        let lambda = sol[n];
        let got_mean = x.iter().sum::<f64>() / n as f64;
        assert!((got_mean - 0.7).abs() <= 1e-10, "constraint row must pin the mean");
        assert!(lambda.abs() <= 1e-9, "compatible rhs needs no multiplier");

        let mut lx = vec![0.0; n];
        lap.apply(x, &mut lx);
        let res = lx
            .iter()
            .zip(&b)
            .map(|(a, c)| (a - c + lambda).abs())
            .fold(0.0f64, f64::max);
        assert!(res <= 1e-7 * (1.0 / h2), "bordered solve must satisfy the original rows");
    }

    #[test]
    fn reports_nonconvergence_when_budget_is_zero() {
        let op = DenseOp::new(2, vec![1.0, 0.0, 0.0, 1.0]);
        let b = [1.0, 2.0];
        let err = bicgstab(&op, &b, None, &SolverConfig { tol: 1e-10, max_iter: 0 }).unwrap_err();
        match err {
            HomogError::NonConvergence { residual, iterations, .. } => {
                assert_eq!(iterations, 0);
                // ‖b − 0‖∞ = 2 in a norm scaled by 1/max(1, ‖b‖∞) = 1/2.
                assert!((residual - 1.0).abs() < 1e-15);
            }
            other => panic!("expected non-convergence, got {other}"),
        }
    }

    #[test]
    fn zero_operator_fails_cleanly_instead_of_hanging() {
        let op = DenseOp::new(3, vec![0.0; 9]);
        let b = [1.0, 0.0, 0.0];
        let err = bicgstab(&op, &b, None, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, HomogError::NonConvergence { .. }));
    }
}
