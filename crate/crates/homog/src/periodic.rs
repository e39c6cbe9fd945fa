//! The periodic non-divergence-form operator and its adjoint.
//!
//! The forward operator is L v = −a_ij(y) ∂²_ij v, discretized with the
//! centered stencils of [`crate::torus`]. Its transpose — the *exact* matrix
//! transpose of the discretization, not a separate discretization of the
//! continuous adjoint — is Lᵀ r = −∂²_ij (a_ij r), because multiplication by a
//! sampled field is a diagonal matrix and every centered second-difference
//! stencil is symmetric. Keeping this pairing exact is what makes the discrete
//! compatibility theory work to round-off: constants span ker L, so ran Lᵀ ⊥ 1,
//! and the invariant measure spans ker Lᵀ, so ran L ⊥ r.
//!
//! Both kernels are one-dimensional for positive-definite coefficients, so the
//! two solves exposed here are bordered: one scalar constraint row pins the
//! free constant and the all-ones border column absorbs the (zero, in exact
//! arithmetic) incompatible component.

use crate::error::{HomogError, Result};
use crate::krylov::{
    bicgstab_preconditioned, BorderedOp, BorderedPreconditioner, LinearOp, SolveStats,
    SolverConfig,
};
use crate::spectral::SpectralPreconditioner;
use crate::torus::{PeriodicGrid, ScalarField, SymMatrixField};
use rayon::prelude::*;

fn stencil_apply(a: &SymMatrixField, x: &[f64], out: &mut [f64], adjoint: bool) {
    let grid = a.grid();
    let dim = grid.dim();
    let n = grid.nodes_per_axis() as f64;
    let inv_h2 = n * n;
    let inv_4h2 = 0.25 * inv_h2;
    out.par_iter_mut().enumerate().for_each(|(node, o)| {
        let mut acc = 0.0;
        for i in 0..dim {
            let np = grid.neighbor(node, i, 1);
            let nm = grid.neighbor(node, i, -1);
            let d2 = if adjoint {
                a.value(np, i, i) * x[np] - 2.0 * a.value(node, i, i) * x[node]
                    + a.value(nm, i, i) * x[nm]
            } else {
                a.value(node, i, i) * (x[np] - 2.0 * x[node] + x[nm])
            };
            acc += d2 * inv_h2;
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let pi = grid.neighbor(node, i, 1);
                let mi = grid.neighbor(node, i, -1);
                let pp = grid.neighbor(pi, j, 1);
                let pm = grid.neighbor(pi, j, -1);
                let mp = grid.neighbor(mi, j, 1);
                let mm = grid.neighbor(mi, j, -1);
                let cross = if adjoint {
                    a.value(pp, i, j) * x[pp] - a.value(pm, i, j) * x[pm]
                        - a.value(mp, i, j) * x[mp]
                        + a.value(mm, i, j) * x[mm]
                } else {
                    a.value(node, i, j) * (x[pp] - x[pm] - x[mp] + x[mm])
                };
                // Both (i,j) and (j,i) contribute the same term.
                acc += 2.0 * cross * inv_4h2;
            }
        }
        *o = -acc;
    });
}

fn stencil_diagonal(a: &SymMatrixField) -> Vec<f64> {
    let grid = a.grid();
    let inv_h2 = (grid.nodes_per_axis() as f64).powi(2);
    (0..grid.len())
        .map(|node| (0..grid.dim()).map(|i| 2.0 * a.value(node, i, i) * inv_h2).sum())
        .collect()
}

/// L v = −a_ij ∂²_ij v as a matrix-free operator on node vectors.
pub struct CellOperator<'a> {
    a: &'a SymMatrixField,
}

impl<'a> CellOperator<'a> {
    pub fn new(a: &'a SymMatrixField) -> Self {
        CellOperator { a }
    }
}

impl LinearOp for CellOperator<'_> {
    fn dim(&self) -> usize {
        self.a.grid().len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        stencil_apply(self.a, x, out, false);
    }

    fn diagonal(&self) -> Vec<f64> {
        stencil_diagonal(self.a)
    }
}

/// Lᵀ r = −∂²_ij (a_ij r): the exact transpose of [`CellOperator`].
pub struct AdjointCellOperator<'a> {
    a: &'a SymMatrixField,
}

impl<'a> AdjointCellOperator<'a> {
    pub fn new(a: &'a SymMatrixField) -> Self {
        AdjointCellOperator { a }
    }
}

impl LinearOp for AdjointCellOperator<'_> {
    fn dim(&self) -> usize {
        self.a.grid().len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        stencil_apply(self.a, x, out, true);
    }

    fn diagonal(&self) -> Vec<f64> {
        stencil_diagonal(self.a)
    }
}

/// L v as a field, for residual checks and derived quantities.
pub fn apply_cell_operator(a: &SymMatrixField, v: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; v.values().len()];
    stencil_apply(a, v.values(), &mut out, false);
    ScalarField::from_values(v.grid(), out).expect("same grid")
}

/// Lᵀ r as a field.
pub fn apply_adjoint_operator(a: &SymMatrixField, r: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; r.values().len()];
    stencil_apply(a, r.values(), &mut out, true);
    ScalarField::from_values(r.grid(), out).expect("same grid")
}

/// The invariant measure of a coefficient field: the unique r with
/// Lᵀ r = 0, r > 0 everywhere, and unit quadrature mass.
#[derive(Debug, Clone)]
pub struct InvariantMeasure {
    /// Node values of the measure, strictly positive, ∫ r = 1 exactly.
    pub r: ScalarField,
    /// Max-norm of Lᵀ r after normalization (the true equation residual).
    pub residual: f64,
    /// Matrix-vector products spent by the solve (0 for an exact warm start).
    pub iterations: usize,
}

/// Constraint weights for the bordered solves: uniformly 1/√(number of nodes).
///
/// Any functional that is not orthogonal to the kernel (the constants for L,
/// the strictly positive measure for Lᵀ) pins the free component, so the
/// weights are chosen purely for conditioning. The spectral preconditioner
/// passes the mean mode through unchanged and compresses every other mode to
/// unit size, so a constraint row of 1/√N couples the mean mode to the border
/// slot with strength exactly 1 — the (mean, border) block of the
/// preconditioned system becomes [[0, 1], [1, 0]], sitting right on the unit
/// cluster of the stencil rows. A diagonal-weighted row would instead couple
/// at the raw O(n²√N) stencil scale and plant a far outlier pair in the
/// spectrum. The quadrature-exact normalization or gauge is restored after
/// the solve.
fn constraint_weights(grid: PeriodicGrid) -> Vec<f64> {
    let inv_sqrt_n = 1.0 / (grid.len() as f64).sqrt();
    vec![inv_sqrt_n; grid.len()]
}

/// Compute the invariant measure of a coefficient field.
///
/// Solved as a bordered system starting from the constant 1, which is already
/// exact for constant coefficients; the solution is then renormalized so the
/// quadrature mass is exactly 1. Positivity is checked a posteriori and
/// failure is reported with the offending minimum, since a sign change means
/// the resolution cannot support the coefficient contrast.
pub fn invariant_measure(a: &SymMatrixField, cfg: &SolverConfig) -> Result<InvariantMeasure> {
    let grid = a.grid();
    if grid.dim() == 1 {
        // One dimension is exactly solvable: −∂²(a r) = 0 with the centered
        // stencil forces a·r into the discrete kernel of ∂², the constants,
        // so r ∝ 1/a node by node — no iteration, no discretization error.
        let recip = a.entry(0, 0).map(|v| 1.0 / v);
        let mass = recip.integrate();
        let r = recip.map(|v| v / mass);
        let residual = apply_adjoint_operator(a, &r).max_abs();
        return Ok(InvariantMeasure { r, residual, iterations: 0 });
    }
    // The measure is invariant under global scaling of the coefficients.
    // Solving with unit-scale coefficients keeps the absolute tolerance on
    // the physical rows attainable for strongly scaled fields, whose raw
    // operator magnitude would otherwise push the target below the
    // double-precision floor.
    let a_unit = a.scaled(1.0 / a.max_abs())?;
    let op = AdjointCellOperator::new(&a_unit);
    let weights = constraint_weights(grid);
    let bordered = BorderedOp::new(&op, &weights);
    // Target chosen so the constant-1 warm start satisfies the constraint row.
    let target: f64 = weights.iter().sum();
    let rhs = bordered.rhs(&vec![0.0; grid.len()], target);

    // Hold the physical rows (rhs 0) to an absolute tolerance; the constraint
    // row, whose target is large by design, only to a relative one.
    let mut row_weights = vec![1.0; grid.len()];
    row_weights.push(1.0 / target.abs().max(1.0));

    // Precondition with the exact inverse of the averaged operator; the
    // average absorbs anisotropy that would otherwise spawn a cluster of
    // near-kernel modes no diagonal preconditioner can see.
    let spectral = SpectralPreconditioner::new(&a_unit.mean_matrix()?, grid)?;
    let precond = BorderedPreconditioner::new(&spectral, (grid.len() as f64).sqrt());

    let mut guess = vec![1.0; grid.len()];
    guess.push(0.0);
    let (sol, stats) =
        bicgstab_preconditioned(&bordered, &rhs, Some(&guess), cfg, Some(&row_weights), &precond)?;

    let mut r = ScalarField::from_values(grid, sol[..grid.len()].to_vec())?;
    let min = r.min();
    if !(min > 0.0) {
        return Err(HomogError::NonPositiveMeasure { min });
    }
    // Normalize the quadrature mass to exactly 1.
    let mass = r.integrate();
    let scale = 1.0 / mass;
    for v in r.values_mut() {
        *v *= scale;
    }
    let residual = apply_adjoint_operator(a, &r).max_abs();
    Ok(InvariantMeasure { r, residual, iterations: stats.iterations })
}

/// Solve the singular cell equation L v = g, given the invariant measure r.
///
/// Solvability requires ∫ g r = 0; the quadrature value is checked against a
/// tolerance scaled from the solver target and ‖g‖∞, and violations are
/// reported rather than silently projected away, because an incompatible
/// right-hand side means the caller's algebra is wrong. The round-off-sized
/// component along the discrete kernel of Lᵀ *is* projected off (ℓ², against
/// the raw sample vector of r) so the iteration is consistent, and the result
/// is returned in the mean-zero gauge ∫ v = 0.
pub fn solve_singular(
    a: &SymMatrixField,
    g: &ScalarField,
    measure: &InvariantMeasure,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolveStats)> {
    let grid = a.grid();
    let r = &measure.r;
    let compat = g.zip_map(r, |x, y| x * y).integrate();
    let compat_tol = (1e3 * cfg.tol).max(1e-12) * g.max_abs().max(1.0);
    if compat.abs() > compat_tol {
        return Err(HomogError::Incompatible { value: compat.abs(), tol: compat_tol });
    }

    // Consistency projection: remove the ℓ² component along ker Lᵀ = span{r}.
    let rr: f64 = r.values().iter().map(|v| v * v).sum();
    let gr: f64 = g.values().iter().zip(r.values()).map(|(x, y)| x * y).sum();
    let coef = gr / rr;
    let projected: Vec<f64> = g.values().iter().zip(r.values()).map(|(x, y)| x - coef * y).collect();

    if grid.dim() == 1 {
        return solve_singular_1d(a, &projected, cfg);
    }

    // The convergence contract is already scale-relative here: ‖g‖∞ grows with
    // the coefficient scale, and the solver normalizes its tolerance by the
    // right-hand-side norm. (Dividing the whole system by the scale instead is
    // *not* equivalent — the border column and corner of the bordered operator
    // are fixed — and empirically stalls the iteration.)
    let op = CellOperator::new(a);
    let weights = constraint_weights(grid);
    let bordered = BorderedOp::new(&op, &weights);
    let mut rhs = projected;
    rhs.push(0.0);

    let spectral = SpectralPreconditioner::new(&a.mean_matrix()?, grid)?;
    let precond = BorderedPreconditioner::new(&spectral, (grid.len() as f64).sqrt());
    let (sol, stats) = bicgstab_preconditioned(&bordered, &rhs, None, cfg, None, &precond)?;
    let mut v = ScalarField::from_values(grid, sol[..grid.len()].to_vec())?;
    v.remove_mean();
    Ok((v, stats))
}

/// Direct solve of the one-dimensional cell equation −a v'' = g.
///
/// Dividing by −a·n² turns the stencil equation into prescribed second
/// differences q_i = v_{i+1} − 2v_i + v_{i−1} on the circle, which integrate
/// exactly: the first differences t_i = v_{i+1} − v_i satisfy t_i − t_{i−1} =
/// q_i, and the free constant in t is pinned by Σ t_i = 0 (periodicity of v).
/// Two cumulative sums later v is recovered up to a constant, fixed by the
/// mean-zero gauge. Round-off is the only error, so no iteration is needed.
fn solve_singular_1d(
    a: &SymMatrixField,
    projected: &[f64],
    _cfg: &SolverConfig,
) -> Result<(ScalarField, SolveStats)> {
    let grid = a.grid();
    let n = grid.len();
    let inv_h2 = (grid.nodes_per_axis() as f64).powi(2);
    let avals = a.entry(0, 0).values();

    let mut q: Vec<f64> = projected.iter().zip(avals).map(|(g, c)| -g / (c * inv_h2)).collect();
    // The projected right side makes Σ q round-off-sized; zero it exactly so
    // the telescoping closes around the circle.
    let mean = q.iter().sum::<f64>() / n as f64;
    for z in q.iter_mut() {
        *z -= mean;
    }

    // Partial sums P_i = Σ_{j≤i, j≥1} q_j give t_i = t_0 + P_i.
    let mut partial = vec![0.0; n];
    let mut acc = 0.0;
    for i in 1..n {
        acc += q[i];
        partial[i] = acc;
    }
    let t0 = -partial.iter().sum::<f64>() / n as f64;

    let mut v = vec![0.0; n];
    for i in 0..n - 1 {
        v[i + 1] = v[i] + t0 + partial[i];
    }
    let mut field = ScalarField::from_values(grid, v)?;
    field.remove_mean();

    let res = apply_cell_operator(a, &field)
        .values()
        .iter()
        .zip(projected)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = projected.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1.0);
    Ok((field, SolveStats { iterations: 0, residual: res / scale, restarts: 0 }))
}
