//! Convergence-rate studies: how fast oscillatory Dirichlet solutions
//! approach their effective limit as the period ε shrinks.
//!
//! For coefficients whose obstruction tensor vanishes, the plain distance
//! ‖u^ε − ū‖∞ is expected to be O(ε²). When the tensor is nonzero an O(ε)
//! term appears; it is carried entirely by the correction z solving
//! −ā_ij ∂²_ij z = h with h = c^{kl}_j ∂³ū/∂x_j∂x_k∂x_l, so the centered
//! distance ‖u^ε − ū − 2 ε z‖∞ recovers O(ε²). A study solves, per ε, the
//! oscillatory, effective, and correction problems on a box grid with
//! h = ε/P matched to the coefficient sampling resolution, measures both
//! distances on the nodes of the coarsest grid (so every ε is compared on
//! the same finite set), and fits log-log slopes.

use crate::dirichlet::{
    sample_oscillatory, solve_dirichlet, solve_effective, solve_z, BoxField, BoxGrid,
};
use crate::error::{HomogError, Result};
use crate::gallery::{anisotropic_family, anisotropic_limit_measure};
use crate::homogenize::{homogenize, Homogenization};
use crate::krylov::SolverConfig;
use crate::periodic::invariant_measure;
use crate::poly::{cubic_data, Poly};
use crate::torus::{PeriodicGrid, SymMatrixField};

/// Controls for [`run_rate_study`].
#[derive(Debug, Clone)]
pub struct RateConfig {
    /// Period lengths to sweep; each must divide the unit box evenly and the
    /// resulting grids must all refine the coarsest one.
    pub epsilons: Vec<f64>,
    /// Box intervals per period: the box mesh is h = ε / this value.
    pub intervals_per_period: usize,
    /// Index triple (j, k, l) of the driving cubic ū = x_j x_k x_l.
    pub indices: (usize, usize, usize),
    /// Linear solver controls shared by every solve in the study.
    pub solver: SolverConfig,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            epsilons: vec![0.25, 0.125, 0.0625, 0.03125],
            intervals_per_period: 16,
            indices: (0, 0, 0),
            solver: SolverConfig::default(),
        }
    }
}

/// Results for a single period length.
#[derive(Debug, Clone)]
pub struct RateSample {
    pub epsilon: f64,
    /// Box intervals per axis at this ε.
    pub intervals: usize,
    /// ‖u^ε − ū‖∞ over the common node set.
    pub plain_error: f64,
    /// ‖u^ε − ū − 2 ε z‖∞ over the common node set.
    pub corrected_error: f64,
    /// Sup of the correction |z| on this grid.
    pub z_sup: f64,
    /// Iterations spent in the oscillatory solve.
    pub oscillatory_iterations: usize,
}

/// Output of [`run_rate_study`].
#[derive(Debug, Clone)]
pub struct RateStudy {
    /// Cell problems, invariant measure, effective matrix, and verdict of the
    /// coefficient field driving the study.
    pub homogenization: Homogenization,
    /// The driving cubic and its source term.
    pub exact: Poly,
    /// One row per period length, sorted by decreasing ε.
    pub samples: Vec<RateSample>,
    /// Log-log OLS slope of the plain error (NaN when undeterminable).
    pub plain_slope: f64,
    /// Log-log OLS slope of the centered error (NaN when undeterminable).
    pub corrected_slope: f64,
}

/// Mean-centered ordinary-least-squares slope of y against x.
pub(crate) fn ols_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return f64::NAN;
    }
    sxy / sxx
}

/// Fit a log-log slope, ignoring error values at or below the noise floor.
fn log_slope(samples: &[(f64, f64)], floor: f64) -> f64 {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, e)| e > floor)
        .map(|&(eps, e)| (eps.ln(), e.ln()))
        .collect();
    ols_slope(&pts)
}

/// Run a full ε-sweep over the given periodic coefficient field.
///
/// The field is homogenized once; its effective matrix drives the cubic data
/// and its obstruction tensor drives the correction term. Every box grid
/// must place its nodes on coefficient sample points (`sample_oscillatory`
/// enforces the divisibility), and all grids must refine the coarsest one so
/// errors are compared on a shared node set.
pub fn run_rate_study(a: &SymMatrixField, cfg: &RateConfig) -> Result<RateStudy> {
    if cfg.epsilons.is_empty() {
        return Err(HomogError::BoundsViolated("epsilon list must not be empty".into()));
    }
    let mut epsilons = cfg.epsilons.clone();
    epsilons.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    epsilons.dedup();
    for &eps in &epsilons {
        if !(eps > 0.0 && eps <= 1.0) || !eps.is_finite() {
            return Err(HomogError::BoundsViolated(format!(
                "epsilon must lie in (0, 1], got {eps}"
            )));
        }
    }
    if cfg.intervals_per_period < 2 {
        return Err(HomogError::InvalidGrid(format!(
            "need at least 2 intervals per period, got {}",
            cfg.intervals_per_period
        )));
    }

    let dim = a.dim();
    let homogenization = homogenize(a, &cfg.solver)?;
    let abar = homogenization.cells.effective_matrix();
    let (j, k, l) = cfg.indices;
    let data = cubic_data(&abar, j, k, l)?;

    // h = c^{kl}_j ∂³ū/∂x_j∂x_k∂x_l, summed over all index triples. For a
    // cubic ū this is a constant polynomial.
    let mut h_poly = Poly::zero(dim)?;
    for kk in 0..dim {
        for ll in 0..dim {
            for jj in 0..dim {
                let c = homogenization.obstruction.get(kk, ll, jj);
                if c == 0.0 {
                    continue;
                }
                let d3 = data.u.derivative(jj)?.derivative(kk)?.derivative(ll)?;
                h_poly = h_poly.add(&d3.scaled(c))?;
            }
        }
    }

    // Resolve the grid ladder.
    let mut grids = Vec::with_capacity(epsilons.len());
    for &eps in &epsilons {
        let m_f = cfg.intervals_per_period as f64 / eps;
        let m = m_f.round();
        if (m_f - m).abs() > 1e-9 {
            return Err(HomogError::Divisibility(format!(
                "intervals_per_period/epsilon = {m_f} must be an integer \
                 (got epsilon {eps} with {} intervals per period)",
                cfg.intervals_per_period
            )));
        }
        grids.push(BoxGrid::new(dim, m as usize)?);
    }
    let m0 = grids[0].intervals();
    for g in &grids {
        if g.intervals() % m0 != 0 {
            return Err(HomogError::Divisibility(format!(
                "grid ladder is not nested: {} intervals do not refine the \
                 coarsest grid's {m0}",
                g.intervals()
            )));
        }
    }
    let coarse = grids[0];

    let mut samples = Vec::with_capacity(epsilons.len());
    let mut u_scale = 1.0f64;
    for (&eps, &grid) in epsilons.iter().zip(&grids) {
        let f = BoxField::from_fn(grid, |x| data.f.eval(x));
        let g = BoxField::from_fn(grid, |x| data.u.eval(x));
        let h = BoxField::from_fn(grid, |x| h_poly.eval(x));

        let a_eps = sample_oscillatory(a, eps, grid)?;
        let (u_osc, osc_stats) = solve_dirichlet(&a_eps, &f, &g, &cfg.solver)?;
        let (u_eff, _) = solve_effective(&abar, &f, &g, &cfg.solver)?;
        let (z, _) = solve_z(&abar, &h, &cfg.solver)?;
        u_scale = u_scale.max(u_eff.max_abs());

        // Restrict to the coarsest grid's nodes.
        let q = grid.intervals() / m0;
        let mut plain = 0.0f64;
        let mut corrected = 0.0f64;
        for node in 0..coarse.len() {
            let idx = coarse.multi_index(node);
            let mut fine_idx = [0usize; crate::matrix::MAX_DIM];
            for d in 0..dim {
                fine_idx[d] = idx[d] * q;
            }
            let fine = grid.flat_index(&fine_idx);
            let raw = u_osc.value(fine) - u_eff.value(fine);
            plain = plain.max(raw.abs());
            corrected = corrected.max((raw - 2.0 * eps * z.value(fine)).abs());
        }

        samples.push(RateSample {
            epsilon: eps,
            intervals: grid.intervals(),
            plain_error: plain,
            corrected_error: corrected,
            z_sup: z.max_abs(),
            oscillatory_iterations: osc_stats.iterations,
        });
    }

    let floor = 1e-13 * u_scale.max(1.0);
    let plain_pts: Vec<(f64, f64)> =
        samples.iter().map(|s| (s.epsilon, s.plain_error)).collect();
    let corrected_pts: Vec<(f64, f64)> =
        samples.iter().map(|s| (s.epsilon, s.corrected_error)).collect();

    Ok(RateStudy {
        homogenization,
        exact: data.u,
        samples,
        plain_slope: log_slope(&plain_pts, floor),
        corrected_slope: log_slope(&corrected_pts, floor),
    })
}

/// One anisotropy strength in an asymptotic measure study.
#[derive(Debug, Clone)]
pub struct AsymptoticSample {
    pub s: f64,
    /// L² distance between the invariant measure of diag{a₁, s·a₂} and the
    /// explicit s → ∞ limit measure.
    pub l2_distance: f64,
    /// Iterations spent solving for the measure.
    pub iterations: usize,
}

/// Output of [`run_asymptotic_study`].
#[derive(Debug, Clone)]
pub struct AsymptoticStudy {
    pub samples: Vec<AsymptoticSample>,
}

/// Sweep anisotropy strengths and record the L² distance between each
/// invariant measure and the closed-form limit.
pub fn run_asymptotic_study(
    a1: &str,
    a2: &str,
    strengths: &[f64],
    grid: PeriodicGrid,
    cfg: &SolverConfig,
) -> Result<AsymptoticStudy> {
    if strengths.is_empty() {
        return Err(HomogError::BoundsViolated("strength list must not be empty".into()));
    }
    let limit = anisotropic_limit_measure(a1, a2, grid)?;
    let mut samples = Vec::with_capacity(strengths.len());
    for &s in strengths {
        let a = anisotropic_family(a1, a2, s, grid)?;
        let measure = invariant_measure(&a, cfg)?;
        let diff = measure.r.zip_map(&limit, |x, y| x - y);
        let l2 = diff.zip_map(&diff, |x, y| x * y).integrate().sqrt();
        samples.push(AsymptoticSample { s, l2_distance: l2, iterations: measure.iterations });
    }
    Ok(AsymptoticStudy { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::ScalarField;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    #[test]
    fn ols_slope_recovers_exact_power_laws() {
        let pts: Vec<(f64, f64)> = [0.25f64, 0.125, 0.0625]
            .iter()
            .map(|&e| (e.ln(), (3.0 * e * e).ln()))
            .collect();
        assert!((ols_slope(&pts) - 2.0).abs() <= 1e-12);
        assert!(ols_slope(&[(1.0, 1.0)]).is_nan());
        assert!(ols_slope(&[(1.0, 1.0), (1.0, 2.0)]).is_nan());
    }

    #[test]
    fn constant_coefficients_collapse_both_errors_to_solver_noise() {
        let torus = PeriodicGrid::new(2, 8).unwrap();
        let entries = vec![
            ScalarField::constant(torus, 2.0),
            ScalarField::constant(torus, 0.3),
            ScalarField::constant(torus, 1.5),
        ];
        let a = SymMatrixField::new(torus, entries).unwrap();
        let cfg = RateConfig {
            epsilons: vec![0.5, 0.25],
            intervals_per_period: 8,
            solver: SolverConfig { tol: 1e-12, ..Default::default() },
            ..Default::default()
        };
        let study = run_rate_study(&a, &cfg).unwrap();
        for s in &study.samples {
            assert!(s.plain_error <= 1e-9, "plain error {}", s.plain_error);
            assert!(s.corrected_error <= 1e-9, "corrected error {}", s.corrected_error);
            assert!(s.z_sup <= 1e-9, "no obstruction means no correction");
        }
    }

    #[test]
    fn scalar_coefficients_show_a_second_order_plain_rate() {
        let torus = PeriodicGrid::new(2, 8).unwrap();
        let alpha = ScalarField::from_fn(torus, |y| 1.0 + 0.5 * (TAU * y[0]).sin());
        let zero = ScalarField::constant(torus, 0.0);
        let a = SymMatrixField::new(torus, vec![alpha.clone(), zero, alpha]).unwrap();
        let cfg = RateConfig {
            epsilons: vec![0.25, 0.125, 0.0625],
            intervals_per_period: 8,
            ..Default::default()
        };
        let study = run_rate_study(&a, &cfg).unwrap();
        assert!(
            study.plain_slope >= 1.7,
            "expected a near-quadratic rate, got slope {} from {:?}",
            study.plain_slope,
            study.samples.iter().map(|s| s.plain_error).collect::<Vec<_>>()
        );
        // A vanishing obstruction tensor leaves nothing to correct: both
        // distances coincide up to solver noise.
        for s in &study.samples {
            assert!(s.z_sup <= 1e-8);
            assert!((s.plain_error - s.corrected_error).abs() <= 1e-8);
        }
    }

    #[test]
    fn misaligned_epsilon_ladders_are_rejected() {
        let torus = PeriodicGrid::new(2, 16).unwrap();
        let a = SymMatrixField::identity(torus).unwrap();

        // 16/0.3 is not an integer number of intervals.
        let cfg = RateConfig {
            epsilons: vec![0.5, 0.3],
            ..Default::default()
        };
        let err = run_rate_study(&a, &cfg).unwrap_err();
        assert_eq!(err.kind(), "divisibility_violated");

        // 1/2 and 1/3 give 32 and 48 intervals: both valid, not nested.
        let cfg = RateConfig {
            epsilons: vec![0.5, 1.0 / 3.0],
            ..Default::default()
        };
        let err = run_rate_study(&a, &cfg).unwrap_err();
        assert_eq!(err.kind(), "divisibility_violated");

        let cfg = RateConfig { epsilons: vec![], ..Default::default() };
        assert!(run_rate_study(&a, &cfg).is_err());
    }

    #[test]
    fn asymptotic_distances_decrease_for_a_coupled_family() {
        // a₂ must depend on both variables for the study to be nontrivial;
        // see the companion test below for the separable degeneracy.
        let grid = PeriodicGrid::new(2, 32).unwrap();
        let study = run_asymptotic_study(
            "1",
            "1+0.5*sin(2*pi*y1)*sin(2*pi*y2)",
            &[10.0, 100.0],
            grid,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(study.samples.len(), 2);
        let (d10, d100) = (study.samples[0].l2_distance, study.samples[1].l2_distance);
        assert!(
            d10 > 5.0 * d100,
            "expected roughly first-order decay in 1/s: d(10) = {d10}, d(100) = {d100}"
        );
        assert!(d100 > 1e-8, "the coupled family must not be exactly converged");
    }

    #[test]
    fn separable_anisotropic_families_sit_exactly_at_their_limit() {
        // When a₂ depends on y₂ alone (and a₁ is constant), diag{a₁, s·a₂}
        // is a separable diagonal for every s, so the invariant measure
        // *equals* the limit measure at every strength: the distances are
        // solver noise, with no decay to observe.
        let grid = PeriodicGrid::new(2, 32).unwrap();
        let study = run_asymptotic_study(
            "1",
            "1+0.5*sin(2*pi*y2)",
            &[10.0, 1000.0],
            grid,
            &SolverConfig::default(),
        )
        .unwrap();
        for s in &study.samples {
            assert!(
                s.l2_distance <= 1e-8,
                "s = {}: distance {} should be solver noise",
                s.s,
                s.l2_distance
            );
        }
    }
}
