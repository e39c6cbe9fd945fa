//! Scratch probe: scan obstructed-diagonal parameters for rate-dichotomy
//! visibility, then run full rate studies on the strongest candidates.
//!
//! Usage: dbg_measure scan | dbg_measure rates <k> <l> <beta> <n>

use homog::gallery::bad_diagonal;
use homog::homogenize::homogenize;
use homog::rates::{run_rate_study, RateConfig};
use homog::krylov::SolverConfig;
use homog::torus::PeriodicGrid;

fn alpha_src(k: usize, l: usize, beta: f64) -> String {
    format!("exp({beta}*sin({}*pi*y1)*sin({}*pi*y2))", 2 * k, 2 * l)
}

fn scan_one(k: usize, l: usize, beta: f64, n: usize, cfg: &SolverConfig) {
    let alpha = alpha_src(k, l, beta);
    let grid = match PeriodicGrid::new(2, n) {
        Ok(g) => g,
        Err(e) => {
            println!("k{k} l{l} b{beta} n{n}: grid error {e}");
            return;
        }
    };
    let probe = match bad_diagonal(&alpha, 1e-9, grid, cfg) {
        Ok(c) => c,
        Err(e) => {
            println!("k{k} l{l} b{beta} n{n}: probe failed: {e}");
            return;
        }
    };
    let smax = probe.max_admissible_s;
    let s = smax / 1.25;
    let cons = match bad_diagonal(&alpha, s, grid, cfg) {
        Ok(c) => c,
        Err(e) => {
            println!("k{k} l{l} b{beta} n{n}: build failed: {e}");
            return;
        }
    };
    let hom = match homogenize(&cons.a, cfg) {
        Ok(h) => h,
        Err(e) => {
            println!("k{k} l{l} b{beta} n{n}: homogenize failed: {e}");
            return;
        }
    };
    let g = match cons.base_measure.r.derivative(0) {
        Ok(g) => g,
        Err(e) => {
            println!("k{k} l{l} b{beta} n{n}: derivative failed: {e}");
            return;
        }
    };
    let g_sup = g.max_abs();
    let i2 = g.zip_map(&g, |x, y| x * y).integrate();
    let abar = hom.cells.effective_matrix();
    let m = 0.5 * (abar.get(0, 0) + abar.get(1, 1));
    // Linear/quadratic coefficient ratio model: R = 2 z_sup / C2 with
    // z_sup ~ 6|c| phi_max/m, C2 ~ 6 s G, c = -s I2  =>  R ~ 0.1473 I2/(G m).
    let rhat = 2.0 * 0.073671 * i2 / (g_sup * m);
    let c_meas = hom.obstruction.get(0, 0, 0);
    println!(
        "k{k} l{l} b{beta} n{n}: smax {smax:.3e} s {s:.3e} c_pred {:.4e} c_meas {:.4e} \
         abar {:.3} {:.3} G {g_sup:.3e} I2 {i2:.3e} rhat {rhat:.3} meas_it {} rmin {:.3e}",
        cons.predicted_c,
        c_meas,
        abar.get(0, 0),
        abar.get(1, 1),
        hom.measure.iterations,
        hom.measure.r.min(),
    );
}

fn rates_one(k: usize, l: usize, beta: f64, n: usize, s_fixed: Option<f64>) {
    let cfg = SolverConfig::default();
    let alpha = alpha_src(k, l, beta);
    let grid = PeriodicGrid::new(2, n).expect("grid");
    let probe = bad_diagonal(&alpha, 1e-9, grid, &cfg).expect("probe");
    let s = s_fixed.unwrap_or(probe.max_admissible_s / 1.25);
    let cons = bad_diagonal(&alpha, s, grid, &cfg).expect("build");
    let rc = RateConfig {
        epsilons: vec![0.25, 0.125, 0.0625, 0.03125],
        intervals_per_period: n,
        indices: (0, 0, 0),
        solver: cfg.clone(),
    };
    let t0 = std::time::Instant::now();
    let study = run_rate_study(&cons.a, &rc).expect("study");
    println!(
        "k{k} l{l} b{beta} n{n} s {s:.3e}: slope(e0) {:.3} slope(e1) {:.3} c {:.4e} [{:?}]",
        study.plain_slope,
        study.corrected_slope,
        study.homogenization.obstruction.get(0, 0, 0),
        t0.elapsed(),
    );
    for smp in &study.samples {
        println!(
            "  eps {:.5}: e0 {:.6e} e1 {:.6e} z_sup {:.4e} it {}",
            smp.epsilon, smp.plain_error, smp.corrected_error, smp.z_sup, smp.oscillatory_iterations
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("scan");
    if mode == "scan" {
        let cfg = SolverConfig::default();
        for &(k, l) in &[(1usize, 1usize), (2, 2), (2, 3), (3, 3)] {
            for &beta in &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
                for &n in &[16usize, 32] {
                    scan_one(k, l, beta, n, &cfg);
                }
            }
        }
    } else if mode == "smax" {
        let cfg = SolverConfig::default();
        let k: usize = args[2].parse().expect("k");
        let l: usize = args[3].parse().expect("l");
        let beta: f64 = args[4].parse().expect("beta");
        let alpha = alpha_src(k, l, beta);
        for &n in &[16usize, 32, 64, 128] {
            let grid = PeriodicGrid::new(2, n).expect("grid");
            match bad_diagonal(&alpha, 1e-9, grid, &cfg) {
                Ok(c) => println!("n{n}: smax {:.4e}", c.max_admissible_s),
                Err(e) => println!("n{n}: {e}"),
            }
        }
    } else {
        let k: usize = args[2].parse().expect("k");
        let l: usize = args[3].parse().expect("l");
        let beta: f64 = args[4].parse().expect("beta");
        let n: usize = args[5].parse().expect("n");
        let s_fixed: Option<f64> = args.get(6).map(|v| v.parse().expect("s"));
        rates_one(k, l, beta, n, s_fixed);
    }
}
