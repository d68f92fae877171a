//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits with status 1 if any fails.
//!
//! Run with `cargo test -p flmtest-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use flmtest_core::fda::FpcaRoute;
use flmtest_core::numerics::sample_standard_normal;
use flmtest_core::simulation::{simulate_design, ProcessConfig};
use flmtest_core::theory::{separation_rate, EllipsoidSpec};
use flmtest_core::{
    akdelta_norm, build_projection, chi2_upper_quantile, chi2_upper_tail, fisher_upper_quantile,
    fisher_upper_tail, fpca, fpca_with_route, phi_statistic, run_experiment, ExperimentPlan, ExperimentResult,
    FunctionalSample, Grid, Method, ProcessSpec, RngStream, SlopeSpec,
};
use nalgebra::{DMatrix, DVector};

struct Ledger {
    failed: Vec<u32>,
}

impl Ledger {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} [{id:>2}] {name}: {detail} ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        if !pass {
            self.failed.push(id);
        }
    }
}

fn plan(slope: SlopeSpec, n: usize, trials: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        process: ProcessConfig::Brownian {
            grid_points: 1000,
            terms: 100,
        },
        slope,
        noise_sd: 1.0,
        n,
        alpha: 0.05,
        methods: vec![Method::P1, Method::P2],
        trials,
        replicates: 1000,
        seed,
        kbar: None,
    }
}

fn pct(r: &ExperimentResult, m: Method) -> f64 {
    r.outcome(m).expect("method was run").percent
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn random_matrix(rows: usize, cols: usize, stream: RngStream) -> DMatrix<f64> {
    DMatrix::from_vec(rows, cols, sample_standard_normal(stream, rows * cols))
}

/// Small deterministic integer in `lo..=hi`.
fn pick(stream: RngStream, lo: usize, hi: usize) -> usize {
    let u = stream.generator().uniform_open();
    lo + ((u * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

fn main() -> ExitCode {
    let mut ledger = Ledger { failed: Vec::new() };
    let mut cells: Vec<(&str, ExperimentResult)> = Vec::new();

    // 1. Null size at n = 100.
    let t = Instant::now();
    let r = run_experiment(&plan(SlopeSpec::Zero, 100, 2000, 101)).expect("null n=100 run");
    let (p1, p2) = (pct(&r, Method::P1), pct(&r, Method::P2));
    ledger.record(
        1,
        "null size n=100, 2000 trials",
        within(p2, 3.5, 6.5) && within(p1, 2.0, 5.5),
        format!("T2 = {p2:.2}% in [3.5, 6.5], T1 = {p1:.2}% in [2.0, 5.5]"),
        t,
    );
    cells.push(("null n=100", r));

    // 2. Null size at n = 500.
    let t = Instant::now();
    let r = run_experiment(&plan(SlopeSpec::Zero, 500, 1000, 102)).expect("null n=500 run");
    let (p1, p2) = (pct(&r, Method::P1), pct(&r, Method::P2));
    ledger.record(
        2,
        "null size n=500, 1000 trials",
        within(p2, 3.5, 7.0) && p1 <= 4.5,
        format!("T2 = {p2:.2}% in [3.5, 7.0], T1 = {p1:.2}% <= 4.5"),
        t,
    );
    cells.push(("null n=500", r));

    // 3. Power, smooth slope with strong signal.
    let t = Instant::now();
    let r = run_experiment(&plan(SlopeSpec::ThetaKl { b: 1.0, xi: 1.0 }, 100, 500, 103)).expect("KL run");
    let (p1, p2) = (pct(&r, Method::P1), pct(&r, Method::P2));
    ledger.record(
        3,
        "power KL xi=1 B=1 n=100, 500 trials",
        p1 >= 97.0 && p2 >= 97.0,
        format!("T1 = {p1:.2}%, T2 = {p2:.2}%, both >= 97"),
        t,
    );
    cells.push(("KL xi=1 B=1 n=100", r));

    // 4. Power, rough slope with moderate signal.
    let t = Instant::now();
    let r = run_experiment(&plan(SlopeSpec::ThetaKl { b: 0.5, xi: 0.1 }, 500, 1000, 104)).expect("KL run");
    let p1 = pct(&r, Method::P1);
    ledger.record(
        4,
        "power KL xi=0.1 B=0.5 n=500, 1000 trials",
        within(p1, 82.0, 92.0),
        format!("T1 = {p1:.2}% in [82, 92] (T2 = {:.2}%)", pct(&r, Method::P2)),
        t,
    );
    cells.push(("KL xi=0.1 B=0.5 n=500", r));

    // 5. Power, localized Gaussian bump.
    let t = Instant::now();
    let r = run_experiment(&plan(SlopeSpec::ThetaG { b: 2.0, tau: 0.05 }, 100, 500, 105)).expect("bump run");
    let (p1, p2) = (pct(&r, Method::P1), pct(&r, Method::P2));
    ledger.record(
        5,
        "power bump tau=0.05 B=2 n=100, 500 trials",
        p1 >= 97.0 && p2 >= 97.0,
        format!("T1 = {p1:.2}%, T2 = {p2:.2}%, both >= 97"),
        t,
    );
    cells.push(("bump tau=0.05 B=2 n=100", r));

    // 6. Monte-Carlo calibration is never materially less powerful.
    let t = Instant::now();
    let worst = cells
        .iter()
        .map(|(name, r)| (*name, pct(r, Method::P2) - pct(r, Method::P1)))
        .fold(("", f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    ledger.record(
        6,
        "ordering T2 >= T1 - 1 point in every cell",
        worst.1 >= -1.0,
        format!("smallest T2 - T1 = {:+.2} points ({})", worst.1, worst.0),
        t,
    );

    // 7. Exact conditional size of the single-dimension test.
    let t = Instant::now();
    let process = ProcessSpec::brownian_default();
    let curves = simulate_design(&process, 50, RngStream::new(107));
    let sample = FunctionalSample::new(process.grid().clone(), curves, DVector::zeros(50)).expect("sample");
    let decomposition = fpca(&sample, 25).expect("fpca");
    let ctx = build_projection(&decomposition, 4).expect("projection");
    let threshold = ctx.threshold(0.05).expect("threshold");
    let draws = 100_000usize;
    let noise = RngStream::with_id(107, 1);
    let rejections = (0..draws)
        .filter(|&i| {
            let y = DVector::from_vec(sample_standard_normal(noise.derive(i as u64), 50));
            phi_statistic(&ctx, &y).expect("statistic") > threshold
        })
        .count();
    let rate = rejections as f64 / draws as f64;
    ledger.record(
        7,
        "conditional size, fixed design n=50 k=4, 1e5 draws",
        (rate - 0.05).abs() <= 0.0021,
        format!("rate = {rate:.5} in 0.05 +/- 0.0021"),
        t,
    );

    // 8. Projection numerator equals the operator-norm form.
    let t = Instant::now();
    let base = RngStream::with_id(108, 0);
    let mut worst = 0.0_f64;
    for case in 0..100u64 {
        let s = base.derive(case);
        let n = pick(s.derive(0), 8, 60);
        let p = pick(s.derive(1), 5, 80);
        let k = pick(s.derive(2), 1, n / 2);
        let grid = Grid::uniform(0.0, 1.0, p).expect("grid");
        let curves = random_matrix(n, p, s.derive(3));
        let y = DVector::from_vec(sample_standard_normal(s.derive(4), n)) * 3.0;
        let sample = FunctionalSample::new(grid, curves, y.clone()).expect("sample");
        let f = fpca(&sample, n).expect("fpca");
        let ctx = build_projection(&f, k).expect("projection");
        let lhs = ctx.project(&y).norm_squared();
        let rhs = akdelta_norm(&f, &sample, k).expect("akdelta");
        worst = worst.max((lhs - rhs).abs() / y.norm_squared().max(1.0));
    }
    ledger.record(
        8,
        "numerator identity, 100 instances",
        worst <= 1e-8,
        format!("max scaled gap = {worst:.2e} <= 1e-8"),
        t,
    );

    // 9. Both FPCA routes agree.
    let t = Instant::now();
    let base = RngStream::with_id(109, 0);
    let (mut val_gap, mut fun_gap) = (0.0_f64, 0.0_f64);
    let mut rank_mismatch = 0usize;
    for case in 0..50u64 {
        let s = base.derive(case);
        let n = pick(s.derive(0), 2, 30);
        let p = pick(s.derive(1), 2, 30);
        let grid = Grid::uniform(0.0, 1.0, p).expect("grid");
        let curves = random_matrix(n, p, s.derive(2));
        let g = fpca_with_route(&curves, &grid, n, FpcaRoute::Gram).expect("gram");
        let c = fpca_with_route(&curves, &grid, n, FpcaRoute::Covariance).expect("covariance");
        if g.rank() != c.rank() {
            rank_mismatch += 1;
            continue;
        }
        let scale = c.eigenvalues()[0].max(1.0);
        for j in 0..g.rank() {
            val_gap = val_gap.max((g.eigenvalues()[j] - c.eigenvalues()[j]).abs() / scale);
            let (vg, vc) = (g.eigenfunction(j), c.eigenfunction(j));
            let sign = if grid.inner_product(&vg, &vc).unwrap() < 0.0 { -1.0 } else { 1.0 };
            let d = vg.iter().zip(&vc).map(|(a, b)| (a - sign * b).abs()).fold(0.0, f64::max);
            fun_gap = fun_gap.max(d);
        }
    }
    ledger.record(
        9,
        "FPCA Gram vs covariance route, 50 cases",
        rank_mismatch == 0 && val_gap <= 1e-8 && fun_gap <= 1e-6,
        format!("value gap {val_gap:.2e} <= 1e-8, function gap {fun_gap:.2e} <= 1e-6, rank mismatches {rank_mismatch}"),
        t,
    );

    // 10. Separation-rate regressions.
    let t = Instant::now();
    let ns: Vec<usize> = (0..13).map(|i| 10f64.powf(3.0 + 0.25 * i as f64).round() as usize).collect();
    let mut slope_ok = true;
    let mut detail = String::new();
    for s in [2.0, 4.0, 6.0] {
        let spec = EllipsoidSpec::polynomial(s, 1.0).expect("spec");
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let r = separation_rate(&spec, n, 1.0, None).expect("rate");
                ((n as f64).ln(), r.rho_sq.ln())
            })
            .collect();
        let slope = ols_slope(&pts);
        let target = -2.0 * s / (1.0 + 2.0 * s);
        slope_ok &= (slope - target).abs() <= 0.05;
        detail.push_str(&format!("s={s}: slope {slope:.4} vs {target:.4}; "));
    }
    let spec = EllipsoidSpec::exponential(1.0, 1.0).expect("spec");
    let ratios: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let r = separation_rate(&spec, n, 1.0, None).expect("rate");
            r.rho_sq * n as f64 / (n as f64).ln().sqrt()
        })
        .collect();
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    detail.push_str(&format!("exp: rho^2 n / sqrt(log n) in [{lo:.3}, {hi:.3}]"));
    ledger.record(10, "rate regressions", slope_ok && hi / lo <= 3.0, detail, t);

    // 11. Tail/quantile round trips.
    let t = Instant::now();
    let alphas = [0.001, 0.01, 0.05, 0.5, 0.95];
    let mut worst_f = 0.0_f64;
    let mut worst_c = 0.0_f64;
    for k in 1..=64usize {
        for &a in &alphas {
            let x = chi2_upper_quantile(a, k).expect("chi2 quantile");
            worst_c = worst_c.max((chi2_upper_tail(x, k).unwrap().value() - a).abs());
            for m in 1..=64usize {
                let x = fisher_upper_quantile(a, k, m).expect("fisher quantile");
                worst_f = worst_f.max((fisher_upper_tail(x, k, m).unwrap().value() - a).abs());
            }
        }
    }
    ledger.record(
        11,
        "Fisher and chi-square round trips",
        worst_f <= 1e-8 && worst_c <= 1e-8,
        format!("max error Fisher {worst_f:.2e}, chi-square {worst_c:.2e} (<= 1e-8)"),
        t,
    );

    if ledger.failed.is_empty() {
        println!("acceptance: all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {:?}", ledger.failed);
        ExitCode::FAILURE
    }
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
