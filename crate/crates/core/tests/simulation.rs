use approx::assert_abs_diff_eq;
use flmtest_core::simulation::{simulate_responses, slope_coefficients, theta_kl_coefficients, ProcessConfig};
use flmtest_core::{
    bias_term, make_theta_g, make_theta_kl, run_experiment, simulate_design, ExperimentPlan, Grid, Method,
    ProcessSpec, RngStream, SlopeSpec,
};

fn small_plan(slope: SlopeSpec, n: usize, trials: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        process: ProcessConfig::Brownian {
            grid_points: 200,
            terms: 50,
        },
        slope,
        noise_sd: 1.0,
        n,
        alpha: 0.05,
        methods: vec![Method::P1, Method::P2],
        trials,
        replicates: 200,
        seed,
        kbar: None,
    }
}

fn projected_scores(process: &ProcessSpec, curves: &nalgebra::DMatrix<f64>, j: usize) -> Vec<f64> {
    let v: Vec<f64> = process.eigenfunctions().row(j).iter().copied().collect();
    curves
        .row_iter()
        .map(|row| {
            let x: Vec<f64> = row.iter().copied().collect();
            process.grid().inner_product(&x, &v).unwrap()
        })
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn brownian_curves_start_at_zero() {
    let process = ProcessSpec::brownian_default();
    assert_eq!(process.grid().points()[0], 0.0);
    let curves = simulate_design(&process, 20, RngStream::new(1));
    assert!(curves.column(0).iter().all(|v| v.abs() <= 1e-15));
}

#[test]
fn simulated_scores_have_eigenvalue_variances() {
    let process = ProcessSpec::brownian_default();
    let curves = simulate_design(&process, 5000, RngStream::new(2));
    let s: Vec<Vec<f64>> = (0..3).map(|j| projected_scores(&process, &curves, j)).collect();
    for (j, sj) in s.iter().enumerate() {
        let (m, v) = mean_var(sj);
        let lambda = process.eigenvalues()[j];
        assert!(m.abs() <= 4.0 * (lambda / 5000.0).sqrt(), "mean of score {j}: {m}");
        assert!((v / lambda - 1.0).abs() <= 0.06, "variance of score {j}: {v} vs {lambda}");
    }
    let (m0, v0) = mean_var(&s[0]);
    let (m1, v1) = mean_var(&s[1]);
    let cov = s[0].iter().zip(&s[1]).map(|(a, b)| (a - m0) * (b - m1)).sum::<f64>() / 4999.0;
    assert!((cov / (v0 * v1).sqrt()).abs() <= 0.05);
}

#[test]
fn theta_kl_has_norm_b_and_power_law_coefficients() {
    let process = ProcessSpec::brownian_default();
    for (b, xi) in [(1.0, 1.0), (0.5, 0.1), (0.1, 0.5)] {
        let theta = make_theta_kl(b, xi, &process).unwrap();
        let norm = process.grid().norm(&theta).unwrap();
        assert!((norm - b).abs() <= 1e-3 * b, "B={b} ξ={xi}: norm {norm}");
        let c = theta_kl_coefficients(b, xi, 100);
        let euclid = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_abs_diff_eq!(euclid, b, epsilon = 1e-14);
        for j in [2usize, 10, 100] {
            assert_abs_diff_eq!(c[j - 1] / c[0], (j as f64).powf(-xi - 0.5), epsilon = 1e-14);
        }
    }
}

#[test]
fn theta_g_has_norm_b_and_is_symmetric() {
    let pts: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let grid = Grid::new(pts).unwrap();
    for (b, tau) in [(0.5, 0.01), (1.0, 0.02), (2.0, 0.05)] {
        let theta = make_theta_g(b, tau, &grid).unwrap();
        let norm = grid.norm(&theta).unwrap();
        assert!((norm - b).abs() <= 1e-3 * b, "B={b} τ={tau}: norm {norm}");
        for i in 0..=500 {
            let (l, r) = (theta[i], theta[1000 - i]);
            assert!((l - r).abs() <= 1e-12 * l.abs().max(1e-300), "asymmetry at {i}");
        }
        let peak = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(peak, theta[500]);
    }
}

#[test]
fn narrower_bump_puts_more_energy_beyond_leading_terms() {
    let process = ProcessSpec::brownian_default();
    let share = |tau: f64| {
        let slope = SlopeSpec::ThetaG { b: 1.0, tau };
        bias_term(&process, &slope, 4).unwrap() / bias_term(&process, &slope, 0).unwrap()
    };
    let (narrow, mid, wide) = (share(0.01), share(0.02), share(0.05));
    assert!(narrow > mid && mid > wide, "{narrow} {mid} {wide}");
}

#[test]
fn bias_matches_closed_form() {
    let process = ProcessSpec::brownian_default();
    let slope = SlopeSpec::ThetaKl { b: 1.0, xi: 1.0 };
    let pi2 = std::f64::consts::PI.powi(2);
    let norm: f64 = (1..=100).map(|l| (l as f64).powi(-3)).sum();
    let tail = |k: usize| -> f64 {
        (k + 1..=100)
            .map(|j| {
                let jf = j as f64;
                (jf - 0.5).powi(-2) * jf.powi(-3)
            })
            .sum::<f64>()
            / (pi2 * norm)
    };
    assert_abs_diff_eq!(bias_term(&process, &slope, 4).unwrap(), tail(4), epsilon = 1e-10);
    assert_abs_diff_eq!(bias_term(&process, &slope, 0).unwrap(), tail(0), epsilon = 1e-10);
    assert_eq!(bias_term(&process, &slope, 100).unwrap(), 0.0);
    // Quadrature route on the evaluated function agrees.
    let custom = SlopeSpec::Custom {
        values: make_theta_kl(1.0, 1.0, &process).unwrap(),
    };
    let quad = slope_coefficients(&process, &custom).unwrap();
    let exact = slope_coefficients(&process, &slope).unwrap();
    for j in 0..10 {
        assert!((quad[j] - exact[j]).abs() <= 1e-4, "coefficient {j}");
    }
}

#[test]
fn signal_energy_matches_response_variance() {
    let process = ProcessSpec::brownian_default();
    let slope = SlopeSpec::ThetaKl { b: 1.0, xi: 1.0 };
    let theta = slope.evaluate(&process).unwrap();
    let curves = simulate_design(&process, 10_000, RngStream::new(3));
    let signal = simulate_responses(&curves, process.grid(), &theta, 0.0, RngStream::new(4));
    let (_, v) = mean_var(signal.as_slice());
    let energy = bias_term(&process, &slope, 0).unwrap();
    assert!((v / energy - 1.0).abs() <= 0.05, "{v} vs {energy}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let plan = small_plan(SlopeSpec::ThetaKl { b: 0.5, xi: 0.5 }, 40, 24, 5);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&plan).unwrap())
    };
    let one = run(1);
    let two = run(2);
    assert_eq!(one.outcomes, two.outcomes);
}

#[test]
fn zero_slope_rejects_near_level() {
    let trials = 600;
    let r = run_experiment(&small_plan(SlopeSpec::Zero, 50, trials, 6)).unwrap();
    let se = (0.05 * 0.95 / trials as f64).sqrt();
    let p1 = r.outcome(Method::P1).unwrap().percent / 100.0;
    let p2 = r.outcome(Method::P2).unwrap().percent / 100.0;
    assert!((p2 - 0.05).abs() <= 3.0 * se, "P2 size {p2}");
    assert!(p1 <= 0.05 + 3.0 * se, "P1 size {p1}");
}

#[test]
fn single_trial_has_zero_width_interval() {
    let r = run_experiment(&small_plan(SlopeSpec::ThetaKl { b: 3.0, xi: 1.0 }, 40, 1, 7)).unwrap();
    for o in &r.outcomes {
        assert_eq!(o.trials, 1);
        assert_eq!(o.ci_half_width, 0.0);
        assert!(o.percent == 0.0 || o.percent == 100.0);
    }
}

#[test]
fn plan_validation() {
    let ok = small_plan(SlopeSpec::Zero, 40, 10, 8);
    assert!(ok.validate().is_ok());
    for bad in [
        ExperimentPlan { trials: 0, ..ok.clone() },
        ExperimentPlan { n: 3, ..ok.clone() },
        ExperimentPlan { alpha: 1.5, ..ok.clone() },
        ExperimentPlan { noise_sd: 0.0, ..ok.clone() },
        ExperimentPlan { methods: vec![], ..ok.clone() },
        ExperimentPlan { kbar: Some(3), ..ok.clone() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    assert!(SlopeSpec::ThetaKl { b: -1.0, xi: 1.0 }
        .evaluate(&ProcessSpec::brownian_default())
        .is_err());
    assert!(SlopeSpec::ThetaG { b: 1.0, tau: 0.0 }
        .evaluate(&ProcessSpec::brownian_default())
        .is_err());
}
