//! Checks against independently computed reference values.

use nalgebra::DVector;
use pension_core::experiments::{
    backward_pitfall, forward_revisit, power_showcase, stand_in_scenarios, ExperimentConfig,
    Revision, Scenario, SimSettings,
};
use pension_core::model_core::{Family, ModelParams, ModelSpec, PreferenceSpec, Schedule};
use pension_core::sde_engine::{
    gbm_strong_errors, generate_noise, mean_and_se, simulate_baseline_ratio, simulate_ratio_path,
    NoisePath, Run, Scheme, TimeGrid,
};
use pension_core::strategies::{annuity_factor, annuity_factor_switch, StrategyPolicy};
use pension_core::Error;

fn scalar(sigma_y2: f64) -> ModelParams {
    ModelParams::new(ModelSpec::scalar(0.03, 0.08, 0.2, 0.02, 0.08, sigma_y2, 0.1, 1.0, 1.0)).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn rk4(f: impl Fn(f64) -> f64, y0: f64, t1: f64, steps: usize) -> f64 {
    let h = t1 / steps as f64;
    let mut y = y0;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

#[test]
fn annuity_factor_matches_quadrature() {
    // λ = 0.4, σ^{Y,1} = 0.08
    let q = simpson(|s| (-0.012f64 * s).exp(), 0.0, 20.0, 20_000);
    let f = annuity_factor(0.02, 0.4, 0.08, 0.0, 20.0).unwrap();
    assert!((f - q).abs() < 1e-10, "{f} vs {q}");
    assert!((f - 17.7810).abs() < 1e-4);
}

#[test]
fn annuity_factor_is_continuous_at_the_removable_singularity() {
    for eps in [1e-9, -1e-9, 1e-12, 0.0] {
        let f = annuity_factor(0.032 + eps, 0.4, 0.08, 0.0, 20.0).unwrap();
        assert!((f - 20.0).abs() < 1e-6);
    }
    // Both branches agree with the series on either side of the band edge.
    for scale in [0.999, 1.001] {
        let mu_y = 0.032 + scale * 1e-6 / 20.0;
        let k = mu_y - 0.4 * 0.08;
        let x = k * 20.0;
        let series = 20.0 * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0);
        let f = annuity_factor(mu_y, 0.4, 0.08, 0.0, 20.0).unwrap();
        assert!((f - series).abs() < 1e-12, "{f} vs {series}");
    }
}

#[test]
fn switched_annuity_matches_quadrature() {
    let q = simpson(|s| (-0.012f64 * s).exp(), 0.0, 10.0, 10_000)
        + (-0.12f64).exp() * simpson(|s| (0.038f64 * s).exp(), 0.0, 10.0, 10_000);
    let f = annuity_factor_switch(0.02, 0.07, 0.4, 0.08, 0.0, 10.0, 20.0).unwrap();
    assert!((f - q).abs() < 1e-10, "{f} vs {q}");
}

#[test]
fn noise_moments_over_a_million_draws() {
    let grid = TimeGrid::new(0.0, 1.0, 500_000).unwrap();
    let noise = generate_noise(99, 0, grid, 1, 1);
    let all: Vec<f64> = noise.d_b1.iter().chain(&noise.d_b2).copied().collect();
    assert_eq!(all.len(), 1_000_000);
    let dt = grid.dt();
    let s = mean_and_se(&all);
    assert!(s.mean.abs() < 4.0 * (dt / all.len() as f64).sqrt(), "mean {}", s.mean);
    let var = all.iter().map(|x| (x - s.mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
    assert!((var / dt - 1.0).abs() < 0.01, "variance ratio {}", var / dt);
}

#[test]
fn deterministic_baseline_matches_runge_kutta() {
    let params = scalar(0.0);
    let grid = TimeGrid::yearly(10.0, 252).unwrap();
    let noise = generate_noise(5, 0, grid, 1, 1);
    let beta = Schedule::constant(DVector::zeros(1));
    let z = simulate_baseline_ratio(&params, &beta, &noise, 0.0).unwrap();
    let alpha = params.coeffs(0.0).alpha(&DVector::zeros(1));
    assert!((alpha - 0.012).abs() < 1e-15);
    let oracle = rk4(|y| 0.1 + alpha * y, 0.0, 10.0, 10_000);
    assert!((z[grid.steps] - oracle).abs() < 1e-6, "{} vs {oracle}", z[grid.steps]);
}

#[test]
fn baseline_mean_matches_mean_ode() {
    let params = scalar(0.05);
    let grid = TimeGrid::yearly(10.0, 252).unwrap();
    let beta = Schedule::constant(DVector::from_element(1, 0.25));
    let alpha = params.coeffs(0.0).alpha(beta.at(0.0));
    let finals: Vec<f64> = (0..10_000)
        .map(|i| {
            let noise = generate_noise(2024, i, grid, 1, 1);
            simulate_baseline_ratio(&params, &beta, &noise, 0.0).unwrap()[grid.steps]
        })
        .collect();
    let s = mean_and_se(&finals);
    let oracle = rk4(|m| 0.1 + alpha * m, 0.0, 10.0, 10_000);
    assert!((s.mean - oracle).abs() < 3.0 * s.se, "{} +/- {} vs {oracle}", s.mean, s.se);
    assert!(finals.iter().all(|z| *z >= 0.0));
}

#[test]
fn baseline_with_zero_start_and_no_contribution_stays_zero() {
    let spec = ModelSpec::scalar(0.03, 0.08, 0.2, 0.02, 0.08, 0.05, 0.0, 1.0, 1.0);
    let params = ModelParams::new(spec).unwrap();
    let grid = TimeGrid::yearly(5.0, 52).unwrap();
    let noise = generate_noise(1, 0, grid, 1, 1);
    let beta = Schedule::constant(DVector::from_element(1, 0.25));
    let z = simulate_baseline_ratio(&params, &beta, &noise, 0.0).unwrap();
    assert!(z.iter().all(|v| *v == 0.0));
}

#[test]
fn ratio_without_drift_or_noise_is_constant() {
    let spec = ModelSpec::scalar(0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 1.5, 1.0);
    let params = ModelParams::new(spec).unwrap();
    let grid = TimeGrid::yearly(3.0, 12).unwrap();
    let noise = generate_noise(3, 0, grid, 1, 1);
    let b = simulate_ratio_path(&params, &StrategyPolicy::Constant(DVector::zeros(1)), &noise).unwrap();
    assert!(b.x.iter().all(|x| *x == 1.5));
}

#[test]
fn ratio_with_pure_contribution_grows_linearly() {
    let spec = ModelSpec::scalar(0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.1, 1.0, 1.0);
    let params = ModelParams::new(spec).unwrap();
    let grid = TimeGrid::yearly(4.0, 12).unwrap();
    let noise = generate_noise(3, 0, grid, 1, 1);
    let b = simulate_ratio_path(&params, &StrategyPolicy::Constant(DVector::zeros(1)), &noise).unwrap();
    for (t, x) in b.t.iter().zip(&b.x) {
        assert!((x - (1.0 + 0.1 * t)).abs() < 1e-12);
    }
}

#[test]
fn forward_power_path_is_admissible_and_consistent() {
    let params = scalar(0.05);
    let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
    let grid = TimeGrid::yearly(20.0, 252).unwrap();
    for i in 0..50 {
        let noise = generate_noise(8, i, grid, 1, 1);
        let b = simulate_ratio_path(&params, &StrategyPolicy::forward(pref.clone()), &noise).unwrap();
        for k in 0..b.len() {
            assert!(b.x[k] > b.z[k]);
            assert!((b.w[k] / b.y[k] - b.x[k]).abs() <= 1e-9 * b.x[k].abs());
        }
        assert!((b.pi_at(0)[0] - 4.4).abs() < 1e-12);
    }
}

#[test]
fn euler_on_fund_value_agrees_with_euler_on_ratio_in_mean() {
    let params = scalar(0.05);
    let policy = StrategyPolicy::Constant(DVector::from_element(1, 0.6));
    let grid = TimeGrid::yearly(5.0, 252).unwrap();
    let ratio = Run::new(params.clone(), policy.clone());
    let wealth = Run {
        scheme: Scheme::EulerWealth,
        ..Run::new(params, policy)
    };
    let mut diffs = Vec::new();
    let mut levels = Vec::new();
    for i in 0..2000 {
        let noise = generate_noise(77, i, grid, 1, 1);
        let mut a = ratio.simulator(grid).unwrap();
        let mut b = wealth.simulator(grid).unwrap();
        a.advance_to(&noise, grid.steps).unwrap();
        b.advance_to(&noise, grid.steps).unwrap();
        diffs.push(b.state().w - a.state().w);
        levels.push(a.state().w);
    }
    let d = mean_and_se(&diffs);
    let l = mean_and_se(&levels);
    assert!(d.mean.abs() < 4.0 * d.se + 1e-3 * l.mean, "{} +/- {}", d.mean, d.se);
}

#[test]
fn euler_strong_order_is_one_half() {
    let spec = ModelSpec::scalar(0.03, 0.08, 0.2, 0.02, 0.08, 0.05, 0.0, 1.0, 1.0);
    let params = ModelParams::new(spec).unwrap();
    let errs = gbm_strong_errors(&params, &DVector::from_element(1, 1.0), 1.0, 16, 4, 2000, 11, 2).unwrap();
    let mut slopes = Vec::new();
    for w in errs.windows(2) {
        slopes.push((w[0].1 / w[1].1).log2());
    }
    let avg = slopes.iter().sum::<f64>() / slopes.len() as f64;
    assert!((avg - 0.5).abs() < 0.15, "observed order {avg} from {errs:?}");
}

#[test]
fn standard_error_scales_with_inverse_root_of_paths() {
    let params = scalar(0.05);
    let grid = TimeGrid::yearly(10.0, 52).unwrap();
    let beta = Schedule::constant(DVector::from_element(1, 0.25));
    let finals = |paths: u64| -> Vec<f64> {
        (0..paths)
            .map(|i| {
                let noise = generate_noise(31, i, grid, 1, 1);
                simulate_baseline_ratio(&params, &beta, &noise, 0.0).unwrap()[grid.steps]
            })
            .collect()
    };
    let small = mean_and_se(&finals(2500));
    let large = mean_and_se(&finals(10_000));
    let ratio = small.se / large.se;
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "se ratio {ratio}");
}

fn pitfall_config(mu_y_tilde: f64, paths: usize, workers: usize) -> ExperimentConfig {
    ExperimentConfig {
        params: scalar(0.0),
        pref: PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.0, 0.0),
        horizon: 20.0,
        revision: Some(Revision { at: 10.0, mu_y: mu_y_tilde }),
        checkpoints: vec![],
        reference: vec![],
        sim: SimSettings {
            paths,
            seed: 4,
            steps_per_year: 52,
            workers,
        },
    }
}

#[test]
fn pitfall_without_a_switch_gives_zero_difference() {
    let out = backward_pitfall(&pitfall_config(0.02, 200, 2)).unwrap();
    assert!(out.report.passed());
    assert_eq!(out.report.verdicts.len(), 2);
    for c in &out.report.cdfs {
        assert_eq!(c.count, 200);
        assert_eq!(c.fraction_positive, 0.0);
        assert_eq!(c.fraction_negative, 0.0);
    }
    assert!(out.artifact("cdf_5.csv").is_some());
    assert!(out.artifact("cdf_9.csv").is_some());
}

#[test]
fn experiments_do_not_depend_on_worker_count() {
    let a = backward_pitfall(&pitfall_config(0.07, 300, 1)).unwrap();
    let b = backward_pitfall(&pitfall_config(0.07, 300, 4)).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.artifacts, b.artifacts);
}

#[test]
fn revisit_without_a_switch_is_identical() {
    let mut cfg = pitfall_config(0.02, 100, 2);
    cfg.params = scalar(0.05);
    cfg.pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
    let out = forward_revisit(&cfg).unwrap();
    let c = &out.report.cdfs[0];
    assert_eq!(c.fraction_negative, 0.0);
    assert_eq!(c.fraction_positive, 0.0);
    assert_eq!(out.report.verdict("max_pre_switch_difference").unwrap().value, 0.0);
}

fn showcase_config() -> ExperimentConfig {
    ExperimentConfig {
        params: scalar(0.05),
        pref: PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25),
        horizon: 10.0,
        revision: None,
        checkpoints: vec![],
        reference: vec![],
        sim: SimSettings {
            paths: 1,
            seed: 0,
            steps_per_year: 52,
            workers: 1,
        },
    }
}

#[test]
fn identical_replays_give_identical_outputs() {
    let cfg = showcase_config();
    let grid = TimeGrid::yearly(10.0, 52).unwrap();
    let base = stand_in_scenarios(grid).remove(0);
    let scen = vec![
        Scenario { name: "a".into(), noise: base.noise.clone() },
        Scenario { name: "b".into(), noise: base.noise },
    ];
    let out = power_showcase(&cfg, &scen).unwrap();
    let a = out.artifact("paths_a_beta0.25.csv").unwrap();
    let b = out.artifact("paths_b_beta0.25.csv").unwrap();
    assert_eq!(a.contents, b.contents);
    let a = out.artifact("utility_grid_a_beta-0.25_5.csv").unwrap();
    let b = out.artifact("utility_grid_b_beta-0.25_5.csv").unwrap();
    assert_eq!(a.contents, b.contents);
}

#[test]
fn replay_with_wrong_shape_is_rejected() {
    let cfg = showcase_config();
    let grid = TimeGrid::yearly(10.0, 12).unwrap();
    let noise = NoisePath::from_paths(grid, |_| vec![0.0], |_| vec![0.0]);
    let err = power_showcase(&cfg, &[Scenario { name: "x".into(), noise }]).unwrap_err();
    assert!(matches!(err, Error::Replay(_)));
}

#[test]
fn showcase_stand_ins_pass_every_sign_check() {
    let out = power_showcase(&showcase_config(), &[]).unwrap();
    for v in &out.report.verdicts {
        assert!(v.pass, "{v:?}");
    }
    assert!(out.artifact("utility_grid_omega1_beta-0.25_5.csv").is_some());
    assert!(out.artifact("noise_omega4.csv").is_some());
}
