//! Power forward preference along hand-picked Brownian scenarios.

use nalgebra::DVector;

use super::{csv_table, time_label, Artifact, CheckpointStat, ExperimentConfig, Outcome};
use crate::error::{Error, Result};
use crate::model_core::{Family, PreferenceSpec, Schedule};
use crate::preferences::{FieldState, UtilityField, UtilityValue};
use crate::sde_engine::{simulate_ratio_path, NoisePath, PathBundle, TimeGrid};
use crate::strategies::{baseline_policy, myopic_power, StrategyPolicy};

/// Fund ratio at which utilities are compared across scenarios.
const PROBE_X: f64 = 5.0;
const GRID_STEP: f64 = 0.05;
const GRID_MAX: f64 = 10.0;

/// A named pair of Brownian paths.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub noise: NoisePath,
}

fn up(t: f64) -> f64 {
    0.3 * t
}

fn down(t: f64) -> f64 {
    -0.3 * t
}

/// Small triangle wave of period 4 between -0.1 and 0.1.
fn wobble(t: f64) -> f64 {
    let s = t.rem_euclid(4.0);
    let tri = if s < 1.0 {
        s
    } else if s < 3.0 {
        2.0 - s
    } else {
        s - 4.0
    };
    0.1 * tri
}

/// Four scalar scenarios: B¹ trending up or flat with B² wobbling (omega1,
/// omega2), and B² trending up or down with B¹ wobbling (omega3, omega4).
pub fn stand_in_scenarios(grid: TimeGrid) -> Vec<Scenario> {
    let mk = |name: &str, b1: fn(f64) -> f64, b2: fn(f64) -> f64| Scenario {
        name: name.to_string(),
        noise: NoisePath::from_paths(grid, move |t| vec![b1(t)], move |t| vec![b2(t)]),
    };
    vec![
        mk("omega1", up, wobble),
        mk("omega2", |_| 0.0, wobble),
        mk("omega3", wobble, up),
        mk("omega4", wobble, down),
    ]
}

fn utility_at(cfg: &ExperimentConfig, pref: &PreferenceSpec, path: &PathBundle, k: usize, x: f64) -> f64 {
    let state = FieldState {
        floor: path.z[k],
        risk_tolerance: path.gamma[k],
        v: path.v[k],
    };
    match UtilityField::at(&cfg.params, pref, path.t[k], state).value(x) {
        UtilityValue::Finite(u) => u,
        UtilityValue::OutOfDomain => f64::NEG_INFINITY,
    }
}

fn fmt_value(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

struct BetaRun {
    label: String,
    beta: f64,
    paths: Vec<PathBundle>,
}

/// Runs the power forward rule for β = ±|β₀| on each scenario (stand-ins when
/// `scenarios` is empty) and checks how the utility and the strategy respond
/// to the direction of the salary shocks.
pub fn power_showcase(cfg: &ExperimentConfig, scenarios: &[Scenario]) -> Result<Outcome> {
    let params = &cfg.params;
    if cfg.pref.family != Family::PowerRatio {
        return Err(Error::invalid("preference.family", "the showcase uses the power family"));
    }
    if params.n() != 1 || params.m() != 1 {
        return Err(Error::invalid("market.mu", "the showcase needs n = m = 1"));
    }
    if !cfg.pref.baseline.is_constant() {
        return Err(Error::invalid("preference.beta", "the showcase needs a constant beta"));
    }
    let beta0 = cfg.pref.baseline.at(0.0)[0].abs();
    let grid = cfg.grid_to(cfg.horizon)?;
    let owned;
    let scenarios = if scenarios.is_empty() {
        owned = stand_in_scenarios(grid);
        &owned[..]
    } else {
        scenarios
    };
    for s in scenarios {
        if s.noise.grid != grid || s.noise.n != 1 || s.noise.m != 1 {
            return Err(Error::Replay(format!("scenario {} does not match the grid", s.name)));
        }
    }
    let default: Vec<f64> = (1..=cfg.horizon.floor() as usize).map(|t| t as f64).collect();
    let times = cfg.checkpoints_or(&default);
    super::check_checkpoints(&times, cfg.horizon)?;
    let ks = super::grid_indices(&grid, &times)?;

    let mut report = cfg.base_report("power-showcase");
    let c0 = params.coeffs(0.0);
    let myopic = myopic_power(c0, cfg.pref.gamma, cfg.pref.theta1.at(0.0))[0];
    report.constants.insert("myopic".into(), myopic);

    let mut runs = Vec::new();
    for beta in [-beta0, beta0] {
        let mut pref = cfg.pref.clone();
        pref.baseline = Schedule::constant(DVector::from_element(1, beta));
        let label = format!("beta{beta}");
        report.constants.insert(
            format!("baseline_{label}"),
            baseline_policy(params, &DVector::from_element(1, beta), 0.0)[0],
        );
        let policy = StrategyPolicy::forward(pref);
        let paths = scenarios
            .iter()
            .map(|s| simulate_ratio_path(params, &policy, &s.noise))
            .collect::<Result<Vec<_>>>()?;
        runs.push((BetaRun { label, beta, paths }, policy));
    }

    let mut artifacts = Vec::new();
    for s in scenarios {
        artifacts.push(Artifact {
            name: format!("noise_{}.csv", s.name),
            contents: s.noise.to_csv()?,
        });
    }
    let n_grid = (GRID_MAX / GRID_STEP).round() as usize;
    for (run, policy) in &runs {
        let pref = policy.preference().expect("forward policy");
        for (s, path) in scenarios.iter().zip(&run.paths) {
            let tag = format!("{}_{}", s.name, run.label);
            artifacts.push(Artifact {
                name: format!("paths_{tag}.csv"),
                contents: path.to_csv()?,
            });
            for (&t, &k) in times.iter().zip(&ks) {
                let rows: Vec<Vec<String>> = (0..=n_grid)
                    .map(|i| {
                        let x = i as f64 * GRID_STEP;
                        vec![x.to_string(), fmt_value(utility_at(cfg, pref, path, k, x))]
                    })
                    .collect();
                artifacts.push(Artifact {
                    name: format!("utility_grid_{tag}_{}.csv", time_label(t)),
                    contents: csv_table(&["x", "U"], &rows),
                });
            }
        }
        if scenarios.len() == 4 {
            scenario_checks(cfg, &mut report, &mut artifacts, run, pref, &times, &ks, myopic);
        }
    }
    Ok(Outcome { report, artifacts })
}

#[allow(clippy::too_many_arguments)]
fn scenario_checks(
    cfg: &ExperimentConfig,
    report: &mut super::ExperimentReport,
    artifacts: &mut Vec<Artifact>,
    run: &BetaRun,
    pref: &PreferenceSpec,
    times: &[f64],
    ks: &[usize],
    myopic: f64,
) {
    let p = &run.paths;
    let u = |i: usize, k: usize| utility_at(cfg, pref, &p[i], k, PROBE_X);
    let mut rows = Vec::new();
    let (mut d12_ok, mut d34_ok) = (true, true);
    let (mut d12_min, mut d34_min) = (f64::INFINITY, f64::INFINITY);
    for (&t, &k) in times.iter().zip(ks) {
        let d12 = u(0, k) - u(1, k);
        let d34 = u(2, k) - u(3, k);
        // omega1 vs omega2 flips sign with beta; omega3 vs omega4 does not.
        let signed12 = if run.beta < 0.0 { d12 } else { -d12 };
        d12_ok &= signed12 >= 0.0;
        d34_ok &= d34 >= 0.0;
        d12_min = d12_min.min(signed12);
        d34_min = d34_min.min(d34);
        rows.push(vec![t.to_string(), d12.to_string(), d34.to_string()]);
        for (i, series) in ["omega1", "omega2", "omega3", "omega4"].iter().enumerate() {
            report.checkpoints.push(CheckpointStat {
                series: format!("U(x={PROBE_X})_{series}_{}", run.label),
                t,
                mean: u(i, k),
                se: 0.0,
                z: None,
                pass: None,
            });
        }
    }
    artifacts.push(Artifact {
        name: format!("utility_diff_{}.csv", run.label),
        contents: csv_table(&["t", "U_omega1_minus_omega2", "U_omega3_minus_omega4"], &rows),
    });
    let rel = if run.beta < 0.0 { ">=" } else { "<=" };
    report.push_verdict(
        format!("utility_omega1_{rel}_omega2_{}", run.label),
        d12_min,
        "sign holds at every checkpoint",
        d12_ok,
    );
    report.push_verdict(
        format!("utility_omega3_>=_omega4_{}", run.label),
        d34_min,
        "sign holds at every checkpoint",
        d34_ok,
    );

    let k_last = *ks.last().unwrap();
    let k_first = ks[0];
    let pi = |i: usize, k: usize| p[i].pi_at(k)[0];
    let gap1 = (pi(0, k_last) - myopic).abs();
    let gap2 = (pi(1, k_last) - myopic).abs();
    report.push_verdict(
        format!("omega1_closer_to_myopic_{}", run.label),
        gap1 - gap2,
        "< 0",
        gap1 < gap2,
    );
    let ratio = |k: usize| p[1].z[k] / p[1].x[k];
    let drift = ratio(k_last) - ratio(k_first);
    report.push_verdict(
        format!("omega2_floor_share_increases_{}", run.label),
        drift,
        "> 0",
        drift > 0.0,
    );
    let spread_b2 = (pi(2, k_last) - pi(3, k_last)).abs();
    let spread_b1 = (pi(0, k_last) - pi(1, k_last)).abs();
    report.push_verdict(
        format!("non_hedgeable_shock_moves_strategy_less_{}", run.label),
        spread_b2 - spread_b1,
        "< 0",
        spread_b2 < spread_b1,
    );
}
