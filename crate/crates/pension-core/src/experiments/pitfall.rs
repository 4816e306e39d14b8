//! Cost of ignoring a future change in the salary premium under the
//! classical (backward) rule.

use super::{cdf_artifact, check_checkpoints, grid_indices, CheckpointStat, ExperimentConfig, Outcome};
use crate::error::{Error, Result};
use crate::model_core::Schedule;
use crate::sde_engine::{generate_noise, map_paths, mean_and_se, Run};
use crate::strategies::{BackwardRule, StrategyPolicy};

const DEFAULT_CHECKPOINTS: [f64; 2] = [5.0, 9.0];
const REFERENCE_TOL: f64 = 0.01;

/// Simulates the plain backward rule (believes μ^Y stays put) and the oracle
/// rule (knows the switch) on the same noise in the true switched world, each
/// on its own fund path, and records π_oracle − π_plain at the checkpoints.
///
/// Fund ratios are not floored: the rule is evaluated at negative X as well.
pub fn backward_pitfall(cfg: &ExperimentConfig) -> Result<Outcome> {
    let params = &cfg.params;
    if params.n() != 1 {
        return Err(Error::invalid("market.mu", "backward strategies need one risky asset"));
    }
    let rev = cfg.revision()?;
    if !(rev.at > 0.0 && rev.at < cfg.horizon) {
        return Err(Error::invalid("salary.revision.at", "switch must lie inside (0, horizon)"));
    }
    if !params.spec().mu_y.is_constant() {
        return Err(Error::invalid("salary.muY", "the planned premium must be constant"));
    }
    let mu_y = *params.spec().mu_y.at(0.0);
    let times = cfg.checkpoints_or(&DEFAULT_CHECKPOINTS);
    check_checkpoints(&times, cfg.horizon)?;
    let gamma = cfg.pref.gamma;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("preference.gamma", "backward rule needs 0 < gamma < 1"));
    }

    let world = params.with_mu_y(Schedule::switched(mu_y, rev.at, rev.mu_y)?)?;
    let plain = Run::new(
        world.clone(),
        StrategyPolicy::Backward(BackwardRule::plain(gamma, cfg.horizon, mu_y)),
    );
    let oracle = Run::new(
        world,
        StrategyPolicy::Backward(BackwardRule::oracle(gamma, cfg.horizon, mu_y, rev.at, rev.mu_y)?),
    );

    let t_end = *times.last().unwrap();
    let grid = cfg.grid_to(t_end)?;
    let ks = grid_indices(&grid, &times)?;
    let (n, m) = (params.n(), params.m());

    // Per path: (difference at each checkpoint, went negative)
    let rows: Vec<(Vec<f64>, bool)> = map_paths(cfg.sim.paths, cfg.sim.workers, |i| {
        let noise = generate_noise(cfg.sim.seed, i as u64, grid, n, m);
        let mut a = plain.simulator(grid)?;
        let mut b = oracle.simulator(grid)?;
        let mut diffs = Vec::with_capacity(ks.len());
        let mut negative = false;
        let mut k = 0;
        for &kc in &ks {
            while k < kc {
                a.step(noise.db1(k), noise.db2(k))?;
                b.step(noise.db1(k), noise.db2(k))?;
                negative |= a.state().x < 0.0 || b.state().x < 0.0;
                k += 1;
            }
            diffs.push(b.pi()[0] - a.pi()[0]);
        }
        Ok((diffs, negative))
    })?;

    let mut report = cfg.base_report("backward-pitfall");
    report.constants.insert("t0".into(), rev.at);
    report.constants.insert("muY".into(), mu_y);
    report.constants.insert("muY_revised".into(), rev.mu_y);
    let neg = rows.iter().filter(|r| r.1).count();
    report
        .constants
        .insert("fraction_paths_negative_ratio".into(), neg as f64 / rows.len().max(1) as f64);

    let mut artifacts = Vec::new();
    let degenerate = rev.mu_y == mu_y;
    for (j, &t) in times.iter().enumerate() {
        let samples: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
        let s = mean_and_se(&samples);
        report.checkpoints.push(CheckpointStat {
            series: "pi_oracle_minus_pi_plain".into(),
            t,
            mean: s.mean,
            se: s.se,
            z: None,
            pass: None,
        });
        if degenerate {
            let worst = samples.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
            report.push_verdict(format!("zero_difference_t{}", super::time_label(t)), worst, "== 0", worst == 0.0);
        }
        let (summary, art) = cdf_artifact(t, samples);
        if let Some(&(_, target)) = cfg.reference.iter().find(|(rt, _)| (rt - t).abs() < 1e-9) {
            let got = summary.fraction_positive;
            report.push_verdict(
                format!("fraction_positive_t{}", super::time_label(t)),
                got,
                format!("{target} +/- {REFERENCE_TOL}"),
                (got - target).abs() <= REFERENCE_TOL,
            );
        }
        report.cdfs.push(summary);
        artifacts.push(art);
    }
    Ok(Outcome { report, artifacts })
}
