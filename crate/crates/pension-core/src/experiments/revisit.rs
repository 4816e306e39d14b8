//! Forward rule that re-reads the salary premium after an unanticipated change,
//! against the same rule committed to the original premium.

use super::{cdf_artifact, check_checkpoints, grid_indices, CheckpointStat, ExperimentConfig, Outcome};
use crate::error::{Error, Result};
use crate::model_core::Schedule;
use crate::sde_engine::{generate_noise, map_paths, mean_and_se, Run};
use crate::strategies::StrategyPolicy;

const DEFAULT_CHECKPOINTS: [f64; 1] = [15.0];
const MIN_FRACTION: f64 = 0.99;
const PRE_SWITCH_TOL: f64 = 1e-12;

struct PathResult {
    /// π_revised − π_committed at each checkpoint (first component).
    diffs: Vec<f64>,
    /// Largest |π_revised − π_committed| strictly before the switch.
    pre_switch: f64,
}

/// Both investors follow the forward optimal rule of `cfg.pref`. The revised
/// one lives in the world where μ^Y jumps at the revision time; the committed
/// one keeps the original coefficients. Paths that leave the admissible region
/// are counted, not simulated further.
pub fn forward_revisit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let params = &cfg.params;
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

    let switched = params.with_mu_y(Schedule::switched(mu_y, rev.at, rev.mu_y)?)?;
    let policy = StrategyPolicy::forward(cfg.pref.clone());
    let revised = Run::new(switched, policy.clone());
    let committed = Run::new(params.clone(), policy);

    let t_end = *times.last().unwrap();
    let grid = cfg.grid_to(t_end.max(rev.at))?;
    let ks = grid_indices(&grid, &times)?;
    let k_switch = grid_indices(&grid, &[rev.at])?[0];
    let (n, m) = (params.n(), params.m());

    let rows: Vec<Option<PathResult>> = map_paths(cfg.sim.paths, cfg.sim.workers, |i| {
        let noise = generate_noise(cfg.sim.seed, i as u64, grid, n, m);
        let mut a = revised.simulator(grid)?;
        let mut b = committed.simulator(grid)?;
        let mut diffs = Vec::with_capacity(ks.len());
        let mut pre_switch = 0.0f64;
        let mut next = 0;
        for k in 0..=grid.steps {
            if k < k_switch {
                pre_switch = a
                    .pi()
                    .iter()
                    .zip(b.pi().iter())
                    .fold(pre_switch, |acc, (x, y)| acc.max((x - y).abs()));
            }
            if next < ks.len() && ks[next] == k {
                diffs.push(a.pi()[0] - b.pi()[0]);
                next += 1;
                if next == ks.len() && k >= k_switch {
                    break;
                }
            }
            if k == grid.steps {
                break;
            }
            let step = a
                .step(noise.db1(k), noise.db2(k))
                .and_then(|_| b.step(noise.db1(k), noise.db2(k)));
            match step {
                Ok(()) => {}
                Err(Error::Admissibility { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(PathResult { diffs, pre_switch }))
    })?;

    let mut report = cfg.base_report("forward-revisit");
    report.constants.insert("t0".into(), rev.at);
    report.constants.insert("muY".into(), mu_y);
    report.constants.insert("muY_revised".into(), rev.mu_y);
    let violations = rows.iter().filter(|r| r.is_none()).count();
    report.push_verdict("admissibility_violations", violations as f64, "== 0", violations == 0);
    let ok: Vec<&PathResult> = rows.iter().flatten().collect();
    let pre = ok.iter().fold(0.0f64, |acc, r| acc.max(r.pre_switch));
    report.push_verdict(
        "max_pre_switch_difference",
        pre,
        format!("<= {PRE_SWITCH_TOL:e}"),
        pre <= PRE_SWITCH_TOL,
    );

    let mut artifacts = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let samples: Vec<f64> = ok.iter().map(|r| r.diffs[j]).collect();
        let s = mean_and_se(&samples);
        report.checkpoints.push(CheckpointStat {
            series: "pi_revised_minus_pi_committed".into(),
            t,
            mean: s.mean,
            se: s.se,
            z: None,
            pass: None,
        });
        let (summary, art) = cdf_artifact(t, samples);
        if t > rev.at {
            let got = summary.fraction_negative;
            report.push_verdict(
                format!("fraction_negative_t{}", super::time_label(t)),
                got,
                format!(">= {MIN_FRACTION}"),
                got >= MIN_FRACTION,
            );
        }
        report.cdfs.push(summary);
        artifacts.push(art);
    }
    Ok(Outcome { report, artifacts })
}
