//! Monte-Carlo check that realized utility is a martingale under the optimal
//! rule and a supermartingale under perturbed rules.

use super::{check_checkpoints, grid_indices, CheckpointStat, ExperimentConfig, Outcome};
use crate::error::{Error, Result};
use crate::preferences::{FieldState, UtilityField, UtilityValue};
use crate::sde_engine::{generate_noise, map_paths, mean_and_se, Simulator, Scheme, State};
use crate::strategies::StrategyPolicy;

const DEFAULT_CHECKPOINTS: [f64; 5] = [2.0, 5.0, 10.0, 15.0, 20.0];
/// Multipliers on the myopic (power) or Merton (exponential) component.
const SCALES: [f64; 3] = [1.0, 0.5, 1.5];
const Z_BAND: f64 = 3.0;

fn utility(cfg: &ExperimentConfig, s: &State) -> Result<f64> {
    let field = UtilityField::at(
        &cfg.params,
        &cfg.pref,
        s.t,
        FieldState {
            floor: s.floor,
            risk_tolerance: s.risk_tolerance,
            v: s.v,
        },
    );
    let arg = if cfg.pref.family.is_wealth() { s.w } else { s.x };
    match field.value(arg) {
        UtilityValue::Finite(u) => Ok(u),
        UtilityValue::OutOfDomain => Err(Error::Admissibility {
            t: s.t,
            x: arg,
            floor: s.floor,
        }),
    }
}

fn label(scale: f64) -> String {
    if scale == 1.0 {
        "optimal".into()
    } else {
        format!("perturbed_x{scale}")
    }
}

/// Uses `cfg.pref` for the family and parameters and `cfg.horizon` as the
/// last checkpoint unless checkpoints are given.
pub fn martingale_suite(cfg: &ExperimentConfig) -> Result<Outcome> {
    let times = cfg.checkpoints_or(&DEFAULT_CHECKPOINTS);
    check_checkpoints(&times, cfg.horizon)?;
    let grid = cfg.grid_to(*times.last().unwrap())?;
    let ks = grid_indices(&grid, &times)?;
    let (n, m) = (cfg.params.n(), cfg.params.m());
    let policies: Vec<StrategyPolicy> = SCALES
        .iter()
        .map(|&s| StrategyPolicy::Forward {
            pref: cfg.pref.clone(),
            myopic_scale: s,
        })
        .collect();

    let u0 = {
        let sim = Simulator::new(&cfg.params, &policies[0], None, grid, Scheme::Auto)?;
        utility(cfg, sim.state())?
    };

    // rows[path][policy][checkpoint] = U at that checkpoint
    let rows: Vec<Vec<Vec<f64>>> = map_paths(cfg.sim.paths, cfg.sim.workers, |i| {
        let noise = generate_noise(cfg.sim.seed, i as u64, grid, n, m);
        policies
            .iter()
            .map(|p| {
                let mut sim = Simulator::new(&cfg.params, p, None, grid, Scheme::Auto)?;
                let mut us = Vec::with_capacity(ks.len());
                for &k in &ks {
                    sim.advance_to(&noise, k)?;
                    us.push(utility(cfg, sim.state())?);
                }
                Ok(us)
            })
            .collect()
    })?;

    let mut report = cfg.base_report("martingale");
    report.constants.insert("u0".into(), u0);
    for (pi, &scale) in SCALES.iter().enumerate() {
        let name = label(scale);
        let mut all_ok = true;
        let mut worst = 0.0f64;
        for (j, &t) in times.iter().enumerate() {
            let level: Vec<f64> = rows.iter().map(|r| r[pi][j] - u0).collect();
            let s = mean_and_se(&level);
            let z = s.mean / s.se;
            if scale == 1.0 {
                let pass = z.abs() <= Z_BAND;
                all_ok &= pass;
                worst = worst.max(z.abs());
                report.checkpoints.push(CheckpointStat {
                    series: format!("{name}_U_minus_u0"),
                    t,
                    mean: s.mean,
                    se: s.se,
                    z: Some(z),
                    pass: Some(pass),
                });
            } else {
                report.checkpoints.push(CheckpointStat {
                    series: format!("{name}_U_minus_u0"),
                    t,
                    mean: s.mean,
                    se: s.se,
                    z: Some(z),
                    pass: None,
                });
                let inc: Vec<f64> = rows
                    .iter()
                    .map(|r| r[pi][j] - if j == 0 { u0 } else { r[pi][j - 1] })
                    .collect();
                let si = mean_and_se(&inc);
                let zi = si.mean / si.se;
                let pass = zi <= Z_BAND;
                all_ok &= pass;
                worst = worst.max(zi);
                report.checkpoints.push(CheckpointStat {
                    series: format!("{name}_increment"),
                    t,
                    mean: si.mean,
                    se: si.se,
                    z: Some(zi),
                    pass: Some(pass),
                });
            }
        }
        if scale == 1.0 {
            report.push_verdict(format!("{name}_martingale"), worst, format!("max |z| <= {Z_BAND}"), all_ok);
        } else {
            report.push_verdict(
                format!("{name}_non_increasing"),
                worst,
                format!("max increment z <= {Z_BAND}"),
                all_ok,
            );
            let last = report
                .checkpoints
                .iter()
                .rev()
                .find(|c| c.series == format!("{name}_U_minus_u0"))
                .and_then(|c| c.z)
                .unwrap_or(f64::NAN);
            report.push_verdict(
                format!("{name}_final_deficit"),
                last,
                format!("z < -{Z_BAND}"),
                last < -Z_BAND,
            );
        }
    }
    Ok(Outcome {
        report,
        artifacts: Vec::new(),
    })
}
