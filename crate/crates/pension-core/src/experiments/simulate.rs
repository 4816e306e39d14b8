use super::{check_checkpoints, grid_indices, Artifact, CheckpointStat, ExperimentConfig, Outcome};
use crate::error::Result;
use crate::sde_engine::{generate_noise, map_paths, mean_and_se, simulate_runs, Run};
use crate::strategies::StrategyPolicy;

/// Plain Monte-Carlo run of one policy. Reports the mean ratio, fund value and
/// first strategy component at the checkpoints (yearly by default) and writes
/// the full trajectory of the first `keep` paths.
pub fn simulate_paths(cfg: &ExperimentConfig, policy: StrategyPolicy, keep: usize) -> Result<Outcome> {
    let default: Vec<f64> = (1..=cfg.horizon.floor() as usize).map(|t| t as f64).collect();
    let times = cfg.checkpoints_or(&default);
    check_checkpoints(&times, cfg.horizon)?;
    let grid = cfg.grid_to(cfg.horizon)?;
    let ks = grid_indices(&grid, &times)?;
    let (n, m) = (cfg.params.n(), cfg.params.m());
    let run = Run {
        params: cfg.params.clone(),
        policy,
        aux: Some(cfg.pref.clone()),
        scheme: crate::sde_engine::Scheme::Auto,
    };

    let rows: Vec<Vec<[f64; 3]>> = map_paths(cfg.sim.paths, cfg.sim.workers, |i| {
        let noise = generate_noise(cfg.sim.seed, i as u64, grid, n, m);
        let mut sim = run.simulator(grid)?;
        let mut out = Vec::with_capacity(ks.len());
        for &k in &ks {
            sim.advance_to(&noise, k)?;
            out.push([sim.state().x, sim.state().w, sim.pi()[0]]);
        }
        Ok(out)
    })?;

    let mut report = cfg.base_report("simulate");
    for (j, &t) in times.iter().enumerate() {
        for (c, series) in ["X", "W", "pi_1"].iter().enumerate() {
            let xs: Vec<f64> = rows.iter().map(|r| r[j][c]).collect();
            let s = mean_and_se(&xs);
            report.checkpoints.push(CheckpointStat {
                series: format!("{}_{}", run.policy.id(), series),
                t,
                mean: s.mean,
                se: s.se,
                z: None,
                pass: None,
            });
        }
    }
    let mut artifacts = Vec::new();
    for i in 0..keep.min(cfg.sim.paths) {
        let noise = generate_noise(cfg.sim.seed, i as u64, grid, n, m);
        let bundle = simulate_runs(std::slice::from_ref(&run), &noise)?.remove(0);
        artifacts.push(Artifact {
            name: format!("paths_{i}.csv"),
            contents: bundle.to_csv()?,
        });
    }
    Ok(Outcome { report, artifacts })
}
