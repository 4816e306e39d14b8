//! Scripted Monte-Carlo studies and verification suites.
//!
//! Every experiment is a pure function of its configuration and seed; the
//! returned report and artifacts are byte-identical for any worker count.

mod martingale;
mod pitfall;
mod revisit;
mod showcase;
mod simulate;
mod spde;

pub use martingale::martingale_suite;
pub use pitfall::backward_pitfall;
pub use revisit::forward_revisit;
pub use showcase::{power_showcase, stand_in_scenarios, Scenario};
pub use simulate::simulate_paths;
pub use spde::{spde_residuals, spde_suite, SpdeResiduals, SPDE_DRIFT_TOL, SPDE_POLICY_TOL};

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model_core::{ModelParams, PreferenceSpec};
use crate::sde_engine::TimeGrid;

pub const EXPERIMENT_IDS: [&str; 5] = [
    "backward-pitfall",
    "forward-revisit",
    "power-showcase",
    "martingale",
    "spde",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub paths: usize,
    pub seed: u64,
    pub steps_per_year: usize,
    pub workers: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            paths: 10_000,
            seed: 12345,
            steps_per_year: 252,
            workers: 1,
        }
    }
}

/// Unanticipated change of the salary risk premium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Revision {
    pub at: f64,
    pub mu_y: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Model as planned at time 0 (no revision applied).
    pub params: ModelParams,
    pub pref: PreferenceSpec,
    pub horizon: f64,
    pub revision: Option<Revision>,
    /// Empty means the experiment's own defaults.
    pub checkpoints: Vec<f64>,
    /// Reference values (t, value) some experiments compare against.
    pub reference: Vec<(f64, f64)>,
    pub sim: SimSettings,
}

impl ExperimentConfig {
    pub fn checkpoints_or(&self, default: &[f64]) -> Vec<f64> {
        if self.checkpoints.is_empty() {
            default.to_vec()
        } else {
            self.checkpoints.clone()
        }
    }

    pub fn revision(&self) -> Result<Revision> {
        self.revision.ok_or_else(|| {
            Error::invalid("salary.revision", "this experiment needs a salary revision")
        })
    }

    fn grid_to(&self, t_end: f64) -> Result<TimeGrid> {
        TimeGrid::yearly(t_end, self.sim.steps_per_year)
    }

    fn base_report(&self, id: &str) -> ExperimentReport {
        ExperimentReport {
            experiment: id.to_string(),
            seed: self.sim.seed,
            paths: self.sim.paths,
            steps_per_year: self.sim.steps_per_year,
            params: self.params.snapshot(),
            preference: self.pref.snapshot(),
            horizon: self.horizon,
            revision: self.revision.map(|r| serde_json::json!({"at": r.at, "muY": r.mu_y})),
            constants: BTreeMap::new(),
            checkpoints: Vec::new(),
            cdfs: Vec::new(),
            verdicts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckpointStat {
    pub series: String,
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CdfSummary {
    pub t: f64,
    pub file: String,
    pub count: usize,
    pub fraction_positive: f64,
    pub fraction_negative: f64,
    pub quantiles: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub paths: usize,
    pub steps_per_year: usize,
    pub horizon: f64,
    pub params: Value,
    pub preference: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revision: Option<Value>,
    pub constants: BTreeMap<String, f64>,
    pub checkpoints: Vec<CheckpointStat>,
    pub cdfs: Vec<CdfSummary>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn push_verdict(&mut self, name: impl Into<String>, value: f64, threshold: impl Into<String>, pass: bool) {
        self.verdicts.push(Verdict {
            name: name.into(),
            value,
            threshold: threshold.into(),
            pass,
        });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// Time label used in file names: `5`, `2.5`.
pub fn time_label(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

fn csv_column(header: &str, values: &[f64]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([header]).expect("in-memory csv");
    for v in values {
        w.write_record([v.to_string()]).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

/// Empirical CDF artifact (sorted samples) and its summary.
fn cdf_artifact(t: f64, mut samples: Vec<f64>) -> (CdfSummary, Artifact) {
    let count = samples.len();
    let pos = samples.iter().filter(|v| **v > 0.0).count();
    let neg = samples.iter().filter(|v| **v < 0.0).count();
    samples.sort_by(|a, b| a.total_cmp(b));
    let mut quantiles = BTreeMap::new();
    if count > 0 {
        for q in [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99] {
            let i = ((q * count as f64).ceil() as usize).clamp(1, count) - 1;
            quantiles.insert(format!("{q}"), samples[i]);
        }
    }
    let file = format!("cdf_{}.csv", time_label(t));
    let summary = CdfSummary {
        t,
        file: file.clone(),
        count,
        fraction_positive: pos as f64 / count.max(1) as f64,
        fraction_negative: neg as f64 / count.max(1) as f64,
        quantiles,
    };
    (
        summary,
        Artifact {
            name: file,
            contents: csv_column("sample_value", &samples),
        },
    )
}

fn grid_indices(grid: &TimeGrid, times: &[f64]) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            grid.index_of(t).ok_or_else(|| {
                Error::invalid("simulation.checkpoints", format!("checkpoint {t} is not a grid point"))
            })
        })
        .collect()
}

fn check_checkpoints(times: &[f64], horizon: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("simulation.checkpoints", "need at least one checkpoint"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 || *times.last().unwrap() > horizon {
        return Err(Error::invalid(
            "simulation.checkpoints",
            "checkpoints must be increasing within (0, horizon]",
        ));
    }
    Ok(())
}
