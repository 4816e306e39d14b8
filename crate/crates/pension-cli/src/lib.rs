//! Command-line front end: config loading, experiment dispatch and output.

pub mod config;
pub mod error;
pub mod presets;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use pension_core::experiments::{
    backward_pitfall, forward_revisit, martingale_suite, power_showcase, simulate_paths, spde_suite,
    ExperimentConfig, ExperimentReport, Outcome, Scenario, EXPERIMENT_IDS,
};
use pension_core::model_core::Family;
use pension_core::sde_engine::{NoisePath, TimeGrid};
use pension_core::strategies::{BackwardRule, StrategyPolicy};

pub use error::CliError;

pub const OUT_DIR_ENV: &str = "PENSION_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "pension-out";

const AFTER_HELP: &str = "\
Experiments: backward-pitfall, forward-revisit, power-showcase, martingale, spde
Presets:     backward-pitfall, numerical-example, forward-revisit, martingale
Verify:      martingale, spde

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or parse error,
3 invalid parameter, 4 I/O error. Output goes to --out, else $PENSION_OUT_DIR,
else ./pension-out.";

#[derive(Debug, Parser)]
#[command(name = "pension", version, about = "Forward-utility pension investment simulator", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Built-in parameter set
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(presets::names()))]
    pub preset: Option<String>,
    /// TOML config file (applied instead of a preset)
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set salary.muY=0.07
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Worker threads; defaults to the available parallelism
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one policy and dump paths
    Simulate {
        #[arg(long, value_enum, default_value_t = PolicyChoice::Forward)]
        policy: PolicyChoice,
        /// Fraction in every risky asset for --policy constant
        #[arg(long, default_value_t = 0.5)]
        constant: f64,
        /// Number of full trajectories to write
        #[arg(long, default_value_t = 10)]
        keep: usize,
    },
    /// Run a named experiment
    Experiment {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENT_IDS))]
        id: String,
        /// Replay noise files (power-showcase); the scenario name is taken
        /// from the file stem with any `noise_` prefix removed
        #[arg(long)]
        replay: Vec<PathBuf>,
        /// Sample count for the spde experiment
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Run a verification suite
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Restrict to one family (power, exp, powerW, expW)
        #[arg(long)]
        family: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// List presets, or print one as TOML
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyChoice {
    Forward,
    Baseline,
    Backward,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Martingale,
    Spde,
}

/// Config text for a preset name.
pub fn preset_text(name: &str) -> Result<&'static str, CliError> {
    presets::find(name)
        .map(|p| p.toml)
        .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`")))
}

/// Loads a preset and applies overrides.
pub fn load_preset(name: &str, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    config::load(preset_text(name)?, overrides)
}

fn hardware_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl Common {
    fn source_text(&self, fallback_preset: &str) -> Result<String, CliError> {
        match (&self.config, &self.preset) {
            (Some(path), _) => fs::read_to_string(path).map_err(|e| CliError::io(path, e)),
            (None, Some(name)) => Ok(preset_text(name)?.to_string()),
            (None, None) => Ok(preset_text(fallback_preset)?.to_string()),
        }
    }

    /// Config with file, `--set`, then the dedicated flags applied in order.
    fn load(&self, fallback_preset: &str, extra: &[String]) -> Result<ExperimentConfig, CliError> {
        let mut doc = config::parse_toml(&self.source_text(fallback_preset)?)?;
        for o in self.overrides.iter().chain(extra) {
            config::apply_override(&mut doc, o)?;
        }
        let mut cfg = config::build(&doc)?;
        if let Some(s) = self.seed {
            cfg.sim.seed = s;
        }
        if let Some(p) = self.paths {
            if p == 0 {
                return Err(CliError::invalid("simulation.paths", "need at least one path"));
            }
            cfg.sim.paths = p;
        }
        if let Some(w) = self.workers {
            cfg.sim.workers = w;
        }
        if cfg.sim.workers == 0 {
            cfg.sim.workers = hardware_workers();
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// Writes report.json and the artifacts into `dir`.
pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("report.json");
    fs::write(&path, outcome.report.to_json()).map_err(|e| CliError::io(&path, e))?;
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.contents).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn print_verdicts(report: &ExperimentReport) {
    for v in &report.verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {} {} ({})", v.name, v.value, v.threshold);
    }
}

fn finish(dir: &Path, outcome: &Outcome, started: Instant) -> Result<bool, CliError> {
    write_outcome(dir, outcome)?;
    print_verdicts(&outcome.report);
    eprintln!(
        "{}: {:.2}s, output in {}",
        outcome.report.experiment,
        started.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(outcome.report.passed())
}

fn parse_family(name: &str) -> Result<Family, CliError> {
    Family::from_id(name)
        .ok_or_else(|| CliError::Usage(format!("unknown family `{name}` (power, exp, powerW, expW)")))
}

fn load_replays(cfg: &ExperimentConfig, files: &[PathBuf]) -> Result<Vec<Scenario>, CliError> {
    let grid = TimeGrid::yearly(cfg.horizon, cfg.sim.steps_per_year)?;
    let (n, m) = (cfg.params.n(), cfg.params.m());
    files
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("replay");
            Ok(Scenario {
                name: stem.strip_prefix("noise_").unwrap_or(stem).to_string(),
                noise: NoisePath::from_csv(&text, grid, n, m)?,
            })
        })
        .collect()
}

fn simulate(cli: &Cli, policy: PolicyChoice, constant: f64, keep: usize) -> Result<bool, CliError> {
    let started = Instant::now();
    let cfg = cli.common.load("numerical-example", &[])?;
    let policy = match policy {
        PolicyChoice::Forward => StrategyPolicy::forward(cfg.pref.clone()),
        PolicyChoice::Baseline => {
            if cfg.pref.family.is_wealth() {
                return Err(CliError::invalid("preference.family", "baseline policy needs a ratio family"));
            }
            StrategyPolicy::Baseline(cfg.pref.baseline.clone())
        }
        PolicyChoice::Backward => {
            if cfg.params.n() != 1 || !cfg.params.spec().mu_y.is_constant() {
                return Err(CliError::invalid("market.mu", "backward policy needs one asset and constant muY"));
            }
            StrategyPolicy::Backward(BackwardRule::plain(
                cfg.pref.gamma,
                cfg.horizon,
                *cfg.params.spec().mu_y.at(0.0),
            ))
        }
        PolicyChoice::Constant => StrategyPolicy::Constant(DVector::from_element(cfg.params.n(), constant)),
    };
    let outcome = simulate_paths(&cfg, policy, keep)?;
    finish(&cli.common.out_dir(), &outcome, started)
}

fn experiment(cli: &Cli, id: &str, replay: &[PathBuf], samples: usize) -> Result<bool, CliError> {
    let started = Instant::now();
    let dir = cli.common.out_dir();
    if id == "spde" {
        let seed = cli.common.seed.unwrap_or(pension_core::experiments::SimSettings::default().seed);
        let outcome = spde_suite(&Family::ALL, samples, seed)?;
        return finish(&dir, &outcome, started);
    }
    let cfg = cli.common.load(presets::default_for(id), &[])?;
    let outcome = match id {
        "backward-pitfall" => backward_pitfall(&cfg)?,
        "forward-revisit" => forward_revisit(&cfg)?,
        "power-showcase" => power_showcase(&cfg, &load_replays(&cfg, replay)?)?,
        "martingale" => martingale_suite(&cfg)?,
        other => return Err(CliError::Usage(format!("unknown experiment `{other}`"))),
    };
    finish(&dir, &outcome, started)
}

fn verify(cli: &Cli, suite: Suite, family: Option<&str>, samples: usize) -> Result<bool, CliError> {
    let families: Vec<Family> = match (family, suite) {
        (Some(f), _) => vec![parse_family(f)?],
        (None, Suite::Martingale) => vec![Family::PowerRatio, Family::ExpRatio],
        (None, Suite::Spde) => Family::ALL.to_vec(),
    };
    let dir = cli.common.out_dir();
    match suite {
        Suite::Spde => {
            let started = Instant::now();
            let seed = cli.common.seed.unwrap_or(pension_core::experiments::SimSettings::default().seed);
            finish(&dir, &spde_suite(&families, samples, seed)?, started)
        }
        Suite::Martingale => {
            let mut all = true;
            for f in families {
                let started = Instant::now();
                let set = format!("preference.family=\"{}\"", f.id());
                let cfg = cli.common.load("martingale", &[set])?;
                let sub = if family.is_some() { dir.clone() } else { dir.join(f.id()) };
                all &= finish(&sub, &martingale_suite(&cfg)?, started)?;
            }
            Ok(all)
        }
    }
}

fn list_presets(show: Option<&str>) -> Result<bool, CliError> {
    match show {
        Some(name) => print!("{}", preset_text(name)?),
        None => {
            for p in presets::PRESETS {
                println!("{:<18} {}", p.name, p.summary);
            }
        }
    }
    Ok(true)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Simulate { policy, constant, keep } => simulate(cli, *policy, *constant, *keep),
        Command::Experiment { id, replay, samples } => experiment(cli, id, replay, *samples),
        Command::Verify { suite, family, samples } => verify(cli, *suite, family.as_deref(), *samples),
        Command::Presets { show } => list_presets(show.as_deref()),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
