//! Experiment runner: declarative scenario configs, sweeps, CSV curves and JSON reports.

pub mod config;
pub mod report;
pub mod scenarios;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use report::{Check, RunReport, Verdict};
pub use scenarios::Scenario;

use scenarios::{Ctx, ScenarioError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 1,
        }
    }
}

/// Runs `scenario` (or the configured sweep) and writes all outputs under `out`.
/// Relative paths inside the config resolve against `base`.
pub fn run(scenario: Scenario, cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<RunReport, RunError> {
    if let Some(name) = &cfg.scenario {
        if Scenario::parse(name) != Some(scenario) {
            return Err(ConfigError::at("scenario", format!("config is for `{name}`, not `{}`", scenario.name())).into());
        }
    }
    match &cfg.sweep {
        Some(spec) => sweep(scenario, cfg, spec, base, out),
        None => run_single(scenario, cfg, base, out),
    }
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    report::sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

fn run_single(scenario: Scenario, cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<RunReport, RunError> {
    std::fs::create_dir_all(out)?;
    let tolerances = serde_json::to_value(&cfg.tolerances).expect("tolerances serialize");
    let mut report = RunReport::new(scenario.name(), config_hash(cfg), cfg.seed, tolerances);
    let ctx = Ctx { cfg, base: base.to_path_buf(), out: out.to_path_buf() };
    let start = Instant::now();
    match scenarios::dispatch(scenario, &ctx, &mut report) {
        Ok(()) => {}
        Err(ScenarioError::Config(e)) => return Err(e.into()),
        Err(ScenarioError::Io(e)) => return Err(e.into()),
        Err(ScenarioError::Solver(e)) => report.check("run completed", false, f64::NAN, "no solver failure", e.to_string()),
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    write_report(&report, out)?;
    Ok(report)
}

fn write_report(report: &RunReport, out: &Path) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(out.join("report.json"), text)
}

/// Independent runs along one axis, each in `out/run-NNN`, plus `summary.csv`.
/// A failing run is recorded and the sweep continues.
pub fn sweep(
    scenario: Scenario,
    cfg: &ExperimentConfig,
    spec: &config::SweepSpec,
    base: &Path,
    out: &Path,
) -> Result<RunReport, RunError> {
    if spec.is_empty() {
        return Err(ConfigError::at("sweep.values", "empty list").into());
    }
    std::fs::create_dir_all(out)?;
    let tolerances = serde_json::to_value(&cfg.tolerances).expect("tolerances serialize");
    let mut agg = RunReport::new(scenario.name(), config_hash(cfg), cfg.seed, tolerances);
    let start = Instant::now();
    let mut summary = report::Table::create(out, "summary.csv", &["axis", "value", "check", "verdict", "measured"])?;
    for i in 0..spec.len() {
        let (run_cfg, label) = spec.apply(cfg, i);
        let dir: PathBuf = out.join(format!("run-{i:03}"));
        let prefix = format!("{}={label}", spec.name());
        match run_single(scenario, &run_cfg, base, &dir) {
            Ok(r) => {
                for c in &r.checks {
                    summary.row([spec.name().to_string(), label.clone(), c.name.clone(), c.verdict.to_string(), report::num(c.measured)])?;
                    let name = format!("{prefix}: {}", c.name);
                    match c.verdict {
                        Verdict::Uncertified => agg.uncertified(name, c.measured, c.detail.clone()),
                        v => agg.check(name, v == Verdict::Pass, c.measured, c.tolerance.clone(), c.detail.clone()),
                    }
                }
                for (k, v) in r.constants {
                    agg.constant(format!("{prefix}: {k}"), v);
                }
                agg.artifacts.extend(r.artifacts.iter().map(|a| format!("run-{i:03}/{a}")));
            }
            Err(e) => {
                summary.row([spec.name().to_string(), label.clone(), "run completed".into(), "FAIL".into(), "NaN".into()])?;
                agg.check(format!("{prefix}: run completed"), false, f64::NAN, "", e.to_string());
            }
        }
    }
    summary.finish(&mut agg)?;
    agg.wall_clock_s = start.elapsed().as_secs_f64();
    write_report(&agg, out)?;
    Ok(agg)
}

/// Loads a config file; relative paths inside it resolve against its directory.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf), ConfigError> {
    let cfg = ExperimentConfig::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}
