use std::path::PathBuf;
use std::process::ExitCode;

use cellhom_cli::{load_config, run, Scenario};
use clap::Parser;

/// Periodic homogenization experiments.
#[derive(Parser, Debug)]
#[command(name = "cellhom", version)]
struct Cli {
    #[arg(value_enum)]
    scenario: Scenario,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for stochastic steps; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "CELLHOM_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("cannot set thread count: {e}");
        }
    }
    let (mut cfg, base) = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let out = cli.out.or_else(|| cfg.out.clone().map(|o| base.join(o))).unwrap_or_else(|| PathBuf::from("out").join(cli.scenario.name()));
    match run(cli.scenario, &cfg, &base, &out) {
        Ok(report) => {
            for c in &report.checks {
                println!("{:<12} {} (measured {:e})", c.verdict.to_string(), c.name, c.measured);
            }
            println!("report: {}", out.join("report.json").display());
            ExitCode::from(if report.failed() { 1 } else { 0 })
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
