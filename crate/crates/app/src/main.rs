use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;

use segrekin::config::{parse_config, Experiment, Value};
use segrekin::experiments::run_experiment;
use segrekin::output::ErrorRecord;
use segrekin::AppError;

const THREADS_ENV: &str = "SEGREKIN_THREADS";

/// Two-species kinetic mixture experiments.
#[derive(Parser, Debug)]
#[command(name = "segrekin", version)]
struct Cli {
    /// phase-diagram, interface, kinetic-run, hydro-run, ins-run, transport or validate
    experiment: Experiment,
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides SEGREKIN_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

struct Failure {
    error: AppError,
    experiment: Option<String>,
    out: PathBuf,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, AppError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(text) => text
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| AppError::Usage(format!("{THREADS_ENV} must be a nonnegative integer, got '{text}'"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let fail = |error: AppError, experiment: Option<String>, out: PathBuf| Failure { error, experiment, out };
    let fallback_out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        fail(
            AppError::Usage(format!("cannot read {}: {e}", cli.config.display())),
            Some(cli.experiment.to_string()),
            fallback_out.clone(),
        )
    })?;
    let mut cfg = parse_config(&text).map_err(|e| fail(e.into(), Some(cli.experiment.to_string()), fallback_out.clone()))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(cfg.str("output.dir")));
    let name = Some(cfg.experiment.to_string());
    if cfg.experiment != cli.experiment {
        let msg = format!("command asks for '{}' but the config declares experiment = {}", cli.experiment, cfg.experiment);
        return Err(fail(AppError::Usage(msg), name, out));
    }
    if let Some(seed) = cli.seed {
        let seed = i64::try_from(seed).map_err(|_| fail(AppError::Usage(format!("seed {seed} exceeds {}", i64::MAX)), name.clone(), out.clone()))?;
        cfg.set("solver.seed", Value::Int(seed)).map_err(|e| fail(e.into(), name.clone(), out.clone()))?;
    }
    let threads = thread_count(cli.threads).map_err(|e| fail(e, name.clone(), out.clone()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.filter(|n| *n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| fail(AppError::Usage(e.to_string()), name.clone(), out.clone()))?;
    pool.install(|| run_experiment(&cfg, &out)).map_err(|e| fail(e, name.clone(), out.clone()))?;
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.error);
            let (line, key) = match &f.error {
                AppError::Config(c) => (c.line, c.key.clone()),
                _ => (None, None),
            };
            let record = ErrorRecord {
                kind: f.error.kind().to_string(),
                message: f.error.to_string(),
                experiment: f.experiment,
                line,
                key,
            };
            let text = serde_json::to_string_pretty(&record).expect("error record serializes");
            if std::fs::create_dir_all(&f.out).and_then(|_| std::fs::write(f.out.join("error.json"), &text)).is_err() {
                eprintln!("{text}");
            }
            ExitCode::FAILURE
        }
    }
}
