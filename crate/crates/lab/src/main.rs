use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nlsq_lab::{dispatch, parse_config_for, Command, LabError, RunConfig};

/// Runs one experiment from a `key = value` configuration file.
///
/// `--seed`, `--workers` and `--out` override `NLSQ_SEED`, `NLSQ_WORKERS`
/// and `NLSQ_OUT`, which override the file.
#[derive(Debug, Parser)]
#[command(name = "nlsq", version)]
struct Cli {
    /// One of: sample, evolve, smoothing-scan, energy-derivative-check,
    /// counting-verify, cancellation-verify, picard-divergence, moment-scan,
    /// bound-eval.
    command: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

fn load(cli: &Cli) -> Result<RunConfig, LabError> {
    let command: Command = cli
        .command
        .parse()
        .map_err(|_| LabError::Unsupported(format!("unknown command `{}`", cli.command)))?;
    let text = std::fs::read_to_string(&cli.config)?;
    let mut cfg = parse_config_for(&text, Some(command))?;
    for (key, var, flag) in [("seed", "NLSQ_SEED", &cli.seed), ("workers", "NLSQ_WORKERS", &cli.workers), ("out", "NLSQ_OUT", &cli.out)] {
        if let Ok(v) = std::env::var(var) {
            cfg.set_shared(key, &v, var)?;
        }
        if let Some(v) = flag {
            cfg.set_shared(key, v, &format!("--{key}"))?;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("nlsq: {e}");
            return ExitCode::from(2);
        }
    };
    for w in &cfg.warnings {
        eprintln!("nlsq: warning: {w}");
    }
    match dispatch(&cfg) {
        Ok(record) => {
            for c in &record.checks {
                let tag = match (c.passed, c.asserted) {
                    (true, _) => "ok",
                    (false, true) => "FAILED",
                    (false, false) => "note",
                };
                println!("{tag:>6}  {} = {:e} (limit {:e})", c.name, c.value, c.limit);
            }
            if let Some(e) = &record.error {
                eprintln!("nlsq: {e}");
            }
            println!("{:?} -> {}", record.status, cfg.output_dir.display());
            ExitCode::from(record.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("nlsq: {e}");
            ExitCode::from(2)
        }
    }
}
