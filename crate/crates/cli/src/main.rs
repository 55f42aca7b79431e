//! Experiment runner: trains sparse-evolutionary models from declarative
//! configs and emits metrics, checkpoints, and topology analyses.
//!
//! Exit codes: 0 success, 2 validation failure, 1 runtime failure.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use config::{interpret, RawConfig};

struct Args {
    config: PathBuf,
    seed: Option<u64>,
    workers: usize,
    out: Option<PathBuf>,
    validate_only: bool,
}

const USAGE: &str = "usage: sparset --config PATH [--seed N] [--workers N] [--out DIR] [--validate-only]

Runs the experiment described by the config file. Dataset paths resolve
against $SPARSET_DATA (default ./data). See configs/ for examples.";

fn parse_args() -> Result<Args, String> {
    let mut config = None;
    let mut seed = None;
    let mut workers = 1usize;
    let mut out = None;
    let mut validate_only = false;
    let mut it = std::env::args().skip(1);
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                config = Some(PathBuf::from(
                    it.next().ok_or("--config needs a path")?,
                ));
            }
            "--seed" => {
                seed = Some(
                    it.next()
                        .ok_or("--seed needs a value")?
                        .parse()
                        .map_err(|_| "--seed must be an integer")?,
                );
            }
            "--workers" => {
                workers = it
                    .next()
                    .ok_or("--workers needs a value")?
                    .parse()
                    .map_err(|_| "--workers must be a positive integer")?;
                if workers == 0 {
                    return Err("--workers must be at least 1".into());
                }
            }
            "--out" => {
                out = Some(PathBuf::from(it.next().ok_or("--out needs a path")?));
            }
            "--validate-only" => validate_only = true,
            "--help" | "-h" => {
                println!("{USAGE}");
                std::process::exit(0);
            }
            other => return Err(format!("unknown argument '{other}'")),
        }
    }
    Ok(Args {
        config: config.ok_or("--config is required")?,
        seed,
        workers,
        out,
        validate_only,
    })
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let mut raw = match RawConfig::parse_file(&args.config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        raw.set("", "seed", &seed.to_string());
    }
    if let Some(out) = &args.out {
        raw.set("", "out", &out.to_string_lossy());
    }

    let (cfg, report) = interpret(&raw);
    if !report.findings.is_empty() {
        eprint!("{report}");
        return ExitCode::from(2);
    }
    if args.validate_only {
        if cfg.task == config::Task::Grid {
            let members: usize = cfg.grid_axes.iter().map(|(_, v)| v.len()).product();
            println!("configuration valid; grid expands to {members} members");
        } else {
            println!("configuration valid; no findings");
        }
        return ExitCode::SUCCESS;
    }

    match runner::run(&cfg, &raw, args.workers) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Single-line diagnostic per failure.
            for line in e.lines() {
                eprintln!("error: {line}");
            }
            ExitCode::from(1)
        }
    }
}
