use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hartree_wkb::cli::config::{parse_config_for, ExperimentConfig, Subcommand};
use hartree_wkb::cli::{run, selftest};
use hartree_wkb::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Direct,
    Grenier,
    Wkb,
    Converge,
    DeltaStudy,
    Scaling,
    Selftest,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Subcommand {
        match c {
            Command::Direct => Subcommand::Direct,
            Command::Grenier => Subcommand::Grenier,
            Command::Wkb => Subcommand::Wkb,
            Command::Converge => Subcommand::Converge,
            Command::DeltaStudy => Subcommand::DeltaStudy,
            Command::Scaling => Subcommand::Scaling,
            Command::Selftest => Subcommand::Selftest,
        }
    }
}

/// Semiclassical Hartree solvers and WKB convergence studies.
#[derive(Debug, Parser)]
#[command(name = "hartree-wkb", version)]
struct Args {
    command: Command,
    /// Experiment configuration (optional for `selftest`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `[output] dir`, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to HARTREE_WKB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(sub: Subcommand, path: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?,
        None if sub == Subcommand::Selftest => selftest::DEFAULT_CONFIG.to_string(),
        None => return Err(Error::Config(vec!["--config is required".into()])),
    };
    parse_config_for(&text, Some(sub))
}

fn threads(arg: Option<usize>) -> Result<Option<usize>, Error> {
    if arg.is_some() {
        return Ok(arg);
    }
    match std::env::var("HARTREE_WKB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(vec![format!("HARTREE_WKB_THREADS = {v:?} is not a count")])),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let sub = Subcommand::from(args.command);
    let outcome = (|| {
        if let Some(n) = threads(args.threads)? {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .map_err(|e| Error::Config(vec![format!("thread pool: {e}")]))?;
        }
        let config = load(sub, args.config.as_ref())?;
        let out = args
            .out
            .clone()
            .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        run(&config, sub, &out)
    })();
    match outcome {
        Ok(report) => {
            for f in &report.failures {
                eprintln!("hartree-wkb: {f}");
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("hartree-wkb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
