use clap::Parser;
use lcop::config::ConfigFile;
use lcop::{error_json, run, Command, Format, RunConfig};
use lcop_core::Error;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "lcop", version, about = "Martingale representation and digital hedging for Lévy models")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON config with model, market, payoff and grid.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the output artifact (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Step counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Fourier truncation tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (all cores when unset).
    #[arg(long, env = "LCOP_THREADS")]
    threads: Option<usize>,
}

fn execute(cli: Cli) -> Result<bool, Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut cfg = RunConfig::new(cli.command, ConfigFile::parse(&text)?);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.paths {
        cfg.paths = p;
    }
    if let Some(s) = cli.steps {
        cfg.steps = s;
    }
    cfg.tol = cli.tol;
    cfg.format = cli.format;
    cfg.out_dir = cli.out;
    let outcome = run(&cfg)?;
    match &outcome.artifact {
        Some(p) => eprintln!("wrote {}", p.display()),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(outcome.body.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(2)
        }
    }
}
