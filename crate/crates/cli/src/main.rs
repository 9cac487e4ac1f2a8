use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ohmic_cli::{config, parse_config, render, run, Command};

#[derive(Parser)]
#[command(name = "ohmic", about = "Oscillator in a scalar-field vacuum: moments, thermometry, correlations and lattice checks")]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(args: &Args) -> Result<bool, String> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", args.config.display()))?;
    if let Some(out) = &args.out {
        config::check_writable(out).map_err(|e| format!("--out: {e}"))?;
        cfg.output.path = Some(out.clone());
    }
    let report = run(args.command, &cfg).map_err(|e| format!("{}: {e}", args.command.name()))?;
    let doc = render(args.command, &cfg, &report);
    match &cfg.output.path {
        Some(p) => std::fs::write(p, doc).map_err(|e| format!("{}: {e}", p.display()))?,
        None => print!("{doc}"),
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {}: {}", c.name, c.detail);
    }
    Ok(report.passed())
}
