use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phasefield_harness::{run_command, ExperimentConfig, Session};

#[derive(Parser)]
#[command(name = "phasefield-lab", about = "Allen-Cahn experiments on periodic tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// config file, or the name of a bundled config (t2-two-slabs)
    #[arg(long)]
    config: PathBuf,
    /// artifact directory; defaults to the config's output_dir, then out/<name>
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// solve the epsilon sweep and certify each solution
    Solve(Common),
    /// Allen-Cahn and Jacobi spectra, Morse indices
    Spectrum(Common),
    /// second inner variation by three routes over the battery
    Variation(Common),
    /// interfaces, multiplicities, diffuse measures and pairings
    Varifold(Common),
    /// Jacobi eigenvalue upper bounds along the sweep
    Semicontinuity(Common),
    /// metric variation identities and route agreement
    VerifyFormulas(Common),
    /// every run, aggregated
    Report(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Spectrum(a) => ("spectrum", a),
        Command::Variation(a) => ("variation", a),
        Command::Varifold(a) => ("varifold", a),
        Command::Semicontinuity(a) => ("semicontinuity", a),
        Command::VerifyFormulas(a) => ("verify-formulas", a),
        Command::Report(a) => ("report", a),
    };
    match run(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(name: &str, args: &Common) -> anyhow::Result<bool> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads.max(1)).build()?;
    let summary = pool.install(|| {
        let mut session = Session::new(cfg, &out)?;
        run_command(&mut session, name)
    })?;
    summary.print();
    Ok(summary.passed)
}
