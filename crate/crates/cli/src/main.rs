use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ghostpol_cli::{run, Command};

#[derive(Parser)]
#[command(
    name = "ghostpol",
    version,
    about = "Nonlocal polarimetric discrimination simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Response curves of every sample family (CSV + SVG).
    Sweep(Common),
    /// Simulated runs, confidence regions and distinguishable subsets.
    Discriminate(Common),
    /// Maximum-likelihood state tomography and entanglement metrics.
    Tomo(Common),
    /// Search probe and idler projector settings.
    Optimize(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; --help/--version are not
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (command, args) = match cli.command {
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Discriminate(a) => (Command::Discriminate, a),
        Cmd::Tomo(a) => (Command::Tomo, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
    };
    match run(command, &args.config, args.seed, args.out.as_deref()) {
        Ok(outcome) => {
            // a closed pipe on stdout is not a failure of the command
            let mut stdout = std::io::stdout().lock();
            let _ = write!(stdout, "{}", outcome.summary);
            for f in &outcome.files {
                let _ = writeln!(stdout, "wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
