//! `transverse`: profiles, invariants, Evans scans, the orientation index and
//! the verification suite, driven by a JSON problem file.

mod commands;
mod config;
mod output;
mod verify;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "transverse", version, about = "Transverse stability of periodic gKdV waves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Problem definition (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for parallel scans (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Multiply every tolerance by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub tol_scale: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the wave profile; writes profile.csv and profile.json.
    Profile(Common),
    /// Invariants, gradients and the optional parameter sweep.
    Invariants(Common),
    /// Evans-function scans and asymptotic reports from the `scan` block.
    Scan(Common),
    /// Orientation index; exit 10 unstable, 0 inconclusive, 4 degenerate.
    Index(Common),
    /// Full verification suite; exit 0 when every check passes, 5 otherwise.
    Verify(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Profile(c) => ("profile", c),
        Command::Invariants(c) => ("invariants", c),
        Command::Scan(c) => ("scan", c),
        Command::Index(c) => ("index", c),
        Command::Verify(c) => ("verify", c),
    };
    let result = commands::Context::load(common).and_then(|ctx| {
        if let Some(n) = common.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| commands::Failure::Input(format!("--threads: {e}")))?;
        }
        let code = match &cli.command {
            Command::Profile(_) => commands::profile(&ctx),
            Command::Invariants(_) => commands::invariants(&ctx),
            Command::Scan(_) => commands::scan(&ctx),
            Command::Index(_) => commands::index(&ctx),
            Command::Verify(_) => verify::run(&ctx),
        }?;
        output::write_meta(&ctx, name, code)?;
        Ok(code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
