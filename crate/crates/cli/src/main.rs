use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use finsler_cli::{run, RunOptions, Subcommand};

#[derive(Parser)]
#[command(name = "finsler", version, about = "Finsler metric-measure geometry experiments")]
enum Cli {
    /// Curvature report CSV for each (x, Y, W) row.
    Tensors {
        #[command(flatten)]
        common: Common,
        /// Points file with rows x, Y, W (overrides [tensors] points).
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Solve the Dirichlet problem of the [grid] table.
    Solve(Common),
    /// Expanding-ball gradient-estimate experiment of the [liouville] table.
    Liouville(Common),
    /// Run the invariant suite on the configured metric.
    Validate(Common),
    /// Integrate the geodesic of the [geodesic] table.
    Geodesic(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 4 when curvature hypotheses are violated.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let (cmd, common, points) = match Cli::parse() {
        Cli::Tensors { common, points } => (Subcommand::Tensors, common, points),
        Cli::Solve(c) => (Subcommand::Solve, c, None),
        Cli::Liouville(c) => (Subcommand::Liouville, c, None),
        Cli::Validate(c) => (Subcommand::Validate, c, None),
        Cli::Geodesic(c) => (Subcommand::Geodesic, c, None),
    };
    let opts = RunOptions {
        config: common.config,
        out: common.out,
        threads: common.threads,
        strict: common.strict,
        seed: common.seed,
        points,
    };
    match run(cmd, &opts) {
        Ok(manifest) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", opts.out.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
