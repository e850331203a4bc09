use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pdmp_maint_cli::{default_out_dir, run, Command, CostKind, ExperimentSpec, PolicyChoice, OUT_ENV};

#[derive(Parser)]
#[command(name = "pdmp-maint", version, about = "Optimal imperfect maintenance: solve, simulate and sweep")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON model configuration (defaults if omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `--set discount=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Monte Carlo paths (per point for sweeps).
    #[arg(long, global = true, default_value_t = 2000)]
    paths: usize,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use the 5-day θ grid.
    #[arg(long, global = true)]
    coarse: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Imm,
    Cmm,
    Tmm,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    C1,
    C2,
}

#[derive(Subcommand)]
enum Cmd {
    /// Value iteration; writes the table, policy and convergence CSVs.
    Solve,
    /// Simulate one policy; writes per-path totals and event logs.
    Simulate {
        #[arg(long, value_enum, default_value = "imm")]
        policy: PolicyArg,
        #[arg(long, default_value_t = 2.0)]
        xi1: f64,
        #[arg(long, default_value_t = 4.0)]
        xi2: f64,
        /// Event logs written for the first N paths.
        #[arg(long, default_value_t = 1)]
        log_paths: usize,
    },
    /// Running means of IMM, CMM and TMM (needs a prior `solve`).
    Compare {
        #[arg(long, default_value_t = 2.0)]
        xi1: f64,
        #[arg(long, default_value_t = 4.0)]
        xi2: f64,
    },
    /// Monte Carlo cost over the (ξ₁, ξ₂) lattice.
    SweepThreshold {
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Re-solve per discount rate.
    SweepRho {
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Re-solve per inspection interval at ρ = 0.01.
    SweepInspection {
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Re-solve per maintenance cost; writes θ = 200 action slices.
    SweepCost {
        #[arg(long, value_enum, default_value = "c1")]
        kind: CostArg,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn spec(cli: Cli) -> ExperimentSpec {
    let c = cli.common;
    let command = match &cli.command {
        Cmd::Solve => Command::Solve,
        Cmd::Simulate { .. } => Command::Simulate,
        Cmd::Compare { .. } => Command::Compare,
        Cmd::SweepThreshold { .. } => Command::SweepThreshold,
        Cmd::SweepRho { .. } => Command::SweepRho,
        Cmd::SweepInspection { .. } => Command::SweepInspection,
        Cmd::SweepCost { .. } => Command::SweepCost,
    };
    let mut s = ExperimentSpec::new(command, c.out.unwrap_or_else(default_out_dir));
    s.config = c.config;
    s.overrides = c.overrides;
    s.seed = c.seed;
    s.n_paths = c.paths;
    s.workers = c.workers;
    s.coarse = c.coarse;
    match cli.command {
        Cmd::Solve => {}
        Cmd::Simulate { policy, xi1, xi2, log_paths } => {
            s.policy = match policy {
                PolicyArg::Imm => PolicyChoice::Imm,
                PolicyArg::Cmm => PolicyChoice::Cmm,
                PolicyArg::Tmm => PolicyChoice::Tmm { xi1, xi2 },
            };
            s.log_paths = log_paths;
        }
        Cmd::Compare { xi1, xi2 } => s.tmm = (xi1, xi2),
        Cmd::SweepThreshold { step } => s.threshold_step = step,
        Cmd::SweepRho { values } | Cmd::SweepInspection { values } => s.values = values,
        Cmd::SweepCost { kind, values } => {
            s.cost = match kind {
                CostArg::C1 => CostKind::C1,
                CostArg::C2 => CostKind::C2,
            };
            s.values = values;
        }
    }
    s
}

fn main() -> ExitCode {
    let spec = spec(Cli::parse());
    match run(&spec) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
