use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use plaquette_sim::scheme::BlockadeMode;

mod commands;
mod output;

use output::Format;

#[derive(Parser, Debug)]
#[command(
    name = "plaquette",
    version,
    about = "Pulse-level plaquette experiments on an atomic ensemble"
)]
struct Cli {
    /// Atoms in the ensemble.
    #[arg(long = "atoms", global = true, default_value_t = 1_000_000)]
    atoms: u64,

    #[arg(long, global = true, value_enum, default_value_t = Blockade::Hard)]
    blockade: Blockade,

    /// Rydberg interaction over effective Rabi frequency (soft blockade).
    #[arg(long = "v-over-omega", global = true, default_value_t = 1000.0)]
    v_over_omega: f64,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory for reports and tables; without it the report goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Pass threshold, overriding the command's default.
    #[arg(long, global = true)]
    threshold: Option<f64>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Blockade {
    Hard,
    Soft,
}

impl From<Blockade> for BlockadeMode {
    fn from(b: Blockade) -> Self {
        match b {
            Blockade::Hard => BlockadeMode::Hard,
            Blockade::Soft => BlockadeMode::Soft,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Target {
    PhiMinus,
    PhiPlus,
    BoxTwoRydberg,
    BoxSingleRydberg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Gate {
    TwoRydberg,
    SingleRydberg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Problem {
    OnePulse,
    TwoPulse,
    Composite,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prepare a plaquette state and report its fidelity.
    Prep {
        #[arg(value_enum)]
        target: Target,
        /// Composite transfer parameters written by `optimize composite`.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Comma-separated V/Ω values for a soft-blockade infidelity sweep.
        #[arg(long = "sweep-v", value_delimiter = ',')]
        sweep_v: Vec<f64>,
    },
    /// Braiding run with a control qubit.
    Braid {
        /// Skip both controlled-phase gates.
        #[arg(long = "no-flux")]
        no_flux: bool,
        #[arg(long, value_enum, default_value_t = Gate::TwoRydberg)]
        gate: Gate,
    },
    /// Controlled-phase table on the four (control, register 1) sectors.
    Cz {
        #[arg(long, value_enum, default_value_t = Gate::TwoRydberg)]
        gate: Gate,
        /// Composite pulse area Ωt (single-Rydberg gate).
        #[arg(long = "omega-t")]
        omega_t: Option<f64>,
    },
    /// Reachability, synthesized unitary and Raman pulses between two
    /// coefficient matrices.
    Takagi { from: PathBuf, to: PathBuf },
    /// Constant-pulse searches.
    Optimize {
        #[arg(value_enum)]
        problem: Problem,
        #[arg(long, default_value_t = 1000)]
        restarts: usize,
    },
    /// Spinon measurement table.
    Spinon,
    /// Composite-pulse branch phases over a grid of Ωt.
    Scan {
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Re-execute a report's schedules and compare every number.
    Replay { report: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprint!("{}", failure.render(format));
            ExitCode::from(failure.code)
        }
    }
}
