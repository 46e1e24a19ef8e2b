mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, Code};

/// Intention-aware policy graphs over driving trajectories.
#[derive(Parser, Debug)]
#[command(name = "ipg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn raw scenes into discrete trajectories (JSONL).
    Discretize {
        /// Directory of scene JSON files.
        #[arg(long)]
        scenes: PathBuf,
        /// Map for every scene; otherwise each scene's `map_ref`, relative to
        /// the scene directory or its parent.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Discretizer thresholds (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count trajectories into a policy graph.
    Build {
        #[arg(long)]
        traj: PathBuf,
        /// Keep only trajectories carrying this tag; repeatable.
        #[arg(long = "filter-tag")]
        filter_tag: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve intentions for every desire and write the table.
    Intents {
        #[arg(long)]
        pg: PathBuf,
        /// Directory of desire specs (TOML); the shipped set when omitted.
        #[arg(long)]
        desires: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attributed and expected intention per desire.
    Metrics {
        #[arg(long)]
        pg: PathBuf,
        #[arg(long)]
        intents: PathBuf,
        /// Commitment thresholds, comma separated.
        #[arg(long = "C", value_delimiter = ',', default_value = "0.5")]
        c: Vec<f64>,
        /// Value of the cohort column.
        #[arg(long, default_value = "all")]
        cohort: String,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics on cohorts split by scene tag.
    Compare {
        #[arg(long)]
        traj: PathBuf,
        /// `tag:<t1>,<t2>,...`: one split per tag, `<t>` versus `not-<t>`.
        #[arg(long = "split-by")]
        split_by: String,
        #[arg(long)]
        desires: Option<PathBuf>,
        #[arg(long = "C", default_value_t = 0.5)]
        c: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// CSV destination; the text report is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// What/why/how questions about a state.
    Ask {
        #[command(subcommand)]
        query: Query,
    },
    /// Intention trace of one scene.
    Evolve {
        #[arg(long)]
        scene: String,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        intents: PathBuf,
        /// Only desires whose trace reaches this value are reported.
        #[arg(long = "min-peak", default_value_t = 0.2)]
        min_peak: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with ground-truth events.
    Synth {
        #[arg(long, value_enum)]
        policy: PolicyName,
        #[arg(long)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        frames: usize,
        #[arg(long, value_enum, default_value = "mixed")]
        world: WorldName,
        /// Discretizer thresholds the scripted driver perceives with.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    discount: f64,
}

impl SolverArgs {
    fn config(&self) -> ipg_core::SolverConfig {
        ipg_core::SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            discount: self.discount,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct StateArgs {
    #[arg(long)]
    pg: PathBuf,
    #[arg(long)]
    intents: PathBuf,
    /// Inline JSON object, `Predicate=Value,...` key, or `scene:step`.
    #[arg(long)]
    state: String,
    /// Trajectories used to resolve `scene:step`.
    #[arg(long)]
    traj: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Query {
    /// Desires attributed to the state.
    What {
        #[command(flatten)]
        at: StateArgs,
        #[arg(long = "C", default_value_t = 0.5)]
        c: f64,
    },
    /// Desires an action pursues in the state.
    Why {
        #[command(flatten)]
        at: StateArgs,
        #[arg(long)]
        action: String,
        #[arg(long = "C", default_value_t = 0.5)]
        c: f64,
    },
    /// A plan from the state to fulfilment of a desire.
    How {
        #[command(flatten)]
        at: StateArgs,
        #[arg(long)]
        desire: String,
        #[arg(long = "max-len", default_value_t = 20)]
        max_len: usize,
        #[arg(long, value_enum, default_value = "greedy")]
        objective: Objective,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PolicyName {
    Compliant,
    Reckless,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum WorldName {
    Mixed,
    StopSigns,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Objective {
    Greedy,
    MostProbable,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let err = CliError::new(Code::Usage, first.trim_start_matches("error: "));
            eprintln!("{err}");
            return ExitCode::from(Code::Usage.exit_status() as u8);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.code.exit_status() as u8)
        }
    }
}
