mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pap_core::eval::DEFAULT_FUEL;

#[derive(Parser, Debug)]
#[command(
    name = "pap",
    version,
    about = "Workbench for a higher-order language with piecewise-analytic primitives"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Evaluation budget: primitive applications plus recursive unfoldings.
    #[arg(long, global = true, default_value_t = DEFAULT_FUEL)]
    pub fuel: u64,
    /// Omit timing fields so identical invocations give identical bytes.
    #[arg(long, global = true)]
    pub stable: bool,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate a program, applying it to `--arg` values if given.
    Run {
        file: PathBuf,
        /// One argument per occurrence; comma-separated for tuple arguments.
        #[arg(long = "arg", allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Print the type of a program.
    #[command(alias = "check")]
    Typecheck { file: PathBuf },
    /// Apply the dual-number transformation.
    Ad {
        file: PathBuf,
        /// Print the transformed source instead of JSON.
        #[arg(long)]
        emit: bool,
    },
    /// Forward-mode derivative at one or more points.
    Grad {
        file: PathBuf,
        /// One point per occurrence; comma-separated coordinates.
        #[arg(long = "at", required = true, allow_hyphen_values = true)]
        at: Vec<String>,
        /// Tangent direction; defaults to the full gradient for scalar outputs.
        #[arg(long = "seed-vec", allow_hyphen_values = true)]
        seed_vec: Option<String>,
        /// Compare against the finite-difference oracle.
        #[arg(long)]
        check: bool,
    },
    /// Gradient descent `x <- x - eps * grad f(x)`.
    Gd {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Maximum number of update steps.
        #[arg(long = "T", default_value_t = 100)]
        t_max: usize,
        #[arg(long, value_enum, default_value_t = Mode::Ad)]
        mode: Mode,
        #[arg(long = "stop-tol", default_value_t = 0.0)]
        stop_tol: f64,
        /// Write CSV (t, x, grad, f) to a path, or `-` for stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Gradient descent from random step sizes and starting points.
    #[command(name = "gd-random")]
    GdRandom {
        file: PathBuf,
        /// Smoothness constant; step sizes are drawn from (0, 2/L).
        #[arg(long = "L", default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        #[arg(long = "T", default_value_t = 100_000)]
        t_max: usize,
        #[arg(long = "stop-tol", default_value_t = 1e-3)]
        stop_tol: f64,
        #[arg(
            long = "x0-range",
            allow_hyphen_values = true,
            default_value = "-10,10"
        )]
        x0_range: String,
        #[arg(long = "eps-range", allow_hyphen_values = true)]
        eps_range: Option<String>,
        #[arg(long = "fixed-eps")]
        fixed_eps: Option<f64>,
        /// Output path; stdout when omitted or `-`.
        #[arg(long, num_args = 0..=1, default_missing_value = "-")]
        json: Option<PathBuf>,
    },
    /// Run a program against an explicit trace of uniform draws.
    Trace {
        file: PathBuf,
        #[command(flatten)]
        trace: TraceArg,
        #[arg(long, num_args = 0..=1, default_missing_value = "-")]
        json: Option<PathBuf>,
    },
    /// Weight function (and optionally its gradient) at a trace.
    Weight {
        file: PathBuf,
        #[command(flatten)]
        trace: TraceArg,
        #[arg(long)]
        grad: bool,
    },
    /// Simulate runs with fresh uniform draws.
    Simulate {
        file: PathBuf,
        #[arg(short = 'N', long = "runs", default_value_t = 10)]
        n: usize,
        #[arg(long = "max-trace", default_value_t = 10_000)]
        max_trace: usize,
        /// Write CSV to a path, or stdout when no path is given.
        #[arg(long, num_args = 0..=1, default_missing_value = "-")]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo estimate of a test function against the program's measure.
    Estimate {
        file: PathBuf,
        /// `mass`, `mean[:I]` or `box:LO,HI[;LO,HI...]`.
        #[arg(long, default_value = "mass", allow_hyphen_values = true)]
        event: String,
        #[arg(short = 'N', long = "runs", default_value_t = 10_000)]
        n: usize,
        #[arg(long = "max-trace", default_value_t = 10_000)]
        max_trace: usize,
    },
    /// Histogram of the output Jacobian rank over simulated traces.
    Dim {
        file: PathBuf,
        #[arg(short = 'N', long = "runs", default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = pap_core::prob::DEFAULT_RANK_TOL)]
        tol: f64,
        #[arg(long = "max-trace", default_value_t = 10_000)]
        max_trace: usize,
        #[arg(long, num_args = 0..=1, default_missing_value = "-")]
        json: Option<PathBuf>,
    },
    /// List the primitive registry.
    Prims {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct TraceArg {
    /// Comma-separated draws.
    #[arg(long, allow_hyphen_values = true)]
    pub trace: Option<String>,
    /// One draw per line, or comma-separated.
    #[arg(long = "trace-file")]
    pub trace_file: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Mode {
    Ad,
    Fd,
}

/// Exit status of a successful command.
pub enum Status {
    Ok,
    /// The final result was semantic bottom.
    Bottom,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Bottom) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
