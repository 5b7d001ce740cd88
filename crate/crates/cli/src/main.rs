use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conic_sv_cli::commands::{
    cmd_bench, cmd_design, cmd_oracle, cmd_polar, cmd_sigma, BenchArgs, DesignArgs, DesignMode, OracleArgs,
    OracleKind, Output, SigmaArgs, DEFAULT_MAX_N, EXIT_INPUT,
};

#[derive(Parser)]
#[command(name = "conic-sv", version, about = "Smallest conic singular value of a matrix over a polyhedral cone")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Grid,
    Pg,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance given a matrix file and a cone file.
    Sigma {
        matrix: PathBuf,
        cone: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        /// Print a single-line JSON record.
        #[arg(long)]
        json: bool,
        /// Report a wall time of zero so output is reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Randomized benchmark on Gaussian matrices and Gaussian inequalities.
    Bench {
        /// Comma-separated dimensions.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_N)]
        max_n: usize,
        #[arg(long)]
        no_timing: bool,
    },
    /// Print the polar cone in half-space and generator form.
    Polar { cone: PathBuf },
    /// Run a reference solver.
    Oracle {
        matrix: PathBuf,
        cone: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Grid)]
        method: Method,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate or search a measurement selection for the grid demo.
    Design {
        model: PathBuf,
        w0: PathBuf,
        #[arg(long, requires = "greedy")]
        budget: Option<usize>,
        #[arg(long, conflicts_with = "eval")]
        greedy: bool,
        /// File holding the selection vector to evaluate.
        #[arg(long, required_unless_present = "greedy")]
        eval: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<Output> {
    match cli.command {
        Command::Sigma {
            matrix,
            cone,
            eps,
            max_iter,
            json,
            no_timing,
        } => cmd_sigma(&SigmaArgs {
            matrix,
            cone,
            eps,
            max_iter,
            json,
            no_timing,
        }),
        Command::Bench {
            n,
            m,
            trials,
            seed,
            out,
            max_n,
            no_timing,
        } => cmd_bench(&BenchArgs {
            n,
            m,
            trials,
            seed,
            out,
            max_n,
            no_timing,
        }),
        Command::Polar { cone } => cmd_polar(&cone),
        Command::Oracle {
            matrix,
            cone,
            method,
            resolution,
            restarts,
            max_iter,
            seed,
        } => cmd_oracle(&OracleArgs {
            matrix,
            cone,
            method: match method {
                Method::Grid => OracleKind::Grid,
                Method::Pg => OracleKind::Pg,
            },
            resolution,
            restarts,
            max_iter,
            seed,
        }),
        Command::Design {
            model,
            w0,
            budget,
            greedy,
            eval,
        } => {
            let mode = match (greedy, eval) {
                (true, _) => DesignMode::Greedy {
                    budget: budget.ok_or_else(|| anyhow::anyhow!("--greedy needs --budget"))?,
                },
                (false, Some(delta)) => DesignMode::Eval { delta },
                (false, None) => anyhow::bail!("pass --greedy or --eval"),
            };
            cmd_design(&DesignArgs { model, w0, mode })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            eprint!("{}", out.stderr);
            let _ = std::io::stdout().flush();
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
