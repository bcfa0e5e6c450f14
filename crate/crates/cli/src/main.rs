use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nshjb::{exit_code, load_config, run};

#[derive(Parser)]
#[command(name = "nshjb", about = "Stochastic control of truncated Navier-Stokes dynamics: solvers and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct WithValue {
    #[command(flatten)]
    common: Common,
    /// Reuse `valuegrid/grid` from an earlier run with the same fingerprint.
    #[arg(long)]
    value_from: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Hypothesis report and precondition checks.
    Validate(Common),
    /// Grid and/or mild value function with bound checks.
    SolveHjb(Common),
    /// Grid, mild and Feynman-Kac values at probe states.
    FkCheck(WithValue),
    /// Open or closed loop ensemble with energy and theta diagnostics.
    Simulate(WithValue),
    /// Empirical dynamic-programming optimality check.
    DpVerify(WithValue),
    /// Value and costs across truncation levels.
    ConvergeM(Common),
    /// Linear-quadratic comparison against the Riccati solution.
    LqOracle(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, common, value_from) = match cli.command {
        Command::Validate(c) => ("validate", c, None),
        Command::SolveHjb(c) => ("solve-hjb", c, None),
        Command::FkCheck(w) => ("fk-check", w.common, w.value_from),
        Command::Simulate(w) => ("simulate", w.common, w.value_from),
        Command::DpVerify(w) => ("dp-verify", w.common, w.value_from),
        Command::ConvergeM(c) => ("converge-m", c, None),
        Command::LqOracle(c) => ("lq-oracle", c, None),
    };
    let outcome = load_config(&common.config, common.seed)
        .and_then(|cfg| run(name, &cfg, &common.out, value_from.as_deref()));
    match outcome {
        Ok(res) => {
            let mut stdout = std::io::stdout().lock();
            for l in &res.lines {
                let _ = writeln!(stdout, "{l}");
            }
            let _ = writeln!(stdout, "{name}: {:?}", res.verdict);
            ExitCode::from(exit_code(res.verdict) as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
