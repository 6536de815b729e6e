use std::path::PathBuf;

use clap::{Parser, Subcommand};

use robin_nonlocal::cli::{run_many, Command as PipelineCommand};

#[derive(Parser)]
#[command(
    name = "robin-nonlocal",
    about = "Finite-volume pipelines for diffusion with nonlocal Robin boundary conditions",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario and write trajectory.csv and diagnostics.txt
    Simulate(CommonArgs),
    /// Eigensolve a scenario and write spectrum.csv and report.txt
    Spectrum(CommonArgs),
    /// Check resolvent identities and condition tables; write verify.txt
    Verify(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario file(s); with several, each writes into <out>/<stem>/
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Residual tolerance for verification assertions
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Scenario files processed concurrently
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() {
    // results are independent of the thread cap; it only bounds concurrency
    let thread_cap = std::env::var("ROBIN_NONLOCAL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    if let Some(cap) = thread_cap {
        std::env::set_var("OPENBLAS_NUM_THREADS", cap.to_string());
    }

    let args = Args::parse();
    let (pipeline, common) = match args.command {
        Command::Simulate(c) => (PipelineCommand::Simulate, c),
        Command::Spectrum(c) => (PipelineCommand::Spectrum, c),
        Command::Verify(c) => (PipelineCommand::Verify, c),
    };
    let jobs = match thread_cap {
        Some(cap) => common.jobs.min(cap),
        None => common.jobs,
    };
    let code = run_many(pipeline, &common.scenarios, &common.out, common.tol, jobs);
    std::process::exit(code);
}
