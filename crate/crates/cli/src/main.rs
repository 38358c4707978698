mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "screenhist", version, about = "Fit cancer natural history models to screening histories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic cohort with known truth.
    Simulate(SimulateArgs),
    /// Run the MCMC sampler on a cohort.
    Fit(FitArgs),
    /// Convergence diagnostics and posterior summaries of a fit.
    Diagnose(DiagnoseArgs),
    /// Compare fixed-shape models by approximate leave-one-out predictive fit.
    Compare(CompareArgs),
    /// Overdiagnosis under a screening program.
    Overdx(OverdxArgs),
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Clone)]
pub struct Data {
    /// Screens table: id, age, result.
    #[arg(long)]
    pub screens: Option<PathBuf>,
    /// Endpoints table: id, t_pc, censor_age.
    #[arg(long)]
    pub endpoints: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct Sampling {
    #[arg(long)]
    pub chains: Option<usize>,
    /// Total sweeps per chain including warm-up.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Cohort size after left truncation.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    #[command(flatten)]
    pub sampling: Sampling,
    /// Onset Weibull shape.
    #[arg(long)]
    pub alpha_h: Option<f64>,
    /// Progression Weibull shape.
    #[arg(long)]
    pub alpha_prog: Option<f64>,
    /// Also write every retained latent state (large).
    #[arg(long)]
    pub export_latents: bool,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    /// `fit.json` written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Split each chain in half before computing PSRF.
    #[arg(long)]
    pub split: bool,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    #[command(flatten)]
    pub sampling: Sampling,
    /// Comma-separated onset shapes.
    #[arg(long)]
    pub alpha_h: Option<String>,
    /// Comma-separated progression shapes.
    #[arg(long)]
    pub alpha_prog: Option<String>,
    /// Importance samples per individual and draw.
    #[arg(long)]
    pub j_inner: Option<usize>,
}

#[derive(Args)]
pub struct OverdxArgs {
    #[command(flatten)]
    pub common: Common,
    /// `fit.json` written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// CSV with columns age and survival (or hazard).
    #[arg(long)]
    pub life_table: Option<PathBuf>,
    /// `first:last:step` or a comma-separated list.
    #[arg(long)]
    pub program_ages: Option<String>,
    #[arg(long)]
    pub sims: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Compare(a) => commands::compare(a),
        Command::Overdx(a) => commands::overdx(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "status": "error",
                "message": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
