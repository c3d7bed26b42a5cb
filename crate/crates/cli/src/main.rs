//! `bcirl`: demonstration generation, algorithm runs and reporting.

mod config;
mod data;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Algo, Overrides, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "bcirl", version, about = "Behavior clustering inverse reinforcement learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate demonstrations, labels and ground truth for every seed.
    GenDemos(RunArgs),
    /// Run one algorithm on every seed's demonstrations.
    Run(RunArgs),
    /// Aggregate run directories into tables and plot data.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seed to use; repeat for several. Replaces the config's seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    algo: Option<Algo>,
    /// CRP concentration.
    #[arg(long)]
    alpha: Option<f64>,
    /// Gradient ascent step size.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seeds processed in parallel.
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(
            &self.config,
            &Overrides {
                seeds: self.seeds.clone(),
                out: self.out.clone(),
                algo: self.algo,
                alpha: self.alpha,
                lr: self.lr,
                max_iters: self.max_iters,
                jobs: self.jobs,
            },
        )
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, each holding one subdirectory per seed.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Where the plot-data CSVs go.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn gen_demos(args: &RunArgs) -> Result<u8> {
    let config = args.load()?;
    for &seed in &config.seeds {
        let env = data::Env::build(&config.env, seed)?;
        let (set, truth) = env.dataset(&config.demos, seed)?;
        let dir = config.data_dir(seed);
        data::write_dataset(&dir, &set, &truth)?;
        println!("seed {seed}: {} -> {}", data::summary(&set), dir.display());
    }
    Ok(0)
}

fn run(args: &RunArgs) -> Result<u8> {
    let config = args.load()?;
    let results = run::run_all(&config)?;
    let mut all_converged = true;
    for r in &results {
        all_converged &= r.converged;
        println!(
            "seed {}: {} iterations, loglik/demo {:.4}, {} clusters{}",
            r.seed,
            r.iterations,
            r.final_loglik,
            r.num_clusters,
            if r.converged { "" } else { " (not converged)" }
        );
    }
    println!("wrote {}", config.out.join(config.run_name()).display());
    Ok(if all_converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn report(args: &ReportArgs) -> Result<u8> {
    let runs = report::load_runs(&args.runs)?;
    if runs.is_empty() {
        eprintln!("error: no completed runs under the given directories");
        return Ok(EXIT_USAGE);
    }
    let built = report::build_report(&runs)?;
    report::write_report(&args.out, &built)?;
    print!("{}", report::render_table(&built));
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::GenDemos(a) => gen_demos(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
