use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msnn::config::ExperimentConfig;
use msnn::{list_cases, reference, run, ConfigError, RunError};
use msnn_core::CaseId;

#[derive(Parser)]
#[command(name = "msnn", version, about = "Two-scale FEM + neural network benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one case and write trace.csv, fields.csv, net.txt and report.txt.
    Run(RunArgs),
    /// Print the registered cases with their defaults.
    ListCases,
    /// Compute the slit reference solution and write it to the cache file.
    Reference {
        #[arg(long)]
        case: String,
        #[arg(long, default_value = msnn::config::DEFAULT_REFERENCE_CACHE)]
        output: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    case: Option<String>,
    /// Localization parameter of laplace1d.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, conflicts_with = "no_smoothing")]
    smoothing: bool,
    #[arg(long)]
    no_smoothing: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    reference_cache: Option<PathBuf>,
    /// Train the seeds on separate threads.
    #[arg(long)]
    parallel_seeds: bool,
}

fn load_config(a: &RunArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text, a.case.as_deref())?
        }
        None => {
            let name = a.case.as_deref().ok_or_else(|| ConfigError::Invalid("either --case or --config is required".into()))?;
            let id = CaseId::from_name(name).ok_or_else(|| ConfigError::UnknownCase(name.into()))?;
            ExperimentConfig::defaults(id, None)?
        }
    };
    if let Some(s) = a.s {
        cfg.case.s = Some(s);
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(seeds) = &a.seeds {
        cfg.net.seeds = seeds.clone();
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if a.smoothing || a.no_smoothing {
        cfg.solver.smoothing = a.smoothing;
    }
    if let Some(o) = &a.output {
        cfg.output.dir = o.clone();
    }
    if let Some(r) = &a.reference_cache {
        cfg.output.reference_cache = r.clone();
    }
    cfg.resolve()?;
    Ok(cfg)
}

fn run_command(a: &RunArgs) -> Result<(), RunError> {
    let cfg = load_config(a)?;
    let summary = run(&cfg, a.parallel_seeds)?;
    let best = summary.best();
    println!(
        "{}: best seed {} total rel L2 {:.4e} (coarse {:.4e}), {:.1} s, artifacts in {}",
        cfg.case.id,
        best.seed,
        best.report.total_rel_l2,
        best.report.coarse_rel_l2,
        summary.wall.as_secs_f64(),
        cfg.output.dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run_command(a),
        Command::ListCases => {
            print!("{}", list_cases());
            Ok(())
        }
        Command::Reference { case, output } => {
            if case != CaseId::Poisson2dSlit.name() {
                Err(ConfigError::Invalid(format!("no reference solution is computed for {case}")).into())
            } else {
                reference::compute_and_store(output).map(|_| println!("wrote {}", output.display()))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
