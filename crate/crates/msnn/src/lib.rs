//! Experiment runner for the two-scale solver: configuration, reference
//! caching, CSV and text artifacts, and the `msnn` command line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use msnn_core::multiscale::{error_report, multiscale_solve, ErrorProbe, SolveError};
use msnn_core::nnet::count_params;
use msnn_core::training::TrainError;
use msnn_core::{CaseId, CaseKind, CoarseSolution, ErrorReport, MultiScaleSolution, Point, ProblemCase, QuadratureRule, SolveConfig};
use thiserror::Error;

pub mod config;
pub mod formats;
pub mod reference;

pub use config::{ConfigError, ExperimentConfig};
use formats::{fields_csv, trace_csv, write_net, FormatError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("seed {seed}: training diverged: {source}")]
    Diverged { seed: u64, source: TrainError },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for divergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Diverged { .. } => 2,
            _ => 1,
        }
    }
}

/// The field errors are measured against.
pub enum Reference {
    Analytic(ProblemCase),
    Discrete(CoarseSolution),
}

impl Reference {
    pub fn for_case(case: &ProblemCase, cache: &Path) -> Result<Self, RunError> {
        Ok(match case.id {
            CaseId::Poisson2dSlit => Reference::Discrete(reference::load_or_compute(cache)?),
            _ => Reference::Analytic(case.clone()),
        })
    }

    pub fn value(&self, p: &Point) -> f64 {
        match self {
            Reference::Analytic(c) => c.exact(p).expect("analytic cases have an exact solution"),
            Reference::Discrete(s) => s.interpolate(p).expect("reference covers the domain"),
        }
    }

    pub fn gradient(&self, p: &Point) -> Option<[f64; 2]> {
        match self {
            Reference::Analytic(c) => c.exact_gradient(p),
            Reference::Discrete(_) => None,
        }
    }
}

pub struct SeedRun {
    pub seed: u64,
    pub solution: MultiScaleSolution,
    pub report: ErrorReport,
    pub wall: Duration,
}

pub struct RunSummary {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRun>,
    /// Index into `seeds` of the lowest total error.
    pub best: usize,
    pub params: usize,
    pub wall: Duration,
}

impl RunSummary {
    pub fn best(&self) -> &SeedRun {
        &self.seeds[self.best]
    }
}

/// Trains one network for `seed` and evaluates it on `rule`.
pub fn run_seed(
    case: &ProblemCase,
    solve: &SolveConfig,
    seed: u64,
    probe: &ErrorProbe,
    reference: &Reference,
) -> Result<SeedRun, RunError> {
    let start = Instant::now();
    let mut cfg = solve.clone();
    cfg.train.seed = seed;
    let solution = multiscale_solve(case, &cfg, Some(probe)).map_err(|e| match e {
        SolveError::Train(source @ TrainError::NonFinite { .. }) => RunError::Diverged { seed, source },
        e => RunError::Solve(e),
    })?;
    let grad = |p: &Point| reference.gradient(p).unwrap_or([0.0; 2]);
    let has_grad = matches!(reference, Reference::Analytic(_));
    let report = error_report(&solution, &probe.rule, |p| reference.value(p), has_grad.then_some(&grad as &dyn Fn(&Point) -> [f64; 2]))?;
    Ok(SeedRun { seed, solution, report, wall: start.elapsed() })
}

/// Trains every seed of `config` (concurrently with `parallel`) without
/// touching the disk, except for the reference cache.
pub fn execute(config: &ExperimentConfig, parallel: bool) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    let (case, solve) = config.resolve()?;
    let reference = Reference::for_case(&case, &config.output.reference_cache)?;
    let rule = case.evaluation_rule().map_err(SolveError::from)?;
    let probe = ErrorProbe::new(rule, |p| reference.value(p));
    let seeds = &config.net.seeds;
    let runs: Vec<Result<SeedRun, RunError>> = if parallel && seeds.len() > 1 {
        std::thread::scope(|s| {
            let (case, solve, probe, reference) = (&case, &solve, &probe, &reference);
            let handles: Vec<_> = seeds.iter().map(|&seed| s.spawn(move || run_seed(case, solve, seed, probe, reference))).collect();
            handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
        })
    } else {
        seeds.iter().map(|&seed| run_seed(&case, &solve, seed, &probe, &reference)).collect()
    };
    let seeds = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let best = seeds
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.report.total_rel_l2.total_cmp(&b.1.report.total_rel_l2))
        .map(|(i, _)| i)
        .expect("at least one seed");
    Ok(RunSummary {
        config: config.clone(),
        seeds,
        best,
        params: count_params(case.dim(), &solve.hidden),
        wall: start.elapsed(),
    })
}

/// Runs `config` and writes its artifacts under `config.output.dir`:
/// `seed_<s>/trace.csv` for every seed, then `trace.csv`, `fields.csv` and
/// `net.txt` of the best seed, and `report.txt`.
pub fn run(config: &ExperimentConfig, parallel: bool) -> Result<RunSummary, RunError> {
    let summary = execute(config, parallel)?;
    write_artifacts(&summary)?;
    Ok(summary)
}

pub fn write_artifacts(summary: &RunSummary) -> Result<(), RunError> {
    let dir = &summary.config.output.dir;
    fs::create_dir_all(dir)?;
    for s in &summary.seeds {
        let sub = dir.join(format!("seed_{}", s.seed));
        fs::create_dir_all(&sub)?;
        fs::write(sub.join("trace.csv"), trace_csv(&s.solution.trace))?;
    }
    let best = summary.best();
    fs::write(dir.join("trace.csv"), trace_csv(&best.solution.trace))?;
    fs::write(dir.join("fields.csv"), sample_fields(summary)?)?;
    let mut net = Vec::new();
    write_net(&best.solution.net, &mut net)?;
    fs::write(dir.join("net.txt"), net)?;
    fs::write(dir.join("report.txt"), report_text(summary))?;
    Ok(())
}

fn sample_fields(summary: &RunSummary) -> Result<String, RunError> {
    let case = summary.config.problem()?;
    let rule = QuadratureRule::nodal_grid(&case.domain, summary.config.sample_counts()).map_err(SolveError::from)?;
    let samples = summary.best().solution.sample_many(&rule.points).map_err(SolveError::from)?;
    let exact: Vec<_> = rule.points.iter().map(|p| Some((case.exact(p)?, case.exact_gradient(p)?))).collect();
    Ok(fields_csv(case.dim(), &rule.points, &samples, &exact))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6e}"))
}

/// Error table per seed, run metadata, and the resolved config.
pub fn report_text(summary: &RunSummary) -> String {
    let c = &summary.config;
    let mut s = String::new();
    writeln!(s, "case: {}", c.case.id).unwrap();
    if let Some(v) = c.case.s {
        writeln!(s, "s: {v}").unwrap();
    }
    writeln!(s, "parameters: {}", summary.params).unwrap();
    writeln!(s, "wall time: {:.3} s", summary.wall.as_secs_f64()).unwrap();
    writeln!(s, "evaluation points: {}", summary.best().report.eval_points).unwrap();
    writeln!(s, "best seed: {}", summary.best().seed).unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:>6} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>9}",
        "seed",
        "total_rel_l2",
        "coarse_rel_l2",
        "fine_rel_l2",
        "total_max",
        "coarse_max",
        "total_dmax",
        "coarse_dmax",
        "total_peak_dx",
        "coarse_peak",
        "final_loss",
        "wall_s"
    )
    .unwrap();
    for r in &summary.seeds {
        let e = &r.report;
        writeln!(
            s,
            "{:>6} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13} {:>13} {:>13.6e} {:>13.6e} {:>13} {:>9.3}",
            r.seed,
            e.total_rel_l2,
            e.coarse_rel_l2,
            e.fine_rel_l2,
            e.total_max,
            e.coarse_max,
            opt(e.total_deriv_max),
            opt(e.coarse_deriv_max),
            e.total_peak_dx,
            e.coarse_peak_dx,
            opt(r.solution.trace.final_loss()),
            r.wall.as_secs_f64()
        )
        .unwrap();
    }
    writeln!(s, "\n# resolved config\n{}", c.to_toml()).unwrap();
    s
}

/// One row per case with its default discretization.
pub fn list_cases() -> String {
    let mut s = String::new();
    writeln!(s, "{:<16} {:<14} {:>7} {:<20} {:>7} {:>10} {:>8} {:<12} {:<9}", "case", "kind", "mesh", "net", "params", "quadrature", "epochs", "loss", "smoothing")
        .unwrap();
    for id in CaseId::ALL {
        let c = msnn_core::get_case(id, None).expect("registered case");
        let grid = |v: [usize; 2]| if c.dim() == 1 { v[0].to_string() } else { format!("{}x{}", v[0], v[1]) };
        let net: Vec<String> = c.hidden.iter().map(|n| n.to_string()).collect();
        writeln!(
            s,
            "{:<16} {:<14} {:>7} {:<20} {:>7} {:>10} {:>8} {:<12} {:<9}",
            id.name(),
            match c.kind {
                CaseKind::Approximation => "approximation",
                CaseKind::Pde => "pde",
            },
            grid(c.mesh_counts),
            format!("({})", net.join(",")),
            count_params(c.dim(), &c.hidden),
            grid(c.quadrature_counts),
            c.epochs,
            c.loss.name(),
            if c.smoothing { "on" } else { "off" }
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_has_one_row_per_case() {
        let t = list_cases();
        let rows: Vec<&str> = t.lines().skip(1).collect();
        assert_eq!(rows.len(), 6);
        let laplace = rows.iter().find(|r| r.starts_with("laplace1d")).unwrap();
        assert_eq!(laplace.split_whitespace().nth(2), Some("10"));
        let slit = rows.iter().find(|r| r.starts_with("poisson2d-slit")).unwrap();
        assert_eq!(slit.split_whitespace().nth(5), Some("151x151"));
    }

    #[test]
    fn divergence_has_its_own_exit_code() {
        let e = RunError::Diverged { seed: 0, source: TrainError::NonFinite { epoch: 3, loss: f64::NAN } };
        assert_eq!(e.exit_code(), 2);
        assert_eq!(RunError::Config(ConfigError::NoSeeds).exit_code(), 1);
    }
}
