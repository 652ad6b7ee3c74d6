//! The hierarchical pipeline: coarse solve, optional gradient smoothing,
//! fine-scale training, and the superposed solution `u = u_c + N`.

use core::cell::Cell;

use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::Point;
use crate::losses::{approx_l2_loss, collocation_loss, energy_loss, GradientField, LossError, LossSpec, LossVariant, Penalties};
use crate::mesh::{interpolate_coefficients, solve_poisson_coarse, CoarseSolution, FemError, MeshError};
use crate::nnet::{MlpNet, NetError};
use crate::objective::LossAccumulator;
use crate::problems::{l2_error_sampled, CaseKind, ProblemCase, ProblemError};
use crate::quadrature::{QuadratureError, QuadratureRule};
use crate::smoothing::{potential_refinement, recover_gradient, SmoothedGradientField};
use crate::training::{train, TrainConfig, TrainError, TrainTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("loss {variant:?} is not valid for a {kind:?} case")]
    IncompatibleLoss { variant: LossVariant, kind: CaseKind },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// How the interior loss integrals are discretized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuadratureSpec {
    NodalGrid { counts: [usize; 2] },
    GaussCells { cells: [usize; 2], points_per_dim: usize },
    MonteCarlo { points: usize, seed: u64 },
}

impl QuadratureSpec {
    pub fn build(&self, case: &ProblemCase) -> Result<QuadratureRule, QuadratureError> {
        match *self {
            QuadratureSpec::NodalGrid { counts } => QuadratureRule::nodal_grid(&case.domain, counts),
            QuadratureSpec::GaussCells { cells, points_per_dim } => QuadratureRule::gauss_cells(&case.domain, cells, points_per_dim),
            QuadratureSpec::MonteCarlo { points, seed } => QuadratureRule::monte_carlo(&case.domain, points, seed),
        }
    }

    /// Per-axis point density for the boundary rule.
    fn boundary_counts(&self, case: &ProblemCase) -> [usize; 2] {
        match *self {
            QuadratureSpec::NodalGrid { counts } => counts,
            _ => case.quadrature_counts,
        }
    }
}

/// Everything that may differ from a case's defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub mesh_counts: [usize; 2],
    pub hidden: Vec<usize>,
    pub loss: LossVariant,
    pub penalties: Penalties,
    pub quadrature: QuadratureSpec,
    pub smoothing: bool,
    pub train: TrainConfig,
}

impl SolveConfig {
    pub fn defaults(case: &ProblemCase) -> Self {
        SolveConfig {
            mesh_counts: case.mesh_counts,
            hidden: case.hidden.clone(),
            loss: case.loss,
            penalties: Penalties::default(),
            quadrature: QuadratureSpec::NodalGrid { counts: case.quadrature_counts },
            smoothing: case.smoothing,
            train: TrainConfig { epochs: case.epochs, learning_rate: case.learning_rate, log_every: 100, ..TrainConfig::default() },
        }
    }

    pub fn validate(&self, case: &ProblemCase) -> Result<(), SolveError> {
        let approx_case = case.kind == CaseKind::Approximation;
        if self.loss.is_approximation() != approx_case {
            return Err(SolveError::IncompatibleLoss { variant: self.loss, kind: case.kind });
        }
        self.penalties.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

/// Step I: nodal interpolation of the target, or a Galerkin solve.
pub fn coarse_solve(case: &ProblemCase, counts: [usize; 2]) -> Result<CoarseSolution, SolveError> {
    let mesh = case.coarse_mesh(counts)?;
    Ok(match case.kind {
        CaseKind::Approximation => interpolate_coefficients(&mesh, |p| case.exact(p).unwrap_or(0.0)),
        CaseKind::Pde => solve_poisson_coarse(&mesh, |p| case.source(p), |p| case.boundary(p))?,
    })
}

/// Builds the fine-scale loss for `case` around a frozen coarse solution.
pub fn build_loss(
    case: &ProblemCase,
    config: &SolveConfig,
    coarse: &CoarseSolution,
    smoothed: Option<&SmoothedGradientField>,
) -> Result<LossAccumulator, SolveError> {
    config.validate(case)?;
    let interior = config.quadrature.build(case)?;
    let boundary = match case.kind {
        CaseKind::Pde => Some(QuadratureRule::boundary(&case.domain, config.quadrature.boundary_counts(case))?),
        CaseKind::Approximation => None,
    };
    let spec = LossSpec {
        variant: config.loss,
        penalties: config.penalties,
        interior,
        boundary,
        nodes: coarse.mesh().node_points(),
    };
    let acc = match config.loss {
        LossVariant::ApproxL2 | LossVariant::ApproxL2ResidualFree => {
            let err = Cell::new(None);
            let acc = approx_l2_loss(
                |p| match coarse.interpolate(p) {
                    Ok(c) => case.exact(p).unwrap_or(0.0) - c,
                    Err(e) => {
                        err.set(Some(e));
                        0.0
                    }
                },
                &spec,
            )?;
            if let Some(e) = err.into_inner() {
                return Err(e.into());
            }
            acc
        }
        LossVariant::Energy | LossVariant::EnergyResidualFree => {
            let field: &dyn GradientField = match smoothed {
                Some(s) => s,
                None => coarse,
            };
            energy_loss(field, |p| case.source(p), &spec)?
        }
        LossVariant::Collocation | LossVariant::CollocationResidualFree => collocation_loss(coarse, |p| case.source(p), &spec)?,
    };
    Ok(acc)
}

/// Result of the three steps.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleSolution {
    pub coarse: CoarseSolution,
    pub smoothed: Option<SmoothedGradientField>,
    /// Potential of the smoothed gradient; replaces `coarse` in the total
    /// value when smoothing is on.
    pub smoothed_coarse: Option<CoarseSolution>,
    pub net: MlpNet,
    pub trace: TrainTrace,
}

/// Values and gradients of the parts of a solution at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    pub coarse: f64,
    pub fine: f64,
    /// Smoothed coarse value (when present) plus the network value.
    pub total: f64,
    /// Element-wise coarse gradient.
    pub d_coarse: [f64; 2],
    pub d_fine: [f64; 2],
    /// Smoothed coarse gradient (when present) plus the network gradient.
    pub d_total: [f64; 2],
}

impl MultiScaleSolution {
    pub fn sample(&self, p: &Point) -> Result<FieldSample, MeshError> {
        let n = self.net.eval(p, 1);
        Ok(self.combine(p, n.value, n.grad)?)
    }

    /// Samples every point of `points`, evaluating the network in batches.
    pub fn sample_many(&self, points: &[Point]) -> Result<Vec<FieldSample>, MeshError> {
        let nets = self.net.eval_many(points, 1);
        points.iter().zip(nets).map(|(p, n)| self.combine(p, n.value, n.grad)).collect()
    }

    fn combine(&self, p: &Point, fine: f64, d_fine: [f64; 2]) -> Result<FieldSample, MeshError> {
        let coarse = self.coarse.interpolate(p)?;
        let d_coarse = self.coarse.interpolate_gradient(p)?;
        let base = match &self.smoothed_coarse {
            Some(s) => s.interpolate(p)?,
            None => coarse,
        };
        let d_base = match &self.smoothed {
            Some(s) => s.gradient(p)?,
            None => d_coarse,
        };
        Ok(FieldSample {
            coarse,
            fine,
            total: base + fine,
            d_coarse,
            d_fine,
            d_total: [d_base[0] + d_fine[0], d_base[1] + d_fine[1]],
        })
    }
}

/// Recovered gradient and its potential, the smoothed coarse solution.
pub fn smooth_coarse(case: &ProblemCase, coarse: &CoarseSolution) -> Result<(SmoothedGradientField, CoarseSolution), SolveError> {
    let g = recover_gradient(coarse);
    let v = g.potential(potential_refinement(case.dim()), |p| case.boundary(p))?;
    Ok((g, v))
}

/// Reference values at the points of a rule, precomputed so that
/// training-time probes only evaluate the network.
pub struct ErrorProbe {
    pub rule: QuadratureRule,
    pub reference: Vec<f64>,
}

impl ErrorProbe {
    pub fn new(rule: QuadratureRule, reference: impl Fn(&Point) -> f64) -> Self {
        let reference = rule.points.iter().map(reference).collect();
        ErrorProbe { rule, reference }
    }

    /// Relative L2 error of `base + net` against the reference, where `base`
    /// holds the coarse part at the rule points.
    pub fn relative_l2(&self, base: &[f64], net: &MlpNet) -> f64 {
        let total: Vec<f64> = net.eval_many(&self.rule.points, 0).iter().zip(base).map(|(n, c)| c + n.value).collect();
        l2_error_sampled(&total, &self.reference, &self.rule).unwrap_or(f64::NAN)
    }
}

/// Steps I-III. With zero epochs the fine scale is skipped: the network is
/// all zeros and the total equals the (smoothed) coarse solution exactly.
pub fn multiscale_solve(
    case: &ProblemCase,
    config: &SolveConfig,
    probe: Option<&ErrorProbe>,
) -> Result<MultiScaleSolution, SolveError> {
    config.validate(case)?;
    let coarse = coarse_solve(case, config.mesh_counts)?;
    let (smoothed, smoothed_coarse) = if config.smoothing {
        let (g, v) = smooth_coarse(case, &coarse)?;
        (Some(g), Some(v))
    } else {
        (None, None)
    };
    let acc = build_loss(case, config, &coarse, smoothed.as_ref())?;
    let net = if config.train.epochs == 0 {
        MlpNet::zeros(case.dim(), &config.hidden)?
    } else {
        MlpNet::new(case.dim(), &config.hidden, config.train.seed)?
    };
    let (net, trace) = match probe {
        Some(p) => {
            let base_field = smoothed_coarse.as_ref().unwrap_or(&coarse);
            let base = p.rule.points.iter().map(|q| base_field.interpolate(q)).collect::<Result<Vec<_>, _>>()?;
            train(net, &acc, &config.train, Some(&mut |n: &MlpNet| p.relative_l2(&base, n)))?
        }
        None => train(net, &acc, &config.train, None)?,
    };
    Ok(MultiScaleSolution { coarse, smoothed, smoothed_coarse, net, trace })
}

/// Error summary of a solution against a reference field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorReport {
    pub coarse_rel_l2: f64,
    /// Network against the true residual `u_ref - u_c`.
    pub fine_rel_l2: f64,
    pub total_rel_l2: f64,
    pub coarse_max: f64,
    pub total_max: f64,
    /// Max pointwise error of du/dx (element-wise coarse and total).
    pub coarse_deriv_max: Option<f64>,
    pub total_deriv_max: Option<f64>,
    /// Largest |du/dx| attained on the evaluation grid.
    pub coarse_peak_dx: f64,
    pub total_peak_dx: f64,
    pub eval_points: usize,
}

/// Evaluates a solution on `rule` against `reference` (and its gradient when
/// supplied).
pub fn error_report(
    sol: &MultiScaleSolution,
    rule: &QuadratureRule,
    reference: impl Fn(&Point) -> f64,
    reference_gradient: Option<&dyn Fn(&Point) -> [f64; 2]>,
) -> Result<ErrorReport, SolveError> {
    let samples = sol.sample_many(&rule.points)?;
    let r: Vec<f64> = rule.points.iter().map(&reference).collect();
    let coarse: Vec<f64> = samples.iter().map(|s| s.coarse).collect();
    let fine: Vec<f64> = samples.iter().map(|s| s.fine).collect();
    let total: Vec<f64> = samples.iter().map(|s| s.total).collect();
    let residual: Vec<f64> = r.iter().zip(&coarse).map(|(a, b)| a - b).collect();
    let max_abs = |a: &[f64]| a.iter().zip(&r).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let mut report = ErrorReport {
        coarse_rel_l2: l2_error_sampled(&coarse, &r, rule)?,
        fine_rel_l2: l2_error_sampled(&fine, &residual, rule).unwrap_or(0.0),
        total_rel_l2: l2_error_sampled(&total, &r, rule)?,
        coarse_max: max_abs(&coarse),
        total_max: max_abs(&total),
        coarse_deriv_max: None,
        total_deriv_max: None,
        coarse_peak_dx: samples.iter().fold(0.0f64, |m, s| m.max(s.d_coarse[0].abs())),
        total_peak_dx: samples.iter().fold(0.0f64, |m, s| m.max(s.d_total[0].abs())),
        eval_points: rule.len(),
    };
    if let Some(g) = reference_gradient {
        let dim = rule.dim();
        let (mut ce, mut te) = (0.0f64, 0.0f64);
        for (p, s) in rule.points.iter().zip(&samples) {
            let gr = g(p);
            for a in 0..dim {
                ce = ce.max((s.d_coarse[a] - gr[a]).abs());
                te = te.max((s.d_total[a] - gr[a]).abs());
            }
        }
        report.coarse_deriv_max = Some(ce);
        report.total_deriv_max = Some(te);
    }
    Ok(report)
}
