//! Fine-scale loss functionals: L2 fit of the coarse residual, Ritz energy
//! and strong-form collocation, each with an optional residual-free penalty
//! that pins the network to zero at the coarse nodes.
//!
//! The coarse field is frozen data; no gradient flows into its coefficients.

use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::Point;
use crate::mesh::{CoarseSolution, MeshError};
use crate::objective::{LossAccumulator, Term};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("penalty {name} must be finite and nonnegative, got {value}")]
    InvalidPenalty { name: &'static str, value: f64 },
    #[error("residual-free variants need the coarse node set")]
    MissingNodes,
    #[error("a boundary rule is required when the boundary penalty is positive")]
    MissingBoundaryRule,
    #[error("loss variant {0:?} does not apply here")]
    WrongVariant(LossVariant),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    ApproxL2,
    ApproxL2ResidualFree,
    Energy,
    EnergyResidualFree,
    Collocation,
    CollocationResidualFree,
}

impl LossVariant {
    pub const ALL: [LossVariant; 6] = [
        LossVariant::ApproxL2,
        LossVariant::ApproxL2ResidualFree,
        LossVariant::Energy,
        LossVariant::EnergyResidualFree,
        LossVariant::Collocation,
        LossVariant::CollocationResidualFree,
    ];

    pub fn residual_free(self) -> bool {
        matches!(
            self,
            LossVariant::ApproxL2ResidualFree | LossVariant::EnergyResidualFree | LossVariant::CollocationResidualFree
        )
    }

    /// Approximation (function fitting) as opposed to PDE losses.
    pub fn is_approximation(self) -> bool {
        matches!(self, LossVariant::ApproxL2 | LossVariant::ApproxL2ResidualFree)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::ApproxL2 => "approx-l2",
            LossVariant::ApproxL2ResidualFree => "approx-l2-residual-free",
            LossVariant::Energy => "energy",
            LossVariant::EnergyResidualFree => "energy-residual-free",
            LossVariant::Collocation => "collocation",
            LossVariant::CollocationResidualFree => "collocation-residual-free",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// `alpha_p` boundary penalty (energy), `beta_d` nodal residual-free penalty,
/// `beta_c` collocation boundary weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalties {
    pub alpha_p: f64,
    pub beta_d: f64,
    pub beta_c: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Penalties { alpha_p: 100.0, beta_d: 1.0, beta_c: 1.0 }
    }
}

impl Penalties {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [("alpha_p", self.alpha_p), ("beta_d", self.beta_d), ("beta_c", self.beta_c)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LossError::InvalidPenalty { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossSpec {
    pub variant: LossVariant,
    pub penalties: Penalties,
    pub interior: QuadratureRule,
    pub boundary: Option<QuadratureRule>,
    /// Coarse mesh nodes for the residual-free term.
    pub nodes: Vec<Point>,
}

impl LossSpec {
    fn validate(&self) -> Result<(), LossError> {
        self.penalties.validate()?;
        if self.variant.residual_free() && self.nodes.is_empty() {
            return Err(LossError::MissingNodes);
        }
        Ok(())
    }

    fn nodal_penalty(&self, acc: &mut LossAccumulator, weight: f64) {
        if self.variant.residual_free() && self.penalties.beta_d > 0.0 {
            for p in &self.nodes {
                acc.push(*p, weight, Term::Fit { target: 0.0 });
            }
        }
    }
}

/// Anything that can supply the frozen coarse gradient at a point.
pub trait GradientField {
    fn gradient_at(&self, p: &Point) -> Result<[f64; 2], MeshError>;
}

impl GradientField for CoarseSolution {
    fn gradient_at(&self, p: &Point) -> Result<[f64; 2], MeshError> {
        self.interpolate_gradient(p)
    }
}

/// `int (r - N)^2 dOmega`, plus `beta_d sum_I N(x_I)^2` for the residual-free form.
pub fn approx_l2_loss(residual_target: impl Fn(&Point) -> f64, spec: &LossSpec) -> Result<LossAccumulator, LossError> {
    if !spec.variant.is_approximation() {
        return Err(LossError::WrongVariant(spec.variant));
    }
    spec.validate()?;
    let mut acc = LossAccumulator::new(spec.interior.dim());
    for (p, w) in spec.interior.iter() {
        acc.push(*p, w, Term::Fit { target: residual_target(p) });
    }
    spec.nodal_penalty(&mut acc, spec.penalties.beta_d);
    Ok(acc)
}

/// `1/2 int |grad N|^2 + int grad u_c . grad N - int N f
///  + alpha_p/2 int_Gamma N^2 (+ beta_d sum_I N(x_I)^2)`.
pub fn energy_loss(
    coarse: &dyn GradientField,
    source: impl Fn(&Point) -> f64,
    spec: &LossSpec,
) -> Result<LossAccumulator, LossError> {
    if !matches!(spec.variant, LossVariant::Energy | LossVariant::EnergyResidualFree) {
        return Err(LossError::WrongVariant(spec.variant));
    }
    spec.validate()?;
    let mut acc = LossAccumulator::new(spec.interior.dim());
    for (p, w) in spec.interior.iter() {
        acc.push(*p, w, Term::Energy { coarse_gradient: coarse.gradient_at(p)?, source: source(p) });
    }
    if spec.penalties.alpha_p > 0.0 {
        let boundary = spec.boundary.as_ref().ok_or(LossError::MissingBoundaryRule)?;
        for (p, w) in boundary.iter() {
            acc.push(*p, 0.5 * spec.penalties.alpha_p * w, Term::Fit { target: 0.0 });
        }
    }
    spec.nodal_penalty(&mut acc, spec.penalties.beta_d);
    Ok(acc)
}

/// `1/N_f sum_i (-Laplace N - Laplace u_c - f)^2 + beta_c/N_u sum_j N_j^2
///  (+ beta_d/N_P sum_I N(x_I)^2)`.
///
/// The coarse Laplacian is taken element-wise and is zero for linear and
/// bilinear elements.
pub fn collocation_loss(
    coarse: &CoarseSolution,
    source: impl Fn(&Point) -> f64,
    spec: &LossSpec,
) -> Result<LossAccumulator, LossError> {
    if !matches!(spec.variant, LossVariant::Collocation | LossVariant::CollocationResidualFree) {
        return Err(LossError::WrongVariant(spec.variant));
    }
    spec.validate()?;
    let mut acc = LossAccumulator::new(spec.interior.dim());
    let n_f = spec.interior.len() as f64;
    for p in &spec.interior.points {
        let rhs = coarse.interpolate_laplacian(p)? + source(p);
        acc.push(*p, 1.0 / n_f, Term::StrongResidual { rhs });
    }
    if spec.penalties.beta_c > 0.0 {
        let boundary = spec.boundary.as_ref().ok_or(LossError::MissingBoundaryRule)?;
        let n_u = boundary.len() as f64;
        for p in &boundary.points {
            acc.push(*p, spec.penalties.beta_c / n_u, Term::Fit { target: 0.0 });
        }
    }
    let n_p = spec.nodes.len().max(1) as f64;
    spec.nodal_penalty(&mut acc, spec.penalties.beta_d / n_p);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxDomain;
    use crate::mesh::{interpolate_coefficients, Mesh};
    use crate::objective::NetEval;

    fn spec(variant: LossVariant, nodes: Vec<Point>) -> LossSpec {
        let d = BoxDomain::interval(-1.0, 1.0);
        LossSpec {
            variant,
            penalties: Penalties::default(),
            interior: QuadratureRule::nodal_grid(&d, [60, 1]).unwrap(),
            boundary: Some(QuadratureRule::boundary(&d, [60, 1]).unwrap()),
            nodes,
        }
    }

    fn constant(c: f64) -> impl Fn(&Point) -> NetEval {
        move |_| NetEval { value: c, ..Default::default() }
    }

    #[test]
    fn approx_examples() {
        let s = spec(LossVariant::ApproxL2, Vec::new());
        let acc = approx_l2_loss(|_| 0.0, &s).unwrap();
        assert_eq!(acc.evaluate_field(constant(0.0)), 0.0);
        let acc = approx_l2_loss(|_| 1.0, &s).unwrap();
        assert!((acc.evaluate_field(constant(0.0)) - 2.0).abs() < 1e-14);

        // residual-free part alone: beta_d * N_P * c^2
        let mesh = Mesh::uniform_1d(-1.0, 1.0, 4).unwrap();
        let mut s = spec(LossVariant::ApproxL2ResidualFree, mesh.node_points());
        s.penalties.beta_d = 3.0;
        let acc = approx_l2_loss(|_| 0.5, &s).unwrap();
        let total = acc.evaluate_field(constant(0.5));
        assert!((total - 3.0 * 5.0 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn residual_free_needs_nodes() {
        let s = spec(LossVariant::ApproxL2ResidualFree, Vec::new());
        assert_eq!(approx_l2_loss(|_| 0.0, &s), Err(LossError::MissingNodes));
    }

    #[test]
    fn penalties_must_be_nonnegative() {
        let mut s = spec(LossVariant::ApproxL2, Vec::new());
        s.penalties.beta_d = -1.0;
        assert!(matches!(approx_l2_loss(|_| 0.0, &s), Err(LossError::InvalidPenalty { name: "beta_d", .. })));
        s.penalties.beta_d = f64::NAN;
        assert!(approx_l2_loss(|_| 0.0, &s).is_err());
    }

    #[test]
    fn energy_examples() {
        let mesh = Mesh::uniform_1d(-1.0, 1.0, 4).unwrap();
        let zero = interpolate_coefficients(&mesh, |_| 0.0);
        let s = spec(LossVariant::Energy, Vec::new());
        let acc = energy_loss(&zero, |_| 1.0, &s).unwrap();
        assert_eq!(acc.evaluate_field(constant(0.0)), 0.0);

        // u_c = 0, f = 0: loss reduces to 1/2 |N|_E^2 + boundary penalty >= 0
        let acc = energy_loss(&zero, |_| 0.0, &s).unwrap();
        let field = |p: &Point| NetEval { value: libm::sin(3.0 * p.x()), grad: [3.0 * libm::cos(3.0 * p.x()), 0.0], ..Default::default() };
        assert!(acc.evaluate_field(field) >= 0.0);
    }

    #[test]
    fn energy_needs_boundary_rule() {
        let mesh = Mesh::uniform_1d(-1.0, 1.0, 4).unwrap();
        let zero = interpolate_coefficients(&mesh, |_| 0.0);
        let mut s = spec(LossVariant::Energy, Vec::new());
        s.boundary = None;
        assert_eq!(energy_loss(&zero, |_| 0.0, &s), Err(LossError::MissingBoundaryRule));
        s.penalties.alpha_p = 0.0;
        assert!(energy_loss(&zero, |_| 0.0, &s).is_ok());
    }

    #[test]
    fn energy_ignores_constant_shift_of_coarse_field() {
        let mesh = Mesh::uniform_1d(-1.0, 1.0, 4).unwrap();
        let a = interpolate_coefficients(&mesh, |p| libm::tanh(3.0 * p.x()));
        let b = interpolate_coefficients(&mesh, |p| libm::tanh(3.0 * p.x()) + 2.5);
        let s = spec(LossVariant::Energy, Vec::new());
        let field = |p: &Point| NetEval { value: p.x() * p.x() - 1.0, grad: [2.0 * p.x(), 0.0], ..Default::default() };
        let la = energy_loss(&a, |_| 1.0, &s).unwrap().evaluate_field(field);
        let lb = energy_loss(&b, |_| 1.0, &s).unwrap().evaluate_field(field);
        assert!((la - lb).abs() < 1e-14);
    }

    #[test]
    fn collocation_examples() {
        let mesh = Mesh::uniform_1d(-1.0, 1.0, 4).unwrap();
        let zero = interpolate_coefficients(&mesh, |_| 0.0);
        let s = spec(LossVariant::Collocation, Vec::new());
        let acc = collocation_loss(&zero, |_| 0.0, &s).unwrap();
        assert_eq!(acc.evaluate_field(constant(0.0)), 0.0);
        let acc = collocation_loss(&zero, |_| 1.0, &s).unwrap();
        assert!((acc.evaluate_field(constant(0.0)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wrong_variant_is_rejected() {
        let mesh = Mesh::uniform_1d(-1.0, 1.0, 4).unwrap();
        let zero = interpolate_coefficients(&mesh, |_| 0.0);
        let s = spec(LossVariant::Energy, Vec::new());
        assert!(matches!(approx_l2_loss(|_| 0.0, &s), Err(LossError::WrongVariant(_))));
        assert!(matches!(collocation_loss(&zero, |_| 0.0, &s), Err(LossError::WrongVariant(_))));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in LossVariant::ALL {
            assert_eq!(LossVariant::from_name(v.name()), Some(v));
        }
        assert_eq!(LossVariant::from_name("bogus"), None);
    }
}
