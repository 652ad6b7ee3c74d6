//! The benchmark cases: targets, sources, boundary data, analytic solutions,
//! their defaults, and the L2 error metrics used to judge them.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{BoxDomain, Point, Slit};
use crate::losses::LossVariant;
use crate::mesh::{solve_poisson_coarse, CoarseSolution, FemError, Mesh, MeshError};
use crate::quadrature::{pairwise_sum, QuadratureError, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("localization parameter s must be positive and finite, got {0}")]
    InvalidParameter(f64),
    #[error("reference field has zero L2 norm")]
    ZeroNorm,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseId {
    Approx1dCont,
    Approx1dDisc,
    Approx2dCont,
    Approx2dDisc,
    Laplace1d,
    Poisson2dSlit,
}

impl CaseId {
    pub const ALL: [CaseId; 6] = [
        CaseId::Approx1dCont,
        CaseId::Approx1dDisc,
        CaseId::Approx2dCont,
        CaseId::Approx2dDisc,
        CaseId::Laplace1d,
        CaseId::Poisson2dSlit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Approx1dCont => "approx1d-cont",
            CaseId::Approx1dDisc => "approx1d-disc",
            CaseId::Approx2dCont => "approx2d-cont",
            CaseId::Approx2dDisc => "approx2d-disc",
            CaseId::Laplace1d => "laplace1d",
            CaseId::Poisson2dSlit => "poisson2d-slit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        CaseId::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    Approximation,
    Pde,
}

pub const DEFAULT_LOCALIZATION: f64 = 5.0;

/// `H(0) = 1`.
#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// A fully populated benchmark with its default discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemCase {
    pub id: CaseId,
    /// Localization parameter; only read by `laplace1d`.
    pub s: f64,
    pub kind: CaseKind,
    pub domain: BoxDomain,
    pub mesh_counts: [usize; 2],
    pub hidden: Vec<usize>,
    pub quadrature_counts: [usize; 2],
    pub epochs: usize,
    /// Adam step size. The jump target needs a larger step to sharpen its
    /// transition within the epoch budget.
    pub learning_rate: f64,
    pub loss: LossVariant,
    /// On for the 1D Laplace problem. Off on the slit, where nodal averaging
    /// is first order at boundary nodes and its potential lies further from
    /// the solution than the coarse field does.
    pub smoothing: bool,
}

pub fn get_case(id: CaseId, s: Option<f64>) -> Result<ProblemCase, ProblemError> {
    let s = s.unwrap_or(DEFAULT_LOCALIZATION);
    if !(s.is_finite() && s > 0.0) {
        return Err(ProblemError::InvalidParameter(s));
    }
    let square = BoxDomain::rectangle((-1.0, 1.0), (-1.0, 1.0));
    let approx = |domain, mesh_counts, hidden: &[usize], quadrature_counts, epochs, learning_rate| ProblemCase {
        id,
        s,
        kind: CaseKind::Approximation,
        domain,
        mesh_counts,
        hidden: hidden.to_vec(),
        quadrature_counts,
        epochs,
        learning_rate,
        loss: LossVariant::ApproxL2ResidualFree,
        smoothing: false,
    };
    Ok(match id {
        CaseId::Approx1dCont => approx(BoxDomain::interval(-1.0, 1.0), [4, 1], &[4, 7], [60, 1], 18000, 1e-3),
        CaseId::Approx1dDisc => approx(BoxDomain::interval(-1.0, 1.0), [3, 1], &[4, 8], [60, 1], 18000, 5e-3),
        CaseId::Approx2dCont => approx(square, [2, 2], &[8, 18, 5], [40, 40], 50000, 1e-3),
        CaseId::Approx2dDisc => approx(square, [3, 3], &[8, 25, 10, 5], [40, 40], 100000, 1e-3),
        CaseId::Laplace1d => ProblemCase {
            id,
            s,
            kind: CaseKind::Pde,
            domain: BoxDomain::interval(0.0, 6.0),
            mesh_counts: [10, 1],
            hidden: vec![4, 8, 5],
            quadrature_counts: [301, 1],
            epochs: 28000,
            learning_rate: 1e-3,
            loss: LossVariant::Energy,
            smoothing: true,
        },
        CaseId::Poisson2dSlit => ProblemCase {
            id,
            s,
            kind: CaseKind::Pde,
            domain: square.with_slit(Slit::unit_right()),
            mesh_counts: [8, 8],
            hidden: vec![10, 15, 25, 15, 10],
            quadrature_counts: [151, 151],
            epochs: 220000,
            learning_rate: 1e-3,
            loss: LossVariant::Energy,
            smoothing: false,
        },
    })
}

impl ProblemCase {
    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// Function to approximate (approximation cases) or the analytic
    /// solution (PDE cases); `None` for the slit problem.
    pub fn exact(&self, p: &Point) -> Option<f64> {
        let (x, y) = (p.x(), p.y());
        Some(match self.id {
            CaseId::Approx1dCont => 0.5 * x + x * x * x + libm::tanh(10.0 * x),
            CaseId::Approx1dDisc => 0.5 * (x - 1.0) + heaviside(x),
            CaseId::Approx2dCont => 2.0 * (1.0 + y) / ((3.0 + x) * (3.0 + x) + (1.0 + y) * (1.0 + y)),
            CaseId::Approx2dDisc => heaviside(x.abs() + y) - 0.5 * (x + y),
            CaseId::Laplace1d => libm::tanh(self.s * (x - 3.0)),
            CaseId::Poisson2dSlit => return None,
        })
    }

    /// Gradient of `exact`, away from any jump.
    pub fn exact_gradient(&self, p: &Point) -> Option<[f64; 2]> {
        let (x, y) = (p.x(), p.y());
        Some(match self.id {
            CaseId::Approx1dCont => {
                let t = libm::tanh(10.0 * x);
                [0.5 + 3.0 * x * x + 10.0 * (1.0 - t * t), 0.0]
            }
            CaseId::Approx1dDisc => [0.5, 0.0],
            CaseId::Approx2dCont => {
                let (a, b) = (3.0 + x, 1.0 + y);
                let q = a * a + b * b;
                [-4.0 * a * b / (q * q), 2.0 * (a * a - b * b) / (q * q)]
            }
            CaseId::Approx2dDisc => [-0.5, -0.5],
            CaseId::Laplace1d => {
                let t = libm::tanh(self.s * (x - 3.0));
                [self.s * (1.0 - t * t), 0.0]
            }
            CaseId::Poisson2dSlit => return None,
        })
    }

    /// Right-hand side of `-Laplace(u) = f`; zero for approximation cases.
    pub fn source(&self, p: &Point) -> f64 {
        match self.id {
            CaseId::Laplace1d => {
                let t = libm::tanh(self.s * (p.x() - 3.0));
                2.0 * self.s * self.s * t * (1.0 - t * t)
            }
            CaseId::Poisson2dSlit => 1.0,
            _ => 0.0,
        }
    }

    /// Dirichlet data.
    pub fn boundary(&self, p: &Point) -> f64 {
        match self.id {
            CaseId::Poisson2dSlit => 0.0,
            _ => self.exact(p).unwrap_or(0.0),
        }
    }

    pub fn coarse_mesh(&self, counts: [usize; 2]) -> Result<Mesh, MeshError> {
        let d = &self.domain;
        if d.dim == 1 {
            Mesh::uniform_1d(d.lower[0], d.upper[0], counts[0])
        } else {
            Mesh::uniform_2d((d.lower[0], d.upper[0]), (d.lower[1], d.upper[1]), counts[0], counts[1], d.slit)
        }
    }

    /// Dense nodal grid used for error reports and field export.
    pub fn evaluation_rule(&self) -> Result<QuadratureRule, QuadratureError> {
        if self.dim() == 1 {
            QuadratureRule::nodal_grid(&self.domain, [2001, 1])
        } else {
            QuadratureRule::nodal_grid(&self.domain, [201, 201])
        }
    }
}

/// `sqrt(int (a - b)^2)` over `rule`.
pub fn l2_error_abs(a: impl Fn(&Point) -> f64, b: impl Fn(&Point) -> f64, rule: &QuadratureRule) -> f64 {
    libm::sqrt(rule.integrate(|p| {
        let d = a(p) - b(p);
        d * d
    }))
}

/// `sqrt(int (a - b)^2) / sqrt(int b^2)` over `rule`.
pub fn l2_error(a: impl Fn(&Point) -> f64, b: impl Fn(&Point) -> f64, rule: &QuadratureRule) -> Result<f64, ProblemError> {
    let mut diff = Vec::with_capacity(rule.len());
    let mut norm = Vec::with_capacity(rule.len());
    for (p, w) in rule.iter() {
        let (va, vb) = (a(p), b(p));
        diff.push(w * (va - vb) * (va - vb));
        norm.push(w * vb * vb);
    }
    relative_from_sums(pairwise_sum(&diff), pairwise_sum(&norm))
}

/// Relative L2 error from sampled values on `rule`.
pub fn l2_error_sampled(a: &[f64], b: &[f64], rule: &QuadratureRule) -> Result<f64, ProblemError> {
    assert!(a.len() == rule.len() && b.len() == rule.len());
    let diff: Vec<f64> = rule.weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x - y) * (x - y)).collect();
    let norm: Vec<f64> = rule.weights.iter().zip(b).map(|(w, y)| w * y * y).collect();
    relative_from_sums(pairwise_sum(&diff), pairwise_sum(&norm))
}

fn relative_from_sums(diff: f64, norm: f64) -> Result<f64, ProblemError> {
    if norm <= 0.0 {
        return Err(ProblemError::ZeroNorm);
    }
    Ok(libm::sqrt(diff / norm))
}

pub const REFERENCE_CELLS: usize = 100;

/// Full-integration bilinear solve of the slit Poisson problem on a
/// `100 x 100` mesh.
pub fn reference_poisson_slit() -> Result<CoarseSolution, ProblemError> {
    let case = get_case(CaseId::Poisson2dSlit, None)?;
    let mesh = case.coarse_mesh([REFERENCE_CELLS, REFERENCE_CELLS])?;
    Ok(solve_poisson_coarse(&mesh, |p| case.source(p), |p| case.boundary(p))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_round_trip() {
        for id in CaseId::ALL {
            assert_eq!(CaseId::from_name(id.name()), Some(id));
        }
        assert_eq!(CaseId::from_name("burgers"), None);
    }

    #[test]
    fn registry_defaults() {
        let meshes = [[4, 1], [3, 1], [2, 2], [3, 3], [10, 1], [8, 8]];
        let quad = [[60, 1], [60, 1], [40, 40], [40, 40], [301, 1], [151, 151]];
        let epochs = [18000, 18000, 50000, 100000, 28000, 220000];
        let nets: [&[usize]; 6] = [&[4, 7], &[4, 8], &[8, 18, 5], &[8, 25, 10, 5], &[4, 8, 5], &[10, 15, 25, 15, 10]];
        for (k, id) in CaseId::ALL.into_iter().enumerate() {
            let c = get_case(id, None).unwrap();
            assert_eq!(c.mesh_counts, meshes[k]);
            assert_eq!(c.quadrature_counts, quad[k]);
            assert_eq!(c.epochs, epochs[k]);
            assert_eq!(c.hidden, nets[k]);
            assert_eq!(c.smoothing, id == CaseId::Laplace1d);
        }
    }

    #[test]
    fn invalid_localization() {
        assert!(get_case(CaseId::Laplace1d, Some(0.0)).is_err());
        assert!(get_case(CaseId::Laplace1d, Some(f64::NAN)).is_err());
    }

    #[test]
    fn laplace_values() {
        let c = get_case(CaseId::Laplace1d, Some(5.0)).unwrap();
        assert_eq!(c.exact(&Point::new1(3.0)), Some(0.0));
        assert_eq!(c.exact(&Point::new1(0.0)), Some(-libm::tanh(15.0)));
        assert!((c.boundary(&Point::new1(6.0)) - libm::tanh(15.0)).abs() < 1e-12);
        assert_eq!(c.source(&Point::new1(3.0)), 0.0);
    }

    #[test]
    fn laplace_source_is_minus_second_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in [5.0, 12.0] {
            let c = get_case(CaseId::Laplace1d, Some(s)).unwrap();
            for _ in 0..1000 {
                let x: f64 = rng.gen_range(0.0..6.0);
                let z = s * (x - 3.0);
                let cosh = libm::cosh(z);
                let expected = 2.0 * s * s * libm::tanh(z) / (cosh * cosh);
                assert!((c.source(&Point::new1(x)) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn laplace_source_matches_finite_differences() {
        let c = get_case(CaseId::Laplace1d, Some(5.0)).unwrap();
        let u = |x: f64| c.exact(&Point::new1(x)).unwrap();
        let h = 1e-3;
        for k in 0..200 {
            let x = 0.1 + 5.8 * k as f64 / 199.0;
            let d2 = (-u(x + 2.0 * h) + 16.0 * u(x + h) - 30.0 * u(x) + 16.0 * u(x - h) - u(x - 2.0 * h)) / (12.0 * h * h);
            assert!((c.source(&Point::new1(x)) + d2).abs() < 1e-4 * (1.0 + d2.abs()), "x = {x}");
        }
    }

    #[test]
    fn exact_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for id in [CaseId::Approx1dCont, CaseId::Approx2dCont, CaseId::Laplace1d] {
            let c = get_case(id, None).unwrap();
            for _ in 0..100 {
                let mut p = Point::new1(0.0);
                for a in 0..c.dim() {
                    p.coords[a] = rng.gen_range(c.domain.lower[a] + 0.01..c.domain.upper[a] - 0.01);
                }
                let g = c.exact_gradient(&p).unwrap();
                for a in 0..c.dim() {
                    let h = 1e-6;
                    let (mut pp, mut pm) = (p, p);
                    pp.coords[a] += h;
                    pm.coords[a] -= h;
                    let fd = (c.exact(&pp).unwrap() - c.exact(&pm).unwrap()) / (2.0 * h);
                    assert!((g[a] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
                }
            }
        }
    }

    #[test]
    fn approximation_targets() {
        let d = get_case(CaseId::Approx1dDisc, None).unwrap();
        assert_eq!(d.exact(&Point::new1(-1.0)), Some(-1.0));
        assert_eq!(d.exact(&Point::new1(1.0)), Some(1.0));
        assert_eq!(d.exact(&Point::new1(0.0)), Some(0.5));
        let c = get_case(CaseId::Approx2dCont, None).unwrap();
        assert_eq!(c.exact(&Point::new2(-1.0, -1.0)), Some(0.0));
    }

    #[test]
    fn slit_boundary_is_zero() {
        let c = get_case(CaseId::Poisson2dSlit, None).unwrap();
        for p in [Point::new2(-1.0, 0.3), Point::new2(0.5, 0.0), Point::new2(1.0, 0.0)] {
            assert_eq!(c.boundary(&p), 0.0);
        }
        assert!(c.exact(&Point::new2(0.0, 0.5)).is_none());
    }

    #[test]
    fn l2_examples() {
        let rule = QuadratureRule::nodal_grid(&BoxDomain::interval(-1.0, 1.0), [60, 1]).unwrap();
        assert_eq!(l2_error(|_| 1.0, |_| 1.0, &rule).unwrap(), 0.0);
        assert!((l2_error(|_| 0.0, |_| 1.0, &rule).unwrap() - 1.0).abs() < 1e-14);
        assert!((l2_error(|_| 1.1, |_| 1.0, &rule).unwrap() - 0.1).abs() < 1e-14);
        assert_eq!(l2_error(|_| 1.0, |_| 0.0, &rule), Err(ProblemError::ZeroNorm));
        assert!((l2_error_abs(|_| 0.0, |_| 1.0, &rule) - libm::sqrt(2.0)).abs() < 1e-14);
    }

    #[test]
    fn reference_is_positive_and_depressed_by_the_slit() {
        let r = reference_poisson_slit().unwrap();
        let m = r.mesh();
        for i in 0..m.num_nodes() {
            if m.is_dirichlet(i) {
                assert_eq!(r.coefficients()[i], 0.0);
            } else {
                assert!(r.coefficients()[i] > 0.0);
            }
        }
        let left = r.interpolate(&Point::new2(-0.5, 0.0)).unwrap();
        let right = r.interpolate(&Point::new2(0.5, 0.05)).unwrap();
        assert!(left > right, "{left} vs {right}");
    }
}
