//! Pointwise loss terms and the weighted sum over sample points that the
//! network differentiates.

use alloc::vec::Vec;

use crate::geometry::Point;
use crate::quadrature::pairwise_sum;

/// Value and input derivatives of a scalar field at one point.
///
/// `hess` is only meaningful when second derivatives were requested.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NetEval {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

/// Integrand kinds used by the loss functionals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Term {
    /// `(N - target)^2`
    Fit { target: f64 },
    /// `1/2 |grad N|^2 + coarse_gradient . grad N - source * N`
    Energy { coarse_gradient: [f64; 2], source: f64 },
    /// `(-Laplace N - rhs)^2`
    StrongResidual { rhs: f64 },
}

/// Adjoints of one weighted term with respect to the field quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TermAdjoint {
    pub loss: f64,
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl Term {
    /// Highest input-derivative order the term reads.
    pub fn order(&self) -> usize {
        match self {
            Term::Fit { .. } => 0,
            Term::Energy { .. } => 1,
            Term::StrongResidual { .. } => 2,
        }
    }

    /// Weighted term value and its partial derivatives.
    #[inline]
    pub fn evaluate(&self, weight: f64, dim: usize, f: &NetEval) -> TermAdjoint {
        let mut out = TermAdjoint::default();
        match *self {
            Term::Fit { target } => {
                let r = f.value - target;
                out.loss = weight * r * r;
                out.value = 2.0 * weight * r;
            }
            Term::Energy { coarse_gradient, source } => {
                let mut e = -source * f.value;
                for k in 0..dim {
                    e += 0.5 * f.grad[k] * f.grad[k] + coarse_gradient[k] * f.grad[k];
                    out.grad[k] = weight * (f.grad[k] + coarse_gradient[k]);
                }
                out.loss = weight * e;
                out.value = -weight * source;
            }
            Term::StrongResidual { rhs } => {
                let lap: f64 = (0..dim).map(|k| f.hess[k][k]).sum();
                let r = -lap - rhs;
                out.loss = weight * r * r;
                for k in 0..dim {
                    out.hess[k][k] = -2.0 * weight * r;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub point: Point,
    pub weight: f64,
    pub term: Term,
}

/// Weighted sum of pointwise terms; the total loss is `sum_s w_s term_s(N)(x_s)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossAccumulator {
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl LossAccumulator {
    pub fn new(dim: usize) -> Self {
        LossAccumulator { dim, samples: Vec::new() }
    }

    pub fn push(&mut self, point: Point, weight: f64, term: Term) {
        self.samples.push(Sample { point, weight, term });
    }

    pub fn extend(&mut self, other: LossAccumulator) {
        self.samples.extend(other.samples);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_order(&self) -> usize {
        self.samples.iter().map(|s| s.term.order()).max().unwrap_or(0)
    }

    /// Total loss for an arbitrary field, e.g. a hand-coded candidate solution.
    pub fn evaluate_field(&self, field: impl Fn(&Point) -> NetEval) -> f64 {
        let terms: Vec<f64> = self.samples.iter().map(|s| s.term.evaluate(s.weight, self.dim, &field(&s.point)).loss).collect();
        pairwise_sum(&terms)
    }
}
