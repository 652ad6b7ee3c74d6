//! Two-scale solver core: a finite-element coarse field enriched by a small
//! neural network trained on variational or collocation losses.
//!
//! Needs only `alloc`; file formats, configuration and the CLI live in the
//! `msnn` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod mesh;
pub mod multiscale;
pub mod nnet;
pub mod objective;
pub mod problems;
pub mod quadrature;
mod simd;
pub mod smoothing;
pub mod training;

pub use geometry::{BoxDomain, Point, Side, Slit};
pub use losses::{LossSpec, LossVariant, Penalties};
pub use mesh::{solve_poisson_coarse, CoarseSolution, Mesh};
pub use multiscale::{multiscale_solve, ErrorReport, MultiScaleSolution, QuadratureSpec, SolveConfig};
pub use nnet::MlpNet;
pub use objective::{LossAccumulator, NetEval, Term};
pub use problems::{get_case, CaseId, CaseKind, ProblemCase};
pub use quadrature::QuadratureRule;
pub use smoothing::{recover_gradient, SmoothedGradientField};
pub use training::{train, TrainConfig, TrainTrace};
