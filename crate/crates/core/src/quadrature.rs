//! Integration rules for the loss functionals: cell-based Gauss-Legendre,
//! equally spaced nodal grids with trapezoid volumes, and Monte Carlo sampling.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{BoxDomain, Point, Side, Slit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("Gauss-Legendre order {0} not supported (use 1..=5)")]
    UnsupportedOrder(usize),
    #[error("invalid domain")]
    InvalidDomain,
    #[error("a nodal grid needs at least 2 points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("need at least one cell / sample")]
    Empty,
}

/// How a rule was constructed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuadratureKind {
    CellGauss { cells: [usize; 2], points_per_dim: usize },
    NodalGrid { counts: [usize; 2] },
    MonteCarlo { seed: u64 },
    /// Points along the Dirichlet boundary; weights are arc lengths.
    Boundary { counts: [usize; 2] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub domain: BoxDomain,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Points and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if !(1..=5).contains(&n) {
        return Err(QuadratureError::UnsupportedOrder(n));
    }
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    Ok((xs, ws))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = if n == 0 { 0.0 } else { n as f64 * (x * p1 - p0) / (x * x - 1.0) };
    (p, dp)
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

fn trapezoid_weights(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / (n - 1) as f64;
    let xs = (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * (i as f64 / (n - 1) as f64) }).collect();
    let ws = (0..n).map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h }).collect();
    (xs, ws)
}

/// Replaces every point lying exactly on the slit by two tagged copies
/// (one per face), each with half the weight.
fn split_on_slit(points: &mut Vec<Point>, weights: &mut Vec<f64>, slit: &Slit, scale: f64) {
    let tol = 1e-12 * scale;
    let mut out_p = Vec::with_capacity(points.len());
    let mut out_w = Vec::with_capacity(weights.len());
    for (p, &w) in points.iter().zip(weights.iter()) {
        if slit.contains(p, tol) {
            out_p.push(Point { coords: [p.x(), slit.y], side: Side::Lower });
            out_w.push(0.5 * w);
            out_p.push(Point { coords: [p.x(), slit.y], side: Side::Upper });
            out_w.push(0.5 * w);
        } else {
            out_p.push(*p);
            out_w.push(w);
        }
    }
    *points = out_p;
    *weights = out_w;
}

impl QuadratureRule {
    /// Tensor-product Gauss-Legendre points in each of `cells` equal cells,
    /// weights scaled by the cell Jacobian determinant.
    pub fn gauss_cells(domain: &BoxDomain, cells: [usize; 2], points_per_dim: usize) -> Result<Self, QuadratureError> {
        if !domain.is_valid() {
            return Err(QuadratureError::InvalidDomain);
        }
        let (gp, gw) = gauss_legendre(points_per_dim)?;
        let cells = if domain.dim == 1 { [cells[0], 1] } else { cells };
        if cells[0] == 0 || cells[1] == 0 {
            return Err(QuadratureError::Empty);
        }
        let h = [domain.extent(0) / cells[0] as f64, if domain.dim == 2 { domain.extent(1) / cells[1] as f64 } else { 1.0 }];
        let det_j = if domain.dim == 1 { h[0] / 2.0 } else { h[0] * h[1] / 4.0 };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for cj in 0..cells[1] {
            for ci in 0..cells[0] {
                let x0 = domain.lower[0] + h[0] * ci as f64;
                let y0 = domain.lower[1] + h[1] * cj as f64;
                if domain.dim == 1 {
                    for (xi, wi) in gp.iter().zip(&gw) {
                        points.push(Point::new1(x0 + 0.5 * h[0] * (xi + 1.0)));
                        weights.push(wi * det_j);
                    }
                } else {
                    for (eta, wj) in gp.iter().zip(&gw) {
                        for (xi, wi) in gp.iter().zip(&gw) {
                            points.push(Point::new2(x0 + 0.5 * h[0] * (xi + 1.0), y0 + 0.5 * h[1] * (eta + 1.0)));
                            weights.push(wi * wj * det_j);
                        }
                    }
                }
            }
        }
        if let Some(s) = domain.slit {
            split_on_slit(&mut points, &mut weights, &s, domain.extent(1));
        }
        Ok(QuadratureRule { kind: QuadratureKind::CellGauss { cells, points_per_dim }, domain: *domain, points, weights })
    }

    /// Equally spaced points including the endpoints, composite-trapezoid volumes.
    pub fn nodal_grid(domain: &BoxDomain, counts: [usize; 2]) -> Result<Self, QuadratureError> {
        if !domain.is_valid() {
            return Err(QuadratureError::InvalidDomain);
        }
        let counts = if domain.dim == 1 { [counts[0], 1] } else { counts };
        for a in 0..domain.dim {
            if counts[a] < 2 {
                return Err(QuadratureError::TooFewPoints(counts[a]));
            }
        }
        let (xs, wx) = trapezoid_weights(domain.lower[0], domain.upper[0], counts[0]);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        if domain.dim == 1 {
            points.extend(xs.iter().map(|&x| Point::new1(x)));
            weights = wx;
        } else {
            let (ys, wy) = trapezoid_weights(domain.lower[1], domain.upper[1], counts[1]);
            for (y, wj) in ys.iter().zip(&wy) {
                for (x, wi) in xs.iter().zip(&wx) {
                    points.push(Point::new2(*x, *y));
                    weights.push(wi * wj);
                }
            }
            if let Some(s) = domain.slit {
                split_on_slit(&mut points, &mut weights, &s, domain.extent(1));
            }
        }
        Ok(QuadratureRule { kind: QuadratureKind::NodalGrid { counts }, domain: *domain, points, weights })
    }

    /// `n` i.i.d. uniform samples, each weighted `|domain| / n`.
    pub fn monte_carlo(domain: &BoxDomain, n: usize, seed: u64) -> Result<Self, QuadratureError> {
        if !domain.is_valid() {
            return Err(QuadratureError::InvalidDomain);
        }
        if n == 0 {
            return Err(QuadratureError::Empty);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = domain.measure() / n as f64;
        let points = (0..n)
            .map(|_| {
                let mut p = Point::new1(0.0);
                for a in 0..domain.dim {
                    let u: f64 = rng.gen();
                    p.coords[a] = domain.lower[a] + u * domain.extent(a);
                }
                p
            })
            .collect();
        Ok(QuadratureRule { kind: QuadratureKind::MonteCarlo { seed }, domain: *domain, points, weights: vec![w; n] })
    }

    /// Nodal points on the Dirichlet boundary: the end points in 1D, every
    /// edge of the box (plus both faces of a slit) in 2D, with trapezoid
    /// arc-length weights at the interior rule's per-axis density.
    pub fn boundary(domain: &BoxDomain, counts: [usize; 2]) -> Result<Self, QuadratureError> {
        if !domain.is_valid() {
            return Err(QuadratureError::InvalidDomain);
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        if domain.dim == 1 {
            points.push(Point::new1(domain.lower[0]));
            points.push(Point::new1(domain.upper[0]));
            weights.extend([1.0, 1.0]);
        } else {
            for a in 0..2 {
                if counts[a] < 2 {
                    return Err(QuadratureError::TooFewPoints(counts[a]));
                }
            }
            let (xs, wx) = trapezoid_weights(domain.lower[0], domain.upper[0], counts[0]);
            let (ys, wy) = trapezoid_weights(domain.lower[1], domain.upper[1], counts[1]);
            for y in [domain.lower[1], domain.upper[1]] {
                for (x, w) in xs.iter().zip(&wx) {
                    points.push(Point::new2(*x, y));
                    weights.push(*w);
                }
            }
            for x in [domain.lower[0], domain.upper[0]] {
                for (y, w) in ys.iter().zip(&wy) {
                    points.push(Point::new2(x, *y));
                    weights.push(*w);
                }
            }
            if let Some(s) = domain.slit {
                let h = domain.extent(0) / (counts[0] - 1) as f64;
                let n = libm::round((s.x_end - s.x_start) / h).max(1.0) as usize + 1;
                let (ss, ws) = trapezoid_weights(s.x_start, s.x_end, n);
                for side in [Side::Lower, Side::Upper] {
                    for (x, w) in ss.iter().zip(&ws) {
                        points.push(Point { coords: [*x, s.y], side });
                        weights.push(*w);
                    }
                }
            }
        }
        Ok(QuadratureRule { kind: QuadratureKind::Boundary { counts }, domain: *domain, points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// `sum_q w_q f(x_q)`, pairwise-summed.
    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        let terms: Vec<f64> = self.iter().map(|(p, w)| w * f(p)).collect();
        pairwise_sum(&terms)
    }
}
