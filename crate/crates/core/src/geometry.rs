//! Points, tie-breaking tags and box domains shared by the mesh, the
//! quadrature rules and the problem registry.

/// Which neighbouring cell a point sitting exactly on a grid line belongs to.
///
/// Only matters where the field is discontinuous: on element edges for
/// gradients, and on both faces of a slit for values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Side {
    /// Take the cell with the larger index (clamped at the upper boundary).
    #[default]
    Auto,
    /// Take the cell below / to the left of the grid line.
    Lower,
    /// Take the cell above / to the right of the grid line.
    Upper,
}

/// A location in 1D or 2D. In 1D the second coordinate is ignored and kept at 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub coords: [f64; 2],
    pub side: Side,
}

impl Point {
    pub const fn new1(x: f64) -> Self {
        Point { coords: [x, 0.0], side: Side::Auto }
    }

    pub const fn new2(x: f64, y: f64) -> Self {
        Point { coords: [x, y], side: Side::Auto }
    }

    pub const fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.coords[1]
    }
}

/// A straight cut along a horizontal grid line, `y = y, x_start <= x <= x_end`.
///
/// The field may jump across it; both faces carry Dirichlet data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slit {
    pub y: f64,
    pub x_start: f64,
    pub x_end: f64,
}

impl Slit {
    /// The slit `[0,1] x {0}` used by the Poisson benchmark.
    pub const fn unit_right() -> Self {
        Slit { y: 0.0, x_start: 0.0, x_end: 1.0 }
    }

    /// True when `p` lies on the cut (within `tol`).
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        (p.y() - self.y).abs() <= tol && p.x() >= self.x_start - tol && p.x() <= self.x_end + tol
    }
}

/// Axis-aligned box in 1D or 2D, optionally with a slit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxDomain {
    pub dim: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub slit: Option<Slit>,
}

impl BoxDomain {
    pub const fn interval(a: f64, b: f64) -> Self {
        BoxDomain { dim: 1, lower: [a, 0.0], upper: [b, 0.0], slit: None }
    }

    pub const fn rectangle(x: (f64, f64), y: (f64, f64)) -> Self {
        BoxDomain { dim: 2, lower: [x.0, y.0], upper: [x.1, y.1], slit: None }
    }

    pub const fn with_slit(mut self, slit: Slit) -> Self {
        self.slit = Some(slit);
        self
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Length in 1D, area in 2D. A slit has zero measure.
    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.extent(a)).product()
    }

    pub fn is_valid(&self) -> bool {
        (self.dim == 1 || self.dim == 2)
            && (0..self.dim).all(|a| self.lower[a].is_finite() && self.upper[a].is_finite() && self.lower[a] < self.upper[a])
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        (0..self.dim).all(|a| {
            let t = tol * self.extent(a).max(1.0);
            p.coords[a] >= self.lower[a] - t && p.coords[a] <= self.upper[a] + t
        })
    }
}
