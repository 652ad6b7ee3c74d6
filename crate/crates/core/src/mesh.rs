//! Coarse-scale finite elements on uniform grids: 2-node segments in 1D and
//! 4-node bilinear quadrilaterals in 2D, with optional slit.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::geometry::{BoxDomain, Point, Side, Slit};
use crate::linalg::{LinalgError, SkylineMatrix};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid domain bounds")]
    InvalidDomain,
    #[error("element count must be at least 1")]
    NoElements,
    #[error("slit is not aligned with mesh lines")]
    MisalignedSlit,
    #[error("point ({x}, {y}) lies outside the meshed domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("coefficient vector has length {got}, mesh has {expected} nodes")]
    CoefficientLength { expected: usize, got: usize },
    #[error("mesh data does not describe the uniform grid named in its header: {0}")]
    Inconsistent(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh has no Dirichlet nodes; the stiffness matrix is singular")]
    NoDirichletNodes,
    #[error("stiffness matrix is singular: {0}")]
    Singular(#[from] LinalgError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Element family. One per mesh dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    LinearSegment,
    BilinearQuad,
}

impl ElementKind {
    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementKind::LinearSegment => 2,
            ElementKind::BilinearQuad => 4,
        }
    }
}

/// Shape function values and gradients at one point, restricted to the
/// nodes of the containing element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeEval {
    pub element: usize,
    pub len: usize,
    pub nodes: [usize; 4],
    pub values: [f64; 4],
    pub gradients: [[f64; 2]; 4],
}

impl ShapeEval {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, [f64; 2])> + '_ {
        (0..self.len).map(move |k| (self.nodes[k], self.values[k], self.gradients[k]))
    }
}

/// Uniform tensor grid of elements over a box, optionally with a slit along a node row.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    domain: BoxDomain,
    counts: [usize; 2],
    spacing: [f64; 2],
    nodes: Vec<[f64; 2]>,
    connectivity: Vec<usize>,
    dirichlet: Vec<bool>,
    slit_pairs: Vec<(usize, usize)>,
}

fn grid_coord(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64 / n as f64)
    }
}

/// Index of the grid line `coord` lies on, if any.
fn aligned_index(lo: f64, h: f64, n: usize, coord: f64) -> Option<usize> {
    let t = (coord - lo) / h;
    let k = libm::round(t);
    if (t - k).abs() < 1e-9 && k >= 0.0 && k <= n as f64 {
        Some(k as usize)
    } else {
        None
    }
}

impl Mesh {
    /// `n_elems` equal segments on `[a, b]`; both end nodes are Dirichlet.
    pub fn uniform_1d(a: f64, b: f64, n_elems: usize) -> Result<Mesh, MeshError> {
        let domain = BoxDomain::interval(a, b);
        if !domain.is_valid() {
            return Err(MeshError::InvalidDomain);
        }
        if n_elems == 0 {
            return Err(MeshError::NoElements);
        }
        let nodes: Vec<[f64; 2]> = (0..=n_elems).map(|i| [grid_coord(a, b, i, n_elems), 0.0]).collect();
        let connectivity = (0..n_elems).flat_map(|e| [e, e + 1]).collect();
        let mut dirichlet = vec![false; n_elems + 1];
        dirichlet[0] = true;
        dirichlet[n_elems] = true;
        Ok(Mesh {
            domain,
            counts: [n_elems, 1],
            spacing: [(b - a) / n_elems as f64, 0.0],
            nodes,
            connectivity,
            dirichlet,
            slit_pairs: Vec::new(),
        })
    }

    /// `nx x ny` bilinear elements. With a slit, nodes along the open slit are
    /// duplicated; elements above the slit use the duplicates. The outer
    /// boundary and every slit node (both copies) are Dirichlet.
    pub fn uniform_2d(
        x_range: (f64, f64),
        y_range: (f64, f64),
        nx: usize,
        ny: usize,
        slit: Option<Slit>,
    ) -> Result<Mesh, MeshError> {
        let mut domain = BoxDomain::rectangle(x_range, y_range);
        if !domain.is_valid() {
            return Err(MeshError::InvalidDomain);
        }
        if nx == 0 || ny == 0 {
            return Err(MeshError::NoElements);
        }
        let hx = domain.extent(0) / nx as f64;
        let hy = domain.extent(1) / ny as f64;
        let id = |i: usize, j: usize| j * (nx + 1) + i;

        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut dirichlet = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([grid_coord(x_range.0, x_range.1, i, nx), grid_coord(y_range.0, y_range.1, j, ny)]);
                dirichlet.push(i == 0 || j == 0 || i == nx || j == ny);
            }
        }

        let mut connectivity = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                connectivity.extend_from_slice(&[id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }

        let mut slit_pairs = Vec::new();
        if let Some(s) = slit {
            let js = aligned_index(y_range.0, hy, ny, s.y).ok_or(MeshError::MisalignedSlit)?;
            let i0 = aligned_index(x_range.0, hx, nx, s.x_start).ok_or(MeshError::MisalignedSlit)?;
            let i1 = aligned_index(x_range.0, hx, nx, s.x_end).ok_or(MeshError::MisalignedSlit)?;
            if js == 0 || js == ny || i0 >= i1 {
                return Err(MeshError::MisalignedSlit);
            }
            // slit endpoints stay shared unless they sit on the outer boundary
            let mut dup_of = vec![None; nx + 1];
            for (i, slot) in dup_of.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                let open = i > i0 && i < i1;
                let on_boundary = (i == i0 && i0 == 0) || (i == i1 && i1 == nx);
                dirichlet[id(i, js)] = true;
                if open || on_boundary {
                    let original = id(i, js);
                    let duplicate = nodes.len();
                    nodes.push(nodes[original]);
                    dirichlet.push(true);
                    slit_pairs.push((original, duplicate));
                    *slot = Some(duplicate);
                }
            }
            for i in 0..nx {
                let e = js * nx + i;
                for (corner, col) in [(0, i), (1, i + 1)] {
                    if let Some(d) = dup_of[col] {
                        connectivity[4 * e + corner] = d;
                    }
                }
            }
            domain = domain.with_slit(s);
        }

        Ok(Mesh { domain, counts: [nx, ny], spacing: [hx, hy], nodes, connectivity, dirichlet, slit_pairs })
    }

    /// Same domain with every element split `factor` times per axis.
    pub fn refined(&self, factor: usize) -> Result<Mesh, MeshError> {
        let d = &self.domain;
        let [nx, ny] = self.counts;
        if d.dim == 1 {
            Mesh::uniform_1d(d.lower[0], d.upper[0], nx * factor)
        } else {
            Mesh::uniform_2d((d.lower[0], d.upper[0]), (d.lower[1], d.upper[1]), nx * factor, ny * factor, d.slit)
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn element_kind(&self) -> ElementKind {
        if self.dim() == 1 {
            ElementKind::LinearSegment
        } else {
            ElementKind::BilinearQuad
        }
    }

    /// Elements per axis (`[n, 1]` in 1D).
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.connectivity.len() / self.element_kind().nodes_per_element()
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Node location tagged so that evaluation picks an element containing
    /// this node: duplicates look above the slit, their originals below.
    pub fn node_point(&self, i: usize) -> Point {
        let [x, y] = self.nodes[i];
        let side = if self.slit_pairs.iter().any(|&(_, d)| d == i) {
            Side::Upper
        } else if self.slit_pairs.iter().any(|&(o, _)| o == i) {
            Side::Lower
        } else {
            Side::Auto
        };
        Point { coords: [x, y], side }
    }

    pub fn node_points(&self) -> Vec<Point> {
        (0..self.num_nodes()).map(|i| self.node_point(i)).collect()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.element_kind().nodes_per_element();
        &self.connectivity[k * e..k * (e + 1)]
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.dirichlet[i]
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.dirichlet[i]).collect()
    }

    pub fn slit_pairs(&self) -> &[(usize, usize)] {
        &self.slit_pairs
    }

    pub fn slit(&self) -> Option<Slit> {
        self.domain.slit
    }

    /// Length (1D) or area (2D) of one element.
    pub fn element_measure(&self) -> f64 {
        if self.dim() == 1 {
            self.spacing[0]
        } else {
            self.spacing[0] * self.spacing[1]
        }
    }

    fn cell_index(&self, axis: usize, coord: f64, side: Side) -> usize {
        let n = self.counts[axis];
        let t = (coord - self.domain.lower[axis]) / self.spacing[axis];
        let k = libm::round(t);
        let idx = if (t - k).abs() < 1e-9 {
            match side {
                Side::Lower => k - 1.0,
                Side::Auto | Side::Upper => k,
            }
        } else {
            libm::floor(t)
        };
        (idx.max(0.0) as usize).min(n - 1)
    }

    /// Index of the element containing `p`, honouring the point's side tag on grid lines.
    pub fn locate(&self, p: &Point) -> Result<usize, MeshError> {
        if !self.domain.contains(p, 1e-12) {
            return Err(MeshError::OutsideDomain { x: p.x(), y: p.y() });
        }
        let i = self.cell_index(0, p.x(), p.side);
        if self.dim() == 1 {
            Ok(i)
        } else {
            let j = self.cell_index(1, p.y(), p.side);
            Ok(j * self.counts[0] + i)
        }
    }

    /// Shape functions of element `e` evaluated at `p` (no containment check).
    pub fn element_shape(&self, e: usize, p: &Point) -> ShapeEval {
        let conn = self.element(e);
        let mut out = ShapeEval { element: e, len: conn.len(), nodes: [0; 4], values: [0.0; 4], gradients: [[0.0; 2]; 4] };
        out.nodes[..conn.len()].copy_from_slice(conn);
        match self.element_kind() {
            ElementKind::LinearSegment => {
                let h = self.spacing[0];
                let xi = (p.x() - self.nodes[conn[0]][0]) / h;
                out.values[0] = 1.0 - xi;
                out.values[1] = xi;
                out.gradients[0] = [-1.0 / h, 0.0];
                out.gradients[1] = [1.0 / h, 0.0];
            }
            ElementKind::BilinearQuad => {
                let [hx, hy] = self.spacing;
                let [x0, y0] = self.nodes[conn[0]];
                let xi = (p.x() - x0) / hx;
                let eta = (p.y() - y0) / hy;
                out.values = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta];
                out.gradients = [
                    [-(1.0 - eta) / hx, -(1.0 - xi) / hy],
                    [(1.0 - eta) / hx, -xi / hy],
                    [eta / hx, xi / hy],
                    [-eta / hx, (1.0 - xi) / hy],
                ];
            }
        }
        out
    }

    /// Shape values and gradients at `p`, nonzero only on the containing element.
    pub fn shape_eval(&self, p: &Point) -> Result<ShapeEval, MeshError> {
        let e = self.locate(p)?;
        Ok(self.element_shape(e, p))
    }

    /// Sparse `(node, value)` pairs of the shape functions at `p`.
    pub fn shape_values(&self, p: &Point) -> Result<Vec<(usize, f64)>, MeshError> {
        let s = self.shape_eval(p)?;
        Ok(s.iter().map(|(n, v, _)| (n, v)).collect())
    }

    /// Sparse `(node, gradient)` rows of the shape functions at `p`.
    pub fn shape_gradients(&self, p: &Point) -> Result<Vec<(usize, [f64; 2])>, MeshError> {
        let s = self.shape_eval(p)?;
        Ok(s.iter().map(|(n, _, g)| (n, g)).collect())
    }

    /// Node permutation sorted by position, duplicates right after their originals.
    /// Keeps the stiffness profile narrow.
    fn banded_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_nodes()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            pa[1]
                .partial_cmp(&pb[1])
                .unwrap_or(Ordering::Equal)
                .then(pa[0].partial_cmp(&pb[0]).unwrap_or(Ordering::Equal))
                .then(a.cmp(&b))
        });
        order
    }
}

/// Nodal coefficients `d_J` bound to a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseSolution {
    mesh: Mesh,
    coefficients: Vec<f64>,
}

impl CoarseSolution {
    pub fn new(mesh: Mesh, coefficients: Vec<f64>) -> Result<Self, MeshError> {
        if coefficients.len() != mesh.num_nodes() {
            return Err(MeshError::CoefficientLength { expected: mesh.num_nodes(), got: coefficients.len() });
        }
        Ok(CoarseSolution { mesh, coefficients })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `sum_J Psi_J(p) d_J`
    pub fn interpolate(&self, p: &Point) -> Result<f64, MeshError> {
        let s = self.mesh.shape_eval(p)?;
        Ok(s.iter().map(|(n, v, _)| v * self.coefficients[n]).sum())
    }

    /// `sum_J grad Psi_J(p) d_J`, element-wise.
    pub fn interpolate_gradient(&self, p: &Point) -> Result<[f64; 2], MeshError> {
        let s = self.mesh.shape_eval(p)?;
        Ok(self.gradient_in(&s))
    }

    pub(crate) fn gradient_in(&self, s: &ShapeEval) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (n, _, grad) in s.iter() {
            g[0] += grad[0] * self.coefficients[n];
            g[1] += grad[1] * self.coefficients[n];
        }
        g
    }

    /// Element-wise Laplacian of the coarse field. Linear segments and
    /// bilinear quads have `u_xx = u_yy = 0` inside every element.
    pub fn interpolate_laplacian(&self, p: &Point) -> Result<f64, MeshError> {
        self.mesh.locate(p)?;
        Ok(0.0)
    }
}

/// Nodal interpolation `d_J = target(x_J)`.
pub fn interpolate_coefficients(mesh: &Mesh, target: impl Fn(&Point) -> f64) -> CoarseSolution {
    let coefficients = (0..mesh.num_nodes()).map(|i| target(&mesh.node_point(i))).collect();
    CoarseSolution { mesh: mesh.clone(), coefficients }
}

/// Galerkin solve of `-Laplace(u) = source` with `u = boundary` on the
/// Dirichlet nodes, full 2-point Gauss integration per direction.
pub fn solve_poisson_coarse(
    mesh: &Mesh,
    source: impl Fn(&Point) -> f64,
    boundary: impl Fn(&Point) -> f64,
) -> Result<CoarseSolution, FemError> {
    solve_laplacian(mesh, |p| (source(p), [0.0; 2]), boundary)
}

/// Galerkin solve of `a(v, u) = (v, f) + (grad v, q)` for a load returning
/// `(f, q)` at each point; `q` alone gives the potential whose gradient is
/// the L2 projection of the vector field `q`.
pub fn solve_laplacian(
    mesh: &Mesh,
    load: impl Fn(&Point) -> (f64, [f64; 2]),
    boundary: impl Fn(&Point) -> f64,
) -> Result<CoarseSolution, FemError> {
    let n = mesh.num_nodes();
    if !(0..n).any(|i| mesh.is_dirichlet(i)) {
        return Err(FemError::NoDirichletNodes);
    }

    let mut values = vec![0.0; n];
    for (i, v) in values.iter_mut().enumerate() {
        if mesh.is_dirichlet(i) {
            *v = boundary(&mesh.node_point(i));
        }
    }

    const FIXED: usize = usize::MAX;
    let mut equation = vec![FIXED; n];
    let mut n_free = 0;
    for i in mesh.banded_order() {
        if !mesh.is_dirichlet(i) {
            equation[i] = n_free;
            n_free += 1;
        }
    }
    if n_free == 0 {
        return Ok(CoarseSolution { mesh: mesh.clone(), coefficients: values });
    }

    let mut first: Vec<usize> = (0..n_free).collect();
    for e in 0..mesh.num_elements() {
        let eqs: Vec<usize> = mesh.element(e).iter().map(|&a| equation[a]).filter(|&q| q != FIXED).collect();
        for &a in &eqs {
            for &b in &eqs {
                if b < first[a] {
                    first[a] = b;
                }
            }
        }
    }
    let mut stiffness = SkylineMatrix::with_profile(first);
    let mut rhs = vec![0.0; n_free];

    let (gp, gw) = gauss_legendre(2).expect("2-point rule");
    let dim = mesh.dim();
    let [hx, hy] = mesh.spacing();
    let det_j = if dim == 1 { hx / 2.0 } else { hx * hy / 4.0 };
    let n_q = if dim == 1 { gp.len() } else { gp.len() * gp.len() };

    let mut ke = [[0.0; 4]; 4];
    let mut fe = [0.0; 4];
    for e in 0..mesh.num_elements() {
        let conn = mesh.element(e);
        let origin = mesh.node(conn[0]);
        let k = conn.len();
        ke.iter_mut().for_each(|r| r.fill(0.0));
        fe.fill(0.0);
        for q in 0..n_q {
            let (qi, qj) = (q % gp.len(), q / gp.len());
            let (x, w) = if dim == 1 {
                (Point::new1(origin[0] + hx * 0.5 * (gp[qi] + 1.0)), gw[qi])
            } else {
                (
                    Point::new2(origin[0] + hx * 0.5 * (gp[qi] + 1.0), origin[1] + hy * 0.5 * (gp[qj] + 1.0)),
                    gw[qi] * gw[qj],
                )
            };
            let s = mesh.element_shape(e, &x);
            let (f, q) = load(&x);
            let wd = w * det_j;
            for a in 0..k {
                let ga = s.gradients[a];
                fe[a] += wd * (f * s.values[a] + q[0] * ga[0] + q[1] * ga[1]);
                for b in 0..k {
                    let ga = s.gradients[a];
                    let gb = s.gradients[b];
                    ke[a][b] += wd * (ga[0] * gb[0] + ga[1] * gb[1]);
                }
            }
        }
        for a in 0..k {
            let ea = equation[conn[a]];
            if ea == FIXED {
                continue;
            }
            rhs[ea] += fe[a];
            for b in 0..k {
                let eb = equation[conn[b]];
                if eb == FIXED {
                    rhs[ea] -= ke[a][b] * values[conn[b]];
                } else if eb <= ea {
                    stiffness.add(ea, eb, ke[a][b]).expect("entry inside assembled profile");
                }
            }
        }
    }

    stiffness.factor()?;
    stiffness.solve_in_place(&mut rhs);
    for i in 0..n {
        if equation[i] != FIXED {
            values[i] = rhs[equation[i]];
        }
    }
    Ok(CoarseSolution { mesh: mesh.clone(), coefficients: values })
}
