//! Nodal-averaging recovery of a continuous coarse gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Point;
use crate::losses::GradientField;
use crate::mesh::{solve_laplacian, CoarseSolution, FemError, Mesh, MeshError};

/// Continuous gradient field: nodal gradient vectors interpolated with the
/// mesh shape functions.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedGradientField {
    mesh: Mesh,
    nodal: Vec<[f64; 2]>,
}

impl SmoothedGradientField {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn nodal_gradients(&self) -> &[[f64; 2]] {
        &self.nodal
    }

    pub fn gradient(&self, p: &Point) -> Result<[f64; 2], MeshError> {
        let s = self.mesh.shape_eval(p)?;
        let mut g = [0.0; 2];
        for (n, v, _) in s.iter() {
            g[0] += v * self.nodal[n][0];
            g[1] += v * self.nodal[n][1];
        }
        Ok(g)
    }
}

/// Refinement of the coarse mesh used to represent [`SmoothedGradientField::potential`].
pub fn potential_refinement(dim: usize) -> usize {
    if dim == 1 {
        16
    } else {
        8
    }
}

impl SmoothedGradientField {
    /// Scalar field `v` with `v = boundary` on the Dirichlet nodes whose
    /// gradient is the least-squares fit of the smoothed gradient, on the
    /// coarse mesh refined `refine` times. This is the smoothed coarse
    /// solution that goes with the smoothed gradient.
    pub fn potential(&self, refine: usize, boundary: impl Fn(&Point) -> f64) -> Result<CoarseSolution, FemError> {
        let fine = self.mesh.refined(refine)?;
        solve_laplacian(&fine, |p| (0.0, self.gradient(p).unwrap_or([0.0; 2])), boundary)
    }
}

impl GradientField for SmoothedGradientField {
    fn gradient_at(&self, p: &Point) -> Result<[f64; 2], MeshError> {
        self.gradient(p)
    }
}

/// Each node gets the measure-weighted mean of the gradients of its adjacent
/// elements, each evaluated at the node. Duplicated slit nodes only see the
/// elements on their own side.
pub fn recover_gradient(coarse: &CoarseSolution) -> SmoothedGradientField {
    let mesh = coarse.mesh();
    let mut sum = vec![[0.0; 2]; mesh.num_nodes()];
    let mut weight = vec![0.0; mesh.num_nodes()];
    let vol = mesh.element_measure();
    for e in 0..mesh.num_elements() {
        for &n in mesh.element(e) {
            let [x, y] = mesh.node(n);
            let s = mesh.element_shape(e, &Point::new2(x, y));
            let g = coarse.gradient_in(&s);
            sum[n][0] += vol * g[0];
            sum[n][1] += vol * g[1];
            weight[n] += vol;
        }
    }
    let nodal = sum.iter().zip(&weight).map(|(s, &w)| if w > 0.0 { [s[0] / w, s[1] / w] } else { [0.0; 2] }).collect();
    SmoothedGradientField { mesh: mesh.clone(), nodal }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Side;
    use crate::mesh::interpolate_coefficients;

    #[test]
    fn two_element_average() {
        let mesh = Mesh::uniform_1d(0.0, 2.0, 2).unwrap();
        let coarse = CoarseSolution::new(mesh, vec![0.0, 0.0, 1.0]).unwrap();
        let s = recover_gradient(&coarse);
        let gx: Vec<f64> = s.nodal_gradients().iter().map(|g| g[0]).collect();
        assert_eq!(gx, vec![0.0, 0.5, 1.0]);
        assert!((s.gradient(&Point::new1(0.5)).unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn linear_field_is_reproduced() {
        let mesh = Mesh::uniform_2d((-1.0, 1.0), (-1.0, 1.0), 4, 3, None).unwrap();
        let coarse = interpolate_coefficients(&mesh, |p| 2.0 * p.x() - 0.5 * p.y() + 1.0);
        let s = recover_gradient(&coarse);
        for g in s.nodal_gradients() {
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
        }
        let g = s.gradient(&Point::new2(0.13, -0.77)).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn potential_of_linear_field() {
        let mesh = Mesh::uniform_2d((-1.0, 1.0), (-1.0, 1.0), 2, 2, None).unwrap();
        let lin = |p: &Point| 2.0 * p.x() - 0.5 * p.y() + 1.0;
        let s = recover_gradient(&interpolate_coefficients(&mesh, lin));
        let v = s.potential(3, lin).unwrap();
        assert_eq!(v.mesh().counts(), [6, 6]);
        for (i, c) in v.coefficients().iter().enumerate() {
            assert!((c - lin(&v.mesh().node_point(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_integrates_the_smoothed_gradient_in_1d() {
        let mesh = Mesh::uniform_1d(0.0, 2.0, 2).unwrap();
        let coarse = CoarseSolution::new(mesh, vec![0.0, 0.0, 1.0]).unwrap();
        let s = recover_gradient(&coarse);
        // nodal gradients 0, 0.5, 1 give G(x) = x / 2 and v = x^2 / 4
        let v = s.potential(4, |p| p.x() * p.x() / 4.0).unwrap();
        for (i, c) in v.coefficients().iter().enumerate() {
            let x = v.mesh().node(i)[0];
            assert!((c - x * x / 4.0).abs() < 1e-12, "{x} {c}");
        }
    }

    #[test]
    fn continuous_across_element_edges() {
        let mesh = Mesh::uniform_2d((-1.0, 1.0), (-1.0, 1.0), 4, 4, None).unwrap();
        let coarse = interpolate_coefficients(&mesh, |p| libm::sin(2.0 * p.x()) * libm::cos(p.y()));
        let s = recover_gradient(&coarse);
        for k in 0..20 {
            let y = -0.95 + 0.09 * k as f64;
            let lo = s.gradient(&Point::new2(0.0, y).with_side(Side::Lower)).unwrap();
            let hi = s.gradient(&Point::new2(0.0, y).with_side(Side::Upper)).unwrap();
            assert!((lo[0] - hi[0]).abs() < 1e-12 && (lo[1] - hi[1]).abs() < 1e-12);
        }
    }
}
