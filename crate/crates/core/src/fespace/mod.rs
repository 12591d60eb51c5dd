//! Reference bases, quadrature and L2 projections.
//!
//! Physical element functions are `sum c_i phi_i(F^{-1}(x))` with `phi_i`
//! orthonormal on the reference triangle, so the physical mass matrix is
//! `|det J| I`. Face functions use the face parameter `t` running from the
//! lower-numbered endpoint, with mass matrix `|F| I`.

mod basis;
mod quadrature;

pub use basis::{dimension, reference_basis, BasisSet};
pub use quadrature::{gauss_legendre, quadrature, QuadRule};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Triangle,
    Edge,
}

/// Extra exactness added to every weak-form integral to keep the
/// quadrature error of non-polynomial coefficients and data negligible.
pub const QUADRATURE_MARGIN: usize = 6;

/// Exactness used for all element and face integrals at flux degree `k`.
pub fn weak_form_exactness(k: usize) -> usize {
    2 * (k + 2) + QUADRATURE_MARGIN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionTarget {
    Element(usize),
    Face(usize),
}

/// L2 projection of `f` onto degree-`m` polynomials on an element or face.
pub fn l2_project(
    mesh: &Mesh,
    target: ProjectionTarget,
    m: usize,
    f: impl Fn(Point) -> f64,
) -> Result<Vec<f64>> {
    let exactness = 2 * m + QUADRATURE_MARGIN;
    match target {
        ProjectionTarget::Element(e) => {
            let map = mesh.element_map(e)?;
            let basis = reference_basis(Domain::Triangle, m);
            let rule = quadrature(Domain::Triangle, exactness);
            project_with(&basis, &rule, |xi| map.map(xi), f)
        }
        ProjectionTarget::Face(face) => {
            if face >= mesh.num_faces() {
                return Err(Error::InvalidArgument(format!("no face {face}")));
            }
            let basis = reference_basis(Domain::Edge, m);
            let rule = quadrature(Domain::Edge, exactness);
            project_with(&basis, &rule, |t| mesh.face_point(face, t[0]), f)
        }
    }
}

/// Componentwise projection of a vector field; returns `[c_x, c_y]`
/// concatenated.
pub fn l2_project_vector(
    mesh: &Mesh,
    target: ProjectionTarget,
    m: usize,
    f: impl Fn(Point) -> Point,
) -> Result<Vec<f64>> {
    let mut cx = l2_project(mesh, target, m, |x| f(x)[0])?;
    cx.extend(l2_project(mesh, target, m, |x| f(x)[1])?);
    Ok(cx)
}

fn project_with(
    basis: &BasisSet,
    rule: &QuadRule,
    to_physical: impl Fn([f64; 2]) -> Point,
    f: impl Fn(Point) -> f64,
) -> Result<Vec<f64>> {
    let mut coeffs = vec![0.0; basis.dim()];
    let mut phi = vec![0.0; basis.dim()];
    for (&xi, &w) in rule.nodes.iter().zip(&rule.weights) {
        let x = to_physical(xi);
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Data {
                what: "projected function".into(),
                x: x[0],
                y: x[1],
            });
        }
        basis.eval_into(xi, &mut phi);
        for (c, p) in coeffs.iter_mut().zip(&phi) {
            *c += w * v * p;
        }
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_element(mesh: &Mesh, e: usize, m: usize, c: &[f64], x: Point) -> f64 {
        let map = mesh.element_map(e).unwrap();
        let b = reference_basis(Domain::Triangle, m);
        b.eval(map.inverse_map(x))
            .iter()
            .zip(c)
            .map(|(p, c)| p * c)
            .sum()
    }

    #[test]
    fn constants_project_to_first_mode() {
        let mesh = Mesh::structured(0.125, 2).unwrap();
        let c = l2_project(&mesh, ProjectionTarget::Element(3), 2, |_| 2.5).unwrap();
        // phi_0 = sqrt(2) on the reference triangle of area 1/2.
        assert!((c[0] - 2.5 / 2f64.sqrt()).abs() < 1e-14);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-14));
        let c = l2_project(&mesh, ProjectionTarget::Face(0), 2, |_| 2.5).unwrap();
        assert!((c[0] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn reproduces_polynomials() {
        let mesh = Mesh::structured(1.0, 2).unwrap();
        let f = |x: Point| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1] - x[1] * x[1];
        let c = l2_project(&mesh, ProjectionTarget::Element(5), 2, f).unwrap();
        let map = mesh.element_map(5).unwrap();
        for xi in quadrature(Domain::Triangle, 6).nodes {
            let x = map.map(xi);
            assert!((eval_element(&mesh, 5, 2, &c, x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let mesh = Mesh::structured(1.0, 2).unwrap();
        let c1 = l2_project(&mesh, ProjectionTarget::Element(2), 2, |x| {
            (3.0 * x[0]).sin() * x[1].exp()
        })
        .unwrap();
        let c2 = l2_project(&mesh, ProjectionTarget::Element(2), 2, |x| {
            eval_element(&mesh, 2, 2, &c1, x)
        })
        .unwrap();
        for (a, b) in c1.iter().zip(&c2) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn non_finite_data_is_reported() {
        let mesh = Mesh::structured(1.0, 1).unwrap();
        let err = l2_project(&mesh, ProjectionTarget::Element(0), 1, |_| f64::NAN).unwrap_err();
        assert!(matches!(err, Error::Data { .. }));
    }

    /// Best-approximation error of sin(pi x) by quadratics on a horizontal
    /// edge of length `len`, measured with a high-order independent rule.
    fn edge_residual(len: f64) -> f64 {
        let mesh = Mesh::structured(len, 1).unwrap();
        let f = |x: Point| (std::f64::consts::PI * x[0]).sin();
        let face = mesh
            .faces()
            .iter()
            .position(|fc| fc.endpoints == [0, 1])
            .unwrap();
        let c = l2_project(&mesh, ProjectionTarget::Face(face), 2, f).unwrap();
        let b = reference_basis(Domain::Edge, 2);
        let (t, w) = gauss_legendre(30);
        let sq: f64 = t
            .iter()
            .zip(&w)
            .map(|(&t, &w)| {
                let ph: f64 = b.eval([t, 0.0]).iter().zip(&c).map(|(p, c)| p * c).sum();
                let d = f(mesh.face_point(face, t)) - ph;
                w * len * d * d
            })
            .sum();
        sq.sqrt()
    }

    #[test]
    fn edge_projection_error_decreases_with_length() {
        let coarse = edge_residual(0.5);
        let fine = edge_residual(0.25);
        assert!(coarse / fine >= 4.0, "ratio {}", coarse / fine);
    }
}
