//! Closed-form right-hand sides of the operator identities, evaluated by
//! direct quadrature of the fields (no element matrices involved).

use crate::error::Result;
use crate::fespace::{quadrature, reference_basis, weak_form_exactness, Domain};
use crate::hdg::{BOperator, DiscreteFields};
use crate::mesh::Mesh;
use crate::problems::ProblemSpec;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value of the energy expression `B(v, w, mu; v, w, mu)` is claimed to
/// equal, with the sum of the absolute values of its terms as a scale.
pub fn coercivity_rhs(
    which: BOperator,
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    f: &DiscreteFields,
) -> Result<(f64, f64)> {
    let q = weak_form_exactness(k);
    let tri = quadrature(Domain::Triangle, q);
    let edge = quadrature(Domain::Edge, q);
    let bv = reference_basis(Domain::Triangle, k);
    let bw = reference_basis(Domain::Triangle, k + 1);
    let bm = reference_basis(Domain::Edge, k + 1);
    let nv = bv.dim();
    let (mut value, mut scale) = (0.0, 0.0);
    for e in 0..mesh.num_elements() {
        let map = mesh.element_map(e)?;
        let det = map.det.abs();
        let v = f.v_block(e);
        let w = f.w_block(e);
        for (&xi, &wq) in tri.nodes.iter().zip(&tri.weights) {
            let x = map.map(xi);
            let pv = bv.eval(xi);
            let vx = dot(&v[..nv], &pv);
            let vy = dot(&v[nv..], &pv);
            let wv = dot(w, &bw.eval(xi));
            let t1 = wq * det * (vx * vx + vy * vy);
            let t2 = -0.5 * wq * det * (spec.div_beta)(x) * wv * wv;
            value += t1 + t2;
            scale += t1.abs() + t2.abs();
        }
        let h_inv = spec.tau.h_inverse(mesh, e);
        for face in mesh.element_faces(e) {
            let fc = mesh.face(face);
            let n = fc.normal_of(e).expect("incident face");
            for (t, &wq) in edge.nodes.iter().zip(&edge.weights) {
                let x = mesh.face_point(face, t[0]);
                let b = (spec.beta)(x);
                let bn = b[0] * n[0] + b[1] * n[1];
                let (tau1, tau2) = spec.tau.taus(bn);
                let c = match which {
                    BOperator::B1 => h_inv + tau1 - 0.5 * bn,
                    BOperator::B2 => h_inv + tau2 + 0.5 * bn,
                };
                let wv = dot(w, &bw.eval(map.inverse_map(x)));
                let jump = if fc.is_boundary() {
                    wv
                } else {
                    wv - dot(f.mu_block(face), &bm.eval(*t))
                };
                let term = wq * fc.length * c * jump * jump;
                value += term;
                scale += term.abs();
            }
        }
    }
    Ok((value, scale))
}

/// Stabilisation mismatch `<(tau2 + beta.n - tau1)(y - y_hat), z - z_hat>`
/// over all element boundaries, with the traces taken as zero on boundary
/// faces, for a state triple `(q, y, y_hat)` and an adjoint triple
/// `(p, z, z_hat)`. The cross terms `y z_hat` and `y_hat z` do not cancel
/// unless `beta.n` vanishes on interior faces. Returns the value and the sum
/// of absolute term values.
pub fn adjoint_mismatch(
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    state: &DiscreteFields,
    adjoint: &DiscreteFields,
) -> Result<(f64, f64)> {
    let edge = quadrature(Domain::Edge, weak_form_exactness(k));
    let bw = reference_basis(Domain::Triangle, k + 1);
    let bm = reference_basis(Domain::Edge, k + 1);
    let (mut value, mut scale) = (0.0, 0.0);
    for e in 0..mesh.num_elements() {
        let map = mesh.element_map(e)?;
        for face in mesh.element_faces(e) {
            let fc = mesh.face(face);
            let n = fc.normal_of(e).expect("incident face");
            for (t, &wq) in edge.nodes.iter().zip(&edge.weights) {
                let x = mesh.face_point(face, t[0]);
                let b = (spec.beta)(x);
                let bn = b[0] * n[0] + b[1] * n[1];
                let (tau1, tau2) = spec.tau.taus(bn);
                let c = tau2 + bn - tau1;
                let pw = bw.eval(map.inverse_map(x));
                let (mut y, mut z) = (dot(state.w_block(e), &pw), dot(adjoint.w_block(e), &pw));
                if !fc.is_boundary() {
                    let pm = bm.eval(*t);
                    y -= dot(state.mu_block(face), &pm);
                    z -= dot(adjoint.mu_block(face), &pm);
                }
                let term = wq * fc.length * c * y * z;
                value += term;
                scale += term.abs();
            }
        }
    }
    Ok((value, scale))
}
