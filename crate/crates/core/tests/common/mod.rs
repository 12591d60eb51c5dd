//! Field evaluation and quadrature written against the mesh vertices only,
//! so the oracles built on it share no code with the element matrices.
#![allow(dead_code)]

use hdgbc::fespace::{gauss_legendre, reference_basis, Domain};
use hdgbc::hdg::DiscreteFields;
use hdgbc::problems::StabilizationPolicy;
use hdgbc::Mesh;

pub type Point = [f64; 2];

/// Reference coordinates of `x` in element `e`.
pub fn reference_coords(mesh: &Mesh, e: usize, x: Point) -> Point {
    let [a, b, c] = mesh.element_vertices(e);
    let (j00, j01, j10, j11) = (b[0] - a[0], c[0] - a[0], b[1] - a[1], c[1] - a[1]);
    let det = j00 * j11 - j01 * j10;
    let (dx, dy) = (x[0] - a[0], x[1] - a[1]);
    [(j11 * dx - j01 * dy) / det, (-j10 * dx + j00 * dy) / det]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scalar of degree `m` with coefficient block `c` on element `e`.
pub fn eval_element(mesh: &Mesh, m: usize, c: &[f64], e: usize, x: Point) -> f64 {
    dot(c, &reference_basis(Domain::Triangle, m).eval(reference_coords(mesh, e, x)))
}

/// Vector field of degree `m`; `c` holds the x block then the y block.
pub fn eval_element_vector(mesh: &Mesh, m: usize, c: &[f64], e: usize, x: Point) -> Point {
    let phi = reference_basis(Domain::Triangle, m).eval(reference_coords(mesh, e, x));
    let n = phi.len();
    [dot(&c[..n], &phi), dot(&c[n..], &phi)]
}

/// Position of `x` along face `f`, measured from its lower-numbered vertex.
pub fn face_parameter(mesh: &Mesh, f: usize, x: Point) -> f64 {
    let [i, j] = mesh.face(f).endpoints;
    let (a, b) = (mesh.vertices()[i], mesh.vertices()[j]);
    let d = [b[0] - a[0], b[1] - a[1]];
    ((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])
}

pub fn eval_face(mesh: &Mesh, m: usize, c: &[f64], f: usize, x: Point) -> f64 {
    dot(c, &reference_basis(Domain::Edge, m).eval([face_parameter(mesh, f, x), 0.0]))
}

/// Outward unit normal of `e` on face `f`, from the vertex coordinates.
pub fn outward_normal(mesh: &Mesh, e: usize, f: usize) -> Point {
    let [i, j] = mesh.face(f).endpoints;
    let (a, b) = (mesh.vertices()[i], mesh.vertices()[j]);
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
    let c = mesh.centroid(e);
    if (a[0] - c[0]) * n[0] + (a[1] - c[1]) * n[1] < 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

/// Points and weights for integrating over face `f`, `npts` Gauss points.
pub fn face_rule(mesh: &Mesh, f: usize, npts: usize) -> Vec<(Point, f64)> {
    let [i, j] = mesh.face(f).endpoints;
    let (a, b) = (mesh.vertices()[i], mesh.vertices()[j]);
    let len = mesh.face(f).length;
    let (t, w) = gauss_legendre(npts);
    t.iter()
        .zip(&w)
        .map(|(&t, &w)| ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], w * len))
        .collect()
}

/// Collapsed tensor Gauss rule over element `e`.
pub fn element_rule(mesh: &Mesh, e: usize, npts: usize) -> Vec<(Point, f64)> {
    let [a, b, c] = mesh.element_vertices(e);
    let area = mesh.area(e);
    let (t, w) = gauss_legendre(npts);
    let mut out = Vec::with_capacity(npts * npts);
    for (&s, &ws) in t.iter().zip(&w) {
        for (&r, &wr) in t.iter().zip(&w) {
            // (s, r) in the unit square to barycentric (1-s, s(1-r), s r).
            let (l1, l2) = (s * (1.0 - r), s * r);
            let l0 = 1.0 - s;
            let x = [
                l0 * a[0] + l1 * b[0] + l2 * c[0],
                l0 * a[1] + l1 * b[1] + l2 * c[1],
            ];
            out.push((x, 2.0 * area * s * ws * wr));
        }
    }
    out
}

/// Width convention `n / L` of the inverse mesh size.
pub fn h_inverse(mesh: &Mesh) -> f64 {
    mesh.cells_per_side() as f64 / mesh.side_length()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Stabilisation choice mirrored on the test side.
#[derive(Clone, Copy, Debug)]
pub enum Mode {
    Constant(f64),
    Theory(f64),
}

impl Mode {
    pub fn policy(self) -> StabilizationPolicy {
        match self {
            Mode::Constant(t) => StabilizationPolicy::constant(t),
            Mode::Theory(t) => StabilizationPolicy::theory(t),
        }
    }

    pub fn taus(self, bn: f64) -> (f64, f64) {
        match self {
            Mode::Constant(t) => (t, t),
            Mode::Theory(t) => (t + bn, t),
        }
    }
}

/// `||v||^2 + sum <(1/h + tau -/+ beta.n/2)(w - mu), w - mu>` with `mu = 0`
/// on the boundary; `state` picks the state form, otherwise the adjoint.
pub fn energy(mesh: &Mesh, k: usize, beta: Point, mode: Mode, f: &DiscreteFields, state: bool) -> (f64, f64) {
    let nv = (k + 1) * (k + 2) / 2;
    let nw = (k + 2) * (k + 3) / 2;
    let nm = k + 2;
    let (mut value, mut scale) = (0.0, 0.0);
    for e in 0..mesh.num_elements() {
        let v = &f.v[2 * nv * e..2 * nv * (e + 1)];
        let w = &f.w[nw * e..nw * (e + 1)];
        for (x, wq) in element_rule(mesh, e, k + 3) {
            let vx = eval_element_vector(mesh, k, v, e, x);
            let t = wq * (vx[0] * vx[0] + vx[1] * vx[1]);
            value += t;
            scale += t;
        }
        for face in mesh.element_faces(e) {
            let n = outward_normal(mesh, e, face);
            let bn = beta[0] * n[0] + beta[1] * n[1];
            let (t1, t2) = mode.taus(bn);
            let c = h_inverse(mesh) + if state { t1 - 0.5 * bn } else { t2 + 0.5 * bn };
            let boundary = mesh.face(face).is_boundary();
            for (x, wq) in face_rule(mesh, face, k + 3) {
                let mu = if boundary { 0.0 } else { eval_face(mesh, k + 1, &f.mu[nm * face..nm * (face + 1)], face, x) };
                let jump = eval_element(mesh, k + 1, w, e, x) - mu;
                let t = wq * c * jump * jump;
                value += t;
                scale += t.abs();
            }
        }
    }
    (value, scale)
}

/// `<(tau2 + beta.n - tau1)(y - y_hat), z - z_hat>` over element
/// boundaries, traces zero on the boundary.
pub fn mismatch(mesh: &Mesh, k: usize, beta: Point, mode: Mode, a: &DiscreteFields, b: &DiscreteFields) -> (f64, f64) {
    let nw = (k + 2) * (k + 3) / 2;
    let nm = k + 2;
    let (mut value, mut scale) = (0.0, 0.0);
    for e in 0..mesh.num_elements() {
        for face in mesh.element_faces(e) {
            let n = outward_normal(mesh, e, face);
            let bn = beta[0] * n[0] + beta[1] * n[1];
            let (t1, t2) = mode.taus(bn);
            let c = t2 + bn - t1;
            for (x, wq) in face_rule(mesh, face, k + 3) {
                let mut y = eval_element(mesh, k + 1, &a.w[nw * e..nw * (e + 1)], e, x);
                let mut z = eval_element(mesh, k + 1, &b.w[nw * e..nw * (e + 1)], e, x);
                if !mesh.face(face).is_boundary() {
                    y -= eval_face(mesh, k + 1, &a.mu[nm * face..nm * (face + 1)], face, x);
                    z -= eval_face(mesh, k + 1, &b.mu[nm * face..nm * (face + 1)], face, x);
                }
                let t = c * y * z;
                value += wq * t;
                scale += (wq * t).abs();
            }
        }
    }
    (value, scale)
}

/// Copy of `f` with the selected components negated.
pub fn neg(f: &DiscreteFields, v: bool, w: bool, mu: bool) -> DiscreteFields {
    let s = |x: &[f64], on: bool| x.iter().map(|c| if on { -c } else { *c }).collect();
    DiscreteFields {
        k: f.k,
        v: s(&f.v, v),
        w: s(&f.w, w),
        mu: s(&f.mu, mu),
    }
}

/// Cholesky test of `(A + A^T) / 2` for the `d x d` matrix with entries `at`.
pub fn symmetric_part_definite(d: usize, at: impl Fn(usize, usize) -> f64) -> bool {
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let a = 0.5 * (at(i, j) + at(j, i));
            let s: f64 = (0..j).map(|m| l[i][m] * l[j][m]).sum();
            if i == j {
                if a - s <= 0.0 {
                    return false;
                }
                l[i][i] = (a - s).sqrt();
            } else {
                l[i][j] = (a - s) / l[j][j];
            }
        }
    }
    true
}
