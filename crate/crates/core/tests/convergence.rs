mod common;

use common::*;
use hdgbc::analysis::{eoc, l2_error, run_study, Field, Regularity, StudyTruth, Truth};
use hdgbc::fespace::{l2_project, ProjectionTarget};
use hdgbc::problems::{mms_problem, paper_problem, zero_problem};
use hdgbc::{solve_control_problem, Mesh, SolutionFields};

fn second_difference(f: impl Fn(Point) -> f64, x: Point, axis: usize, h: f64) -> f64 {
    let shift = |s: f64| {
        let mut y = x;
        y[axis] += s;
        f(y)
    };
    let d = |h: f64| (shift(h) - 2.0 * f(x) + shift(-h)) / (h * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn first_difference(f: impl Fn(Point) -> f64, x: Point, axis: usize, h: f64) -> f64 {
    let shift = |s: f64| {
        let mut y = x;
        y[axis] += s;
        f(y)
    };
    let d = |h: f64| (shift(h) - shift(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// The manufactured data solve the continuous optimality system.
#[test]
fn manufactured_data_satisfy_the_optimality_system() {
    let spec = mms_problem();
    let ex = spec.exact.as_ref().unwrap();
    let h = 1e-3;
    let pts = [[0.3, 0.4], [0.71, 0.18], [0.5, 0.5], [0.93, 0.62], [0.05, 0.85]];
    for x in pts {
        let lap = |g: &dyn Fn(Point) -> f64| second_difference(g, x, 0, h) + second_difference(g, x, 1, h);
        let grad = |g: &dyn Fn(Point) -> f64| [first_difference(g, x, 0, h), first_difference(g, x, 1, h)];
        let y = |p: Point| (ex.y)(p);
        let z = |p: Point| (ex.z)(p);
        let b = (spec.beta)(x);
        let gy = grad(&y);
        let gz = grad(&z);
        let f = -lap(&y) + b[0] * gy[0] + b[1] * gy[1];
        assert!((f - (spec.source)(x)).abs() <= 1e-7 * (spec.source)(x).abs().max(1.0), "state at {x:?}");
        let rhs = -lap(&z) - b[0] * gz[0] - b[1] * gz[1];
        let target = (ex.y)(x) - (spec.desired)(x);
        assert!((rhs - target).abs() <= 1e-7 * target.abs().max(1.0), "adjoint at {x:?}");
        let (q, p) = ((ex.q)(x), (ex.p)(x));
        for i in 0..2 {
            assert!((q[i] + gy[i]).abs() <= 1e-7);
            assert!((p[i] + gz[i]).abs() <= 1e-7);
        }
    }
    // Boundary: y = u and gamma u + p.n = 0.
    for t in [0.1, 0.37, 0.8] {
        for (x, n) in [([t, 0.0], [0.0, -1.0]), ([1.0, t], [1.0, 0.0]), ([t, 1.0], [0.0, 1.0]), ([0.0, t], [-1.0, 0.0])] {
            let u = (ex.u)(x);
            assert!(((ex.y)(x) - u).abs() <= 1e-12);
            let p = (ex.p)(x);
            assert!((spec.gamma * u + p[0] * n[0] + p[1] * n[1]).abs() <= 1e-12);
        }
    }
}

#[test]
fn errors_decrease_under_refinement() {
    let spec = mms_problem();
    for k in [0, 1] {
        let r = run_study(&spec, k, &[4, 8, 16], StudyTruth::Exact, Regularity::smooth()).unwrap();
        for f in Field::ALL {
            let e: Vec<f64> = r.levels.iter().map(|l| l.error(f).unwrap()).collect();
            assert!(e.windows(2).all(|w| w[1] < w[0]), "k={k} {f:?}: {e:?}");
        }
    }
}

/// The exact control vanishes, so the discrete control shrinks to zero.
#[test]
fn control_norm_decreases_on_manufactured_problem() {
    let spec = mms_problem();
    let ex = spec.exact.as_ref().unwrap();
    let norms: Vec<f64> = [16, 32]
        .iter()
        .map(|&n| {
            let mesh = Mesh::structured(1.0, n).unwrap();
            let s = solve_control_problem(&spec, &mesh, 1).unwrap();
            l2_error(&s, &mesh, &Truth::Exact(ex), Field::U).unwrap()
        })
        .collect();
    assert!(norms[1] < norms[0], "{norms:?}");
}

#[test]
fn zero_problem_has_zero_errors_and_no_orders() {
    let r = run_study(&zero_problem(), 0, &[2, 4], StudyTruth::Exact, Regularity::smooth()).unwrap();
    for l in &r.levels {
        for f in Field::ALL {
            assert_eq!(l.error(f), Some(0.0));
            assert_eq!(l.order(f), None);
        }
    }
}

/// Rewrites `s` on the refinement `fine` by projecting each field; the
/// projection reproduces polynomials exactly.
fn prolong(s: &SolutionFields, coarse: &Mesh, fine: &Mesh, template: &SolutionFields) -> SolutionFields {
    let k = s.k;
    let (nv, nw, nm) = (s.nv(), s.nw(), s.nm());
    let mut out = template.clone();
    for e in 0..fine.num_elements() {
        let c = coarse.locate(fine.centroid(e));
        let scalar = |v: &[f64]| {
            let blk = &v[nw * c..nw * (c + 1)];
            l2_project(fine, ProjectionTarget::Element(e), k + 1, |x| eval_element(coarse, k + 1, blk, c, x)).unwrap()
        };
        let vector = |v: &[f64]| {
            let blk = &v[2 * nv * c..2 * nv * (c + 1)];
            let mut cx = l2_project(fine, ProjectionTarget::Element(e), k, |x| eval_element_vector(coarse, k, blk, c, x)[0]).unwrap();
            cx.extend(l2_project(fine, ProjectionTarget::Element(e), k, |x| eval_element_vector(coarse, k, blk, c, x)[1]).unwrap());
            cx
        };
        out.y[nw * e..nw * (e + 1)].copy_from_slice(&scalar(&s.y));
        out.z[nw * e..nw * (e + 1)].copy_from_slice(&scalar(&s.z));
        out.q[2 * nv * e..2 * nv * (e + 1)].copy_from_slice(&vector(&s.q));
        out.p[2 * nv * e..2 * nv * (e + 1)].copy_from_slice(&vector(&s.p));
    }
    for f in fine.boundary_faces() {
        let mid = fine.face_point(f, 0.5);
        let cf = coarse
            .boundary_faces()
            .find(|&cf| {
                let [a, b] = coarse.face(cf).endpoints.map(|v| coarse.vertices()[v]);
                let cross = (b[0] - a[0]) * (mid[1] - a[1]) - (b[1] - a[1]) * (mid[0] - a[0]);
                let inside = (mid[0] - a[0]) * (mid[0] - b[0]) + (mid[1] - a[1]) * (mid[1] - b[1]) < 0.0;
                cross.abs() < 1e-12 && inside
            })
            .unwrap();
        let blk = &s.u[nm * cf..nm * (cf + 1)];
        let c = l2_project(fine, ProjectionTarget::Face(f), k + 1, |x| eval_face(coarse, k + 1, blk, cf, x)).unwrap();
        out.u[nm * f..nm * (f + 1)].copy_from_slice(&c);
    }
    out
}

/// Distance between two solutions on the same mesh from the orthonormal
/// coefficients: the element mass matrix is `|det J| I`, the face one `|F| I`.
fn coefficient_distance(a: &SolutionFields, b: &SolutionFields, mesh: &Mesh, which: Field) -> f64 {
    let per_elem = |x: &[f64], y: &[f64], stride: usize| -> f64 {
        (0..mesh.num_elements())
            .map(|e| {
                let det = 2.0 * mesh.area(e);
                det * (stride * e..stride * (e + 1)).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    match which {
        Field::Q => per_elem(&a.q, &b.q, 2 * a.nv()),
        Field::P => per_elem(&a.p, &b.p, 2 * a.nv()),
        Field::Y => per_elem(&a.y, &b.y, a.nw()),
        Field::Z => per_elem(&a.z, &b.z, a.nw()),
        Field::U => {
            let nm = a.nm();
            mesh.boundary_faces()
                .map(|f| mesh.face(f).length * (nm * f..nm * (f + 1)).map(|i| (a.u[i] - b.u[i]).powi(2)).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        }
    }
}

#[test]
fn nested_reference_errors_are_exact() {
    let spec = paper_problem(-0.25);
    for k in [0, 1] {
        let coarse = Mesh::structured(spec.side_length, 2).unwrap();
        let fine = Mesh::structured(spec.side_length, 8).unwrap();
        let a = solve_control_problem(&spec, &coarse, k).unwrap();
        let mut spec_b = paper_problem(-0.5);
        spec_b.gamma = 0.3;
        let b = solve_control_problem(&spec_b, &coarse, k).unwrap();
        let template = solve_control_problem(&spec, &fine, k).unwrap();
        let b_fine = prolong(&b, &coarse, &fine, &template);
        let a_fine = prolong(&a, &coarse, &fine, &template);
        for f in Field::ALL {
            let self_err = l2_error(&a, &coarse, &Truth::Reference { fields: &a_fine, mesh: &fine }, f).unwrap();
            let expected = coefficient_distance(&a, &b, &coarse, f);
            let got = l2_error(&a, &coarse, &Truth::Reference { fields: &b_fine, mesh: &fine }, f).unwrap();
            assert!(self_err <= 1e-12 * expected, "k={k} {f:?}: self error {self_err}");
            assert!((got - expected).abs() <= 1e-10 * expected, "k={k} {f:?}: {got} vs {expected}");
        }
    }
}

#[test]
fn eoc_matches_geometric_sequences() {
    let hs = [0.5, 0.25, 0.125, 0.0625];
    for rate in [0.5, 1.0, 2.47] {
        let e: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powf(rate)).collect();
        for o in eoc(&e, &hs).unwrap() {
            assert!((o.unwrap() - rate).abs() < 1e-12);
        }
    }
    assert!(eoc(&[1.0], &[0.5, 0.25]).is_err());
}
