mod common;

use std::sync::Arc;

use common::*;
use hdgbc::problems::{mms_problem, paper_problem, zero_problem, StabilizationPolicy};
use hdgbc::system::{
    condense_and_assemble, condense_and_assemble_in_order, recover_fields, solve_monolithic, solve_trace_system,
    solve_trace_system_report, DofMap,
};
use hdgbc::{solve_control_problem, Error, Mesh, ProblemSpec, SolutionFields};

fn modes() -> [StabilizationPolicy; 2] {
    [StabilizationPolicy::constant(1.0), StabilizationPolicy::theory(1.0)]
}

fn problems() -> Vec<ProblemSpec> {
    vec![paper_problem(-1e-5), paper_problem(-0.25), mms_problem()]
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            for j in c..n {
                a[r][j] -= m * a[c][j];
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r][j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn to_dense(ts: &hdgbc::system::TraceSystem) -> Vec<Vec<f64>> {
    let n = ts.dim();
    let mut a = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (i, v) in ts.apply(&e).into_iter().enumerate() {
            a[i][j] = v;
        }
    }
    a
}

#[test]
fn condensed_and_monolithic_solutions_agree() {
    for spec in problems() {
        for policy in modes() {
            let spec = spec.clone().with_tau(policy);
            for n in [1, 2] {
                let mesh = Mesh::structured(spec.side_length, n).unwrap();
                for k in [0, 1] {
                    let a = solve_control_problem(&spec, &mesh, k).unwrap().flatten();
                    let b = solve_monolithic(&spec, &mesh, k).unwrap().flatten();
                    let big = max_abs(&a).max(1.0);
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x - y).abs() <= 1e-11 * big, "{} n={n} k={k}: {x} vs {y}", spec.name);
                    }
                }
            }
        }
    }
}

#[test]
fn sparse_solve_matches_dense_elimination() {
    let spec = paper_problem(-0.25);
    for (n, k, dim) in [(1, 0, 12), (1, 1, 18), (2, 0, 48)] {
        let mesh = Mesh::structured(spec.side_length, n).unwrap();
        let ts = condense_and_assemble(&spec, &mesh, k).unwrap();
        assert_eq!(ts.dim(), dim);
        let x = solve_trace_system(&ts).unwrap();
        let oracle = dense_solve(to_dense(&ts), ts.rhs.clone());
        let big = max_abs(&oracle);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12 * big);
        }
    }
}

#[test]
fn element_order_does_not_change_the_system() {
    let spec = paper_problem(-1e-5);
    let mesh = Mesh::structured(spec.side_length, 4).unwrap();
    let natural: Vec<usize> = (0..mesh.num_elements()).collect();
    let reversed: Vec<usize> = natural.iter().rev().copied().collect();
    // Deterministic shuffle: stride coprime to the element count.
    let strided: Vec<usize> = (0..natural.len()).map(|i| (i * 13) % natural.len()).collect();
    let base = condense_and_assemble_in_order(&spec, &mesh, 1, &natural).unwrap();
    let x0 = solve_trace_system(&base).unwrap();
    let probe: Vec<f64> = (0..base.dim()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let y0 = base.apply(&probe);
    for order in [reversed, strided] {
        let ts = condense_and_assemble_in_order(&spec, &mesh, 1, &order).unwrap();
        let y = ts.apply(&probe);
        for (a, b) in y.iter().zip(&y0) {
            assert!((a - b).abs() <= 1e-13 * max_abs(&y0));
        }
        for (a, b) in ts.rhs.iter().zip(&base.rhs) {
            assert!((a - b).abs() <= 1e-13 * max_abs(&base.rhs).max(f64::MIN_POSITIVE));
        }
        let x = solve_trace_system(&ts).unwrap();
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() <= 1e-12 * max_abs(&x0));
        }
    }
    let bad = condense_and_assemble_in_order(&spec, &mesh, 1, &[0, 0, 1]);
    assert!(matches!(bad, Err(Error::InvalidArgument(_))));
}

#[test]
fn zero_data_gives_zero_solution() {
    for policy in modes() {
        let spec = zero_problem().with_tau(policy);
        for n in [1, 2, 4, 8] {
            let mesh = Mesh::structured(spec.side_length, n).unwrap();
            for k in [0, 1] {
                let s = solve_control_problem(&spec, &mesh, k).unwrap();
                let norm = s.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(norm <= 1e-11, "n={n} k={k}: {norm}");
            }
        }
    }
}

fn combine(a: &ProblemSpec, b: &ProblemSpec, ca: f64, cb: f64) -> ProblemSpec {
    let (fa, fb, ya, yb) = (a.source.clone(), b.source.clone(), a.desired.clone(), b.desired.clone());
    let mut out = a.clone();
    out.source = Arc::new(move |x| ca * fa(x) + cb * fb(x));
    out.desired = Arc::new(move |x| ca * ya(x) + cb * yb(x));
    out.exact = None;
    out
}

#[test]
fn solution_is_linear_in_the_data() {
    let a = paper_problem(-0.25);
    let mut b = paper_problem(-0.25);
    b.source = Arc::new(|x| (7.0 * x[0]).sin() * x[1]);
    b.desired = Arc::new(|x| x[0] - 2.0 * x[1]);
    let mesh = Mesh::structured(a.side_length, 4).unwrap();
    for k in [0, 1] {
        let sa = solve_control_problem(&a, &mesh, k).unwrap().flatten();
        let sb = solve_control_problem(&b, &mesh, k).unwrap().flatten();
        let sc = solve_control_problem(&combine(&a, &b, 2.5, -1.5), &mesh, k).unwrap().flatten();
        let big = max_abs(&sc);
        for i in 0..sa.len() {
            assert!((sc[i] - (2.5 * sa[i] - 1.5 * sb[i])).abs() <= 1e-10 * big);
        }
    }
}

fn face_block(v: &[f64], k: usize, f: usize) -> &[f64] {
    &v[(k + 2) * f..(k + 2) * (f + 1)]
}

/// Numerical fluxes reconstructed from the recovered fields, as seen from
/// element `e` at the point `x` of face `f`.
fn numerical_fluxes(spec: &ProblemSpec, mesh: &Mesh, s: &SolutionFields, e: usize, f: usize, x: Point) -> (f64, f64) {
    let k = s.k;
    let (nv, nw) = (s.nv(), s.nw());
    let n = outward_normal(mesh, e, f);
    let beta = (spec.beta)(x);
    let bn = beta[0] * n[0] + beta[1] * n[1];
    let (t1, t2) = spec.tau.taus(bn);
    let h = h_inverse(mesh);
    let q = eval_element_vector(mesh, k, &s.q[2 * nv * e..2 * nv * (e + 1)], e, x);
    let p = eval_element_vector(mesh, k, &s.p[2 * nv * e..2 * nv * (e + 1)], e, x);
    let y = eval_element(mesh, k + 1, &s.y[nw * e..nw * (e + 1)], e, x);
    let z = eval_element(mesh, k + 1, &s.z[nw * e..nw * (e + 1)], e, x);
    let (yh, zh) = if mesh.face(f).is_boundary() {
        (eval_face(mesh, k + 1, face_block(&s.u, k, f), f, x), 0.0)
    } else {
        (
            eval_face(mesh, k + 1, face_block(&s.y_hat, k, f), f, x),
            eval_face(mesh, k + 1, face_block(&s.z_hat, k, f), f, x),
        )
    };
    let qn = q[0] * n[0] + q[1] * n[1] + (h + t1) * (y - yh);
    let pn = p[0] * n[0] + p[1] * n[1] + (h + t2) * (z - zh);
    (qn + bn * yh, pn - bn * zh)
}

/// With constant velocity and stabilisation the fluxes are polynomials of
/// the trace degree, so weak continuity holds pointwise.
#[test]
fn numerical_fluxes_are_single_valued_and_control_is_optimal() {
    for policy in modes() {
        let spec = paper_problem(-0.25).with_tau(policy).with_gamma(0.5).unwrap();
        let mesh = Mesh::structured(spec.side_length, 4).unwrap();
        for k in [0, 1] {
            let s = solve_control_problem(&spec, &mesh, k).unwrap();
            let mut scale = 0.0f64;
            let mut worst = 0.0f64;
            for f in 0..mesh.num_faces() {
                let sides: Vec<usize> = mesh.face(f).sides().map(|s| s.element).collect();
                for (x, _) in face_rule(&mesh, f, k + 3) {
                    let fl: Vec<(f64, f64)> = sides.iter().map(|&e| numerical_fluxes(&spec, &mesh, &s, e, f, x)).collect();
                    scale = fl.iter().fold(scale, |m, v| m.max(v.0.abs()).max(v.1.abs()));
                    if sides.len() == 2 {
                        worst = worst.max((fl[0].0 + fl[1].0).abs()).max((fl[0].1 + fl[1].1).abs());
                    } else {
                        // gamma u + p_hat.n = 0 on the boundary.
                        let u = eval_face(&mesh, k + 1, face_block(&s.u, k, f), f, x);
                        worst = worst.max((spec.gamma * u + fl[0].1).abs());
                    }
                }
            }
            assert!(worst <= 1e-10 * scale, "k={k}: {worst} vs scale {scale}");
        }
    }
}

#[test]
fn trace_residual_is_reported_and_small() {
    let spec = mms_problem();
    let mesh = Mesh::structured(1.0, 8).unwrap();
    let ts = condense_and_assemble(&spec, &mesh, 1).unwrap();
    let (x, report) = solve_trace_system_report(&ts).unwrap();
    assert!(report.accepted());
    let r: Vec<f64> = ts.apply(&x).iter().zip(&ts.rhs).map(|(a, b)| a - b).collect();
    let rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / ts.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((rel - report.relative_residual).abs() <= 1e-3 * rel.max(1e-300) + 1e-16);
    let dofs = DofMap::new(&mesh, 1);
    let fields = recover_fields(&spec, &mesh, 1, &dofs, &x).unwrap();
    assert_eq!(fields.trace_vector(&dofs), x);
    assert!(recover_fields(&spec, &mesh, 1, &dofs, &x[1..]).is_err());
}

#[test]
fn dof_map_has_expected_layout() {
    for n in [1, 2, 4] {
        let mesh = Mesh::structured(1.0, n).unwrap();
        for k in [0, 1, 2] {
            let d = DofMap::new(&mesh, k);
            let nm = k + 2;
            assert_eq!(d.len(), nm * (2 * mesh.num_interior_faces() + mesh.num_boundary_faces()));
            let mut seen = vec![0u8; d.len()];
            for f in 0..mesh.num_faces() {
                let ranges = [d.state_trace(f), d.adjoint_trace(f), d.control(f)];
                assert_eq!(ranges.iter().flatten().count(), if mesh.face(f).is_boundary() { 1 } else { 2 });
                for r in ranges.into_iter().flatten() {
                    assert_eq!(r.len(), nm);
                    r.for_each(|i| seen[i] += 1);
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
