mod common;

use common::*;
use hdgbc::analysis::eoc;
use hdgbc::fespace::{l2_project, reference_basis, Domain, ProjectionTarget};
use hdgbc::hdg::HdgContext;
use hdgbc::problems::{paper_problem, validate_stabilization, StabilizationPolicy};
use hdgbc::Mesh;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mesh_geometry_is_consistent(n in 1usize..7, side in 0.05f64..4.0) {
        let mesh = Mesh::structured(side, n).unwrap();
        prop_assert_eq!(mesh.num_elements(), 2 * n * n);
        prop_assert_eq!(mesh.num_boundary_faces(), 4 * n);
        let cell_area = side * side / (2.0 * (n * n) as f64);
        let total: f64 = (0..mesh.num_elements()).map(|e| mesh.area(e)).sum();
        prop_assert!((total - side * side).abs() <= 1e-12 * side * side);
        for e in 0..mesh.num_elements() {
            prop_assert!((mesh.area(e) - cell_area).abs() <= 1e-12 * cell_area);
            let c = mesh.centroid(e);
            for f in mesh.element_faces(e) {
                let n_lib = mesh.face(f).normal_of(e).unwrap();
                let n_ref = outward_normal(&mesh, e, f);
                prop_assert!((n_lib[0].hypot(n_lib[1]) - 1.0).abs() < 1e-14);
                prop_assert!((n_lib[0] - n_ref[0]).abs() < 1e-14 && (n_lib[1] - n_ref[1]).abs() < 1e-14);
                let m = mesh.face_point(f, 0.5);
                prop_assert!((m[0] - c[0]) * n_lib[0] + (m[1] - c[1]) * n_lib[1] > 0.0);
            }
        }
        for f in 0..mesh.num_faces() {
            let sides: Vec<_> = mesh.face(f).sides().collect();
            prop_assert_eq!(sides.len(), if mesh.face(f).is_boundary() { 1 } else { 2 });
            if sides.len() == 2 {
                prop_assert!((sides[0].normal[0] + sides[1].normal[0]).abs() < 1e-14);
                prop_assert!((sides[0].normal[1] + sides[1].normal[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn refinements_nest_in_their_ancestors(n in 1usize..5, levels in 1u32..3, s in 0.0f64..1.0, r in 0.0f64..1.0) {
        let coarse = Mesh::structured(1.5, n).unwrap();
        let fine = Mesh::structured(1.5, n * 2usize.pow(levels)).unwrap();
        let anc = coarse.ancestors_in(&fine).unwrap();
        for e in 0..fine.num_elements() {
            // A random point of the fine element lies in its ancestor.
            let [a, b, c] = fine.element_vertices(e);
            let (l1, l2) = (s * (1.0 - r), s * r);
            let x = [
                (1.0 - s) * a[0] + l1 * b[0] + l2 * c[0],
                (1.0 - s) * a[1] + l1 * b[1] + l2 * c[1],
            ];
            let xi = reference_coords(&coarse, anc[e], x);
            let eps = 1e-12;
            prop_assert!(xi[0] >= -eps && xi[1] >= -eps && xi[0] + xi[1] <= 1.0 + eps);
        }
        let once = coarse.uniform_refine().unwrap();
        prop_assert_eq!(once.parent().unwrap().to_vec(), coarse.ancestors_in(&once).unwrap());
    }

    #[test]
    fn projection_reproduces_polynomials(m in 0usize..4, seed in proptest::collection::vec(-1.0f64..1.0, 15), e in 0usize..8) {
        let mesh = Mesh::structured(0.7, 2).unwrap();
        let dim = reference_basis(Domain::Triangle, m).dim();
        let c = &seed[..dim];
        let p = l2_project(&mesh, ProjectionTarget::Element(e), m, |x| eval_element(&mesh, m, c, e, x)).unwrap();
        for (a, b) in p.iter().zip(c) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let again = l2_project(&mesh, ProjectionTarget::Element(e), m, |x| eval_element(&mesh, m, &p, e, x)).unwrap();
        for (a, b) in again.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let f = e % mesh.num_faces();
        let cf = &seed[..m + 1];
        let pf = l2_project(&mesh, ProjectionTarget::Face(f), m, |x| eval_face(&mesh, m, cf, f, x)).unwrap();
        for (a, b) in pf.iter().zip(cf) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eoc_recovers_power_laws(rate in 0.1f64..4.0, c in 1e-6f64..1e3, h0 in 0.01f64..1.0, ratio in 1.5f64..4.0) {
        let hs: Vec<f64> = (0..4).map(|i| h0 / ratio.powi(i)).collect();
        let e: Vec<f64> = hs.iter().map(|h| c * h.powf(rate)).collect();
        for o in eoc(&e, &hs).unwrap() {
            prop_assert!((o.unwrap() - rate).abs() < 1e-9);
        }
    }

    /// Whenever the stabilisation conditions hold, the realised state and
    /// adjoint blocks have positive definite symmetric parts.
    #[test]
    fn stable_parameters_give_definite_blocks(
        bx in -2.0f64..2.0,
        by in -2.0f64..2.0,
        tau in 0.05f64..3.0,
        theory in any::<bool>(),
        k in 0usize..2,
        n in 1usize..4,
    ) {
        let policy = if theory { StabilizationPolicy::theory(tau) } else { StabilizationPolicy::constant(tau) };
        let spec = paper_problem(-0.25).with_constant_beta([bx, by]).with_tau(policy);
        let mesh = Mesh::structured(spec.side_length, n).unwrap();
        let report = validate_stabilization(&spec, &mesh, k).unwrap();
        prop_assume!(report.passed);
        let ctx = HdgContext::new(&spec, &mesh, k);
        for e in 0..mesh.num_elements() {
            let parts = ctx.element_parts(e).unwrap();
            for m in [parts.state_block(), parts.adjoint_block()] {
                prop_assert!(symmetric_part_definite(m.nrows(), |i, j| m[(i, j)]));
            }
        }
    }
}

#[test]
fn small_constant_tau_fails_validation() {
    let spec = paper_problem(-1e-5).with_tau(StabilizationPolicy::constant(0.1));
    for n in [1, 2, 4, 8] {
        let mesh = Mesh::structured(spec.side_length, n).unwrap();
        let r = validate_stabilization(&spec, &mesh, 1).unwrap();
        assert!(!r.passed);
        // Axis-aligned faces see |beta.n| = 1, so the margin is 0.1 - 0.5.
        assert!((r.min_tau1_margin + 0.4).abs() < 1e-12);
        assert!((r.min_tau2_margin + 0.4).abs() < 1e-12);
    }
    let ok = paper_problem(-1e-5);
    let mesh = Mesh::structured(ok.side_length, 4).unwrap();
    let r = validate_stabilization(&ok, &mesh, 1).unwrap();
    assert!(r.passed && r.failing_elements.is_empty());
    assert!((r.min_tau1_margin - 0.5).abs() < 1e-12);
}
