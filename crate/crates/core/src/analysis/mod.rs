//! Error norms, convergence orders, convergence studies and the
//! diagnostics suite.

mod diagnostics;
mod identities;
mod report;

pub use diagnostics::{diagnostics, CheckStatus, DiagnosticCheck, DiagnosticsReport};
pub use identities::{adjoint_mismatch, coercivity_rhs};
pub use report::{write_csv, write_markdown, ReportFormat};

use crate::error::{Error, Result};
use crate::fespace::{quadrature, reference_basis, weak_form_exactness, BasisSet, Domain};
use crate::mesh::{Mesh, Point};
use crate::problems::{ExactFields, ProblemSpec};
use crate::system::{solve_control_problem, ForwardFields, SolutionFields};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Q,
    P,
    Y,
    Z,
    U,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Q, Field::P, Field::Y, Field::Z, Field::U];

    pub fn name(self) -> &'static str {
        match self {
            Field::Q => "q",
            Field::P => "p",
            Field::Y => "y",
            Field::Z => "z",
            Field::U => "u",
        }
    }
}

/// What a discrete solution is compared against.
pub enum Truth<'a> {
    Exact(&'a ExactFields),
    /// Discrete solution on a nested refinement of the coarse mesh.
    Reference {
        fields: &'a SolutionFields,
        mesh: &'a Mesh,
    },
}

/// Coefficients of one discrete field: `components` blocks of `dim`
/// coefficients per element (or per face for traces).
struct Discrete<'a> {
    coeffs: &'a [f64],
    basis: BasisSet,
    components: usize,
}

impl Discrete<'_> {
    fn stride(&self) -> usize {
        self.components * self.basis.dim()
    }

    fn eval(&self, cell: usize, xi: Point, out: &mut [f64; 2]) {
        let phi = self.basis.eval(xi);
        let dim = phi.len();
        let base = &self.coeffs[cell * self.stride()..(cell + 1) * self.stride()];
        for (c, o) in out.iter_mut().enumerate().take(self.components) {
            *o = base[c * dim..(c + 1) * dim]
                .iter()
                .zip(&phi)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
}

fn view(fields: &SolutionFields, which: Field) -> Discrete<'_> {
    let k = fields.k;
    match which {
        Field::Q => Discrete {
            coeffs: &fields.q,
            basis: reference_basis(Domain::Triangle, k),
            components: 2,
        },
        Field::P => Discrete {
            coeffs: &fields.p,
            basis: reference_basis(Domain::Triangle, k),
            components: 2,
        },
        Field::Y => Discrete {
            coeffs: &fields.y,
            basis: reference_basis(Domain::Triangle, k + 1),
            components: 1,
        },
        Field::Z => Discrete {
            coeffs: &fields.z,
            basis: reference_basis(Domain::Triangle, k + 1),
            components: 1,
        },
        Field::U => Discrete {
            coeffs: &fields.u,
            basis: reference_basis(Domain::Edge, k + 1),
            components: 1,
        },
    }
}

fn exact_value(truth: &ExactFields, which: Field, x: Point) -> [f64; 2] {
    match which {
        Field::Q => (truth.q)(x),
        Field::P => (truth.p)(x),
        Field::Y => [(truth.y)(x), 0.0],
        Field::Z => [(truth.z)(x), 0.0],
        Field::U => [(truth.u)(x), 0.0],
    }
}

fn check_mesh(fields_n: usize, side: f64, mesh: &Mesh) -> Result<()> {
    if fields_n != mesh.cells_per_side() || side != mesh.side_length() {
        return Err(Error::InvalidArgument(format!(
            "fields for n={fields_n} evaluated on a mesh with n={}",
            mesh.cells_per_side()
        )));
    }
    Ok(())
}

fn volume_error_exact(
    mesh: &Mesh,
    d: &Discrete,
    exactness: usize,
    f: impl Fn(Point) -> [f64; 2],
) -> Result<f64> {
    let rule = quadrature(Domain::Triangle, exactness);
    let mut sum = 0.0;
    let mut v = [0.0; 2];
    for e in 0..mesh.num_elements() {
        let map = mesh.element_map(e)?;
        let det = map.det.abs();
        for (&xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = map.map(xi);
            d.eval(e, xi, &mut v);
            let t = f(x);
            for c in 0..d.components {
                sum += w * det * (t[c] - v[c]).powi(2);
            }
        }
    }
    Ok(sum.sqrt())
}

fn boundary_error_exact(
    mesh: &Mesh,
    d: &Discrete,
    exactness: usize,
    f: impl Fn(Point) -> f64,
) -> f64 {
    let rule = quadrature(Domain::Edge, exactness);
    let mut sum = 0.0;
    let mut v = [0.0; 2];
    for face in mesh.boundary_faces() {
        let len = mesh.face(face).length;
        for (t, &w) in rule.nodes.iter().zip(&rule.weights) {
            d.eval(face, *t, &mut v);
            sum += w * len * (f(mesh.face_point(face, t[0])) - v[0]).powi(2);
        }
    }
    sum.sqrt()
}

/// Coarse boundary face containing the fine boundary face `fine_face`.
fn coarse_boundary_face(
    coarse: &Mesh,
    fine: &Mesh,
    ancestors: &[usize],
    fine_face: usize,
) -> Result<usize> {
    let face = fine.face(fine_face);
    let e = face
        .sides()
        .next()
        .expect("boundary face has one side")
        .element;
    let mid = fine.face_point(fine_face, 0.5);
    let tol = 1e-9 * coarse.side_length();
    for cf in coarse.element_faces(ancestors[e]) {
        let c = coarse.face(cf);
        if !c.is_boundary() {
            continue;
        }
        let [a, b] = c.endpoints.map(|v| coarse.vertices()[v]);
        let cross = (b[0] - a[0]) * (mid[1] - a[1]) - (b[1] - a[1]) * (mid[0] - a[0]);
        if cross.abs() <= tol * c.length {
            return Ok(cf);
        }
    }
    Err(Error::InvalidArgument(format!(
        "fine boundary face {fine_face} has no coarse boundary face"
    )))
}

fn reference_error(
    coarse: &Mesh,
    fine: &Mesh,
    d: &Discrete,
    r: &Discrete,
    which: Field,
) -> Result<f64> {
    let ancestors = coarse.ancestors_in(fine)?;
    let degree = d.basis.degree.max(r.basis.degree);
    let mut sum = 0.0;
    let (mut vc, mut vf) = ([0.0; 2], [0.0; 2]);
    if which == Field::U {
        let rule = quadrature(Domain::Edge, 2 * degree);
        for face in fine.boundary_faces() {
            let cf = coarse_boundary_face(coarse, fine, &ancestors, face)?;
            let len = fine.face(face).length;
            for (t, &w) in rule.nodes.iter().zip(&rule.weights) {
                let x = fine.face_point(face, t[0]);
                r.eval(face, *t, &mut vf);
                d.eval(cf, [coarse.face_parameter(cf, x), 0.0], &mut vc);
                sum += w * len * (vf[0] - vc[0]).powi(2);
            }
        }
    } else {
        let rule = quadrature(Domain::Triangle, 2 * degree);
        let coarse_maps = (0..coarse.num_elements())
            .map(|e| coarse.element_map(e))
            .collect::<Result<Vec<_>>>()?;
        for e in 0..fine.num_elements() {
            let map = fine.element_map(e)?;
            let cmap = &coarse_maps[ancestors[e]];
            let det = map.det.abs();
            for (&xi, &w) in rule.nodes.iter().zip(&rule.weights) {
                let x = map.map(xi);
                r.eval(e, xi, &mut vf);
                d.eval(ancestors[e], cmap.inverse_map(x), &mut vc);
                for c in 0..d.components {
                    sum += w * det * (vf[c] - vc[c]).powi(2);
                }
            }
        }
    }
    Ok(sum.sqrt())
}

/// L2 norm of the error of one field: volume norm for `q, p, y, z`,
/// boundary norm for `u`. Against a nested reference the integral is taken
/// on the finer mesh, where both discrete fields are polynomials.
pub fn l2_error(fields: &SolutionFields, mesh: &Mesh, truth: &Truth, which: Field) -> Result<f64> {
    check_mesh(fields.n, fields.side_length, mesh)?;
    let d = view(fields, which);
    match truth {
        Truth::Exact(ex) => {
            let q = weak_form_exactness(fields.k);
            if which == Field::U {
                Ok(boundary_error_exact(mesh, &d, q, |x| (ex.u)(x)))
            } else {
                volume_error_exact(mesh, &d, q, |x| exact_value(ex, which, x))
            }
        }
        Truth::Reference {
            fields: rf,
            mesh: rm,
        } => {
            check_mesh(rf.n, rf.side_length, rm)?;
            if rf.k != fields.k {
                return Err(Error::InvalidArgument(
                    "reference uses a different degree".into(),
                ));
            }
            reference_error(mesh, rm, &d, &view(rf, which), which)
        }
    }
}

/// Errors `(|y - y_h|, |q - q_h|)` of a state-only solve.
pub fn forward_errors(
    ff: &ForwardFields,
    mesh: &Mesh,
    y: impl Fn(Point) -> f64,
    q: impl Fn(Point) -> Point,
) -> Result<(f64, f64)> {
    check_mesh(ff.n, ff.side_length, mesh)?;
    let exactness = weak_form_exactness(ff.k);
    let dy = Discrete {
        coeffs: &ff.y,
        basis: reference_basis(Domain::Triangle, ff.k + 1),
        components: 1,
    };
    let dq = Discrete {
        coeffs: &ff.q,
        basis: reference_basis(Domain::Triangle, ff.k),
        components: 2,
    };
    Ok((
        volume_error_exact(mesh, &dy, exactness, |x| [y(x), 0.0])?,
        volume_error_exact(mesh, &dq, exactness, q)?,
    ))
}

/// Experimental orders `log(e_{i-1}/e_i) / log(h_{i-1}/h_i)`; `None` where
/// an error vanishes or is not finite.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<Option<f64>>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need matching sequences of length >= 2, got {} errors and {} sizes",
            errors.len(),
            hs.len()
        )));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0]) || !(w[1] > 0.0)) {
        return Err(Error::InvalidArgument(
            "mesh sizes must be positive and strictly decreasing".into(),
        ));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            let ok = |v: f64| v > 0.0 && v.is_finite();
            (ok(e[0]) && ok(e[1])).then(|| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        })
        .collect())
}

/// Sobolev regularity indices of the exact fluxes and scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub r_q: f64,
    pub r_y: f64,
    pub r_p: f64,
    pub r_z: f64,
}

impl Regularity {
    pub fn smooth() -> Self {
        Self {
            r_q: f64::INFINITY,
            r_y: f64::INFINITY,
            r_p: f64::INFINITY,
            r_z: f64::INFINITY,
        }
    }

    /// Limiting regularity on a square with `f = 0` and `y_d` just below
    /// `H^1` (the epsilon losses are dropped).
    pub fn square_low() -> Self {
        Self {
            r_q: 1.0,
            r_y: 2.0,
            r_p: 2.0,
            r_z: 3.0,
        }
    }
}

/// Predicted convergence exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryRates {
    pub k: usize,
    pub regularity: Regularity,
    pub s_q: f64,
    pub s_y: f64,
    pub s_p: f64,
    pub s_z: f64,
    /// Exponent for `u`, `y`, `p` and `z`.
    pub scalar: f64,
    /// Exponent for `q`; only asserted for `k >= 1`.
    pub flux: Option<f64>,
}

impl TheoryRates {
    pub fn new(k: usize, r: Regularity) -> Self {
        let kf = k as f64;
        let s_q = r.r_q.min(kf + 1.0);
        let s_y = r.r_y.min(kf + 2.0);
        let s_p = r.r_p.min(kf + 1.0);
        let s_z = r.r_z.min(kf + 2.0);
        let scalar = (s_p - 0.5).min(s_z - 1.5).min(s_q + 0.5).min(s_y - 0.5);
        let flux = (k >= 1).then(|| (s_p - 1.0).min(s_z - 2.0).min(s_q).min(s_y - 1.0));
        Self {
            k,
            regularity: r,
            s_q,
            s_y,
            s_p,
            s_z,
            scalar,
            flux,
        }
    }

    pub fn exponent(&self, which: Field) -> Option<f64> {
        match which {
            Field::Q => self.flux,
            _ => Some(self.scalar),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StudyTruth {
    Exact,
    /// Nested reference solution at `n_ref` cells per side.
    Reference(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub n: usize,
    /// Largest element diameter.
    pub h: f64,
    /// Errors in the order of [`Field::ALL`]; `None` when not computed.
    pub errors: [Option<f64>; 5],
    /// Orders against the previous level.
    pub orders: [Option<f64>; 5],
}

impl LevelResult {
    pub fn error(&self, f: Field) -> Option<f64> {
        self.errors[Field::ALL.iter().position(|&g| g == f).expect("field")]
    }

    pub fn order(&self, f: Field) -> Option<f64> {
        self.orders[Field::ALL.iter().position(|&g| g == f).expect("field")]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub problem: String,
    pub k: usize,
    pub truth: StudyTruth,
    pub theory: TheoryRates,
    pub levels: Vec<LevelResult>,
}

impl ConvergenceReport {
    pub fn finest_order(&self, f: Field) -> Option<f64> {
        self.levels.last().and_then(|l| l.order(f))
    }
}

fn annotate(n: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Level {
        n,
        source: Box::new(e),
    }
}

/// Solves every level and measures all five errors and their orders.
pub fn run_study(
    spec: &ProblemSpec,
    k: usize,
    levels: &[usize],
    truth: StudyTruth,
    regularity: Regularity,
) -> Result<ConvergenceReport> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "levels must be strictly increasing".into(),
        ));
    }
    let reference = match truth {
        StudyTruth::Exact => {
            if spec.exact.is_none() {
                return Err(Error::InvalidArgument(format!(
                    "problem '{}' has no exact solution",
                    spec.name
                )));
            }
            None
        }
        StudyTruth::Reference(n_ref) => {
            for &n in levels {
                if n == 0 || n_ref % n != 0 || !(n_ref / n).is_power_of_two() || n_ref == n {
                    return Err(Error::InvalidArgument(format!(
                        "reference n={n_ref} is not a proper power-of-two refinement of n={n}"
                    )));
                }
            }
            let mesh = Mesh::structured(spec.side_length, n_ref).map_err(annotate(n_ref))?;
            let fields = solve_control_problem(spec, &mesh, k).map_err(annotate(n_ref))?;
            Some((mesh, fields))
        }
    };

    let mut results: Vec<LevelResult> = Vec::with_capacity(levels.len());
    for &n in levels {
        let mesh = Mesh::structured(spec.side_length, n).map_err(annotate(n))?;
        let fields = solve_control_problem(spec, &mesh, k).map_err(annotate(n))?;
        let t = match (&reference, &spec.exact) {
            (Some((rm, rf)), _) => Truth::Reference {
                fields: rf,
                mesh: rm,
            },
            (None, Some(ex)) => Truth::Exact(ex),
            (None, None) => unreachable!("checked above"),
        };
        let mut errors = [None; 5];
        for (slot, f) in errors.iter_mut().zip(Field::ALL) {
            *slot = Some(l2_error(&fields, &mesh, &t, f).map_err(annotate(n))?);
        }
        let mut orders = [None; 5];
        if let Some(prev) = results.last() {
            for i in 0..5 {
                if let (Some(a), Some(b)) = (prev.errors[i], errors[i]) {
                    orders[i] = eoc(&[a, b], &[prev.h, mesh.h_global()])?[0];
                }
            }
        }
        results.push(LevelResult {
            n,
            h: mesh.h_global(),
            errors,
            orders,
        });
    }
    Ok(ConvergenceReport {
        problem: spec.name.clone(),
        k,
        truth,
        theory: TheoryRates::new(k, regularity),
        levels: results,
    })
}
