//! Problem data: velocity field, source, desired state, regularisation and
//! stabilisation policy, plus the built-in benchmark instances.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{quadrature, weak_form_exactness, Domain};
use crate::mesh::{Mesh, Point};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauMode {
    /// `tau1 = tau2 = tau` everywhere.
    Constant(f64),
    /// `tau2` constant, `tau1 = tau2 + beta.n` pointwise.
    Theory { tau2: f64 },
}

/// Which mesh size enters the `h^{-1}` face penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HConvention {
    /// Cell width `L / n`, the leg of the right triangles.
    #[default]
    Width,
    /// Largest element diameter `sqrt(2) L / n`.
    Diameter,
    /// Diameter of the element owning the face side.
    PerElement,
}

impl FromStr for HConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "width" => Ok(Self::Width),
            "diameter" | "global" => Ok(Self::Diameter),
            "element" | "per-element" => Ok(Self::PerElement),
            other => Err(Error::InvalidArgument(format!(
                "unknown h convention '{other}'"
            ))),
        }
    }
}

impl fmt::Display for HConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Width => "width",
            Self::Diameter => "diameter",
            Self::PerElement => "element",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationPolicy {
    pub mode: TauMode,
    pub h: HConvention,
}

impl StabilizationPolicy {
    pub fn constant(tau: f64) -> Self {
        Self {
            mode: TauMode::Constant(tau),
            h: HConvention::Width,
        }
    }

    pub fn theory(tau2: f64) -> Self {
        Self {
            mode: TauMode::Theory { tau2 },
            h: HConvention::Width,
        }
    }

    /// `(tau1, tau2)` at a face point with outward `beta.n`.
    pub fn taus(&self, beta_n: f64) -> (f64, f64) {
        match self.mode {
            TauMode::Constant(t) => (t, t),
            TauMode::Theory { tau2 } => (tau2 + beta_n, tau2),
        }
    }

    /// Inverse mesh size used on the faces of `element`.
    pub fn h_inverse(&self, mesh: &Mesh, element: usize) -> f64 {
        match self.h {
            HConvention::Width => mesh.cells_per_side() as f64 / mesh.side_length(),
            HConvention::Diameter => 1.0 / mesh.h_global(),
            HConvention::PerElement => 1.0 / mesh.diameter(element),
        }
    }
}

/// Closed-form solution of the optimality system.
#[derive(Clone)]
pub struct ExactFields {
    pub y: ScalarFn,
    pub z: ScalarFn,
    pub q: VectorFn,
    pub p: VectorFn,
    pub u: ScalarFn,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub side_length: f64,
    pub beta: VectorFn,
    pub div_beta: ScalarFn,
    pub source: ScalarFn,
    pub desired: ScalarFn,
    pub gamma: f64,
    pub tau: StabilizationPolicy,
    pub exact: Option<ExactFields>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("side_length", &self.side_length)
            .field("gamma", &self.gamma)
            .field("tau", &self.tau)
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Exact fields, when present, are kept: every built-in solution has a
    /// zero control and therefore does not depend on `gamma`.
    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_tau(mut self, tau: StabilizationPolicy) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_h_convention(mut self, h: HConvention) -> Self {
        self.tau.h = h;
        self
    }

    /// Replaces the velocity by a constant field (divergence free).
    pub fn with_constant_beta(mut self, beta: Point) -> Self {
        self.beta = Arc::new(move |_| beta);
        self.div_beta = Arc::new(|_| 0.0);
        self.exact = None;
        self
    }

    /// Multiplies `f` and `y_d` by `factor`; exact fields scale along.
    pub fn scaled_data(mut self, factor: f64) -> Self {
        let (f, yd) = (self.source.clone(), self.desired.clone());
        self.source = Arc::new(move |x| factor * f(x));
        self.desired = Arc::new(move |x| factor * yd(x));
        self.exact = self.exact.map(|ex| ExactFields {
            y: scale_scalar(ex.y, factor),
            z: scale_scalar(ex.z, factor),
            q: scale_vector(ex.q, factor),
            p: scale_vector(ex.p, factor),
            u: scale_scalar(ex.u, factor),
        });
        self
    }

    /// Same operator and stabilisation with `f = y_d = 0`.
    pub fn homogeneous(&self) -> Self {
        let mut out = self.clone().scaled_data(0.0);
        out.name = format!("{}-homogeneous", self.name);
        out
    }

    /// Largest sampled value of `div beta` over element quadrature points.
    pub fn max_div_beta(&self, mesh: &Mesh, k: usize) -> Result<f64> {
        let rule = quadrature(Domain::Triangle, weak_form_exactness(k));
        let mut max = f64::NEG_INFINITY;
        for e in 0..mesh.num_elements() {
            let map = mesh.element_map(e)?;
            for &xi in &rule.nodes {
                max = max.max((self.div_beta)(map.map(xi)));
            }
        }
        Ok(max)
    }
}

fn scale_scalar(f: ScalarFn, a: f64) -> ScalarFn {
    Arc::new(move |x| a * f(x))
}

fn scale_vector(f: VectorFn, a: f64) -> VectorFn {
    Arc::new(move |x| {
        let v = f(x);
        [a * v[0], a * v[1]]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinProblem {
    /// Square of side 1/8, `y_d = (x^2 + y^2)^s`, `beta = (1, 1)`, `f = 0`.
    Paper,
    /// Same operator with all data zero.
    Zero,
    /// Manufactured smooth solution on the unit square.
    Mms,
}

impl FromStr for BuiltinProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "zero" => Ok(Self::Zero),
            "mms" => Ok(Self::Mms),
            other => Err(Error::InvalidArgument(format!(
                "unknown problem '{other}' (expected paper, zero or mms)"
            ))),
        }
    }
}

impl fmt::Display for BuiltinProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Zero => "zero",
            Self::Mms => "mms",
        })
    }
}

pub const PAPER_EXPONENT: f64 = -1e-5;

pub fn builtin_problem(name: &str) -> Result<ProblemSpec> {
    Ok(match name.parse::<BuiltinProblem>()? {
        BuiltinProblem::Paper => paper_problem(PAPER_EXPONENT),
        BuiltinProblem::Zero => zero_problem(),
        BuiltinProblem::Mms => mms_problem(),
    })
}

fn unit_beta() -> (VectorFn, ScalarFn) {
    (Arc::new(|_| [1.0, 1.0]), Arc::new(|_| 0.0))
}

/// Benchmark with a weakly singular desired state at the origin.
pub fn paper_problem(exponent: f64) -> ProblemSpec {
    let (beta, div_beta) = unit_beta();
    ProblemSpec {
        name: "paper".into(),
        side_length: 0.125,
        beta,
        div_beta,
        source: Arc::new(|_| 0.0),
        desired: Arc::new(move |x| (x[0] * x[0] + x[1] * x[1]).powf(exponent)),
        gamma: 1.0,
        tau: StabilizationPolicy::constant(1.0),
        exact: None,
    }
}

pub fn zero_problem() -> ProblemSpec {
    let (beta, div_beta) = unit_beta();
    let zero: ScalarFn = Arc::new(|_| 0.0);
    ProblemSpec {
        name: "zero".into(),
        side_length: 0.125,
        beta,
        div_beta,
        source: zero.clone(),
        desired: zero.clone(),
        gamma: 1.0,
        tau: StabilizationPolicy::constant(1.0),
        exact: Some(ExactFields {
            y: zero.clone(),
            z: zero.clone(),
            q: Arc::new(|_| [0.0, 0.0]),
            p: Arc::new(|_| [0.0, 0.0]),
            u: zero,
        }),
    }
}

// Manufactured solution on [0,1]^2 with beta = (1, 1):
//   y = sin(pi x) sin(pi y),  z = [x(1-x) y(1-y)]^2,  u = 0.
// z and its normal derivative vanish on the boundary, so the control is
// zero and matches the trace of y.

fn bubble(t: f64) -> f64 {
    t * (1.0 - t)
}

fn bubble_d(t: f64) -> f64 {
    1.0 - 2.0 * t
}

fn mms_y(x: Point) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

fn mms_grad_y(x: Point) -> Point {
    [
        PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
        PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
    ]
}

fn mms_z(x: Point) -> f64 {
    (bubble(x[0]) * bubble(x[1])).powi(2)
}

fn mms_grad_z(x: Point) -> Point {
    let (gx, gy) = (bubble(x[0]), bubble(x[1]));
    [
        2.0 * gx * bubble_d(x[0]) * gy * gy,
        2.0 * gy * bubble_d(x[1]) * gx * gx,
    ]
}

fn mms_laplace_z(x: Point) -> f64 {
    let (gx, gy) = (bubble(x[0]), bubble(x[1]));
    let (dx, dy) = (bubble_d(x[0]), bubble_d(x[1]));
    2.0 * (dx * dx - 2.0 * gx) * gy * gy + 2.0 * gx * gx * (dy * dy - 2.0 * gy)
}

/// `f = -Laplace(y) + beta . grad(y)`.
pub fn mms_source(x: Point) -> f64 {
    let g = mms_grad_y(x);
    2.0 * PI * PI * mms_y(x) + g[0] + g[1]
}

/// `y_d = y + Laplace(z) + div(beta z)`.
pub fn mms_desired(x: Point) -> f64 {
    let g = mms_grad_z(x);
    mms_y(x) + mms_laplace_z(x) + g[0] + g[1]
}

pub fn mms_problem() -> ProblemSpec {
    let (beta, div_beta) = unit_beta();
    ProblemSpec {
        name: "mms".into(),
        side_length: 1.0,
        beta,
        div_beta,
        source: Arc::new(mms_source),
        desired: Arc::new(mms_desired),
        gamma: 1.0,
        tau: StabilizationPolicy::constant(1.0),
        exact: Some(ExactFields {
            y: Arc::new(mms_y),
            z: Arc::new(mms_z),
            q: Arc::new(|x| {
                let g = mms_grad_y(x);
                [-g[0], -g[1]]
            }),
            p: Arc::new(|x| {
                let g = mms_grad_z(x);
                [-g[0], -g[1]]
            }),
            u: Arc::new(|_| 0.0),
        }),
    }
}

/// Minima of the stabilisation conditions over all face quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationReport {
    pub mode: TauMode,
    /// `min (tau1 - beta.n / 2)`.
    pub min_tau1_margin: f64,
    /// `min (tau2 + beta.n / 2)`.
    pub min_tau2_margin: f64,
    pub max_div_beta: f64,
    /// Elements on which one of the margins is not positive.
    pub failing_elements: Vec<usize>,
    pub passed: bool,
}

/// `(min (tau1 - beta.n/2), min (tau2 + beta.n/2))` over the face
/// quadrature points of one element.
pub fn element_stabilization_margins(
    spec: &ProblemSpec,
    mesh: &Mesh,
    e: usize,
    k: usize,
) -> (f64, f64) {
    margins_with(
        spec,
        mesh,
        e,
        &quadrature(Domain::Edge, weak_form_exactness(k)),
    )
}

fn margins_with(
    spec: &ProblemSpec,
    mesh: &Mesh,
    e: usize,
    rule: &crate::fespace::QuadRule,
) -> (f64, f64) {
    let (mut e1, mut e2) = (f64::INFINITY, f64::INFINITY);
    for f in mesh.element_faces(e) {
        let n = mesh.face(f).normal_of(e).expect("incident face");
        for node in &rule.nodes {
            let x = mesh.face_point(f, node[0]);
            let b = (spec.beta)(x);
            let bn = b[0] * n[0] + b[1] * n[1];
            let (t1, t2) = spec.tau.taus(bn);
            e1 = e1.min(t1 - 0.5 * bn);
            e2 = e2.min(t2 + 0.5 * bn);
        }
    }
    (e1, e2)
}

/// Evaluates `beta.n` at every face quadrature point of every element side
/// and checks the positivity conditions of the active stabilisation mode.
pub fn validate_stabilization(
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
) -> Result<StabilizationReport> {
    let rule = quadrature(Domain::Edge, weak_form_exactness(k));
    let mut min1 = f64::INFINITY;
    let mut min2 = f64::INFINITY;
    let mut failing = Vec::new();
    for e in 0..mesh.num_elements() {
        let (e1, e2) = margins_with(spec, mesh, e, &rule);
        if !(e1 > 0.0 && e2 > 0.0) {
            failing.push(e);
        }
        min1 = min1.min(e1);
        min2 = min2.min(e2);
    }
    let max_div_beta = spec.max_div_beta(mesh, k)?;
    let passed = failing.is_empty() && max_div_beta <= 0.0;
    Ok(StabilizationReport {
        mode: spec.tau.mode,
        min_tau1_margin: min1,
        min_tau2_margin: min2,
        max_div_beta,
        failing_elements: failing,
        passed,
    })
}
