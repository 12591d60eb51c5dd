use faer::Mat;
use rand::Rng;

use super::{ElementParts, HdgContext};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::problems::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BOperator {
    /// State operator.
    B1,
    /// Adjoint operator.
    B2,
}

/// A discrete triple `(v, w, mu)`: vector degree-`k` flux and scalar
/// degree-`k+1` field per element, one degree-`k+1` block per face.
/// Blocks on boundary faces are carried but never read by the operators.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFields {
    pub k: usize,
    /// `2 * nv` coefficients per element, `x` component first.
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub mu: Vec<f64>,
}

fn sizes(k: usize) -> (usize, usize, usize) {
    let nv = (k + 1) * (k + 2) / 2;
    (2 * nv, (k + 2) * (k + 3) / 2, k + 2)
}

impl DiscreteFields {
    pub fn zeros(mesh: &Mesh, k: usize) -> Self {
        let (nvv, nw, nm) = sizes(k);
        Self {
            k,
            v: vec![0.0; nvv * mesh.num_elements()],
            w: vec![0.0; nw * mesh.num_elements()],
            mu: vec![0.0; nm * mesh.num_faces()],
        }
    }

    /// Independent uniform coefficients in `[-1, 1]`.
    pub fn random<R: Rng>(mesh: &Mesh, k: usize, rng: &mut R) -> Self {
        let mut f = Self::zeros(mesh, k);
        for c in f.v.iter_mut().chain(f.w.iter_mut()).chain(f.mu.iter_mut()) {
            *c = rng.random_range(-1.0..=1.0);
        }
        f
    }

    pub fn scaled(&self, a: f64) -> Self {
        let s = |x: &[f64]| x.iter().map(|v| a * v).collect();
        Self {
            k: self.k,
            v: s(&self.v),
            w: s(&self.w),
            mu: s(&self.mu),
        }
    }

    pub fn v_block(&self, e: usize) -> &[f64] {
        let n = sizes(self.k).0;
        &self.v[e * n..(e + 1) * n]
    }

    pub fn w_block(&self, e: usize) -> &[f64] {
        let n = sizes(self.k).1;
        &self.w[e * n..(e + 1) * n]
    }

    pub fn mu_block(&self, f: usize) -> &[f64] {
        let n = sizes(self.k).2;
        &self.mu[f * n..(f + 1) * n]
    }

    fn check(&self, mesh: &Mesh, k: usize) -> Result<()> {
        let (nvv, nw, nm) = sizes(k);
        if self.k != k
            || self.v.len() != nvv * mesh.num_elements()
            || self.w.len() != nw * mesh.num_elements()
            || self.mu.len() != nm * mesh.num_faces()
        {
            return Err(Error::InvalidArgument(format!(
                "fields of degree {} with sizes ({}, {}, {}) do not match the mesh at k = {k}",
                self.k,
                self.v.len(),
                self.w.len(),
                self.mu.len()
            )));
        }
        Ok(())
    }
}

/// `a^T M b`.
fn form(a: &[f64], m: &Mat<f64>, b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        if b[j] == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for i in 0..m.nrows() {
            col += a[i] * m[(i, j)];
        }
        s += col * b[j];
    }
    s
}

/// Value of one operator on one element, faces on the domain boundary
/// excluded from the trace terms.
fn element_value(
    which: BOperator,
    parts: &ElementParts,
    trial: &DiscreteFields,
    test: &DiscreteFields,
) -> f64 {
    let e = parts.element;
    let nv = parts.mass_v.nrows();
    let (v, w) = (trial.v_block(e), trial.w_block(e));
    let (r, om) = (test.v_block(e), test.w_block(e));

    let mut s = form(&r[..nv], &parts.mass_v, &v[..nv]) + form(&r[nv..], &parts.mass_v, &v[nv..]);
    // -(w, div r) + (div v, omega)
    s += -form(r, &parts.div, w) + form(v, &parts.div, om);
    let block = match which {
        BOperator::B1 => parts.state_block(),
        BOperator::B2 => parts.adjoint_block(),
    };
    s += form(om, &block, w);

    for side in parts.sides.iter().filter(|sd| !sd.boundary) {
        let mu = trial.mu_block(side.face);
        let nu = test.mu_block(side.face);
        s += form(r, &side.flux, mu);
        s -= form(v, &side.flux, nu);
        match which {
            BOperator::B1 => {
                s += form(om, &side.cross_bn, mu) - form(om, &side.cross1, mu);
                s -= form(w, &side.cross1, nu);
                s -= form(nu, &side.trace_bn, mu) - form(nu, &side.trace1, mu);
            }
            BOperator::B2 => {
                s -= form(om, &side.cross2, mu) + form(om, &side.cross_bn, mu);
                s -= form(w, &side.cross2, nu);
                s += form(nu, &side.trace_bn, mu) + form(nu, &side.trace2, mu);
            }
        }
    }
    s
}

/// Precomputed element integrals for repeated operator evaluation.
pub struct OperatorForms {
    k: usize,
    parts: Vec<ElementParts>,
    num_elements: usize,
    num_faces: usize,
}

impl OperatorForms {
    pub fn new(spec: &ProblemSpec, mesh: &Mesh, k: usize) -> Result<Self> {
        let ctx = HdgContext::new(spec, mesh, k);
        let parts = (0..mesh.num_elements())
            .map(|e| ctx.element_parts(e))
            .collect::<Result<_>>()?;
        Ok(Self {
            k,
            parts,
            num_elements: mesh.num_elements(),
            num_faces: mesh.num_faces(),
        })
    }

    pub fn parts(&self) -> &[ElementParts] {
        &self.parts
    }

    pub fn apply(
        &self,
        which: BOperator,
        trial: &DiscreteFields,
        test: &DiscreteFields,
    ) -> Result<f64> {
        let (nvv, nw, nm) = sizes(self.k);
        for f in [trial, test] {
            if f.k != self.k
                || f.v.len() != nvv * self.num_elements
                || f.w.len() != nw * self.num_elements
                || f.mu.len() != nm * self.num_faces
            {
                return Err(Error::InvalidArgument(
                    "field dimensions do not match the mesh".into(),
                ));
            }
        }
        Ok(self
            .parts
            .iter()
            .map(|p| element_value(which, p, trial, test))
            .sum())
    }
}

/// Evaluates the state (`B1`) or adjoint (`B2`) HDG bilinear form.
pub fn apply_b(
    which: BOperator,
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    trial: &DiscreteFields,
    test: &DiscreteFields,
) -> Result<f64> {
    trial.check(mesh, k)?;
    test.check(mesh, k)?;
    OperatorForms::new(spec, mesh, k)?.apply(which, trial, test)
}
