//! Element-level weak forms.
//!
//! Per element the unknowns are ordered `q = (q_x, q_y)`, `p = (p_x, p_y)`,
//! `y`, `z`. Each face side contributes trace unknowns: an interior face
//! carries the state trace followed by the adjoint trace, a boundary face
//! carries the control only (the adjoint trace vanishes there).

mod operators;

pub use operators::{apply_b, BOperator, DiscreteFields, OperatorForms};

use faer::Mat;

use crate::error::{Error, Result};
use crate::fespace::{
    dimension, quadrature, reference_basis, weak_form_exactness, BasisSet, Domain, QuadRule,
};
use crate::mesh::{Mesh, Point};
use crate::problems::ProblemSpec;

const REFERENCE_VERTICES: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Reference bases tabulated at the reference quadrature points.
#[derive(Debug, Clone)]
pub struct RefTables {
    pub k: usize,
    pub flux_basis: BasisSet,
    pub scalar_basis: BasisSet,
    pub trace_basis: BasisSet,
    pub tri_rule: QuadRule,
    pub edge_rule: QuadRule,
    v_vals: Vec<Vec<f64>>,
    v_grads: Vec<Vec<[f64; 2]>>,
    w_vals: Vec<Vec<f64>>,
    w_grads: Vec<Vec<[f64; 2]>>,
    // [side][flipped][q][i]
    side_v: Vec<Vec<Vec<Vec<f64>>>>,
    side_w: Vec<Vec<Vec<Vec<f64>>>>,
    trace_vals: Vec<Vec<f64>>,
}

/// Reference point on local side `s` at face parameter `t`.
pub fn reference_side_point(s: usize, flipped: bool, t: f64) -> Point {
    let (a, b) = if flipped {
        (REFERENCE_VERTICES[(s + 1) % 3], REFERENCE_VERTICES[s])
    } else {
        (REFERENCE_VERTICES[s], REFERENCE_VERTICES[(s + 1) % 3])
    };
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

impl RefTables {
    pub fn new(k: usize) -> Self {
        let q = weak_form_exactness(k);
        let flux_basis = reference_basis(Domain::Triangle, k);
        let scalar_basis = reference_basis(Domain::Triangle, k + 1);
        let trace_basis = reference_basis(Domain::Edge, k + 1);
        let tri_rule = quadrature(Domain::Triangle, q);
        let edge_rule = quadrature(Domain::Edge, q);
        let side_tab = |b: &BasisSet| -> Vec<Vec<Vec<Vec<f64>>>> {
            (0..3)
                .map(|s| {
                    [false, true]
                        .iter()
                        .map(|&flip| {
                            edge_rule
                                .nodes
                                .iter()
                                .map(|t| b.eval(reference_side_point(s, flip, t[0])))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        Self {
            k,
            v_vals: flux_basis.tabulate(&tri_rule.nodes),
            v_grads: flux_basis.tabulate_grad(&tri_rule.nodes),
            w_vals: scalar_basis.tabulate(&tri_rule.nodes),
            w_grads: scalar_basis.tabulate_grad(&tri_rule.nodes),
            side_v: side_tab(&flux_basis),
            side_w: side_tab(&scalar_basis),
            trace_vals: trace_basis.tabulate(&edge_rule.nodes),
            flux_basis,
            scalar_basis,
            trace_basis,
            tri_rule,
            edge_rule,
        }
    }

    /// Scalar dimension of the flux space (per component).
    pub fn nv(&self) -> usize {
        dimension(Domain::Triangle, self.k)
    }

    pub fn nw(&self) -> usize {
        dimension(Domain::Triangle, self.k + 1)
    }

    pub fn nm(&self) -> usize {
        self.k + 2
    }

    /// Size of the element unknown vector `(q, p, y, z)`.
    pub fn n_interior(&self) -> usize {
        4 * self.nv() + 2 * self.nw()
    }
}

/// Face integrals of one element side.
#[derive(Debug, Clone)]
pub struct SideParts {
    pub face: usize,
    pub boundary: bool,
    /// `<mu_j, r_i . n>`, flux rows by trace columns.
    pub flux: Mat<f64>,
    /// `<(1/h + tau1) w_j, w_i>`.
    pub stab1: Mat<f64>,
    /// `<(1/h + tau2) w_j, w_i>`.
    pub stab2: Mat<f64>,
    /// `<(1/h + tau1) mu_j, w_i>`.
    pub cross1: Mat<f64>,
    /// `<(1/h + tau2) mu_j, w_i>`.
    pub cross2: Mat<f64>,
    /// `<beta.n mu_j, w_i>`.
    pub cross_bn: Mat<f64>,
    /// `<(1/h + tau1) mu_j, mu_i>`.
    pub trace1: Mat<f64>,
    /// `<(1/h + tau2) mu_j, mu_i>`.
    pub trace2: Mat<f64>,
    /// `<beta.n mu_j, mu_i>`.
    pub trace_bn: Mat<f64>,
    /// `<mu_j, mu_i>`.
    pub trace_mass: Mat<f64>,
}

/// Volume and face integrals of one element.
#[derive(Debug, Clone)]
pub struct ElementParts {
    pub element: usize,
    /// Scalar mass of the flux basis, `(phi_j, phi_i)`.
    pub mass_v: Mat<f64>,
    /// `(w_j, div r_i)`, vector-flux rows by scalar columns.
    pub div: Mat<f64>,
    /// `(beta w_j, grad w_i)`.
    pub conv: Mat<f64>,
    /// `(div(beta) w_j, w_i)`.
    pub div_beta_mass: Mat<f64>,
    /// `(w_j, w_i)`.
    pub mass_w: Mat<f64>,
    pub load_f: Vec<f64>,
    pub load_yd: Vec<f64>,
    pub sides: [SideParts; 3],
}

impl ElementParts {
    /// State diffusion-convection block `A7 + A8 - A4 - A5` on this element.
    pub fn state_block(&self) -> Mat<f64> {
        let mut m = -&self.conv - &self.div_beta_mass;
        for s in &self.sides {
            m += &s.stab1;
        }
        m
    }

    /// Adjoint block `A4 + A7 + A9` on this element.
    pub fn adjoint_block(&self) -> Mat<f64> {
        let mut m = self.conv.clone();
        for s in &self.sides {
            m += &s.stab2;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceField {
    /// Interior face: state trace then adjoint trace.
    StateAdjoint,
    /// Boundary face: control.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceSlot {
    pub face: usize,
    pub field: TraceField,
    /// Offset of the slot in the element trace vector.
    pub offset: usize,
}

/// Dense element system
/// `A x + C t = b` (element rows) and `E x + D t = g` (trace rows).
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub element: usize,
    pub a_loc: Mat<f64>,
    pub c_loc: Mat<f64>,
    pub e_loc: Mat<f64>,
    pub d_loc: Mat<f64>,
    pub b_loc: Vec<f64>,
    pub g_loc: Vec<f64>,
    pub trace_slots: [TraceSlot; 3],
}

impl LocalSystem {
    pub fn n_trace(&self) -> usize {
        self.d_loc.nrows()
    }
}

/// Problem, mesh and reference tables bundled for element loops.
pub struct HdgContext<'a> {
    pub spec: &'a ProblemSpec,
    pub mesh: &'a Mesh,
    pub tables: RefTables,
}

impl<'a> HdgContext<'a> {
    pub fn new(spec: &'a ProblemSpec, mesh: &'a Mesh, k: usize) -> Self {
        Self {
            spec,
            mesh,
            tables: RefTables::new(k),
        }
    }

    pub fn k(&self) -> usize {
        self.tables.k
    }

    /// Computes every volume and face integral on element `e`.
    pub fn element_parts(&self, e: usize) -> Result<ElementParts> {
        let t = &self.tables;
        let (nv, nw, nm) = (t.nv(), t.nw(), t.nm());
        let spec = self.spec;
        let map = self.mesh.element_map(e)?;
        let det = map.det.abs();

        let mut mass_v = Mat::<f64>::zeros(nv, nv);
        let mut div = Mat::<f64>::zeros(2 * nv, nw);
        let mut conv = Mat::<f64>::zeros(nw, nw);
        let mut div_beta_mass = Mat::<f64>::zeros(nw, nw);
        let mut mass_w = Mat::<f64>::zeros(nw, nw);
        let mut load_f = vec![0.0; nw];
        let mut load_yd = vec![0.0; nw];

        let mut gv = vec![[0.0; 2]; nv];
        let mut gw = vec![[0.0; 2]; nw];
        for (qp, (&xi, &wq)) in t.tri_rule.nodes.iter().zip(&t.tri_rule.weights).enumerate() {
            let x = map.map(xi);
            let dx = wq * det;
            let beta = (spec.beta)(x);
            let divb = (spec.div_beta)(x);
            let f = (spec.source)(x);
            let yd = (spec.desired)(x);
            for (what, v) in [
                ("beta", beta[0]),
                ("beta", beta[1]),
                ("div beta", divb),
                ("f", f),
                ("y_d", yd),
            ] {
                if !v.is_finite() {
                    return Err(Error::Data {
                        what: what.into(),
                        x: x[0],
                        y: x[1],
                    });
                }
            }
            let vv = &t.v_vals[qp];
            let wv = &t.w_vals[qp];
            for (g, r) in gv.iter_mut().zip(&t.v_grads[qp]) {
                *g = map.grad_to_physical(*r);
            }
            for (g, r) in gw.iter_mut().zip(&t.w_grads[qp]) {
                *g = map.grad_to_physical(*r);
            }
            for i in 0..nv {
                for j in 0..nv {
                    mass_v[(i, j)] += dx * vv[i] * vv[j];
                }
            }
            for c in 0..2 {
                for a in 0..nv {
                    let dphi = gv[a][c];
                    for j in 0..nw {
                        div[(c * nv + a, j)] += dx * dphi * wv[j];
                    }
                }
            }
            for i in 0..nw {
                let bgrad = beta[0] * gw[i][0] + beta[1] * gw[i][1];
                for j in 0..nw {
                    conv[(i, j)] += dx * wv[j] * bgrad;
                    div_beta_mass[(i, j)] += dx * divb * wv[j] * wv[i];
                    mass_w[(i, j)] += dx * wv[j] * wv[i];
                }
                load_f[i] += dx * f * wv[i];
                load_yd[i] += dx * yd * wv[i];
            }
        }

        let faces = self.mesh.element_faces(e);
        let h_inv = spec.tau.h_inverse(self.mesh, e);
        let side = |s: usize| -> SideParts {
            let fid = faces[s];
            let face = self.mesh.face(fid);
            let n = face.normal_of(e).expect("element is incident to its face");
            let flip = self.mesh.side_flipped(e, s) as usize;
            let len = face.length;
            let mut sp = SideParts {
                face: fid,
                boundary: face.is_boundary(),
                flux: Mat::zeros(2 * nv, nm),
                stab1: Mat::zeros(nw, nw),
                stab2: Mat::zeros(nw, nw),
                cross1: Mat::zeros(nw, nm),
                cross2: Mat::zeros(nw, nm),
                cross_bn: Mat::zeros(nw, nm),
                trace1: Mat::zeros(nm, nm),
                trace2: Mat::zeros(nm, nm),
                trace_bn: Mat::zeros(nm, nm),
                trace_mass: Mat::zeros(nm, nm),
            };
            for (qp, (node, &wq)) in t
                .edge_rule
                .nodes
                .iter()
                .zip(&t.edge_rule.weights)
                .enumerate()
            {
                let x = self.mesh.face_point(fid, node[0]);
                let ds = wq * len;
                let beta = (spec.beta)(x);
                let bn = beta[0] * n[0] + beta[1] * n[1];
                let (tau1, tau2) = spec.tau.taus(bn);
                let (s1, s2) = (h_inv + tau1, h_inv + tau2);
                let vv = &t.side_v[s][flip][qp];
                let wv = &t.side_w[s][flip][qp];
                let mu = &t.trace_vals[qp];
                for c in 0..2 {
                    for a in 0..nv {
                        for j in 0..nm {
                            sp.flux[(c * nv + a, j)] += ds * vv[a] * n[c] * mu[j];
                        }
                    }
                }
                for i in 0..nw {
                    for j in 0..nw {
                        let m = ds * wv[i] * wv[j];
                        sp.stab1[(i, j)] += s1 * m;
                        sp.stab2[(i, j)] += s2 * m;
                    }
                    for j in 0..nm {
                        let m = ds * wv[i] * mu[j];
                        sp.cross1[(i, j)] += s1 * m;
                        sp.cross2[(i, j)] += s2 * m;
                        sp.cross_bn[(i, j)] += bn * m;
                    }
                }
                for i in 0..nm {
                    for j in 0..nm {
                        let m = ds * mu[i] * mu[j];
                        sp.trace1[(i, j)] += s1 * m;
                        sp.trace2[(i, j)] += s2 * m;
                        sp.trace_bn[(i, j)] += bn * m;
                        sp.trace_mass[(i, j)] += m;
                    }
                }
            }
            sp
        };
        let sides = [side(0), side(1), side(2)];
        for s in &sides {
            if !s
                .trace1
                .col_iter()
                .flat_map(|c| c.iter().copied().collect::<Vec<_>>())
                .all(f64::is_finite)
            {
                return Err(Error::Data {
                    what: "face coefficient".into(),
                    x: map.map([1.0 / 3.0, 1.0 / 3.0])[0],
                    y: map.map([1.0 / 3.0, 1.0 / 3.0])[1],
                });
            }
        }

        Ok(ElementParts {
            element: e,
            mass_v,
            div,
            conv,
            div_beta_mass,
            mass_w,
            load_f,
            load_yd,
            sides,
        })
    }

    /// Trace slots of element `e` in local order.
    pub fn trace_slots(&self, e: usize) -> [TraceSlot; 3] {
        let nm = self.tables.nm();
        let faces = self.mesh.element_faces(e);
        let mut offset = 0;
        let mut slot = |s: usize| {
            let face = faces[s];
            let field = if self.mesh.face(face).is_boundary() {
                TraceField::Control
            } else {
                TraceField::StateAdjoint
            };
            let out = TraceSlot {
                face,
                field,
                offset,
            };
            offset += match field {
                TraceField::StateAdjoint => 2 * nm,
                TraceField::Control => nm,
            };
            out
        };
        [slot(0), slot(1), slot(2)]
    }

    /// Dense element system of the full optimality system on element `e`.
    pub fn element_blocks(&self, e: usize) -> Result<LocalSystem> {
        let parts = self.element_parts(e)?;
        Ok(self.local_system(&parts))
    }

    pub fn local_system(&self, parts: &ElementParts) -> LocalSystem {
        let t = &self.tables;
        let (nv, nw, nm) = (t.nv(), t.nw(), t.nm());
        let nvv = 2 * nv;
        let (oq, op, oy, oz) = (0, nvv, 2 * nvv, 2 * nvv + nw);
        let nx = t.n_interior();
        let slots = self.trace_slots(parts.element);
        let nt: usize = slots
            .iter()
            .map(|s| {
                if s.field == TraceField::StateAdjoint {
                    2 * nm
                } else {
                    nm
                }
            })
            .sum();

        let mut a = Mat::<f64>::zeros(nx, nx);
        let mut c = Mat::<f64>::zeros(nx, nt);
        let mut el = Mat::<f64>::zeros(nt, nx);
        let mut d = Mat::<f64>::zeros(nt, nt);
        let mut b = vec![0.0; nx];

        let state = parts.state_block();
        let adjoint = parts.adjoint_block();
        for comp in 0..2 {
            for i in 0..nv {
                for j in 0..nv {
                    let m = parts.mass_v[(i, j)];
                    a[(oq + comp * nv + i, oq + comp * nv + j)] = m;
                    a[(op + comp * nv + i, op + comp * nv + j)] = m;
                }
            }
        }
        for i in 0..nvv {
            for j in 0..nw {
                let dv = parts.div[(i, j)];
                a[(oq + i, oy + j)] = -dv;
                a[(op + i, oz + j)] = -dv;
                a[(oy + j, oq + i)] = dv;
                a[(oz + j, op + i)] = dv;
            }
        }
        for i in 0..nw {
            for j in 0..nw {
                a[(oy + i, oy + j)] = state[(i, j)];
                a[(oz + i, oz + j)] = adjoint[(i, j)];
                a[(oz + i, oy + j)] = -parts.mass_w[(i, j)];
            }
            b[oy + i] = parts.load_f[i];
            b[oz + i] = -parts.load_yd[i];
        }

        for (sp, slot) in parts.sides.iter().zip(&slots) {
            let o = slot.offset;
            match slot.field {
                TraceField::StateAdjoint => {
                    let (oh, oz_hat) = (o, o + nm);
                    for j in 0..nm {
                        for i in 0..nvv {
                            c[(oq + i, oh + j)] = sp.flux[(i, j)];
                            c[(op + i, oz_hat + j)] = sp.flux[(i, j)];
                            el[(oh + j, oq + i)] = sp.flux[(i, j)];
                            el[(oz_hat + j, op + i)] = sp.flux[(i, j)];
                        }
                        for i in 0..nw {
                            c[(oy + i, oh + j)] = sp.cross_bn[(i, j)] - sp.cross1[(i, j)];
                            c[(oz + i, oz_hat + j)] = -(sp.cross2[(i, j)] + sp.cross_bn[(i, j)]);
                            el[(oh + j, oy + i)] = sp.cross1[(i, j)];
                            el[(oz_hat + j, oz + i)] = sp.cross2[(i, j)];
                        }
                        for i in 0..nm {
                            d[(oh + i, oh + j)] = sp.trace_bn[(i, j)] - sp.trace1[(i, j)];
                            d[(oz_hat + i, oz_hat + j)] =
                                -(sp.trace_bn[(i, j)] + sp.trace2[(i, j)]);
                        }
                    }
                }
                TraceField::Control => {
                    for j in 0..nm {
                        for i in 0..nvv {
                            c[(oq + i, o + j)] = sp.flux[(i, j)];
                            el[(o + j, op + i)] = sp.flux[(i, j)];
                        }
                        for i in 0..nw {
                            c[(oy + i, o + j)] = sp.cross_bn[(i, j)] - sp.cross1[(i, j)];
                            el[(o + j, oz + i)] = sp.cross2[(i, j)];
                        }
                        for i in 0..nm {
                            d[(o + i, o + j)] = self.spec.gamma * sp.trace_mass[(i, j)];
                        }
                    }
                }
            }
        }

        LocalSystem {
            element: parts.element,
            a_loc: a,
            c_loc: c,
            e_loc: el,
            d_loc: d,
            b_loc: b,
            g_loc: vec![0.0; nt],
            trace_slots: slots,
        }
    }
}

/// Element system of the full optimality system on element `e`.
pub fn element_blocks(spec: &ProblemSpec, mesh: &Mesh, e: usize, k: usize) -> Result<LocalSystem> {
    HdgContext::new(spec, mesh, k).element_blocks(e)
}
