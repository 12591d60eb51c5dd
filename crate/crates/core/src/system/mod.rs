//! Static condensation, the global trace system and field recovery.

mod dump;

pub use dump::{write_cell_averages, write_control};

use std::ops::Range;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Mat};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{l2_project, ProjectionTarget};
use crate::hdg::{HdgContext, LocalSystem, TraceField};
use crate::mesh::{Mesh, Point};
use crate::problems::{element_stabilization_margins, ProblemSpec};

/// Relative residual accepted from the sparse solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
/// Tolerance on the uncondensed residual, relative to the load scale.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-10;
/// Largest monolithic system the dense path accepts.
pub const MONOLITHIC_LIMIT: usize = 6000;

/// Global numbering of trace unknowns: faces in ascending id; an interior
/// face holds the state trace then the adjoint trace, a boundary face the
/// control.
#[derive(Debug, Clone)]
pub struct DofMap {
    nm: usize,
    offsets: Vec<Option<usize>>,
    boundary: Vec<bool>,
    adjoint: bool,
    len: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh, k: usize) -> Self {
        Self::build(mesh, k, true)
    }

    /// Numbering for the state equation alone: interior state traces only.
    pub fn state_only(mesh: &Mesh, k: usize) -> Self {
        Self::build(mesh, k, false)
    }

    fn build(mesh: &Mesh, k: usize, adjoint: bool) -> Self {
        let nm = k + 2;
        let mut len = 0;
        let mut offsets = Vec::with_capacity(mesh.num_faces());
        let mut boundary = Vec::with_capacity(mesh.num_faces());
        for face in mesh.faces() {
            boundary.push(face.is_boundary());
            let width = match (face.is_boundary(), adjoint) {
                (false, true) => 2 * nm,
                (false, false) => nm,
                (true, true) => nm,
                (true, false) => 0,
            };
            offsets.push((width > 0).then_some(len));
            len += width;
        }
        Self {
            nm,
            offsets,
            boundary,
            adjoint,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Coefficients per face block (`k + 2`).
    pub fn block_size(&self) -> usize {
        self.nm
    }

    pub fn state_trace(&self, face: usize) -> Option<Range<usize>> {
        match (self.boundary[face], self.offsets[face]) {
            (false, Some(o)) => Some(o..o + self.nm),
            _ => None,
        }
    }

    pub fn adjoint_trace(&self, face: usize) -> Option<Range<usize>> {
        match (self.boundary[face], self.adjoint, self.offsets[face]) {
            (false, true, Some(o)) => Some(o + self.nm..o + 2 * self.nm),
            _ => None,
        }
    }

    pub fn control(&self, face: usize) -> Option<Range<usize>> {
        match (self.boundary[face], self.offsets[face]) {
            (true, Some(o)) => Some(o..o + self.nm),
            _ => None,
        }
    }

    /// Global indices of an element's local trace vector.
    fn local_dofs(&self, ls: &LocalSystem) -> Vec<usize> {
        let mut out = Vec::with_capacity(ls.n_trace());
        for slot in &ls.trace_slots {
            let o = self.offsets[slot.face].expect("full map numbers every face");
            let width = match slot.field {
                TraceField::StateAdjoint => 2 * self.nm,
                TraceField::Control => self.nm,
            };
            out.extend(o..o + width);
        }
        out
    }
}

/// The condensed global system `K gamma = F`.
pub struct TraceSystem {
    pub dofs: DofMap,
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
}

impl std::fmt::Debug for TraceSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceSystem")
            .field("dim", &self.dofs.len())
            .field("nnz", &self.matrix.compute_nnz())
            .finish()
    }
}

impl TraceSystem {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// `K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        csc_apply(&self.matrix, x)
    }
}

fn csc_apply(m: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.nrows()];
    let sym = m.symbolic();
    let (cp, ri, val) = (sym.col_ptr(), sym.row_idx(), m.val());
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for idx in cp[j]..cp[j + 1] {
            y[ri[idx]] += val[idx] * xj;
        }
    }
    y
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, a| m.max(a.abs()))
}

/// One element's dense blocks with global trace indices.
struct ElementSystem {
    element: usize,
    a: Mat<f64>,
    c: Mat<f64>,
    e: Mat<f64>,
    d: Mat<f64>,
    b: Vec<f64>,
    g: Vec<f64>,
    dofs: Vec<usize>,
}

struct Condensed {
    dofs: Vec<usize>,
    schur: Mat<f64>,
    load: Vec<f64>,
}

fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn factor(
    es: &ElementSystem,
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
) -> Result<faer::linalg::solvers::PartialPivLu<f64>> {
    let lu = es.a.partial_piv_lu();
    let u = lu.U();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 1e-13 * hi) || !hi.is_finite() {
        let (min_tau1, min_tau2) = element_stabilization_margins(spec, mesh, es.element, k);
        return Err(Error::Condensation {
            element: es.element,
            min_tau1,
            min_tau2,
        });
    }
    Ok(lu)
}

fn condense(es: &ElementSystem, spec: &ProblemSpec, mesh: &Mesh, k: usize) -> Result<Condensed> {
    let lu = factor(es, spec, mesh, k)?;
    let ainv_c = lu.solve(&es.c);
    let ainv_b = lu.solve(column(&es.b));
    let schur = &es.d - &es.e * &ainv_c;
    let eb = &es.e * &ainv_b;
    let load = (0..es.g.len()).map(|i| es.g[i] - eb[(i, 0)]).collect();
    Ok(Condensed {
        dofs: es.dofs.clone(),
        schur,
        load,
    })
}

fn assemble(n: usize, parts: &[Condensed]) -> Result<(SparseColMat<usize, f64>, Vec<f64>)> {
    let nnz: usize = parts.iter().map(|c| c.dofs.len() * c.dofs.len()).sum();
    let mut triplets = Vec::with_capacity(nnz);
    let mut rhs = vec![0.0; n];
    for c in parts {
        for (j, &gj) in c.dofs.iter().enumerate() {
            for (i, &gi) in c.dofs.iter().enumerate() {
                triplets.push(Triplet::new(gi, gj, c.schur[(i, j)]));
            }
        }
        for (i, &gi) in c.dofs.iter().enumerate() {
            rhs[gi] += c.load[i];
        }
    }
    let m = SparseColMat::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::InvalidArgument(format!("trace matrix assembly failed: {e:?}")))?;
    Ok((m, rhs))
}

fn full_element_system(ctx: &HdgContext, dofs: &DofMap, e: usize) -> Result<ElementSystem> {
    let ls = ctx.element_blocks(e)?;
    let local = dofs.local_dofs(&ls);
    Ok(ElementSystem {
        element: e,
        a: ls.a_loc,
        c: ls.c_loc,
        e: ls.e_loc,
        d: ls.d_loc,
        b: ls.b_loc,
        g: ls.g_loc,
        dofs: local,
    })
}

fn check_order(mesh: &Mesh, order: &[usize]) -> Result<()> {
    let mut seen = vec![false; mesh.num_elements()];
    for &e in order {
        if e >= seen.len() || std::mem::replace(&mut seen[e], true) {
            return Err(Error::InvalidArgument(
                "element order is not a permutation".into(),
            ));
        }
    }
    if order.len() != seen.len() {
        return Err(Error::InvalidArgument(
            "element order is not a permutation".into(),
        ));
    }
    Ok(())
}

fn condense_in_order(
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    order: &[usize],
    n: usize,
    build: impl Fn(usize) -> Result<ElementSystem> + Sync,
) -> Result<(SparseColMat<usize, f64>, Vec<f64>)> {
    check_order(mesh, order)?;
    let parts: Vec<Condensed> = order
        .par_iter()
        .map(|&e| condense(&build(e)?, spec, mesh, k))
        .collect::<Result<_>>()?;
    assemble(n, &parts)
}

/// Eliminates the element unknowns and assembles `K gamma = F`, scattering
/// element contributions in ascending element id.
pub fn condense_and_assemble(spec: &ProblemSpec, mesh: &Mesh, k: usize) -> Result<TraceSystem> {
    let order: Vec<usize> = (0..mesh.num_elements()).collect();
    condense_and_assemble_in_order(spec, mesh, k, &order)
}

/// As [`condense_and_assemble`], scattering elements in the given order.
pub fn condense_and_assemble_in_order(
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    order: &[usize],
) -> Result<TraceSystem> {
    let ctx = HdgContext::new(spec, mesh, k);
    let dofs = DofMap::new(mesh, k);
    let (matrix, rhs) = condense_in_order(spec, mesh, k, order, dofs.len(), |e| {
        full_element_system(&ctx, &dofs, e)
    })?;
    Ok(TraceSystem { dofs, matrix, rhs })
}

/// Outcome of a sparse solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    /// `|K gamma - F| / |F|` (`|K gamma|` when `F = 0`).
    pub relative_residual: f64,
    /// Rounding floor `eps |(|K| |gamma|)|` of the same residual, relative to
    /// `|F|`: the residual of the exact solution rounded to double precision
    /// is of this size.
    pub rounding_floor: f64,
    pub refinement_steps: usize,
}

impl SolveReport {
    /// Accepted when the residual meets the tolerance or sits at the
    /// rounding floor.
    pub fn accepted(&self) -> bool {
        self.relative_residual <= SOLVE_TOLERANCE
            || self.relative_residual <= FLOOR_FACTOR * self.rounding_floor
    }
}

/// Multiple of the rounding floor still treated as converged.
pub const FLOOR_FACTOR: f64 = 100.0;
const MAX_REFINEMENT: usize = 3;

fn abs_apply_norm(m: &SparseColMat<usize, f64>, x: &[f64]) -> f64 {
    let mut y = vec![0.0; m.nrows()];
    let sym = m.symbolic();
    let (cp, ri, val) = (sym.col_ptr(), sym.row_idx(), m.val());
    for j in 0..m.ncols() {
        for idx in cp[j]..cp[j + 1] {
            y[ri[idx]] += (val[idx] * x[j]).abs();
        }
    }
    norm2(&y)
}

fn sparse_solve(matrix: &SparseColMat<usize, f64>, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    let n = rhs.len();
    if n == 0 {
        let empty = SolveReport {
            relative_residual: 0.0,
            rounding_floor: 0.0,
            refinement_steps: 0,
        };
        return Ok((Vec::new(), empty));
    }
    let lu = matrix.sp_lu().map_err(|e| match e {
        LuError::SymbolicSingular { index } => Error::SingularSystem {
            pivot: Some(index),
            residual: f64::NAN,
        },
        LuError::Generic(_) => Error::SingularSystem {
            pivot: None,
            residual: f64::NAN,
        },
    })?;
    let sol = lu.solve(&Col::<f64>::from_fn(n, |i| rhs[i]));
    let mut x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    let scale = norm2(rhs);
    let denom = if scale > 0.0 { scale } else { 1.0 };
    let measure = |x: &[f64]| -> (Vec<f64>, SolveReport) {
        let kx = csc_apply(matrix, x);
        let r: Vec<f64> = rhs.iter().zip(&kx).map(|(f, a)| f - a).collect();
        let report = SolveReport {
            relative_residual: norm2(&r) / denom,
            rounding_floor: f64::EPSILON * abs_apply_norm(matrix, x) / denom,
            refinement_steps: 0,
        };
        (r, report)
    };
    let (mut r, mut report) = measure(&x);
    let mut steps = 0;
    while report.relative_residual > SOLVE_TOLERANCE
        && report.relative_residual.is_finite()
        && steps < MAX_REFINEMENT
    {
        let dx = lu.solve(&Col::<f64>::from_fn(n, |i| r[i]));
        let trial: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + dx[i]).collect();
        let (tr, trep) = measure(&trial);
        steps += 1;
        if !(trep.relative_residual < report.relative_residual) {
            break;
        }
        (x, r, report) = (trial, tr, trep);
    }
    report.refinement_steps = steps;
    if !report.accepted() {
        return Err(Error::SingularSystem {
            pivot: None,
            residual: report.relative_residual,
        });
    }
    Ok((x, report))
}

/// Sparse direct solve, accepted when `|K gamma - F| <= 1e-10 |F|` or the
/// residual has reached the double-precision rounding floor.
pub fn solve_trace_system(ts: &TraceSystem) -> Result<Vec<f64>> {
    Ok(sparse_solve(&ts.matrix, &ts.rhs)?.0)
}

/// As [`solve_trace_system`], also returning the residual report.
pub fn solve_trace_system_report(ts: &TraceSystem) -> Result<(Vec<f64>, SolveReport)> {
    sparse_solve(&ts.matrix, &ts.rhs)
}

/// Discrete solution. Face arrays hold `k + 2` coefficients for every
/// face; state and adjoint traces are zero on boundary faces and the
/// control is zero on interior faces.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFields {
    pub k: usize,
    pub n: usize,
    pub side_length: f64,
    pub problem: String,
    /// `2 * dim P^k` per element, `x` component first.
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub u: Vec<f64>,
    /// Max-norm of the uncondensed residual, relative to the load scale.
    pub residual: f64,
}

impl SolutionFields {
    pub fn nv(&self) -> usize {
        (self.k + 1) * (self.k + 2) / 2
    }

    pub fn nw(&self) -> usize {
        (self.k + 2) * (self.k + 3) / 2
    }

    pub fn nm(&self) -> usize {
        self.k + 2
    }

    fn zeros(spec: &ProblemSpec, mesh: &Mesh, k: usize) -> Self {
        let (ne, nf) = (mesh.num_elements(), mesh.num_faces());
        let nv = (k + 1) * (k + 2) / 2;
        let nw = (k + 2) * (k + 3) / 2;
        Self {
            k,
            n: mesh.cells_per_side(),
            side_length: mesh.side_length(),
            problem: spec.name.clone(),
            q: vec![0.0; 2 * nv * ne],
            p: vec![0.0; 2 * nv * ne],
            y: vec![0.0; nw * ne],
            z: vec![0.0; nw * ne],
            y_hat: vec![0.0; (k + 2) * nf],
            z_hat: vec![0.0; (k + 2) * nf],
            u: vec![0.0; (k + 2) * nf],
            residual: 0.0,
        }
    }

    /// All coefficients in one vector: `q, p, y, z, y_hat, z_hat, u`.
    pub fn flatten(&self) -> Vec<f64> {
        [
            &self.q,
            &self.p,
            &self.y,
            &self.z,
            &self.y_hat,
            &self.z_hat,
            &self.u,
        ]
        .iter()
        .flat_map(|v| v.iter().copied())
        .collect()
    }

    /// Trace vector in the ordering of [`DofMap::new`].
    pub fn trace_vector(&self, dofs: &DofMap) -> Vec<f64> {
        let nm = self.nm();
        let mut out = vec![0.0; dofs.len()];
        for f in 0..self.y_hat.len() / nm {
            let src = f * nm..(f + 1) * nm;
            if let Some(r) = dofs.state_trace(f) {
                out[r].copy_from_slice(&self.y_hat[src.clone()]);
            }
            if let Some(r) = dofs.adjoint_trace(f) {
                out[r].copy_from_slice(&self.z_hat[src.clone()]);
            }
            if let Some(r) = dofs.control(f) {
                out[r].copy_from_slice(&self.u[src]);
            }
        }
        out
    }

    fn store_element(&mut self, e: usize, x: &[f64]) {
        let (nvv, nw) = (2 * self.nv(), self.nw());
        self.q[e * nvv..(e + 1) * nvv].copy_from_slice(&x[..nvv]);
        self.p[e * nvv..(e + 1) * nvv].copy_from_slice(&x[nvv..2 * nvv]);
        self.y[e * nw..(e + 1) * nw].copy_from_slice(&x[2 * nvv..2 * nvv + nw]);
        self.z[e * nw..(e + 1) * nw].copy_from_slice(&x[2 * nvv + nw..]);
    }

    fn store_traces(&mut self, dofs: &DofMap, gamma: &[f64]) {
        let nm = self.nm();
        for f in 0..self.y_hat.len() / nm {
            let dst = f * nm..(f + 1) * nm;
            if let Some(r) = dofs.state_trace(f) {
                self.y_hat[dst.clone()].copy_from_slice(&gamma[r]);
            }
            if let Some(r) = dofs.adjoint_trace(f) {
                self.z_hat[dst.clone()].copy_from_slice(&gamma[r]);
            }
            if let Some(r) = dofs.control(f) {
                self.u[dst].copy_from_slice(&gamma[r]);
            }
        }
    }
}

/// Recovers element unknowns from the traces and checks the residual of
/// the uncondensed system.
pub fn recover_fields(
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    dofs: &DofMap,
    gamma: &[f64],
) -> Result<SolutionFields> {
    if gamma.len() != dofs.len() {
        return Err(Error::InvalidArgument(format!(
            "trace vector has {} entries, expected {}",
            gamma.len(),
            dofs.len()
        )));
    }
    let ctx = HdgContext::new(spec, mesh, k);
    let solved: Vec<(ElementSystem, Vec<f64>)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let es = full_element_system(&ctx, dofs, e)?;
            let x = local_solve(&es, gamma, spec, mesh, k)?;
            Ok((es, x))
        })
        .collect::<Result<_>>()?;

    let mut fields = SolutionFields::zeros(spec, mesh, k);
    fields.store_traces(dofs, gamma);
    let (mut trace_res, mut trace_abs, mut scale) =
        (vec![0.0; dofs.len()], vec![0.0; dofs.len()], 0.0f64);
    let (mut local_res, mut floor) = (0.0f64, 0.0f64);
    for (es, x) in &solved {
        let ge: Vec<f64> = es.dofs.iter().map(|&i| gamma[i]).collect();
        let ax = &es.a * column(x) + &es.c * column(&ge);
        let ax_abs = abs_product(&es.a, x) + abs_product(&es.c, &ge);
        for i in 0..x.len() {
            local_res = local_res.max((ax[(i, 0)] - es.b[i]).abs());
            floor = floor.max(ax_abs[(i, 0)] + es.b[i].abs());
        }
        let ex = &es.e * column(x) + &es.d * column(&ge);
        let ex_abs = abs_product(&es.e, x) + abs_product(&es.d, &ge);
        for (i, &gi) in es.dofs.iter().enumerate() {
            trace_res[gi] += ex[(i, 0)] - es.g[i];
            trace_abs[gi] += ex_abs[(i, 0)] + es.g[i].abs();
        }
        scale = scale.max(max_abs(&es.b)).max(max_abs(&es.g));
        fields.store_element(es.element, x);
    }
    let residual = local_res.max(max_abs(&trace_res));
    // Residuals below the rounding level of the row sums cannot be resolved
    // in double precision.
    let floor = f64::EPSILON * floor.max(max_abs(&trace_abs));
    let tolerance = (CONSISTENCY_TOLERANCE * scale).max(FLOOR_FACTOR * floor);
    if !(residual <= tolerance) {
        return Err(Error::Consistency {
            residual,
            tolerance,
        });
    }
    fields.residual = if scale > 0.0 { residual / scale } else { 0.0 };
    Ok(fields)
}

/// `|M| |x|` as a column.
fn abs_product(m: &Mat<f64>, x: &[f64]) -> Mat<f64> {
    Mat::from_fn(m.nrows(), 1, |i, _| {
        (0..m.ncols()).map(|j| (m[(i, j)] * x[j]).abs()).sum()
    })
}

fn local_solve(
    es: &ElementSystem,
    gamma: &[f64],
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
) -> Result<Vec<f64>> {
    let lu = factor(es, spec, mesh, k)?;
    let ge: Vec<f64> = es.dofs.iter().map(|&i| gamma[i]).collect();
    let rhs = column(&es.b) - &es.c * column(&ge);
    let x = lu.solve(&rhs);
    Ok((0..x.nrows()).map(|i| x[(i, 0)]).collect())
}

/// Condense, solve and recover.
pub fn solve_control_problem(spec: &ProblemSpec, mesh: &Mesh, k: usize) -> Result<SolutionFields> {
    let ts = condense_and_assemble(spec, mesh, k)?;
    let gamma = solve_trace_system(&ts)?;
    recover_fields(spec, mesh, k, &ts.dofs, &gamma)
}

/// Solves the full uncondensed system with a dense LU. Only for tiny
/// meshes; used to cross-check the condensed path.
pub fn solve_monolithic(spec: &ProblemSpec, mesh: &Mesh, k: usize) -> Result<SolutionFields> {
    let ctx = HdgContext::new(spec, mesh, k);
    let dofs = DofMap::new(mesh, k);
    let nx = ctx.tables.n_interior();
    let ne = mesh.num_elements();
    let n = ne * nx + dofs.len();
    if n > MONOLITHIC_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "monolithic system of size {n} exceeds {MONOLITHIC_LIMIT}"
        )));
    }
    let mut m = Mat::<f64>::zeros(n, n);
    let mut rhs = Mat::<f64>::zeros(n, 1);
    let t0 = ne * nx;
    for e in 0..ne {
        let es = full_element_system(&ctx, &dofs, e)?;
        let o = e * nx;
        for i in 0..nx {
            for j in 0..nx {
                m[(o + i, o + j)] = es.a[(i, j)];
            }
            for (j, &gj) in es.dofs.iter().enumerate() {
                m[(o + i, t0 + gj)] = es.c[(i, j)];
            }
            rhs[(o + i, 0)] = es.b[i];
        }
        for (i, &gi) in es.dofs.iter().enumerate() {
            for j in 0..nx {
                m[(t0 + gi, o + j)] += es.e[(i, j)];
            }
            for (j, &gj) in es.dofs.iter().enumerate() {
                m[(t0 + gi, t0 + gj)] += es.d[(i, j)];
            }
            rhs[(t0 + gi, 0)] += es.g[i];
        }
    }
    let sol = m.partial_piv_lu().solve(&rhs);
    let r = &m * &sol - &rhs;
    let (mut res, mut scale) = (0.0f64, 0.0f64);
    for i in 0..n {
        res = res.max(r[(i, 0)].abs());
        scale = scale.max(rhs[(i, 0)].abs());
    }
    if !(res <= CONSISTENCY_TOLERANCE * scale.max(f64::MIN_POSITIVE)) && res != 0.0 {
        return Err(Error::SingularSystem {
            pivot: None,
            residual: res / scale.max(f64::MIN_POSITIVE),
        });
    }
    let mut fields = SolutionFields::zeros(spec, mesh, k);
    let all: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    for e in 0..ne {
        fields.store_element(e, &all[e * nx..(e + 1) * nx]);
    }
    fields.store_traces(&dofs, &all[t0..]);
    fields.residual = if scale > 0.0 { res / scale } else { 0.0 };
    Ok(fields)
}

/// State-equation solution for a prescribed boundary value.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardFields {
    pub k: usize,
    pub n: usize,
    pub side_length: f64,
    pub q: Vec<f64>,
    pub y: Vec<f64>,
    /// `k + 2` coefficients per face; boundary faces carry the projected
    /// boundary data.
    pub y_hat: Vec<f64>,
}

/// Solves the state equation alone with the boundary trace set to the L2
/// projection of `u_data`.
pub fn solve_forward(
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    u_data: impl Fn(Point) -> f64,
) -> Result<ForwardFields> {
    let ctx = HdgContext::new(spec, mesh, k);
    let dofs = DofMap::state_only(mesh, k);
    let nm = k + 2;
    let mut boundary = vec![0.0; nm * mesh.num_faces()];
    for f in mesh.boundary_faces() {
        let c = l2_project(mesh, ProjectionTarget::Face(f), k + 1, &u_data)?;
        boundary[f * nm..(f + 1) * nm].copy_from_slice(&c);
    }
    let build = |e: usize| forward_element_system(&ctx, &dofs, &boundary, e);
    let order: Vec<usize> = (0..mesh.num_elements()).collect();
    let (matrix, rhs) = condense_in_order(spec, mesh, k, &order, dofs.len(), build)?;
    let (gamma, _) = sparse_solve(&matrix, &rhs)?;

    let nv = ctx.tables.nv();
    let nw = ctx.tables.nw();
    let xs: Vec<Vec<f64>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| local_solve(&build(e)?, &gamma, spec, mesh, k))
        .collect::<Result<_>>()?;
    let mut out = ForwardFields {
        k,
        n: mesh.cells_per_side(),
        side_length: mesh.side_length(),
        q: Vec::with_capacity(2 * nv * xs.len()),
        y: Vec::with_capacity(nw * xs.len()),
        y_hat: boundary,
    };
    for x in &xs {
        out.q.extend_from_slice(&x[..2 * nv]);
        out.y.extend_from_slice(&x[2 * nv..]);
    }
    for f in 0..mesh.num_faces() {
        if let Some(r) = dofs.state_trace(f) {
            out.y_hat[f * nm..(f + 1) * nm].copy_from_slice(&gamma[r]);
        }
    }
    Ok(out)
}

fn forward_element_system(
    ctx: &HdgContext,
    dofs: &DofMap,
    boundary: &[f64],
    e: usize,
) -> Result<ElementSystem> {
    let parts = ctx.element_parts(e)?;
    let (nv, nw, nm) = (ctx.tables.nv(), ctx.tables.nw(), ctx.tables.nm());
    let nvv = 2 * nv;
    let nx = nvv + nw;
    let mut a = Mat::<f64>::zeros(nx, nx);
    let state = parts.state_block();
    for comp in 0..2 {
        for i in 0..nv {
            for j in 0..nv {
                a[(comp * nv + i, comp * nv + j)] = parts.mass_v[(i, j)];
            }
        }
    }
    for i in 0..nvv {
        for j in 0..nw {
            a[(i, nvv + j)] = -parts.div[(i, j)];
            a[(nvv + j, i)] = parts.div[(i, j)];
        }
    }
    for i in 0..nw {
        for j in 0..nw {
            a[(nvv + i, nvv + j)] = state[(i, j)];
        }
    }
    let mut b = vec![0.0; nx];
    b[nvv..].copy_from_slice(&parts.load_f);

    let interior: Vec<_> = parts.sides.iter().filter(|s| !s.boundary).collect();
    let nt = nm * interior.len();
    let mut c = Mat::<f64>::zeros(nx, nt);
    let mut el = Mat::<f64>::zeros(nt, nx);
    let mut d = Mat::<f64>::zeros(nt, nt);
    let mut local = Vec::with_capacity(nt);
    for (slot, sp) in interior.iter().enumerate() {
        let o = slot * nm;
        local.extend(dofs.state_trace(sp.face).expect("interior face"));
        for j in 0..nm {
            for i in 0..nvv {
                c[(i, o + j)] = sp.flux[(i, j)];
                el[(o + j, i)] = sp.flux[(i, j)];
            }
            for i in 0..nw {
                c[(nvv + i, o + j)] = sp.cross_bn[(i, j)] - sp.cross1[(i, j)];
                el[(o + j, nvv + i)] = sp.cross1[(i, j)];
            }
            for i in 0..nm {
                d[(o + i, o + j)] = sp.trace_bn[(i, j)] - sp.trace1[(i, j)];
            }
        }
    }
    for sp in parts.sides.iter().filter(|s| s.boundary) {
        let g = &boundary[sp.face * nm..(sp.face + 1) * nm];
        for (j, &gj) in g.iter().enumerate() {
            for i in 0..nvv {
                b[i] -= sp.flux[(i, j)] * gj;
            }
            for i in 0..nw {
                b[nvv + i] -= (sp.cross_bn[(i, j)] - sp.cross1[(i, j)]) * gj;
            }
        }
    }
    Ok(ElementSystem {
        element: e,
        a,
        c,
        e: el,
        d,
        b,
        g: vec![0.0; nt],
        dofs: local,
    })
}
