use std::io::Write;

use crate::error::Result;
use crate::fespace::{reference_basis, Domain};
use crate::mesh::Mesh;

use super::SolutionFields;

/// One row per element: centroid, then the cell averages of
/// `q_x, q_y, p_x, p_y, y, z`.
pub fn write_cell_averages<W: Write>(fields: &SolutionFields, mesh: &Mesh, mut w: W) -> Result<()> {
    // The mean of an orthonormal expansion on the reference triangle
    // (area 1/2) is 2 * sum c_i * integral(phi_i).
    let mean_weights = |m: usize| -> Vec<f64> {
        let b = reference_basis(Domain::Triangle, m);
        let rule = crate::fespace::quadrature(Domain::Triangle, m);
        let mut out = vec![0.0; b.dim()];
        for (x, wq) in rule.nodes.iter().zip(&rule.weights) {
            for (o, v) in out.iter_mut().zip(b.eval(*x)) {
                *o += 2.0 * wq * v;
            }
        }
        out
    };
    let (mv, mw) = (mean_weights(fields.k), mean_weights(fields.k + 1));
    let (nv, nw) = (fields.nv(), fields.nw());
    let avg = |c: &[f64], m: &[f64]| -> f64 { c.iter().zip(m).map(|(a, b)| a * b).sum() };
    writeln!(w, "x,y,q1,q2,p1,p2,y_h,z_h")?;
    for e in 0..mesh.num_elements() {
        let c = mesh.centroid(e);
        let q = &fields.q[2 * nv * e..2 * nv * (e + 1)];
        let p = &fields.p[2 * nv * e..2 * nv * (e + 1)];
        let vals = [
            avg(&q[..nv], &mv),
            avg(&q[nv..], &mv),
            avg(&p[..nv], &mv),
            avg(&p[nv..], &mv),
            avg(&fields.y[nw * e..nw * (e + 1)], &mw),
            avg(&fields.z[nw * e..nw * (e + 1)], &mw),
        ];
        write!(w, "{:e},{:e}", c[0], c[1])?;
        for v in vals {
            write!(w, ",{v:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One row per boundary face: face id, endpoints, then the control
/// coefficients in the face's orthonormal basis.
pub fn write_control<W: Write>(fields: &SolutionFields, mesh: &Mesh, mut w: W) -> Result<()> {
    let nm = fields.nm();
    write!(w, "face,x0,y0,x1,y1")?;
    for i in 0..nm {
        write!(w, ",u{i}")?;
    }
    writeln!(w)?;
    for f in mesh.boundary_faces() {
        let [a, b] = mesh.face(f).endpoints;
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        write!(w, "{f},{:e},{:e},{:e},{:e}", pa[0], pa[1], pb[0], pb[1])?;
        for c in &fields.u[f * nm..(f + 1) * nm] {
            write!(w, ",{c:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
