//! Structured triangulations of the square `[0, L]^2`.
//!
//! Every cell of an `n x n` grid is split by its lower-left to upper-right
//! diagonal. Element `2c` is the triangle below the diagonal of cell `c`,
//! element `2c + 1` the one above it; both are stored counterclockwise.
//! Local side `s` of an element runs from its vertex `s` to vertex `s + 1`.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Boundary,
}

/// One side of a face as seen from an incident element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSide {
    pub element: usize,
    pub local_side: usize,
    /// Outward unit normal with respect to `element`.
    pub normal: Point,
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Vertex ids in ascending order; the face parameter runs from the first
    /// to the second.
    pub endpoints: [usize; 2],
    pub kind: FaceKind,
    sides: [Option<FaceSide>; 2],
    pub length: f64,
}

impl Face {
    pub fn sides(&self) -> impl Iterator<Item = &FaceSide> {
        self.sides.iter().flatten()
    }

    /// Outward unit normal seen from `element`, if it is incident.
    pub fn normal_of(&self, element: usize) -> Option<Point> {
        self.sides()
            .find(|s| s.element == element)
            .map(|s| s.normal)
    }

    pub fn is_boundary(&self) -> bool {
        self.kind == FaceKind::Boundary
    }
}

/// Affine map from the reference triangle `{(0,0), (1,0), (0,1)}`.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub origin: Point,
    /// Columns are the edge vectors `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    inverse: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn from_vertices(v: [Point; 3]) -> Option<Self> {
        let jacobian = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        let scale = jacobian
            .iter()
            .flatten()
            .map(|a| a.abs())
            .fold(0.0, f64::max);
        if !(det.abs() > 1e-14 * scale * scale) {
            return None;
        }
        let inverse = [
            [jacobian[1][1] / det, -jacobian[0][1] / det],
            [-jacobian[1][0] / det, jacobian[0][0] / det],
        ];
        Some(Self {
            origin: v[0],
            jacobian,
            det,
            inverse,
        })
    }

    pub fn map(&self, xi: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    pub fn inverse_map(&self, x: Point) -> Point {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let m = &self.inverse;
        [
            m[0][0] * d[0] + m[0][1] * d[1],
            m[1][0] * d[0] + m[1][1] * d[1],
        ]
    }

    /// Maps a reference gradient to a physical one (`J^{-T} g`).
    pub fn grad_to_physical(&self, g: Point) -> Point {
        let m = &self.inverse;
        [
            m[0][0] * g[0] + m[1][0] * g[1],
            m[0][1] * g[0] + m[1][1] * g[1],
        ]
    }

    pub fn inverse_transpose(&self) -> [[f64; 2]; 2] {
        let m = &self.inverse;
        [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    side_length: f64,
    n: usize,
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    faces: Vec<Face>,
    element_faces: Vec<[usize; 3]>,
    h_global: f64,
    parent: Option<Vec<usize>>,
}

impl Mesh {
    /// Builds the `n x n` structured mesh of `[0, L]^2`.
    pub fn structured(side_length: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "mesh needs n >= 1 cells per side".into(),
            ));
        }
        if !(side_length > 0.0) || !side_length.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "side length must be positive, got {side_length}"
            )));
        }
        let cell = side_length / n as f64;
        let vid = |i: usize, j: usize| j * (n + 1) + i;

        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * cell, j as f64 * cell]);
            }
        }
        // Exact right edge / top edge coordinates.
        for j in 0..=n {
            vertices[vid(n, j)][0] = side_length;
            vertices[vid(j, n)][1] = side_length;
        }

        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) =
                    (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }

        let mut faces: Vec<Face> = Vec::with_capacity(3 * n * n + 2 * n);
        let mut element_faces = Vec::with_capacity(elements.len());
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * n * n + 2 * n);
        for (e, tri) in elements.iter().enumerate() {
            let mut ids = [0usize; 3];
            for s in 0..3 {
                let (a, b) = (tri[s], tri[(s + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let (pa, pb) = (vertices[a], vertices[b]);
                let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                let len = dx.hypot(dy);
                let side = FaceSide {
                    element: e,
                    local_side: s,
                    normal: [dy / len, -dx / len],
                };
                let id = *lookup.entry(key).or_insert_with(|| {
                    faces.push(Face {
                        endpoints: [key.0, key.1],
                        kind: FaceKind::Boundary,
                        sides: [None, None],
                        length: len,
                    });
                    faces.len() - 1
                });
                let face = &mut faces[id];
                if face.sides[0].is_none() {
                    face.sides[0] = Some(side);
                } else {
                    face.sides[1] = Some(side);
                    face.kind = FaceKind::Interior;
                }
                ids[s] = id;
            }
            element_faces.push(ids);
        }

        Ok(Self {
            side_length,
            n,
            vertices,
            elements,
            faces,
            element_faces,
            h_global: cell * std::f64::consts::SQRT_2,
            parent: None,
        })
    }

    /// Regenerates the mesh at `2n` and records for every child its parent
    /// element in `self`.
    pub fn uniform_refine(&self) -> Result<Self> {
        let mut fine = Mesh::structured(self.side_length, 2 * self.n)?;
        let parent = (0..fine.num_elements())
            .map(|e| self.locate(fine.centroid(e)))
            .collect();
        fine.parent = Some(parent);
        Ok(fine)
    }

    /// Element of this structured mesh containing `x` (ties resolved
    /// towards the lower-left).
    pub fn locate(&self, x: Point) -> usize {
        let cell = self.side_length / self.n as f64;
        let i = ((x[0] / cell).floor().max(0.0) as usize).min(self.n - 1);
        let j = ((x[1] / cell).floor().max(0.0) as usize).min(self.n - 1);
        let lx = x[0] - i as f64 * cell;
        let ly = x[1] - j as f64 * cell;
        let c = j * self.n + i;
        if lx >= ly {
            2 * c
        } else {
            2 * c + 1
        }
    }

    /// For each element of `fine`, the element of `self` containing it.
    /// Fails unless `fine` is an iterated uniform refinement of `self`.
    pub fn ancestors_in(&self, fine: &Mesh) -> Result<Vec<usize>> {
        let ratio = fine.n / self.n;
        let same_domain = (fine.side_length - self.side_length).abs() <= 1e-14 * self.side_length;
        if !same_domain || fine.n % self.n != 0 || !ratio.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "mesh n={} is not a nested refinement of n={}",
                fine.n, self.n
            )));
        }
        if ratio == 2 {
            if let Some(parent) = &fine.parent {
                return Ok(parent.clone());
            }
        }
        Ok((0..fine.num_elements())
            .map(|e| self.locate(fine.centroid(e)))
            .collect())
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    pub fn h_global(&self) -> f64 {
        self.h_global
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn element_faces(&self, e: usize) -> [usize; 3] {
        self.element_faces[e]
    }

    pub fn parent(&self) -> Option<&[usize]> {
        self.parent.as_deref()
    }

    pub fn element_vertices(&self, e: usize) -> [Point; 3] {
        let t = self.elements[e];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ]
    }

    pub fn centroid(&self, e: usize) -> Point {
        let v = self.element_vertices(e);
        [
            (v[0][0] + v[1][0] + v[2][0]) / 3.0,
            (v[0][1] + v[1][1] + v[2][1]) / 3.0,
        ]
    }

    pub fn area(&self, e: usize) -> f64 {
        let v = self.element_vertices(e);
        0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
            - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
    }

    pub fn diameter(&self, e: usize) -> f64 {
        let v = self.element_vertices(e);
        (0..3)
            .map(|s| {
                let (a, b) = (v[s], v[(s + 1) % 3]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .fold(0.0, f64::max)
    }

    pub fn element_map(&self, e: usize) -> Result<AffineMap> {
        if e >= self.elements.len() {
            return Err(Error::InvalidArgument(format!("no element {e}")));
        }
        AffineMap::from_vertices(self.element_vertices(e)).ok_or_else(|| Error::Geometry {
            element: e,
            reason: "zero area".into(),
        })
    }

    /// True when local side `s` of `e` runs against the face's intrinsic
    /// orientation.
    pub fn side_flipped(&self, e: usize, s: usize) -> bool {
        let t = self.elements[e];
        t[s] > t[(s + 1) % 3]
    }

    /// Point on face `f` at intrinsic parameter `t` in `[0, 1]`.
    pub fn face_point(&self, f: usize, t: f64) -> Point {
        let [a, b] = self.faces[f].endpoints;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    }

    /// Intrinsic parameter of the orthogonal projection of `x` onto face `f`.
    pub fn face_parameter(&self, f: usize, x: Point) -> f64 {
        let [a, b] = self.faces[f].endpoints;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        ((x[0] - pa[0]) * d[0] + (x[1] - pa[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(|&f| self.faces[f].is_boundary())
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.boundary_faces().count()
    }

    pub fn num_interior_faces(&self) -> usize {
        self.faces.len() - self.num_boundary_faces()
    }

    /// Plain-text dump of vertices, triangles and faces.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# mesh L={} n={} h={}",
            self.side_length, self.n, self.h_global
        )?;
        writeln!(w, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{:e} {:e}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.elements.len())?;
        for t in &self.elements {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "faces {}", self.faces.len())?;
        for f in &self.faces {
            let kind = match f.kind {
                FaceKind::Interior => "interior",
                FaceKind::Boundary => "boundary",
            };
            let elems: Vec<String> = f.sides().map(|s| s.element.to_string()).collect();
            writeln!(
                w,
                "{} {} {} {}",
                f.endpoints[0],
                f.endpoints[1],
                kind,
                elems.join(" ")
            )?;
        }
        Ok(())
    }
}
