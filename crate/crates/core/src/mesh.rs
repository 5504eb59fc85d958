//! Conforming triangulations of the unit square and the L-shaped domain.
//!
//! Meshes are immutable after construction. Structured meshes use right
//! triangles cut by the cell diagonal from the lower-left to the upper-right
//! corner, so uniform refinement halves the mesh size exactly.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitSquare,
    LShape,
}

/// Domain descriptor carrying the reentrant-corner exponent that caps the
/// attainable convergence rate (1 on convex domains, 2/3 on the L-shape).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub reentrant_exponent_beta: f64,
}

impl DomainSpec {
    pub fn unit_square() -> Self {
        Self { kind: DomainKind::UnitSquare, reentrant_exponent_beta: 1.0 }
    }

    pub fn l_shape() -> Self {
        Self { kind: DomainKind::LShape, reentrant_exponent_beta: 2.0 / 3.0 }
    }

    pub fn for_kind(kind: DomainKind) -> Self {
        match kind {
            DomainKind::UnitSquare => Self::unit_square(),
            DomainKind::LShape => Self::l_shape(),
        }
    }
}

/// Mesh edge with canonical vertex order (lower index first) and the
/// adjacent triangles in ascending index order.
#[derive(Debug, Clone)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub midpoint: [f64; 2],
    pub triangles: (usize, Option<usize>),
}

#[derive(Debug, Clone, Copy)]
struct StructuredInfo {
    domain: DomainKind,
    /// cells per axis of the full bounding square
    n_eff: usize,
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    domain: DomainSpec,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// edge opposite local vertex k of triangle t
    tri_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
    mesh_size_h: f64,
    refinement_level: u32,
    structured: Option<StructuredInfo>,
    cell_table: OnceLock<HashMap<(usize, usize, bool), usize>>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl TriangleMesh {
    fn from_cells(
        domain: DomainSpec,
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        refinement_level: u32,
        structured: Option<StructuredInfo>,
    ) -> Result<Self> {
        // edge table, canonical order: within an edge lower vertex first,
        // edge list sorted lexicographically for deterministic DOF numbering
        let mut edge_map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                edge_map.entry(key).or_default().push(t);
            }
        }
        let mut keys: Vec<(usize, usize)> = edge_map.keys().copied().collect();
        keys.sort_unstable();
        let index_of: HashMap<(usize, usize), usize> =
            keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();

        let mut edges = Vec::with_capacity(keys.len());
        let mut boundary_edge = Vec::with_capacity(keys.len());
        for &(a, b) in &keys {
            let mut tris = edge_map.remove(&(a, b)).unwrap();
            tris.sort_unstable();
            let adjacent = match tris.len() {
                1 => (tris[0], None),
                2 => (tris[0], Some(tris[1])),
                n => {
                    return Err(Error::InvalidParameter(format!(
                        "edge ({a},{b}) shared by {n} triangles; mesh is not conforming"
                    )))
                }
            };
            boundary_edge.push(adjacent.1.is_none());
            edges.push(Edge {
                vertices: [a, b],
                midpoint: [
                    0.5 * (vertices[a][0] + vertices[b][0]),
                    0.5 * (vertices[a][1] + vertices[b][1]),
                ],
                triangles: adjacent,
            });
        }

        let tri_edges: Vec<[usize; 3]> = triangles
            .iter()
            .map(|tri| {
                let mut e = [0usize; 3];
                for k in 0..3 {
                    let a = tri[(k + 1) % 3];
                    let b = tri[(k + 2) % 3];
                    e[k] = index_of[&(a.min(b), a.max(b))];
                }
                e
            })
            .collect();

        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, edge) in edges.iter().enumerate() {
            if boundary_edge[e] {
                boundary_vertex[edge.vertices[0]] = true;
                boundary_vertex[edge.vertices[1]] = true;
            }
        }

        let mut mesh = Self {
            domain,
            vertices,
            triangles,
            edges,
            tri_edges,
            boundary_vertex,
            boundary_edge,
            mesh_size_h: 0.0,
            refinement_level,
            structured,
            cell_table: OnceLock::new(),
        };
        mesh.mesh_size_h = (0..mesh.triangles.len())
            .map(|t| mesh.longest_edge(t))
            .fold(0.0, f64::max);

        for t in 0..mesh.triangles.len() {
            if mesh.signed_area(t) <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "triangle {t} has nonpositive signed area"
                )));
            }
        }
        Ok(mesh)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    /// Global index of the edge opposite local vertex `k`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        self.boundary_vertex[i]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    pub fn mesh_size_h(&self) -> f64 {
        self.mesh_size_h
    }

    pub fn refinement_level(&self) -> u32 {
        self.refinement_level
    }

    pub fn triangle_vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    fn longest_edge(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Worst circumradius-to-inradius ratio over all elements.
    pub fn shape_regularity_ratio(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let [va, vb, vc] = self.triangle_vertices(t);
                let a = dist(vb, vc);
                let b = dist(va, vc);
                let c = dist(va, vb);
                let area = self.triangle_area(t);
                let circum = a * b * c / (4.0 * area);
                let inradius = 2.0 * area / (a + b + c);
                circum / inradius
            })
            .fold(0.0, f64::max)
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&i| !self.boundary_vertex[i]).collect()
    }

    /// V - E + F for the triangulation (1 for simply connected domains).
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_triangles() as i64
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangle_vertices(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// One uniform (midpoint) refinement: every triangle is split into four
    /// congruent children.
    pub fn refine_uniform(&self) -> TriangleMesh {
        let mut vertices = self.vertices.clone();
        // one new vertex per edge
        let edge_mid: Vec<usize> = self
            .edges
            .iter()
            .map(|e| {
                vertices.push(e.midpoint);
                vertices.len() - 1
            })
            .collect();

        let mut triangles = Vec::with_capacity(4 * self.n_triangles());
        for t in 0..self.n_triangles() {
            let [v0, v1, v2] = self.triangles[t];
            let e = self.tri_edges[t];
            // midpoint of edge opposite vertex k
            let m0 = edge_mid[e[0]];
            let m1 = edge_mid[e[1]];
            let m2 = edge_mid[e[2]];
            triangles.push([v0, m2, m1]);
            triangles.push([m2, v1, m0]);
            triangles.push([m1, m0, v2]);
            triangles.push([m2, m0, m1]);
        }
        let structured = self
            .structured
            .map(|s| StructuredInfo { domain: s.domain, n_eff: 2 * s.n_eff });
        TriangleMesh::from_cells(
            self.domain,
            vertices,
            triangles,
            self.refinement_level + 1,
            structured,
        )
        .expect("refinement of a valid mesh is valid")
    }

    /// Bounding-square extent: lower-left corner and cell width for the
    /// structured grid, if this mesh is structured.
    fn grid_geometry(&self) -> Option<([f64; 2], f64, usize)> {
        let s = self.structured?;
        match s.domain {
            DomainKind::UnitSquare => Some(([0.0, 0.0], 1.0 / s.n_eff as f64, s.n_eff)),
            DomainKind::LShape => Some(([-1.0, -1.0], 2.0 / s.n_eff as f64, s.n_eff)),
        }
    }

    /// Locate the triangle containing `p` by grid arithmetic; available on
    /// structured meshes only. Returns the triangle index.
    pub fn locate_point(&self, p: [f64; 2]) -> Result<usize> {
        let (origin, cell, n) = self.grid_geometry().ok_or_else(|| {
            Error::InvalidParameter("point location requires a structured mesh".into())
        })?;
        let fx = ((p[0] - origin[0]) / cell).floor();
        let fy = ((p[1] - origin[1]) / cell).floor();
        let i = (fx.max(0.0) as usize).min(n - 1);
        let j = (fy.max(0.0) as usize).min(n - 1);
        // local position in cell decides the diagonal side
        for (di, dj) in [(0i64, 0i64), (-1, 0), (0, -1), (-1, -1)] {
            let ci = i as i64 + di;
            let cj = j as i64 + dj;
            if ci < 0 || cj < 0 || ci >= n as i64 || cj >= n as i64 {
                continue;
            }
            if let Some(&t) = self.cell_table().get(&(ci as usize, cj as usize, false)) {
                let l = self.barycentric(t, p);
                if l.iter().all(|&x| x >= -1e-12) {
                    return Ok(t);
                }
            }
            if let Some(&t) = self.cell_table().get(&(ci as usize, cj as usize, true)) {
                let l = self.barycentric(t, p);
                if l.iter().all(|&x| x >= -1e-12) {
                    return Ok(t);
                }
            }
        }
        Err(Error::Domain(format!("point ({}, {}) is outside the mesh", p[0], p[1])))
    }

    fn cell_table(&self) -> &HashMap<(usize, usize, bool), usize> {
        self.cell_table.get_or_init(|| {
            let mut table = HashMap::new();
            if let Some((origin, cell, _)) = self.grid_geometry() {
                for t in 0..self.n_triangles() {
                    let [a, b, c] = self.triangle_vertices(t);
                    let cx = (a[0] + b[0] + c[0]) / 3.0;
                    let cy = (a[1] + b[1] + c[1]) / 3.0;
                    let i = ((cx - origin[0]) / cell).floor() as usize;
                    let j = ((cy - origin[1]) / cell).floor() as usize;
                    // upper triangle lies above the cell diagonal
                    let lx = (cx - origin[0]) / cell - i as f64;
                    let ly = (cy - origin[1]) / cell - j as f64;
                    table.insert((i, j, ly > lx), t);
                }
            }
            table
        })
    }

    /// Plain-text export: `nv nt ne` header, vertex lines `x y flag`,
    /// triangle lines `i j k`, edge lines `i j flag` (0-based indices).
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_vertices(), self.n_triangles(), self.n_edges())?;
        for (v, &[x, y]) in self.vertices.iter().enumerate() {
            writeln!(w, "{:.17e} {:.17e} {}", x, y, u8::from(self.boundary_vertex[v]))?;
        }
        for tri in &self.triangles {
            writeln!(w, "{} {} {}", tri[0], tri[1], tri[2])?;
        }
        for (e, edge) in self.edges.iter().enumerate() {
            writeln!(
                w,
                "{} {} {}",
                edge.vertices[0],
                edge.vertices[1],
                u8::from(self.boundary_edge[e])
            )?;
        }
        Ok(())
    }

    /// Read a mesh in the plain-text format written by [`write_text`].
    ///
    /// The edge section is validated against the connectivity implied by the
    /// triangles.
    ///
    /// [`write_text`]: TriangleMesh::write_text
    pub fn read_text(domain: DomainSpec, r: &mut impl BufRead) -> Result<TriangleMesh> {
        let mut lines = r.lines();
        let mut next_line = || -> Result<String> {
            loop {
                match lines.next() {
                    Some(Ok(l)) => {
                        if !l.trim().is_empty() {
                            return Ok(l);
                        }
                    }
                    Some(Err(e)) => return Err(e.into()),
                    None => return Err(Error::Parse("unexpected end of mesh file".into())),
                }
            }
        };
        let header = next_line()?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("header: {e}"))))
            .collect::<Result<_>>()?;
        if counts.len() != 3 {
            return Err(Error::Parse("header must be `nv nt ne`".into()));
        }
        let (nv, nt, ne) = (counts[0], counts[1], counts[2]);

        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next_line()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad vertex line: {line}")));
            }
            let x: f64 = f[0].parse().map_err(|e| Error::Parse(format!("vertex x: {e}")))?;
            let y: f64 = f[1].parse().map_err(|e| Error::Parse(format!("vertex y: {e}")))?;
            vertices.push([x, y]);
            flags.push(f[2] == "1");
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = next_line()?;
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("triangle: {e}"))))
                .collect::<Result<_>>()?;
            if idx.len() != 3 || idx.iter().any(|&i| i >= nv) {
                return Err(Error::Parse(format!("bad triangle line: {line}")));
            }
            triangles.push([idx[0], idx[1], idx[2]]);
        }
        let mesh = TriangleMesh::from_cells(domain, vertices, triangles, 0, None)?;
        if mesh.n_edges() != ne {
            return Err(Error::Parse(format!(
                "edge count mismatch: file says {ne}, connectivity gives {}",
                mesh.n_edges()
            )));
        }
        for k in 0..ne {
            let line = next_line()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad edge line: {line}")));
            }
            let a: usize = f[0].parse().map_err(|e| Error::Parse(format!("edge: {e}")))?;
            let b: usize = f[1].parse().map_err(|e| Error::Parse(format!("edge: {e}")))?;
            let flag = f[2] == "1";
            if mesh.edges[k].vertices != [a, b] || mesh.boundary_edge[k] != flag {
                return Err(Error::Parse(format!(
                    "edge {k} mismatch between file and connectivity"
                )));
            }
        }
        for v in 0..nv {
            if flags[v] != mesh.boundary_vertex[v] {
                return Err(Error::Parse(format!("vertex {v} boundary flag mismatch")));
            }
        }
        Ok(mesh)
    }
}

/// Build the structured right-triangle mesh with `n_divisions` cells per
/// axis of the bounding square. For the L-shape ([-1,1]^2 minus the closed
/// lower-right quadrant) `n_divisions` must be even so the reentrant corner
/// lands on a vertex.
pub fn build_structured_mesh(domain: DomainSpec, n_divisions: usize) -> Result<TriangleMesh> {
    if n_divisions < 1 {
        return Err(Error::InvalidParameter("n_divisions must be >= 1".into()));
    }
    if domain.kind == DomainKind::LShape && n_divisions % 2 != 0 {
        return Err(Error::InvalidParameter(
            "l_shape requires even n_divisions so the reentrant corner is a vertex".into(),
        ));
    }
    let n = n_divisions;
    let (origin, width) = match domain.kind {
        DomainKind::UnitSquare => ([0.0, 0.0], 1.0),
        DomainKind::LShape => ([-1.0, -1.0], 2.0),
    };
    let cell = width / n as f64;

    let keep_cell = |i: usize, j: usize| match domain.kind {
        DomainKind::UnitSquare => true,
        // drop the lower-right quadrant [0,1] x [-1,0]
        DomainKind::LShape => !(i >= n / 2 && j < n / 2),
    };

    // row-major vertex numbering over the grid points of kept cells
    let mut vertex_id = vec![usize::MAX; (n + 1) * (n + 1)];
    let mut vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let touched = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))]
                .iter()
                .any(|&(ci, cj)| ci < n && cj < n && keep_cell(ci, cj));
            if touched {
                vertex_id[j * (n + 1) + i] = vertices.len();
                vertices.push([origin[0] + cell * i as f64, origin[1] + cell * j as f64]);
            }
        }
    }
    let id = |i: usize, j: usize| vertex_id[j * (n + 1) + i];

    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if !keep_cell(i, j) {
                continue;
            }
            let v00 = id(i, j);
            let v10 = id(i + 1, j);
            let v01 = id(i, j + 1);
            let v11 = id(i + 1, j + 1);
            // diagonal from lower-left to upper-right
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    TriangleMesh::from_cells(
        domain,
        vertices,
        triangles,
        0,
        Some(StructuredInfo { domain: domain.kind, n_eff: n }),
    )
}
