//! Simplicial meshes of the muscle domain and the finite-element primitives
//! built on top of them.
//!
//! Meshes of topological dimension 1, 2 and 3 share one code path: vertices
//! always carry three coordinates (unused ones are zero) and every cell is a
//! simplex with `dim + 1` vertices. Element geometry is computed from the
//! Gram matrix of the edge vectors, so lines and triangles embedded in 3D
//! work the same way as volume tetrahedra.

mod assembly;
mod fields;
pub mod io;

pub use assembly::{assemble_operator, lumped_mass, AssemblyWorkspace, CellTensor};
pub(crate) use assembly::{dot3, mat_vec};
pub use fields::{FiberField, NodalField};

use std::path::PathBuf;

use thiserror::Error;

/// Tolerance used to reject degenerate simplices, relative to `edge^dim`.
const DEGENERACY_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("unsupported topological dimension {0} (expected 1, 2 or 3)")]
    InvalidDimension(usize),
    #[error("cell {cell} references vertex {vertex}, but the mesh has {count} vertices")]
    InvalidIndex {
        cell: usize,
        vertex: usize,
        count: usize,
    },
    #[error("cell {cell} has {found} vertices, expected {expected}")]
    WrongArity {
        cell: usize,
        found: usize,
        expected: usize,
    },
    #[error("cell {cell} is degenerate (measure {measure:e})")]
    DegenerateCell { cell: usize, measure: f64 },
    #[error("vertex {vertex} has non-finite coordinates")]
    NonFinite { vertex: usize },
    #[error("mesh is not connected ({components} components)")]
    Disconnected { components: usize },
    #[error("mesh has no cells")]
    Empty,
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("conductivity tensor of cell {cell} is {reason}")]
    InvalidTensor { cell: usize, reason: String },
    #[error("invalid slab specification: {0}")]
    InvalidSlab(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}{}: {source}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid {
        path: PathBuf,
        line: Option<usize>,
        #[source]
        source: Box<MeshError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Geometry of one affine simplex: its measure and the (constant) gradients
/// of the barycentric basis functions. Unused gradient slots are zero.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub measure: f64,
    pub grads: [[f64; 3]; 4],
}

/// Conforming simplicial mesh of dimension 1, 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    dim: usize,
    vertices: Vec<[f64; 3]>,
    cells: Vec<usize>,
    boundary_tags: Option<Vec<i32>>,
}

impl SimplicialMesh {
    /// Builds and validates a mesh. Cells of 3D meshes, and of 2D meshes lying
    /// in a `z = const` plane, are reoriented to positive signed measure.
    pub fn new(
        dim: usize,
        vertices: Vec<[f64; 3]>,
        cells: Vec<Vec<usize>>,
        boundary_tags: Option<Vec<i32>>,
    ) -> Result<Self, MeshError> {
        if !(1..=3).contains(&dim) {
            return Err(MeshError::InvalidDimension(dim));
        }
        let npc = dim + 1;
        let mut flat = Vec::with_capacity(cells.len() * npc);
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() != npc {
                return Err(MeshError::WrongArity {
                    cell: c,
                    found: cell.len(),
                    expected: npc,
                });
            }
            flat.extend_from_slice(cell);
        }
        Self::from_flat(dim, vertices, flat, boundary_tags)
    }

    pub(crate) fn from_flat(
        dim: usize,
        vertices: Vec<[f64; 3]>,
        cells: Vec<usize>,
        boundary_tags: Option<Vec<i32>>,
    ) -> Result<Self, MeshError> {
        if !(1..=3).contains(&dim) {
            return Err(MeshError::InvalidDimension(dim));
        }
        let mut mesh = SimplicialMesh {
            dim,
            vertices,
            cells,
            boundary_tags,
        };
        mesh.validate()?;
        mesh.orient();
        Ok(mesh)
    }

    fn validate(&self) -> Result<(), MeshError> {
        if self.cells.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(v) = self
            .vertices
            .iter()
            .position(|p| p.iter().any(|x| !x.is_finite()))
        {
            return Err(MeshError::NonFinite { vertex: v });
        }
        let nv = self.vertices.len();
        for c in 0..self.num_cells() {
            if let Some(&v) = self.cell(c).iter().find(|&&v| v >= nv) {
                return Err(MeshError::InvalidIndex {
                    cell: c,
                    vertex: v,
                    count: nv,
                });
            }
        }
        for c in 0..self.num_cells() {
            let cell = self.cell(c);
            let mut longest: f64 = 0.0;
            for a in 0..cell.len() {
                for b in a + 1..cell.len() {
                    longest = longest.max(dist(&self.vertices[cell[a]], &self.vertices[cell[b]]));
                }
            }
            let measure = self.cell_measure(c);
            if !(measure > DEGENERACY_RTOL * longest.powi(self.dim as i32)) {
                return Err(MeshError::DegenerateCell { cell: c, measure });
            }
        }
        let components = self.count_components();
        if components != 1 {
            return Err(MeshError::Disconnected { components });
        }
        if let Some(tags) = &self.boundary_tags {
            if tags.len() != nv {
                return Err(MeshError::InvalidField(format!(
                    "{} boundary tags for {} vertices",
                    tags.len(),
                    nv
                )));
            }
        }
        Ok(())
    }

    fn count_components(&self) -> usize {
        let nv = self.vertices.len();
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for c in 0..self.num_cells() {
            let cell = self.cell(c);
            let r0 = find(&mut parent, cell[0]);
            for &v in &cell[1..] {
                let r = find(&mut parent, v);
                if r != r0 {
                    parent[r] = r0;
                }
            }
        }
        (0..nv).filter(|&v| find(&mut parent, v) == v).count()
    }

    fn orient(&mut self) {
        let planar = self.dim == 2 && {
            let z0 = self.vertices[0][2];
            self.vertices.iter().all(|p| p[2] == z0)
        };
        if self.dim != 3 && !planar {
            return;
        }
        let npc = self.dim + 1;
        for c in 0..self.num_cells() {
            if self.signed_measure(c) < 0.0 {
                self.cells.swap(c * npc + npc - 2, c * npc + npc - 1);
            }
        }
    }

    fn signed_measure(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let p = |i: usize| self.vertices[cell[i]];
        let e = |i: usize| sub(&p(i), &p(0));
        match self.dim {
            2 => {
                let (a, b) = (e(1), e(2));
                0.5 * (a[0] * b[1] - a[1] * b[0])
            }
            3 => dot(&e(1), &cross(&e(2), &e(3))) / 6.0,
            _ => self.cell_measure(c),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 3] {
        self.vertices[v]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let npc = self.dim + 1;
        &self.cells[c * npc..(c + 1) * npc]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks_exact(self.dim + 1)
    }

    pub fn boundary_tags(&self) -> Option<&[i32]> {
        self.boundary_tags.as_deref()
    }

    /// Unsigned measure (length, area or volume) of cell `c`.
    pub fn cell_measure(&self, c: usize) -> f64 {
        self.cell_geometry(c).measure
    }

    /// Measure and barycentric gradients of cell `c`.
    pub fn cell_geometry(&self, c: usize) -> CellGeometry {
        let cell = self.cell(c);
        let d = self.dim;
        let p0 = self.vertices[cell[0]];
        let mut edges = [[0.0; 3]; 3];
        for k in 0..d {
            edges[k] = sub(&self.vertices[cell[k + 1]], &p0);
        }
        let mut gram = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                gram[i][j] = dot(&edges[i], &edges[j]);
            }
        }
        let (det, inv) = small_inverse(d, &gram);
        let factorial = [1.0, 1.0, 2.0, 6.0][d];
        let measure = det.max(0.0).sqrt() / factorial;
        let mut grads = [[0.0; 3]; 4];
        if det > 0.0 {
            for k in 0..d {
                let mut g = [0.0; 3];
                for j in 0..d {
                    for x in 0..3 {
                        g[x] += inv[k][j] * edges[j][x];
                    }
                }
                grads[k + 1] = g;
                for x in 0..3 {
                    grads[0][x] -= g[x];
                }
            }
        }
        CellGeometry { measure, grads }
    }

    /// Total measure of the domain.
    pub fn total_measure(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_measure(c)).sum()
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(&lo, &hi)
    }

    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.vertices {
            for x in 0..3 {
                lo[x] = lo[x].min(p[x]);
                hi[x] = hi[x].max(p[x]);
            }
        }
        (lo, hi)
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for cell in self.cells() {
            for a in 0..cell.len() {
                for b in a + 1..cell.len() {
                    let (i, j) = (cell[a].min(cell[b]), cell[a].max(cell[b]));
                    edges.push((i, j));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn average_edge_length(&self) -> f64 {
        let edges = self.edges();
        let total: f64 = edges
            .iter()
            .map(|&(a, b)| dist(&self.vertices[a], &self.vertices[b]))
            .sum();
        total / edges.len() as f64
    }

    /// Index of the vertex closest to `p` (lowest index on ties).
    pub fn nearest_vertex(&self, p: &[f64; 3]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (v, q) in self.vertices.iter().enumerate() {
            let d = dist2(p, q);
            if d < best.0 {
                best = (d, v);
            }
        }
        best.1
    }

    /// Vertices within `radius` of `center`. Falls back to the nearest vertex
    /// when the ball contains none, so a stimulus is never silently dropped.
    pub fn vertices_in_ball(&self, center: &[f64; 3], radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let inside: Vec<usize> = (0..self.num_vertices())
            .filter(|&v| dist2(center, &self.vertices[v]) <= r2)
            .collect();
        if inside.is_empty() {
            vec![self.nearest_vertex(center)]
        } else {
            inside
        }
    }
}

/// Face flags written into `boundary_tags` by [`build_structured_slab`].
pub mod faces {
    pub const X_MIN: i32 = 1;
    pub const X_MAX: i32 = 2;
    pub const Y_MIN: i32 = 4;
    pub const Y_MAX: i32 = 8;
    pub const Z_MIN: i32 = 16;
    pub const Z_MAX: i32 = 32;
}

/// Structured simplicial subdivision of the box `[0, L_0] x ... x [0, L_{dim-1}]`.
///
/// Vertices are numbered with the x index running fastest. Squares are split
/// into two triangles along a common diagonal; cubes into the six Kuhn
/// tetrahedra sharing the main diagonal, which keeps the mesh conforming.
/// Boundary tags carry the bitwise OR of the [`faces`] flags of each vertex.
pub fn build_structured_slab(
    dim: usize,
    lengths: &[f64],
    divisions: &[usize],
) -> Result<SimplicialMesh, MeshError> {
    if !(1..=3).contains(&dim) {
        return Err(MeshError::InvalidDimension(dim));
    }
    if lengths.len() != dim || divisions.len() != dim {
        return Err(MeshError::InvalidSlab(format!(
            "expected {dim} lengths and divisions, got {} and {}",
            lengths.len(),
            divisions.len()
        )));
    }
    if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(MeshError::InvalidSlab(format!("length {l} must be positive")));
    }
    if divisions.contains(&0) {
        return Err(MeshError::InvalidSlab("divisions must be at least 1".into()));
    }

    let mut n = [1usize; 3];
    let mut len = [0.0; 3];
    n[..dim].copy_from_slice(divisions);
    len[..dim].copy_from_slice(lengths);
    let np = [n[0] + 1, if dim > 1 { n[1] + 1 } else { 1 }, if dim > 2 { n[2] + 1 } else { 1 }];
    let index = |i: usize, j: usize, k: usize| i + np[0] * (j + np[1] * k);

    let mut vertices = Vec::with_capacity(np[0] * np[1] * np[2]);
    let mut tags = Vec::with_capacity(vertices.capacity());
    for k in 0..np[2] {
        for j in 0..np[1] {
            for i in 0..np[0] {
                let ijk = [i, j, k];
                let mut p = [0.0; 3];
                let mut tag = 0;
                for a in 0..dim {
                    p[a] = len[a] * ijk[a] as f64 / n[a] as f64;
                    if ijk[a] == 0 {
                        tag |= 1 << (2 * a);
                    }
                    if ijk[a] == n[a] {
                        tag |= 1 << (2 * a + 1);
                    }
                }
                // Pin the far faces to the exact length.
                for a in 0..dim {
                    if ijk[a] == n[a] {
                        p[a] = len[a];
                    }
                }
                vertices.push(p);
                tags.push(tag);
            }
        }
    }

    let mut cells = Vec::new();
    match dim {
        1 => {
            for i in 0..n[0] {
                cells.extend_from_slice(&[i, i + 1]);
            }
        }
        2 => {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let v00 = index(i, j, 0);
                    let v10 = index(i + 1, j, 0);
                    let v01 = index(i, j + 1, 0);
                    let v11 = index(i + 1, j + 1, 0);
                    cells.extend_from_slice(&[v00, v10, v11]);
                    cells.extend_from_slice(&[v00, v11, v01]);
                }
            }
        }
        _ => {
            const PERMS: [[usize; 3]; 6] = [
                [0, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ];
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        for perm in PERMS {
                            let mut ijk = [i, j, k];
                            cells.push(index(ijk[0], ijk[1], ijk[2]));
                            for axis in perm {
                                ijk[axis] += 1;
                                cells.push(index(ijk[0], ijk[1], ijk[2]));
                            }
                        }
                    }
                }
            }
        }
    }
    SimplicialMesh::from_flat(dim, vertices, cells, Some(tags))
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = sub(a, b);
    dot(&d, &d)
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    dist2(a, b).sqrt()
}

/// Determinant and inverse of the leading `d x d` block of `m` (d <= 3).
fn small_inverse(d: usize, m: &[[f64; 3]; 3]) -> (f64, [[f64; 3]; 3]) {
    let mut inv = [[0.0; 3]; 3];
    match d {
        1 => {
            let det = m[0][0];
            if det != 0.0 {
                inv[0][0] = 1.0 / det;
            }
            (det, inv)
        }
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det != 0.0 {
                inv[0][0] = m[1][1] / det;
                inv[0][1] = -m[0][1] / det;
                inv[1][0] = -m[1][0] / det;
                inv[1][1] = m[0][0] / det;
            }
            (det, inv)
        }
        _ => {
            let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
                m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
            };
            let c00 = cof(1, 2, 1, 2);
            let c01 = -cof(1, 2, 0, 2);
            let c02 = cof(1, 2, 0, 1);
            let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
            if det != 0.0 {
                inv[0][0] = c00 / det;
                inv[1][0] = c01 / det;
                inv[2][0] = c02 / det;
                inv[0][1] = -cof(0, 2, 1, 2) / det;
                inv[1][1] = cof(0, 2, 0, 2) / det;
                inv[2][1] = -cof(0, 2, 0, 1) / det;
                inv[0][2] = cof(0, 1, 1, 2) / det;
                inv[1][2] = -cof(0, 1, 0, 2) / det;
                inv[2][2] = cof(0, 1, 0, 1) / det;
            }
            (det, inv)
        }
    }
}
