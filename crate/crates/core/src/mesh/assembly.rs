use rayon::prelude::*;

use super::{CellGeometry, MeshError, SimplicialMesh};
use crate::sparse::CsrMatrix;

/// Symmetric 3x3 conductivity tensor of one cell, in m^2/s.
pub type CellTensor = [[f64; 3]; 3];

const SYMMETRY_RTOL: f64 = 1e-12;
const PSD_RTOL: f64 = 1e-12;

/// Per-mesh data reused by every assembly: the sparse pattern, cell
/// geometry, the map from local element entries to matrix storage, and the
/// lumped mass.
#[derive(Debug, Clone)]
pub struct AssemblyWorkspace {
    npc: usize,
    pattern: CsrMatrix,
    geometry: Vec<CellGeometry>,
    local_pos: Vec<usize>,
    mass: Vec<f64>,
}

impl AssemblyWorkspace {
    pub fn new(mesh: &SimplicialMesh) -> Self {
        let npc = mesh.dim() + 1;
        let pattern = CsrMatrix::from_symmetric_pattern(mesh.num_vertices(), &mesh.edges());
        let geometry: Vec<CellGeometry> = (0..mesh.num_cells())
            .into_par_iter()
            .map(|c| mesh.cell_geometry(c))
            .collect();
        let mut local_pos = Vec::with_capacity(mesh.num_cells() * npc * npc);
        for cell in mesh.cells() {
            for &a in cell {
                for &b in cell {
                    local_pos.push(pattern.position(a, b).expect("cell pair in pattern"));
                }
            }
        }
        let mass = lumped_mass_from(mesh, &geometry);
        AssemblyWorkspace {
            npc,
            pattern,
            geometry,
            local_pos,
            mass,
        }
    }

    /// Vertices per cell.
    pub fn nodes_per_cell(&self) -> usize {
        self.npc
    }

    pub fn geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    /// Storage positions of the `npc x npc` local entries of `cell`, row-major.
    pub fn local_positions(&self, cell: usize) -> &[usize] {
        let n = self.npc * self.npc;
        &self.local_pos[cell * n..(cell + 1) * n]
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Matrix with the mesh sparsity pattern and all entries zero.
    pub fn zero_matrix(&self) -> CsrMatrix {
        self.pattern.clone()
    }

    /// Adds row-major local matrices (`npc * npc` values per cell) into `m`.
    /// Cells are visited in index order so the sum is reproducible.
    pub fn scatter(&self, local: &[f64], m: &mut CsrMatrix) {
        let values = m.values_mut();
        for (pos, v) in self.local_pos.iter().zip(local) {
            values[*pos] += v;
        }
    }

    /// Stiffness matrix `K_ab = |T| grad(phi_a) . Sigma grad(phi_b)`.
    pub fn stiffness(&self, sigma: &[CellTensor]) -> CsrMatrix {
        let npc = self.npc;
        let local: Vec<f64> = (0..self.geometry.len())
            .into_par_iter()
            .flat_map_iter(|c| {
                let g = &self.geometry[c];
                let s = &sigma[c];
                let mut out = Vec::with_capacity(npc * npc);
                for a in 0..npc {
                    let sa = mat_vec(s, &g.grads[a]);
                    for b in 0..npc {
                        out.push(g.measure * dot3(&sa, &g.grads[b]));
                    }
                }
                out.into_iter()
            })
            .collect();
        let mut k = self.zero_matrix();
        self.scatter(&local, &mut k);
        k
    }
}

/// Lumped (vertex-rule) mass: each vertex receives `|T| / (dim + 1)` from
/// every incident cell.
pub fn lumped_mass(mesh: &SimplicialMesh) -> Vec<f64> {
    let geometry: Vec<CellGeometry> = (0..mesh.num_cells()).map(|c| mesh.cell_geometry(c)).collect();
    lumped_mass_from(mesh, &geometry)
}

fn lumped_mass_from(mesh: &SimplicialMesh, geometry: &[CellGeometry]) -> Vec<f64> {
    let share = 1.0 / (mesh.dim() + 1) as f64;
    let mut mass = vec![0.0; mesh.num_vertices()];
    for (cell, g) in mesh.cells().zip(geometry) {
        for &v in cell {
            mass[v] += g.measure * share;
        }
    }
    mass
}

/// Assembles `diag(m * reaction) + K(sigma)` on the mesh.
///
/// `sigma` holds one symmetric positive semidefinite tensor per cell and
/// `reaction` one coefficient per vertex.
pub fn assemble_operator(
    mesh: &SimplicialMesh,
    sigma: &[CellTensor],
    reaction: &[f64],
) -> Result<(CsrMatrix, AssemblyWorkspace), MeshError> {
    if sigma.len() != mesh.num_cells() {
        return Err(MeshError::InvalidField(format!(
            "{} conductivity tensors for {} cells",
            sigma.len(),
            mesh.num_cells()
        )));
    }
    if reaction.len() != mesh.num_vertices() {
        return Err(MeshError::InvalidField(format!(
            "{} reaction coefficients for {} vertices",
            reaction.len(),
            mesh.num_vertices()
        )));
    }
    if let Some(v) = reaction.iter().position(|r| !r.is_finite()) {
        return Err(MeshError::NonFinite { vertex: v });
    }
    for (c, s) in sigma.iter().enumerate() {
        check_tensor(s).map_err(|reason| MeshError::InvalidTensor { cell: c, reason })?;
    }
    let ws = AssemblyWorkspace::new(mesh);
    let mut a = ws.stiffness(sigma);
    for (i, (m, r)) in ws.mass.iter().zip(reaction).enumerate() {
        let k = a.position(i, i).expect("diagonal in pattern");
        a.values_mut()[k] += m * r;
    }
    Ok((a, ws))
}

/// Checks symmetry and positive semidefiniteness through all principal minors.
pub(crate) fn check_tensor(s: &CellTensor) -> Result<(), String> {
    if s.iter().flatten().any(|x| !x.is_finite()) {
        return Err("not finite".into());
    }
    let scale = s.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(());
    }
    for i in 0..3 {
        for j in i + 1..3 {
            if (s[i][j] - s[j][i]).abs() > SYMMETRY_RTOL * scale {
                return Err(format!("not symmetric (entries {i}{j} and {j}{i})"));
            }
        }
    }
    let tol = PSD_RTOL;
    for i in 0..3 {
        if s[i][i] < -tol * scale {
            return Err("indefinite (negative diagonal)".into());
        }
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let minor = s[i][i] * s[j][j] - s[i][j] * s[j][i];
        if minor < -tol * scale * scale {
            return Err("indefinite (negative 2x2 principal minor)".into());
        }
    }
    let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1])
        - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
        + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
    if det < -tol * scale * scale * scale {
        return Err("indefinite (negative determinant)".into());
    }
    Ok(())
}

pub(crate) fn mat_vec(s: &CellTensor, v: &[f64; 3]) -> [f64; 3] {
    [
        s[0][0] * v[0] + s[0][1] * v[1] + s[0][2] * v[2],
        s[1][0] * v[0] + s[1][1] * v[1] + s[1][2] * v[2],
        s[2][0] * v[0] + s[2][1] * v[1] + s[2][2] * v[2],
    ]
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_slab;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iso(s: f64) -> CellTensor {
        [[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]]
    }

    fn jittered_cube(seed: u64) -> SimplicialMesh {
        let base = build_structured_slab(3, &[1.0, 0.8, 0.6], &[3, 3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let verts: Vec<[f64; 3]> = base
            .vertices()
            .iter()
            .map(|p| {
                let mut q = *p;
                for x in &mut q {
                    *x += rng.random_range(-0.04..0.04);
                }
                q
            })
            .collect();
        let cells: Vec<Vec<usize>> = base.cells().map(|c| c.to_vec()).collect();
        SimplicialMesh::new(3, verts, cells, None).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> CellTensor {
        let mut a = [[0.0; 3]; 3];
        for row in &mut a {
            for x in row.iter_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
        }
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>() * 1e-4;
            }
            s[i][i] += 1e-6;
        }
        s
    }

    #[test]
    fn null_operator() {
        let mesh = build_structured_slab(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let sigma = vec![[[0.0; 3]; 3]; mesh.num_cells()];
        let (a, _) = assemble_operator(&mesh, &sigma, &vec![0.0; 9]).unwrap();
        assert_eq!(a.max_abs(), 0.0);
    }

    #[test]
    fn one_dimensional_stiffness_is_tridiagonal() {
        let sigma = 2e-4;
        let mesh = build_structured_slab(1, &[0.01], &[10]).unwrap();
        let h = 0.001;
        let (a, _) = assemble_operator(&mesh, &vec![iso(sigma); 10], &[0.0; 11]).unwrap();
        for i in 0..11 {
            let interior = i > 0 && i < 10;
            let diag = if interior { 2.0 } else { 1.0 } * sigma / h;
            assert!((a.get(i, i) - diag).abs() < 1e-12 * diag);
            if i < 10 {
                assert!((a.get(i, i + 1) + sigma / h).abs() < 1e-12 * sigma / h);
            }
        }
    }

    #[test]
    fn constants_only_see_reaction_mass() {
        let mesh = jittered_cube(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sigma: Vec<CellTensor> = (0..mesh.num_cells()).map(|_| random_spd(&mut rng)).collect();
        let reaction: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.random_range(0.0..3.0)).collect();
        let (a, _) = assemble_operator(&mesh, &sigma, &reaction).unwrap();
        // Oracle: vertex-rule quadrature of the reaction term, cell by cell.
        let mut expected = vec![0.0; mesh.num_vertices()];
        for c in 0..mesh.num_cells() {
            let vol = mesh.cell_measure(c);
            for &v in mesh.cell(c) {
                expected[v] += reaction[v] * vol / 4.0;
            }
        }
        let got = a.mul_vec(&vec![1.0; mesh.num_vertices()]);
        let scale = a.max_abs();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() <= 1e-12 * scale.max(e.abs()));
        }
        assert!(a.max_asymmetry() <= 1e-14 * scale);
    }

    #[test]
    fn isotropic_stiffness_matches_scalar_laplacian() {
        let mesh = jittered_cube(5);
        let sigma = 1.3e-4;
        let ws = AssemblyWorkspace::new(&mesh);
        let k = ws.stiffness(&vec![iso(sigma); mesh.num_cells()]);
        // Independent assembly: cotangent-free formula through the inverse of
        // the 4x4 barycentric coordinate matrix.
        let n = mesh.num_vertices();
        let mut dense = vec![vec![0.0; n]; n];
        for c in 0..mesh.num_cells() {
            let cell = mesh.cell(c);
            let mut m = nalgebra::Matrix4::<f64>::zeros();
            for (a, &v) in cell.iter().enumerate() {
                let p = mesh.vertex(v);
                m[(a, 0)] = 1.0;
                m[(a, 1)] = p[0];
                m[(a, 2)] = p[1];
                m[(a, 3)] = p[2];
            }
            let vol = m.determinant().abs() / 6.0;
            let inv = m.try_inverse().unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    let g: f64 = (1..4).map(|x| inv[(x, a)] * inv[(x, b)]).sum();
                    dense[cell[a]][cell[b]] += sigma * vol * g;
                }
            }
        }
        let scale = k.max_abs();
        for i in 0..n {
            for j in 0..n {
                assert!((k.get(i, j) - dense[i][j]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn rejects_bad_tensors() {
        let mesh = build_structured_slab(1, &[1.0], &[1]).unwrap();
        let mut asym = iso(1.0);
        asym[0][1] = 0.5;
        assert!(matches!(
            assemble_operator(&mesh, &[asym], &[0.0; 2]),
            Err(MeshError::InvalidTensor { .. })
        ));
        let indefinite = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(assemble_operator(&mesh, &[indefinite], &[0.0; 2]).is_err());
        assert!(assemble_operator(&mesh, &[iso(-1.0)], &[0.0; 2]).is_err());
    }

    #[test]
    fn lumped_mass_sums_to_measure() {
        let mesh = jittered_cube(9);
        let total: f64 = lumped_mass(&mesh).iter().sum();
        assert!((total - mesh.total_measure()).abs() < 1e-13);
    }
}
