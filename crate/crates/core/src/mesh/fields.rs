use std::ops::{Deref, Index};

use super::{dot, MeshError, SimplicialMesh};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Per-cell orthonormal (fiber, sheet, normal) triads.
///
/// For meshes of dimension below three only the first `dim` directions are
/// used; the remaining ones are stored as zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberField {
    dim: usize,
    triads: Vec<[[f64; 3]; 3]>,
}

impl FiberField {
    pub fn new(dim: usize, triads: Vec<[[f64; 3]; 3]>) -> Result<Self, MeshError> {
        for (c, t) in triads.iter().enumerate() {
            check_triad(dim, t).map_err(|msg| {
                MeshError::InvalidField(format!("fiber triad of cell {c}: {msg}"))
            })?;
        }
        let mut triads = triads;
        for t in &mut triads {
            for unused in t.iter_mut().skip(dim) {
                *unused = [0.0; 3];
            }
        }
        Ok(FiberField { dim, triads })
    }

    /// Fibers along x, sheets along y, normals along z in every cell.
    pub fn axis_aligned(mesh: &SimplicialMesh) -> Self {
        let mut triad = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for unused in triad.iter_mut().skip(mesh.dim()) {
            *unused = [0.0; 3];
        }
        FiberField {
            dim: mesh.dim(),
            triads: vec![triad; mesh.num_cells()],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.triads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triads.is_empty()
    }

    pub fn triad(&self, cell: usize) -> &[[f64; 3]; 3] {
        &self.triads[cell]
    }

    pub fn triads(&self) -> &[[[f64; 3]; 3]] {
        &self.triads
    }
}

fn check_triad(dim: usize, t: &[[f64; 3]; 3]) -> Result<(), String> {
    for (i, v) in t.iter().enumerate() {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("direction {i} is not finite"));
        }
        let n = dot(v, v);
        let unused_zero = i >= dim && n == 0.0;
        if !unused_zero && (n.sqrt() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(format!("direction {i} has norm {}", n.sqrt()));
        }
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let d = dot(&t[i], &t[j]);
            if d.abs() > ORTHONORMAL_TOL {
                return Err(format!("directions {i} and {j} have dot product {d:e}"));
            }
        }
    }
    Ok(())
}

/// One finite scalar per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(values: Vec<f64>, mesh: &SimplicialMesh) -> Result<Self, MeshError> {
        if values.len() != mesh.num_vertices() {
            return Err(MeshError::InvalidField(format!(
                "nodal field has {} values for {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        if let Some(v) = values.iter().position(|x| !x.is_finite()) {
            return Err(MeshError::NonFinite { vertex: v });
        }
        Ok(NodalField(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        NodalField(values)
    }

    pub fn constant(mesh: &SimplicialMesh, value: f64) -> Self {
        NodalField(vec![value; mesh.num_vertices()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs_diff(&self, other: &NodalField) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for NodalField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for NodalField {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_slab;

    #[test]
    fn rejects_non_orthonormal_triads() {
        let bad = [[1.0, 0.0, 0.0], [0.1, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(FiberField::new(3, vec![bad]).is_err());
        let short = [[0.5, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(FiberField::new(3, vec![short]).is_err());
    }

    #[test]
    fn low_dimension_zero_fills_unused_directions() {
        let t = [[0.0, 1.0, 0.0], [0.0; 3], [0.0; 3]];
        let f = FiberField::new(1, vec![t]).unwrap();
        assert_eq!(f.triad(0)[1], [0.0; 3]);
        let mesh = build_structured_slab(2, &[1.0, 1.0], &[1, 1]).unwrap();
        let f = FiberField::axis_aligned(&mesh);
        assert_eq!(f.triad(0)[2], [0.0; 3]);
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn nodal_field_checks_length_and_finiteness() {
        let mesh = build_structured_slab(1, &[1.0], &[2]).unwrap();
        assert!(NodalField::new(vec![0.0; 2], &mesh).is_err());
        assert!(NodalField::new(vec![0.0, f64::NAN, 1.0], &mesh).is_err());
        assert!(NodalField::new(vec![0.0, 0.5, 1.0], &mesh).is_ok());
    }
}
