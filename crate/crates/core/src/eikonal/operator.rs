use rayon::prelude::*;

use crate::mesh::{AssemblyWorkspace, CellTensor, MeshError, SimplicialMesh};
use crate::sparse::CsrMatrix;

/// P1 discretization of `c_f sqrt(grad u . S grad u + eps) - div(S grad u) - 1`
/// with lumped mass for the time derivative and the source term.
///
/// The Eikonal term is piecewise constant per cell and is integrated against
/// each basis function exactly, giving `|T| c_f sqrt(g_T + eps) / (dim + 1)`
/// at every cell vertex.
#[derive(Debug, Clone)]
pub struct EikonalOperator<'a> {
    mesh: &'a SimplicialMesh,
    sigma: &'a [CellTensor],
    ws: AssemblyWorkspace,
    stiffness: CsrMatrix,
    c_f: f64,
    eps: f64,
}

struct CellEval {
    residual: [f64; 4],
    jacobian: [f64; 16],
}

impl<'a> EikonalOperator<'a> {
    pub fn new(
        mesh: &'a SimplicialMesh,
        sigma: &'a [CellTensor],
        c_f: f64,
        eps: f64,
    ) -> Result<Self, MeshError> {
        let (stiffness, ws) =
            crate::mesh::assemble_operator(mesh, sigma, &vec![0.0; mesh.num_vertices()])?;
        Ok(EikonalOperator {
            mesh,
            sigma,
            ws,
            stiffness,
            c_f,
            eps,
        })
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        self.mesh
    }

    pub fn lumped_mass(&self) -> &[f64] {
        self.ws.lumped_mass()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    fn eval_cell(&self, c: usize, u: &[f64], jac: bool) -> CellEval {
        let npc = self.ws.nodes_per_cell();
        let g = self.ws.geometry(c);
        let s = &self.sigma[c];
        let cell = self.mesh.cell(c);
        let mut grad = [0.0; 3];
        for (a, &v) in cell.iter().enumerate() {
            for x in 0..3 {
                grad[x] += u[v] * g.grads[a][x];
            }
        }
        let q = crate::mesh::mat_vec(s, &grad);
        let gsq = crate::mesh::dot3(&grad, &q);
        let root = (gsq.max(0.0) + self.eps).sqrt();
        let w = g.measure * self.c_f / npc as f64;
        let mut out = CellEval {
            residual: [0.0; 4],
            jacobian: [0.0; 16],
        };
        for a in 0..npc {
            out.residual[a] = w * root;
        }
        if jac {
            // d/du_b of w sqrt(g + eps) = w (S grad u . grad phi_b) / sqrt(g + eps)
            for b in 0..npc {
                let d = w * crate::mesh::dot3(&q, &g.grads[b]) / root;
                for a in 0..npc {
                    out.jacobian[a * npc + b] = d;
                }
            }
        }
        out
    }

    fn eval_cells(&self, u: &[f64], jac: bool) -> Vec<CellEval> {
        (0..self.mesh.num_cells())
            .into_par_iter()
            .map(|c| self.eval_cell(c, u, jac))
            .collect()
    }

    /// `N(u) + K u - m`, the steady residual.
    pub fn steady_residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.stiffness.mul_vec(u);
        let mass = self.ws.lumped_mass();
        for (ri, m) in r.iter_mut().zip(mass) {
            *ri -= m;
        }
        let evals = self.eval_cells(u, false);
        for (cell, e) in self.mesh.cells().zip(&evals) {
            for (a, &v) in cell.iter().enumerate() {
                r[v] += e.residual[a];
            }
        }
        r
    }

    /// `m (alpha u - u_tilde) / dt + N(u) + K u - m`.
    pub fn residual(&self, u: &[f64], u_tilde: &[f64], alpha: f64, dt: f64) -> Vec<f64> {
        let mut r = self.steady_residual(u);
        for (i, ri) in r.iter_mut().enumerate() {
            *ri += self.ws.lumped_mass()[i] * (alpha * u[i] - u_tilde[i]) / dt;
        }
        r
    }

    /// Jacobian of [`residual`](Self::residual) with respect to `u`.
    pub fn jacobian(&self, u: &[f64], alpha: f64, dt: f64) -> CsrMatrix {
        let mut j = self.stiffness.clone();
        let npc = self.ws.nodes_per_cell();
        let evals = self.eval_cells(u, true);
        let local: Vec<f64> = evals
            .iter()
            .flat_map(|e| e.jacobian[..npc * npc].iter().copied())
            .collect();
        self.ws.scatter(&local, &mut j);
        for (i, m) in self.ws.lumped_mass().iter().enumerate() {
            let k = j.position(i, i).expect("diagonal in pattern");
            j.values_mut()[k] += alpha * m / dt;
        }
        j
    }
}
