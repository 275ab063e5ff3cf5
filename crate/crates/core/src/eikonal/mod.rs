//! Finite-element Eikonal-diffusion solver for myocardial activation times.
//!
//! The steady problem `c_f sqrt(grad u . S grad u) - div(S grad u) = 1` is
//! reached by implicit pseudo-time marching. In the default mode a stimulus
//! is imposed as a Dirichlet value only once the pseudo-time clock has passed
//! its prescribed time and no earlier front has reached its vertex.

mod operator;
mod solver;

pub use operator::EikonalOperator;
pub use solver::{pseudo_time_step, solve, solve_with_operator, NewtonStats, SolveOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::krylov::{KrylovOptions, LinearSolveError};
use crate::mesh::{CellTensor, FiberField, MeshError, NodalField, SimplicialMesh};

/// Activation times in seconds, one per mesh vertex.
pub type ActivationField = NodalField;

#[derive(Debug, Error)]
pub enum EikonalError {
    #[error("invalid conductivity model: {0}")]
    InvalidModel(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("invalid stimulus: {0}")]
    InvalidStimulus(String),
    #[error("no stimuli given")]
    NoStimuli,
    #[error("no stimulus is active at the first pseudo-step; the initial field lies below every stimulus time")]
    NoActiveStimulus,
    #[error("Newton diverged at pseudo-step {step}: residual grew for {window} consecutive iterations (relative residual {residual:e})")]
    NewtonDiverged {
        step: usize,
        window: usize,
        residual: f64,
    },
    #[error("Newton did not converge at pseudo-step {step} within {iterations} iterations (relative residual {residual:e})")]
    NewtonNotConverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("linear solve failed at pseudo-step {step}: {source}")]
    Linear {
        step: usize,
        #[source]
        source: LinearSolveError,
    },
    #[error("no steady state after {steps} pseudo-steps (last change {change:e} s)")]
    NotSteady { steps: usize, change: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Tissue conductivities and the Eikonal velocity parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConductivityModel {
    /// m^2/s along fibers.
    pub sigma_f: f64,
    /// m^2/s along sheets.
    pub sigma_s: f64,
    /// m^2/s along sheet normals.
    pub sigma_n: f64,
    /// Product of membrane surface-to-volume ratio and membrane capacitance.
    pub chi_m_c_m: f64,
    /// s^(-1/2).
    pub c_f: f64,
}

impl Default for ConductivityModel {
    fn default() -> Self {
        ConductivityModel {
            sigma_f: 1.0e-4,
            sigma_s: 0.44e-4,
            sigma_n: 0.11e-4,
            chi_m_c_m: 1.0,
            c_f: 60.0,
        }
    }
}

impl ConductivityModel {
    pub fn isotropic(sigma: f64, c_f: f64) -> Self {
        ConductivityModel {
            sigma_f: sigma,
            sigma_s: sigma,
            sigma_n: sigma,
            chi_m_c_m: 1.0,
            c_f,
        }
    }

    pub fn validate(&self) -> Result<(), EikonalError> {
        let all = [self.sigma_f, self.sigma_s, self.sigma_n, self.chi_m_c_m, self.c_f];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(EikonalError::InvalidModel("parameters must be finite".into()));
        }
        if !(self.sigma_f >= self.sigma_s && self.sigma_s >= self.sigma_n && self.sigma_n > 0.0) {
            return Err(EikonalError::InvalidModel(format!(
                "need sigma_f >= sigma_s >= sigma_n > 0, got {:e}, {:e}, {:e}",
                self.sigma_f, self.sigma_s, self.sigma_n
            )));
        }
        if self.chi_m_c_m <= 0.0 || self.c_f <= 0.0 {
            return Err(EikonalError::InvalidModel("chi_m_c_m and c_f must be positive".into()));
        }
        Ok(())
    }

    /// Planar front speed `c_f sqrt(sigma)` along fibers, sheets and normals.
    pub fn planar_speeds(&self) -> [f64; 3] {
        let s = |sig: f64| self.c_f * (sig / self.chi_m_c_m).sqrt();
        [s(self.sigma_f), s(self.sigma_s), s(self.sigma_n)]
    }
}

/// Per-cell tensors `(sigma_f f f^T + sigma_s s s^T + sigma_n n n^T) / (chi_m C_m)`.
/// Directions a low-dimensional fiber field leaves zero drop out.
pub fn build_conductivity(
    model: &ConductivityModel,
    fibers: &FiberField,
) -> Result<Vec<CellTensor>, EikonalError> {
    model.validate()?;
    let sig = [model.sigma_f, model.sigma_s, model.sigma_n];
    Ok(fibers
        .triads()
        .iter()
        .map(|triad| {
            let mut t = [[0.0; 3]; 3];
            for (dir, s) in triad.iter().zip(sig) {
                for i in 0..3 {
                    for j in 0..3 {
                        t[i][j] += s * dir[i] * dir[j] / model.chi_m_c_m;
                    }
                }
            }
            t
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StimulusOrigin {
    Pmj,
    Ectopic,
    Lead,
}

impl std::fmt::Display for StimulusOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StimulusOrigin::Pmj => "pmj",
            StimulusOrigin::Ectopic => "ectopic",
            StimulusOrigin::Lead => "lead",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleStimulus {
    pub vertex: usize,
    /// Seconds.
    pub time: f64,
    pub origin: StimulusOrigin,
}

/// Prescribed activation times on mesh vertices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MuscleStimulusSet {
    stimuli: Vec<MuscleStimulus>,
}

impl MuscleStimulusSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, vertex: usize, time: f64, origin: StimulusOrigin) {
        self.stimuli.push(MuscleStimulus {
            vertex,
            time,
            origin,
        });
    }

    /// Stimulus at the vertex nearest to `point`.
    pub fn add_point(
        &mut self,
        mesh: &SimplicialMesh,
        point: &[f64; 3],
        time: f64,
        origin: StimulusOrigin,
    ) -> usize {
        let v = mesh.nearest_vertex(point);
        self.push(v, time, origin);
        v
    }

    /// Stimulates every vertex within `radius` of `center` (at least the
    /// nearest one) at `time`. Returns the number of vertices added.
    pub fn add_sphere(
        &mut self,
        mesh: &SimplicialMesh,
        center: &[f64; 3],
        radius: f64,
        time: f64,
        origin: StimulusOrigin,
    ) -> usize {
        let verts = mesh.vertices_in_ball(center, radius);
        for &v in &verts {
            self.push(v, time, origin);
        }
        verts.len()
    }

    pub fn extend(&mut self, other: &MuscleStimulusSet) {
        self.stimuli.extend_from_slice(&other.stimuli);
    }

    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    pub fn stimuli(&self) -> &[MuscleStimulus] {
        &self.stimuli
    }

    pub fn validate(&self, mesh: &SimplicialMesh) -> Result<(), EikonalError> {
        for s in &self.stimuli {
            if s.vertex >= mesh.num_vertices() {
                return Err(EikonalError::InvalidStimulus(format!(
                    "vertex {} out of range ({} vertices)",
                    s.vertex,
                    mesh.num_vertices()
                )));
            }
            if !s.time.is_finite() {
                return Err(EikonalError::InvalidStimulus(format!(
                    "time {} at vertex {} is not finite",
                    s.time, s.vertex
                )));
            }
        }
        Ok(())
    }

    /// One stimulus per vertex, keeping the earliest time, sorted by vertex.
    pub fn merged(&self) -> Vec<MuscleStimulus> {
        let mut out: Vec<MuscleStimulus> = self.stimuli.clone();
        out.sort_by(|a, b| a.vertex.cmp(&b.vertex).then(a.time.total_cmp(&b.time)));
        out.dedup_by_key(|s| s.vertex);
        out
    }
}

/// Indices of the stimuli that are active for the step ending at `t_next`:
/// those with `u0 < t_next` and `u0 < u_prev` at their vertex.
pub fn active_stimuli(s0: &MuscleStimulusSet, u_prev: &[f64], t_next: f64) -> Vec<usize> {
    s0.stimuli
        .iter()
        .enumerate()
        .filter(|(_, s)| s.time < t_next && s.time < u_prev[s.vertex])
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    /// Stimuli switch on as the pseudo-time clock reaches them, unless an
    /// earlier front got there first.
    Novel,
    /// Every stimulus is a permanent Dirichlet condition.
    Classic,
}

impl std::str::FromStr for SolverMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "novel" => Ok(SolverMode::Novel),
            "classic" => Ok(SolverMode::Classic),
            other => Err(format!("unknown solver mode `{other}` (expected novel or classic)")),
        }
    }
}

/// Starting field of the pseudo-time march.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialField {
    /// Two pseudo-steps above the earliest stimulus time, so the field rises
    /// behind the clock and later stimuli see either an earlier front or a
    /// value above their own time.
    BelowEarliest,
    /// A uniform value in seconds.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Pseudo-time step, seconds.
    pub dt: f64,
    pub bdf_order: u8,
    /// Relative Newton residual tolerance.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Consecutive residual increases that count as divergence.
    pub divergence_window: usize,
    /// Seconds; max-norm change between pseudo-steps that counts as steady.
    pub steady_tol: f64,
    pub max_pseudo_steps: usize,
    /// Added under the square root of the Eikonal term.
    pub grad_regularization: f64,
    pub initial: InitialField,
    pub mode: SolverMode,
    pub krylov: KrylovOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dt: 1e-3,
            bdf_order: 1,
            newton_tol: 1e-9,
            newton_max_iter: 25,
            divergence_window: 5,
            steady_tol: 1e-6,
            max_pseudo_steps: 20_000,
            grad_regularization: 1e-20,
            initial: InitialField::BelowEarliest,
            mode: SolverMode::Novel,
            krylov: KrylovOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), EikonalError> {
        let bad = |m: &str| Err(EikonalError::InvalidOptions(m.to_string()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !matches!(self.bdf_order, 1 | 2) {
            return bad("bdf_order must be 1 or 2");
        }
        if !(self.newton_tol > 0.0 && self.steady_tol > 0.0 && self.grad_regularization > 0.0) {
            return bad("tolerances and regularization must be positive");
        }
        if self.newton_max_iter == 0 || self.max_pseudo_steps == 0 || self.divergence_window == 0 {
            return bad("iteration limits must be positive");
        }
        if let InitialField::Constant(v) = self.initial {
            if !v.is_finite() {
                return bad("initial value must be finite");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_slab;

    #[test]
    fn isotropic_limit_ignores_fibers() {
        let c = 0.6f64.sqrt() / 0.8f64.sqrt();
        let s = (1.0 - c * c).sqrt();
        let triad = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
        let fibers = FiberField::new(3, vec![triad]).unwrap();
        let t = build_conductivity(&ConductivityModel::isotropic(2e-4, 60.0), &fibers).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2e-4 } else { 0.0 };
                assert!((t[0][i][j] - e).abs() < 1e-19);
            }
        }
    }

    #[test]
    fn axis_aligned_defaults_are_diagonal() {
        let mesh = build_structured_slab(3, &[1.0; 3], &[1; 3]).unwrap();
        let t = build_conductivity(&ConductivityModel::default(), &FiberField::axis_aligned(&mesh))
            .unwrap();
        assert_eq!(t[0], [[1.0e-4, 0.0, 0.0], [0.0, 0.44e-4, 0.0], [0.0, 0.0, 0.11e-4]]);
    }

    #[test]
    fn model_validation() {
        let mut m = ConductivityModel::default();
        assert!(m.validate().is_ok());
        m.sigma_n = 0.5e-4;
        assert!(m.validate().is_err());
        let m = ConductivityModel {
            c_f: 0.0,
            ..Default::default()
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn active_set_follows_both_inequalities() {
        let mut s = MuscleStimulusSet::new();
        s.push(0, 5e-3, StimulusOrigin::Ectopic);
        assert!(active_stimuli(&s, &[3e-3], 10e-3).is_empty());
        assert!(active_stimuli(&s, &[100e-3], 4e-3).is_empty());
        assert_eq!(active_stimuli(&s, &[100e-3], 10e-3), vec![0]);
        // Strict: equality in either comparison excludes.
        assert!(active_stimuli(&s, &[5e-3], 10e-3).is_empty());
        assert!(active_stimuli(&s, &[100e-3], 5e-3).is_empty());
    }

    #[test]
    fn merging_keeps_earliest_time_per_vertex() {
        let mut s = MuscleStimulusSet::new();
        s.push(3, 2.0, StimulusOrigin::Lead);
        s.push(1, 1.0, StimulusOrigin::Pmj);
        s.push(3, 0.5, StimulusOrigin::Ectopic);
        let m = s.merged();
        assert_eq!(m.len(), 2);
        assert_eq!((m[1].vertex, m[1].time, m[1].origin), (3, 0.5, StimulusOrigin::Ectopic));
    }

    #[test]
    fn sphere_stimuli_cover_ball_or_nearest_vertex() {
        let mesh = build_structured_slab(2, &[0.004, 0.004], &[4, 4]).unwrap();
        let mut s = MuscleStimulusSet::new();
        assert_eq!(s.add_sphere(&mesh, &[0.002, 0.002, 0.0], 0.0011, 0.0, StimulusOrigin::Ectopic), 5);
        assert_eq!(s.add_sphere(&mesh, &[0.0021, 0.0, 0.0], 1e-5, 0.0, StimulusOrigin::Ectopic), 1);
        assert_eq!(s.stimuli()[5].vertex, 2);
    }
}
