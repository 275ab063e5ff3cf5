//! Bidirectional network-muscle coupling through Purkinje-muscle junctions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eikonal::{
    solve_with_operator, ActivationField, EikonalError, EikonalOperator, MuscleStimulusSet,
    SolverOptions, StimulusOrigin,
};
use crate::mesh::{dist, CellTensor, MeshError, NodalField, SimplicialMesh};
use crate::network::{solve_network, ConductionNetwork, NetworkError, NetworkSource, NodeActivation};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("junction delays must satisfy d_o > d_a > 0, got d_o = {d_o}, d_a = {d_a}")]
    InvalidDelays { d_o: f64, d_a: f64 },
    #[error("terminal {terminal} is {distance:e} m from its vertex, beyond the snap radius {radius:e} m")]
    TerminalTooFar {
        terminal: usize,
        distance: f64,
        radius: f64,
    },
    #[error("no free mesh vertex left for terminal {0}")]
    NoFreeVertex(usize),
    #[error("n_max must be at least 1")]
    ZeroIterations,
    #[error("iteration {iteration}: the muscle has no stimulus (no orthodromic junction and no muscular source)")]
    NoMuscleStimulus { iteration: usize },
    #[error("iteration {iteration}: network solve failed: {source}")]
    Network {
        iteration: usize,
        #[source]
        source: NetworkError,
    },
    #[error("iteration {iteration}: muscle solve failed: {source}")]
    Muscle {
        iteration: usize,
        #[source]
        source: EikonalError,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PmjType {
    /// Orthodromic, reached by the front coming from the AV node.
    OrthodromicFromAvn,
    /// Orthodromic, reached by a front that entered the network at an
    /// antidromic junction.
    OrthodromicFromAntidromic,
    Antidromic,
    /// Fronts meet within the delay window; nothing is transmitted.
    Collision,
}

impl PmjType {
    pub fn label(self) -> &'static str {
        match self {
            PmjType::OrthodromicFromAvn => "OO",
            PmjType::OrthodromicFromAntidromic => "OA",
            PmjType::Antidromic => "A",
            PmjType::Collision => "C",
        }
    }

    pub fn is_orthodromic(self) -> bool {
        matches!(self, PmjType::OrthodromicFromAvn | PmjType::OrthodromicFromAntidromic)
    }
}

impl std::fmt::Display for PmjType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Direction decided by comparing network and muscle times at a junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmission {
    Antidromic,
    Orthodromic,
    Collision,
}

/// Picoseconds per second. Junction times are compared and transmitted on
/// this integer grid so ties are exact.
pub const TICKS_PER_SECOND: f64 = 1e12;

/// `None` stands for an unreached (`+inf`) time.
pub fn to_ticks(t: f64) -> Option<i64> {
    t.is_finite().then(|| (t * TICKS_PER_SECOND).round() as i64)
}

pub fn from_ticks(t: i64) -> f64 {
    t as f64 / TICKS_PER_SECOND
}

/// Junction rule: antidromic when `u_p >= u_m + d_a`, orthodromic when
/// `u_p <= u_m - d_o`, collision otherwise. An unreached side is infinitely
/// late; two unreached sides give a collision.
pub fn classify_times(u_p: f64, u_m: f64, d_o: f64, d_a: f64) -> Transmission {
    let (d_o, d_a) = (to_ticks(d_o).unwrap_or(i64::MAX), to_ticks(d_a).unwrap_or(i64::MAX));
    match (to_ticks(u_p), to_ticks(u_m)) {
        (None, None) => Transmission::Collision,
        (None, Some(_)) => Transmission::Antidromic,
        (Some(_), None) => Transmission::Orthodromic,
        (Some(p), Some(m)) => {
            if p >= m.saturating_add(d_a) {
                Transmission::Antidromic
            } else if p <= m.saturating_sub(d_o) {
                Transmission::Orthodromic
            } else {
                Transmission::Collision
            }
        }
    }
}

/// Where the front reaching a network node entered the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkOrigin {
    Avn,
    /// Registry index of an antidromic junction.
    Pmj(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmjEntry {
    pub terminal: usize,
    pub vertex: usize,
    /// Meters between the terminal and its vertex.
    pub distance: f64,
    /// Orthodromic delay, seconds.
    pub d_o: f64,
    /// Antidromic delay, seconds.
    pub d_a: f64,
    pub pmj_type: PmjType,
    /// Network time at the terminal used for the last classification.
    pub u_p: f64,
    /// Muscle time at the vertex used for the last classification.
    pub u_m: f64,
    /// Entry point of the front that set `u_p`.
    pub source: Option<NetworkOrigin>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmjCounts {
    pub oo: usize,
    pub oa: usize,
    pub antidromic: usize,
    pub collision: usize,
}

impl PmjCounts {
    pub fn total(&self) -> usize {
        self.oo + self.oa + self.antidromic + self.collision
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PmjRegistry {
    entries: Vec<PmjEntry>,
}

impl PmjRegistry {
    pub fn entries(&self) -> &[PmjEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn types(&self) -> Vec<PmjType> {
        self.entries.iter().map(|e| e.pmj_type).collect()
    }

    pub fn counts(&self) -> PmjCounts {
        let mut c = PmjCounts::default();
        for e in &self.entries {
            match e.pmj_type {
                PmjType::OrthodromicFromAvn => c.oo += 1,
                PmjType::OrthodromicFromAntidromic => c.oa += 1,
                PmjType::Antidromic => c.antidromic += 1,
                PmjType::Collision => c.collision += 1,
            }
        }
        c
    }

    /// Overrides the delays of one junction.
    pub fn set_delays(&mut self, index: usize, d_o: f64, d_a: f64) -> Result<(), CouplingError> {
        check_delays(d_o, d_a)?;
        let e = &mut self.entries[index];
        e.d_o = d_o;
        e.d_a = d_a;
        Ok(())
    }
}

fn check_delays(d_o: f64, d_a: f64) -> Result<(), CouplingError> {
    if d_o.is_finite() && d_a.is_finite() && d_o > d_a && d_a > 0.0 {
        Ok(())
    } else {
        Err(CouplingError::InvalidDelays { d_o, d_a })
    }
}

/// Pairs every network terminal with the nearest mesh vertex not already
/// taken by an earlier terminal (lowest vertex index on ties).
///
/// `snap_radius` defaults to twice the average mesh edge length; a pairing
/// farther than that is an error.
pub fn match_pmjs(
    network: &ConductionNetwork,
    mesh: &SimplicialMesh,
    d_o: f64,
    d_a: f64,
    snap_radius: Option<f64>,
) -> Result<PmjRegistry, CouplingError> {
    check_delays(d_o, d_a)?;
    let radius = snap_radius.unwrap_or_else(|| 2.0 * mesh.average_edge_length());
    let mut taken = vec![false; mesh.num_vertices()];
    let mut entries = Vec::with_capacity(network.terminals().len());
    for &t in network.terminals() {
        let p = network.node(t);
        let mut best: Option<(f64, usize)> = None;
        for (v, q) in mesh.vertices().iter().enumerate() {
            if taken[v] {
                continue;
            }
            let d = dist(&p, q);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, v));
            }
        }
        let (distance, vertex) = best.ok_or(CouplingError::NoFreeVertex(t))?;
        if distance > radius {
            return Err(CouplingError::TerminalTooFar {
                terminal: t,
                distance,
                radius,
            });
        }
        taken[vertex] = true;
        entries.push(PmjEntry {
            terminal: t,
            vertex,
            distance,
            d_o,
            d_a,
            pmj_type: PmjType::Collision,
            u_p: f64::INFINITY,
            u_m: f64::INFINITY,
            source: None,
        });
    }
    Ok(PmjRegistry { entries })
}

/// Classifies every junction from the network times `u_p` (with `origins`
/// describing the sources of the solve that produced them) and the muscle
/// times `u_m`. Orthodromic junctions are labelled OA when the front that
/// reached them entered the network at an antidromic junction.
pub fn classify_pmjs(
    registry: &PmjRegistry,
    u_p: &NodeActivation,
    origins: &[NetworkOrigin],
    u_m: &[f64],
) -> PmjRegistry {
    let entries = registry
        .entries
        .iter()
        .map(|e| {
            let p = u_p.times[e.terminal];
            let m = u_m[e.vertex];
            let source = u_p.origin[e.terminal].map(|k| origins[k]);
            let pmj_type = match classify_times(p, m, e.d_o, e.d_a) {
                Transmission::Antidromic => PmjType::Antidromic,
                Transmission::Collision => PmjType::Collision,
                Transmission::Orthodromic => match source {
                    Some(NetworkOrigin::Pmj(_)) => PmjType::OrthodromicFromAntidromic,
                    _ => PmjType::OrthodromicFromAvn,
                },
            };
            PmjEntry {
                pmj_type,
                u_p: p,
                u_m: m,
                source,
                ..*e
            }
        })
        .collect();
    PmjRegistry { entries }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    pub c_f: f64,
    /// Seconds.
    pub avn_time: f64,
    pub n_max: usize,
    /// Stop once an iteration reproduces the previous classification and
    /// network times.
    pub early_stop: bool,
    pub solver: SolverOptions,
}

impl Default for CouplingParams {
    fn default() -> Self {
        CouplingParams {
            c_f: 60.0,
            avn_time: 0.0,
            n_max: 3,
            early_stop: true,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CouplingState {
    pub u_p: NodeActivation,
    /// Sources of the last network solve, indexed like `u_p.origin`.
    pub network_origins: Vec<NetworkOrigin>,
    pub u_m: ActivationField,
    pub registry: PmjRegistry,
    pub iterations: usize,
    /// Classification at the end of each iteration.
    pub history: Vec<PmjRegistry>,
    /// Whether the last iteration reproduced the one before it.
    pub fixed_point: bool,
}

fn transmitted(t: f64, delay: f64) -> f64 {
    match (to_ticks(t), to_ticks(delay)) {
        (Some(t), Some(d)) => from_ticks(t + d),
        _ => f64::INFINITY,
    }
}

/// Partitioned network-muscle iteration.
///
/// Starts from the network front of the AV node alone. Each iteration solves
/// the muscle from the muscular sources plus every orthodromic junction at
/// `u_p + d_o`, classifies, solves the network from the AV node plus every
/// antidromic junction at `u_m + d_a`, and classifies again. The muscle is
/// re-solved from scratch every time; collision junctions transmit nothing.
pub fn couple(
    network: &ConductionNetwork,
    mesh: &SimplicialMesh,
    sigma: &[CellTensor],
    params: &CouplingParams,
    registry: &PmjRegistry,
    muscular: &MuscleStimulusSet,
) -> Result<CouplingState, CouplingError> {
    if params.n_max == 0 {
        return Err(CouplingError::ZeroIterations);
    }
    let op = EikonalOperator::new(mesh, sigma, params.c_f, params.solver.grad_regularization)?;
    let avn = [NetworkSource {
        node: network.avn(),
        time: params.avn_time,
    }];
    let mut origins = vec![NetworkOrigin::Avn];
    let mut u_p = solve_network(network, &avn)
        .map_err(|source| CouplingError::Network { iteration: 0, source })?;
    let mut u_m = vec![f64::INFINITY; mesh.num_vertices()];
    let mut reg = classify_pmjs(registry, &u_p, &origins, &u_m);
    let mut history: Vec<PmjRegistry> = Vec::new();
    let mut fixed_point = false;
    let mut iterations = 0;
    for it in 1..=params.n_max {
        iterations = it;
        let mut stim = muscular.clone();
        for e in reg.entries.iter().filter(|e| e.pmj_type.is_orthodromic()) {
            stim.push(e.vertex, transmitted(u_p.times[e.terminal], e.d_o), StimulusOrigin::Pmj);
        }
        if stim.is_empty() {
            return Err(CouplingError::NoMuscleStimulus { iteration: it });
        }
        let muscle = solve_with_operator(&op, &stim, &params.solver)
            .map_err(|source| CouplingError::Muscle { iteration: it, source })?;
        u_m = muscle.field.into_vec();
        reg = classify_pmjs(&reg, &u_p, &origins, &u_m);

        let mut sources = avn.to_vec();
        origins = vec![NetworkOrigin::Avn];
        for (k, e) in reg.entries.iter().enumerate() {
            if e.pmj_type == PmjType::Antidromic {
                let t = transmitted(u_m[e.vertex], e.d_a);
                if t.is_finite() {
                    sources.push(NetworkSource {
                        node: e.terminal,
                        time: t,
                    });
                    origins.push(NetworkOrigin::Pmj(k));
                }
            }
        }
        let prev_times = std::mem::take(&mut u_p.times);
        u_p = solve_network(network, &sources)
            .map_err(|source| CouplingError::Network { iteration: it, source })?;
        reg = classify_pmjs(&reg, &u_p, &origins, &u_m);
        let counts = reg.counts();
        log::info!(
            "coupling iteration {it}: OO {} OA {} A {} C {} ({} network sources)",
            counts.oo,
            counts.oa,
            counts.antidromic,
            counts.collision,
            sources.len()
        );
        fixed_point = history
            .last()
            .is_some_and(|last| last.types() == reg.types() && prev_times == u_p.times);
        history.push(reg.clone());
        if fixed_point && params.early_stop {
            break;
        }
    }
    Ok(CouplingState {
        u_p,
        network_origins: origins,
        u_m: NodalField::from_vec_unchecked(u_m),
        registry: reg,
        iterations,
        history,
        fixed_point,
    })
}
