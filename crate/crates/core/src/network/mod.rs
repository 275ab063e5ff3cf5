//! Purkinje conduction network: a weighted graph solved for activation times
//! with multi-source Dijkstra.

mod io;
mod tree;

pub use io::{load_network, parse_network, write_network};
pub use tree::{build_synthetic_tree, TreeSpec};

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::{dist, MeshError};

/// Allowed mismatch between a geometric edge length and the endpoint distance.
pub const LENGTH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network has no nodes")]
    Empty,
    #[error("edge {edge} references node {node}, but the network has {count} nodes")]
    InvalidNode { edge: usize, node: usize, count: usize },
    #[error("node index {node} out of range ({count} nodes)")]
    NodeOutOfRange { node: usize, count: usize },
    #[error("edge index {edge} out of range ({count} edges)")]
    EdgeOutOfRange { edge: usize, count: usize },
    #[error("edge {edge} has invalid length {length:e}")]
    BadLength { edge: usize, length: f64 },
    #[error("edge {edge} length {length:e} differs from endpoint distance {distance:e}")]
    LengthMismatch {
        edge: usize,
        length: f64,
        distance: f64,
    },
    #[error("edge {0} is a self-loop")]
    SelfLoop(usize),
    #[error("node {0} has non-finite coordinates")]
    NonFinite(usize),
    #[error("terminal {node} has degree {degree}, expected 1")]
    TerminalDegree { node: usize, degree: usize },
    #[error("the AV node {0} cannot be a terminal")]
    AvnIsTerminal(usize),
    #[error("conduction velocity must be positive and finite, got {0}")]
    BadVelocity(f64),
    #[error("source set is empty")]
    NoSources,
    #[error("source time {time} at node {node} is not finite")]
    BadSourceTime { node: usize, time: f64 },
    #[error("invalid tree specification: {0}")]
    InvalidTree(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: Box<NetworkError>,
    },
    #[error(transparent)]
    Io(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkEdge {
    pub a: usize,
    pub b: usize,
    /// Meters.
    pub length: f64,
    /// Set when the length was given explicitly and need not match geometry.
    pub explicit_length: bool,
}

/// Conduction network with an AV-node root and terminal junction nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductionNetwork {
    nodes: Vec<[f64; 3]>,
    edges: Vec<NetworkEdge>,
    c_p: f64,
    avn: usize,
    terminals: Vec<usize>,
    blocked: BTreeSet<usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl ConductionNetwork {
    /// `edges` are `(a, b, length)`; a missing length means the Euclidean
    /// distance between the endpoints.
    pub fn new(
        nodes: Vec<[f64; 3]>,
        edges: Vec<(usize, usize, Option<f64>)>,
        c_p: f64,
        avn: usize,
        terminals: Vec<usize>,
    ) -> Result<Self, NetworkError> {
        let n = nodes.len();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        if !(c_p.is_finite() && c_p > 0.0) {
            return Err(NetworkError::BadVelocity(c_p));
        }
        if let Some(v) = nodes.iter().position(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(NetworkError::NonFinite(v));
        }
        let mut built = Vec::with_capacity(edges.len());
        for (e, (a, b, len)) in edges.into_iter().enumerate() {
            for node in [a, b] {
                if node >= n {
                    return Err(NetworkError::InvalidNode { edge: e, node, count: n });
                }
            }
            if a == b {
                return Err(NetworkError::SelfLoop(e));
            }
            let distance = dist(&nodes[a], &nodes[b]);
            let (length, explicit_length) = match len {
                Some(l) => (l, true),
                None => (distance, false),
            };
            if !(length.is_finite() && length > 0.0) {
                return Err(NetworkError::BadLength { edge: e, length });
            }
            built.push(NetworkEdge {
                a,
                b,
                length,
                explicit_length,
            });
        }
        Self::from_edges(nodes, built, c_p, avn, terminals)
    }

    fn from_edges(
        nodes: Vec<[f64; 3]>,
        edges: Vec<NetworkEdge>,
        c_p: f64,
        avn: usize,
        terminals: Vec<usize>,
    ) -> Result<Self, NetworkError> {
        let n = nodes.len();
        for (e, edge) in edges.iter().enumerate() {
            if !edge.explicit_length {
                let distance = dist(&nodes[edge.a], &nodes[edge.b]);
                if (edge.length - distance).abs() > LENGTH_TOL {
                    return Err(NetworkError::LengthMismatch {
                        edge: e,
                        length: edge.length,
                        distance,
                    });
                }
            }
        }
        if avn >= n {
            return Err(NetworkError::NodeOutOfRange { node: avn, count: n });
        }
        let mut adjacency = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            adjacency[edge.a].push((edge.b, e));
            adjacency[edge.b].push((edge.a, e));
        }
        for &t in &terminals {
            if t >= n {
                return Err(NetworkError::NodeOutOfRange { node: t, count: n });
            }
            if t == avn {
                return Err(NetworkError::AvnIsTerminal(t));
            }
            if adjacency[t].len() != 1 {
                return Err(NetworkError::TerminalDegree {
                    node: t,
                    degree: adjacency[t].len(),
                });
            }
        }
        Ok(ConductionNetwork {
            nodes,
            edges,
            c_p,
            avn,
            terminals,
            blocked: BTreeSet::new(),
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> [f64; 3] {
        self.nodes[i]
    }

    pub fn edges(&self) -> &[NetworkEdge] {
        &self.edges
    }

    pub fn conduction_velocity(&self) -> f64 {
        self.c_p
    }

    pub fn avn(&self) -> usize {
        self.avn
    }

    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn blocked_edges(&self) -> &BTreeSet<usize> {
        &self.blocked
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Copy of the network with a different conduction velocity.
    pub fn with_velocity(&self, c_p: f64) -> Result<Self, NetworkError> {
        if !(c_p.is_finite() && c_p > 0.0) {
            return Err(NetworkError::BadVelocity(c_p));
        }
        Ok(ConductionNetwork {
            c_p,
            ..self.clone()
        })
    }

    /// Copy of the network with `edges` added to the blocked set.
    pub fn apply_blocks(&self, edges: &[usize]) -> Result<Self, NetworkError> {
        let mut out = self.clone();
        for &e in edges {
            if e >= self.edges.len() {
                return Err(NetworkError::EdgeOutOfRange {
                    edge: e,
                    count: self.edges.len(),
                });
            }
            out.blocked.insert(e);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSource {
    pub node: usize,
    /// Seconds; negative values are allowed.
    pub time: f64,
}

/// Result of a network solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeActivation {
    /// Seconds per node, `+inf` where no source reaches.
    pub times: Vec<f64>,
    /// Index into the source list of the source whose front reaches each node
    /// first, `None` where unreached.
    pub origin: Vec<Option<usize>>,
}

impl NodeActivation {
    pub fn is_reached(&self, node: usize) -> bool {
        self.times[node].is_finite()
    }
}

#[derive(PartialEq)]
struct Entry {
    time: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed so the max-heap pops the earliest time, then the lowest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra over the unblocked edges.
///
/// Each node receives `min_s (t_s + dist(s, v) / c_p)`. A source that is
/// reached earlier by another front keeps the earlier time. Edge delays are
/// accumulated as `t + length / c_p` in path order.
pub fn solve_network(
    network: &ConductionNetwork,
    sources: &[NetworkSource],
) -> Result<NodeActivation, NetworkError> {
    if sources.is_empty() {
        return Err(NetworkError::NoSources);
    }
    let n = network.num_nodes();
    let mut times = vec![f64::INFINITY; n];
    let mut origin = vec![None; n];
    for (k, s) in sources.iter().enumerate() {
        if s.node >= n {
            return Err(NetworkError::NodeOutOfRange { node: s.node, count: n });
        }
        if !s.time.is_finite() {
            return Err(NetworkError::BadSourceTime {
                node: s.node,
                time: s.time,
            });
        }
        if s.time < times[s.node] {
            times[s.node] = s.time;
            origin[s.node] = Some(k);
        }
    }
    let mut heap: BinaryHeap<Entry> = (0..n)
        .filter(|&v| times[v].is_finite())
        .map(|v| Entry { time: times[v], node: v })
        .collect();
    let mut done = vec![false; n];
    while let Some(Entry { time, node }) = heap.pop() {
        if done[node] || time > times[node] {
            continue;
        }
        done[node] = true;
        for &(next, e) in &network.adjacency[node] {
            if done[next] || network.blocked.contains(&e) {
                continue;
            }
            let t = time + network.edges[e].length / network.c_p;
            if t < times[next] {
                times[next] = t;
                origin[next] = origin[node];
                heap.push(Entry { time: t, node: next });
            }
        }
    }
    Ok(NodeActivation { times, origin })
}
