use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConductionNetwork, NetworkError};

/// Planar binary tree grown from the AV node.
///
/// Every node at depth `k < depth` splits into two children whose directions
/// are the parent direction rotated by `+branch_angle` (left) and
/// `-branch_angle` (right) about `normal`. Segments at depth `k` are
/// `segment_length * length_ratio^k` long. `jitter` perturbs each segment
/// length and angle by a relative amount drawn uniformly from
/// `[-jitter, jitter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSpec {
    pub depth: usize,
    /// Meters.
    pub segment_length: f64,
    /// Radians.
    pub branch_angle: f64,
    pub root: [f64; 3],
    pub direction: [f64; 3],
    pub normal: [f64; 3],
    pub length_ratio: f64,
    pub jitter: f64,
    pub seed: u64,
    /// Meters per second.
    pub conduction_velocity: f64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            depth: 4,
            segment_length: 5e-3,
            branch_angle: 0.6,
            root: [0.0; 3],
            direction: [0.0, 1.0, 0.0],
            normal: [0.0, 0.0, 1.0],
            length_ratio: 0.8,
            jitter: 0.0,
            seed: 0,
            conduction_velocity: 4.0,
        }
    }
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Rodrigues rotation of `v` by `angle` about the unit axis `k`.
fn rotate(v: [f64; 3], k: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let kxv = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let kv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = v[i] * c + kxv[i] * s + k[i] * kv * (1.0 - c);
    }
    out
}

/// Builds the tree described by `spec`.
///
/// Nodes are numbered breadth first with the left child before the right
/// one, so edge `i` joins node `i + 1` to its parent and edge 0 is the
/// root-to-left-child segment. Leaves are the terminals; node 0 is the AV node.
pub fn build_synthetic_tree(spec: &TreeSpec) -> Result<ConductionNetwork, NetworkError> {
    if spec.depth == 0 {
        return Err(NetworkError::InvalidTree("depth must be at least 1".into()));
    }
    if spec.depth > 20 {
        return Err(NetworkError::InvalidTree(format!("depth {} is too large", spec.depth)));
    }
    if !(spec.segment_length.is_finite() && spec.segment_length > 0.0) {
        return Err(NetworkError::InvalidTree("segment_length must be positive".into()));
    }
    if !(spec.length_ratio.is_finite() && spec.length_ratio > 0.0) {
        return Err(NetworkError::InvalidTree("length_ratio must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.jitter) {
        return Err(NetworkError::InvalidTree("jitter must lie in [0, 1)".into()));
    }
    if !spec.branch_angle.is_finite() || spec.root.iter().any(|x| !x.is_finite()) {
        return Err(NetworkError::InvalidTree("angle and root must be finite".into()));
    }
    let dir = normalize(spec.direction)
        .ok_or_else(|| NetworkError::InvalidTree("direction must be non-zero".into()))?;
    let normal = normalize(spec.normal)
        .ok_or_else(|| NetworkError::InvalidTree("normal must be non-zero".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = vec![spec.root];
    let mut dirs = vec![dir];
    let mut edges = Vec::new();
    let mut level_start = 0;
    for k in 0..spec.depth {
        let level_end = nodes.len();
        let len = spec.segment_length * spec.length_ratio.powi(k as i32);
        for parent in level_start..level_end {
            for sign in [1.0, -1.0] {
                let mut j = || {
                    if spec.jitter > 0.0 {
                        1.0 + rng.random_range(-spec.jitter..spec.jitter)
                    } else {
                        1.0
                    }
                };
                let angle = sign * spec.branch_angle * j();
                let l = len * j();
                let d = rotate(dirs[parent], normal, angle);
                let p = nodes[parent];
                nodes.push([p[0] + l * d[0], p[1] + l * d[1], p[2] + l * d[2]]);
                dirs.push(d);
                edges.push((parent, nodes.len() - 1, None));
            }
        }
        level_start = level_end;
    }
    let terminals = (level_start..nodes.len()).collect();
    ConductionNetwork::new(nodes, edges, spec.conduction_velocity, 0, terminals)
}
