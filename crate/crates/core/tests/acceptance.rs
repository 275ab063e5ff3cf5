//! Acceptance gate. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eikcouple::coupling::{
    classify_times, couple, match_pmjs, CouplingParams, NetworkOrigin, PmjType, Transmission,
};
use eikcouple::eikonal::{
    build_conductivity, solve, ConductivityModel, MuscleStimulusSet, SolverMode, SolverOptions,
    StimulusOrigin,
};
use eikcouple::mesh::{build_structured_slab, FiberField, SimplicialMesh};
use eikcouple::network::{solve_network, ConductionNetwork, NetworkSource};
use eikcouple::scenario::{RunOutput, Scenario, ScenarioConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn default_sigma(mesh: &SimplicialMesh) -> Vec<[[f64; 3]; 3]> {
    build_conductivity(&ConductivityModel::default(), &FiberField::axis_aligned(mesh)).unwrap()
}

fn scenario(name: &str) -> RunOutput {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    let cfg = ScenarioConfig::load(&path).unwrap();
    Scenario::build(cfg).unwrap().run().unwrap()
}

/// Least-squares slope of `u` against `x`.
fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mu = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - mu)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn planar_speeds() -> Outcome {
    let expected = [0.6, 0.4, 0.2];
    let length = 0.01;
    let mut speeds = Vec::new();
    let mut pass = true;
    for axis in 0..3 {
        let mut lengths = [1e-3; 3];
        let mut divisions = [2; 3];
        lengths[axis] = length;
        divisions[axis] = 50;
        let mesh = build_structured_slab(3, &lengths, &divisions).unwrap();
        let sigma = default_sigma(&mesh);
        let mut s0 = MuscleStimulusSet::new();
        for (v, p) in mesh.vertices().iter().enumerate() {
            if p[axis] == 0.0 {
                s0.push(v, 0.0, StimulusOrigin::Ectopic);
            }
        }
        let out = solve(&mesh, &sigma, 60.0, &s0, &SolverOptions::default()).unwrap();
        let pts: Vec<(f64, f64)> = mesh
            .vertices()
            .iter()
            .zip(out.field.iter())
            .filter(|(p, _)| p[axis] >= 0.2 * length && p[axis] <= 0.7 * length)
            .map(|(p, &u)| (p[axis], u))
            .collect();
        let c = 1.0 / slope(&pts);
        pass &= ((c - expected[axis]) / expected[axis]).abs() <= 0.05;
        speeds.push(c);
    }
    outcome(
        pass,
        format!(
            "fiber/sheet/normal = {:.4}/{:.4}/{:.4} m/s, tolerance 5%",
            speeds[0], speeds[1], speeds[2]
        ),
    )
}

/// Two flanking stimuli at t = 0 and a later central one on `[0, length]`.
fn flanked_line(divisions: usize, mode: SolverMode) -> (SimplicialMesh, Vec<f64>) {
    let length = 0.02;
    let mesh = build_structured_slab(1, &[length], &[divisions]).unwrap();
    let sigma = default_sigma(&mesh);
    let mut s0 = MuscleStimulusSet::new();
    s0.push(0, 0.0, StimulusOrigin::Ectopic);
    s0.push(divisions, 0.0, StimulusOrigin::Ectopic);
    s0.push(divisions / 2, 0.03, StimulusOrigin::Lead);
    let opts = SolverOptions {
        mode,
        ..SolverOptions::default()
    };
    let out = solve(&mesh, &sigma, 60.0, &s0, &opts).unwrap();
    (mesh, out.field.to_vec())
}

/// Steady solution of `c |u'| - S u'' = 1` with `u = 0` at both ends of
/// `[0, length]`.
fn two_front_exact(x: f64, length: f64) -> f64 {
    let c = ConductivityModel::default().planar_speeds()[0];
    let s = (c / 60.0f64).powi(2);
    let half = length / 2.0;
    let y = if x <= half { x } else { length - x };
    y / c - s / (c * c) * ((c * (y - half) / s).exp() - (-c * half / s).exp())
}

fn late_central_stimulus() -> Outcome {
    let (_, novel) = flanked_line(100, SolverMode::Novel);
    let (_, classic) = flanked_line(100, SolverMode::Classic);
    let pass = novel[50] < 0.03 && (classic[50] - 0.03).abs() <= 1e-12;
    outcome(
        pass,
        format!(
            "center: novel {:.4} ms < 30 ms, classic {:.6} ms pinned",
            novel[50] * 1e3,
            classic[50] * 1e3
        ),
    )
}

struct RandomTree {
    net: ConductionNetwork,
    adjacency: Vec<Vec<(usize, f64)>>,
}

fn random_tree(rng: &mut ChaCha8Rng) -> RandomTree {
    let n = rng.random_range(2..=50);
    let nodes: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random::<f64>() * 0.05, rng.random::<f64>() * 0.05, rng.random::<f64>() * 0.05])
        .collect();
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = rng.random_range(0..i);
        let len = rng.random_bool(0.5).then(|| rng.random_range(1e-3..2e-2));
        edges.push((parent, i, len));
    }
    let c_p = rng.random_range(1.0..5.0);
    let mut degree = vec![0; n];
    for &(a, b, _) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let terminals = (1..n).filter(|&v| degree[v] == 1).collect();
    let net = ConductionNetwork::new(nodes, edges, c_p, 0, terminals).unwrap();
    let mut adjacency = vec![Vec::new(); n];
    for e in net.edges() {
        adjacency[e.a].push((e.b, e.length));
        adjacency[e.b].push((e.a, e.length));
    }
    RandomTree { net, adjacency }
}

/// Times from a single source along the unique tree paths.
fn path_times(tree: &RandomTree, source: usize, t0: f64) -> Vec<f64> {
    let c_p = tree.net.conduction_velocity();
    let mut times = vec![f64::INFINITY; tree.adjacency.len()];
    times[source] = t0;
    let mut stack = vec![source];
    while let Some(u) = stack.pop() {
        for &(w, len) in &tree.adjacency[u] {
            if times[w].is_infinite() {
                times[w] = times[u] + len / c_p;
                stack.push(w);
            }
        }
    }
    times
}

fn network_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut overrides = 0;
    for _ in 0..100 {
        let tree = random_tree(&mut rng);
        let n = tree.net.num_nodes();
        let k = rng.random_range(1..=3usize.min(n));
        let mut sources: Vec<NetworkSource> = Vec::new();
        while sources.len() < k {
            let node = rng.random_range(0..n);
            if sources.iter().all(|s| s.node != node) {
                sources.push(NetworkSource {
                    node,
                    time: rng.random_range(-0.01..0.02),
                });
            }
        }
        let per_source: Vec<Vec<f64>> =
            sources.iter().map(|s| path_times(&tree, s.node, s.time)).collect();
        let got = solve_network(&tree.net, &sources).unwrap();
        for v in 0..n {
            let best = per_source.iter().map(|t| t[v]).fold(f64::INFINITY, f64::min);
            let origin_ok = got.origin[v].is_some_and(|o| per_source[o][v] == best);
            if got.times[v] != best || !origin_ok {
                mismatches += 1;
            }
        }

        // A second source that fires after the first front has passed it.
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        let from_a = path_times(&tree, a, 0.0);
        let late = [
            NetworkSource { node: a, time: 0.0 },
            NetworkSource {
                node: b,
                time: from_a[b] + rng.random_range(1e-6..1e-2),
            },
        ];
        let got = solve_network(&tree.net, &late).unwrap();
        if got.times != from_a || got.origin.iter().any(|o| *o != Some(0)) {
            mismatches += 1;
        }
        overrides += 1;
    }
    outcome(
        mismatches == 0,
        format!("100 trees, {overrides} override cases, {mismatches} mismatches"),
    )
}

fn ticks(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

fn junction_exhaustiveness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bad = 0;
    let mut ties = 0;
    for i in 0..100_000 {
        let d_a_t: i64 = rng.random_range(100_000..5_000_000);
        let d_o_t: i64 = d_a_t + rng.random_range(1_000..20_000_000);
        let m_t: i64 = rng.random_range(-50_000_000..150_000_000);
        let p_t: i64 = match i % 4 {
            0 => m_t + d_a_t,
            1 => m_t - d_o_t,
            _ => rng.random_range(-80_000_000..200_000_000),
        };
        let (p, m) = (p_t as f64 / 1e9, m_t as f64 / 1e9);
        let (d_o, d_a) = (d_o_t as f64 / 1e9, d_a_t as f64 / 1e9);
        let (pt, mt) = (ticks(p), ticks(m));
        let (ot, at) = (ticks(d_o), ticks(d_a));
        let anti = pt >= mt + at;
        let ortho = pt <= mt - ot;
        let coll = mt - ot < pt && pt < mt + at;
        let fired = [anti, ortho, coll].iter().filter(|&&b| b).count();
        let expected = if anti {
            Transmission::Antidromic
        } else if ortho {
            Transmission::Orthodromic
        } else {
            Transmission::Collision
        };
        if i % 4 < 2 {
            ties += 1;
        }
        if fired != 1 || classify_times(p, m, d_o, d_a) != expected {
            bad += 1;
        }
    }
    let specials = [
        (0.1 + 0.2, 0.298, 0.01, 0.002, Transmission::Antidromic),
        (0.005, 0.015, 0.01, 0.002, Transmission::Orthodromic),
        (f64::INFINITY, 0.01, 0.01, 0.002, Transmission::Antidromic),
        (0.01, f64::INFINITY, 0.01, 0.002, Transmission::Orthodromic),
    ];
    for (p, m, d_o, d_a, want) in specials {
        if classify_times(p, m, d_o, d_a) != want {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!("100000 tuples ({ties} boundary ties) and 4 special cases, {bad} violations"),
    )
}

fn healthy_fixed_point() -> Outcome {
    let out = scenario("healthy");
    let h = &out.state.history;
    let counts = out.state.registry.counts();
    let stable = h.len() >= 2 && h[0].types() == h[1].types();
    outcome(
        counts.antidromic == 0 && stable,
        format!(
            "{} junctions, A = {}, iteration 1 == iteration 2: {stable}",
            counts.total(),
            counts.antidromic
        ),
    )
}

fn reentry_capture() -> Outcome {
    let out = scenario("lbbb");
    let reg = &out.state.registry;
    let counts = reg.counts();
    let mut traced = true;
    for e in reg.entries() {
        if e.pmj_type == PmjType::OrthodromicFromAntidromic {
            traced &= matches!(
                e.source,
                Some(NetworkOrigin::Pmj(k)) if reg.entries()[k].pmj_type == PmjType::Antidromic
            );
        }
    }
    outcome(
        counts.antidromic >= 1 && counts.oa >= 1 && traced,
        format!(
            "A = {}, OA = {}, every OA traced to an antidromic junction: {traced}",
            counts.antidromic, counts.oa
        ),
    )
}

fn late_lead_noop() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/crt.toml");
    let cfg = ScenarioConfig::load(&path).unwrap();
    let tol = 2.0 * cfg.solver.steady_tol;
    let with_lead = Scenario::build(cfg).unwrap();
    let without = scenario("lbbb");
    let late = with_lead
        .muscular
        .stimuli()
        .iter()
        .all(|s| s.time > without.state.u_m[s.vertex]);
    let out = with_lead.run().unwrap();
    let diff = out
        .state
        .u_m
        .iter()
        .zip(without.state.u_m.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        late && diff <= tol,
        format!("lead after local arrival: {late}, max |difference| = {diff:e} s (limit {tol:e})"),
    )
}

/// Joint shortest-path oracle over network nodes and muscle vertices with
/// junction links weighted by the delays.
#[allow(clippy::too_many_arguments)]
fn joint_oracle(
    net: &ConductionNetwork,
    mesh: &SimplicialMesh,
    speed: f64,
    pairs: &[(usize, usize)],
    d_o: f64,
    d_a: f64,
    network_sources: &[(usize, f64)],
    muscle_sources: &[(usize, f64)],
) -> (Vec<f64>, Vec<f64>) {
    let nn = net.num_nodes();
    let nv = mesh.num_vertices();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nn + nv];
    for (i, e) in net.edges().iter().enumerate() {
        if !net.blocked_edges().contains(&i) {
            let w = e.length / net.conduction_velocity();
            adj[e.a].push((e.b, w));
            adj[e.b].push((e.a, w));
        }
    }
    for (a, b) in mesh.edges() {
        let w = (mesh.vertex(a)[0] - mesh.vertex(b)[0]).abs() / speed;
        adj[nn + a].push((nn + b, w));
        adj[nn + b].push((nn + a, w));
    }
    for &(t, v) in pairs {
        adj[t].push((nn + v, d_o));
        adj[nn + v].push((t, d_a));
    }
    let mut time = vec![f64::INFINITY; nn + nv];
    for &(n, t) in network_sources {
        time[n] = time[n].min(t);
    }
    for &(v, t) in muscle_sources {
        time[nn + v] = time[nn + v].min(t);
    }
    // Exhaustive label correction; the graph is tiny.
    let mut changed = true;
    while changed {
        changed = false;
        for u in 0..nn + nv {
            for &(w, cost) in &adj[u] {
                if time[u] + cost < time[w] {
                    time[w] = time[u] + cost;
                    changed = true;
                }
            }
        }
    }
    (time[..nn].to_vec(), time[nn..].to_vec())
}

fn coupled_line_oracle() -> Outcome {
    let length = 0.05;
    let divisions = 200;
    let h = length / divisions as f64;
    let model = ConductivityModel::default();
    let speed = model.planar_speeds()[0];
    let mesh = build_structured_slab(1, &[length], &[divisions]).unwrap();
    let sigma = default_sigma(&mesh);
    let nodes = vec![
        [0.025, 0.0, 0.0],
        [0.015, 0.0, 0.0],
        [0.005, 0.0, 0.0],
        [0.035, 0.0, 0.0],
        [0.045, 0.0, 0.0],
    ];
    let edges = vec![(0, 1, None), (1, 2, None), (0, 3, None), (3, 4, None)];
    let base = ConductionNetwork::new(nodes, edges, 4.0, 0, vec![2, 4]).unwrap();
    let (d_o, d_a) = (10e-3, 2e-3);
    let opts = SolverOptions::default();
    let tol = 2.0 * h / speed + opts.steady_tol;
    let cases = [
        ("ectopic", base.clone(), vec![(192usize, -0.01)]),
        ("blocked", base.apply_blocks(&[2]).unwrap(), vec![]),
    ];
    let mut worst: f64 = 0.0;
    let mut summary = Vec::new();
    for (name, net, ectopic) in cases {
        let registry = match_pmjs(&net, &mesh, d_o, d_a, None).unwrap();
        let mut muscular = MuscleStimulusSet::new();
        for &(v, t) in &ectopic {
            muscular.push(v, t, StimulusOrigin::Ectopic);
        }
        let params = CouplingParams {
            n_max: 6,
            solver: opts,
            ..CouplingParams::default()
        };
        let state = couple(&net, &mesh, &sigma, &params, &registry, &muscular).unwrap();
        let pairs: Vec<(usize, usize)> =
            registry.entries().iter().map(|e| (e.terminal, e.vertex)).collect();
        let (op, om) =
            joint_oracle(&net, &mesh, speed, &pairs, d_o, d_a, &[(net.avn(), 0.0)], &ectopic);
        let err_p = state
            .u_p
            .times
            .iter()
            .zip(&op)
            .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
            .fold(0.0, f64::max);
        let err_m = state
            .u_m
            .iter()
            .zip(&om)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err_p).max(err_m);
        summary.push(format!("{name} {:.3}/{:.3} ms", err_p * 1e3, err_m * 1e3));
    }
    outcome(
        worst <= tol,
        format!(
            "max network/muscle error {} (limit {:.3} ms)",
            summary.join(", "),
            tol * 1e3
        ),
    )
}

fn wpw_earliest_activation() -> Outcome {
    let out = scenario("wpw");
    outcome(
        out.summary.eat_ms == -30.0,
        format!("EAT = {} ms", out.summary.eat_ms),
    )
}

fn numerical_hygiene() -> Outcome {
    use eikcouple::eikonal::EikonalOperator;

    let mesh = build_structured_slab(3, &[3e-3, 2e-3, 2e-3], &[3, 2, 2]).unwrap();
    let sigma = default_sigma(&mesh);
    let op = EikonalOperator::new(&mesh, &sigma, 60.0, 1e-20).unwrap();
    let n = mesh.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dt = 1e-3;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.01)).collect();
        let u_tilde: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.01)).collect();
        for alpha in [0.0, 1.0] {
            let j = op.jacobian(&u, alpha, dt);
            let step = 1e-7;
            let mut num = 0.0;
            let mut den = 0.0;
            for b in 0..n {
                let mut up = u.clone();
                let mut um = u.clone();
                up[b] += step;
                um[b] -= step;
                let rp = op.residual(&up, &u_tilde, alpha, dt);
                let rm = op.residual(&um, &u_tilde, alpha, dt);
                for a in 0..n {
                    let fd = (rp[a] - rm[a]) / (2.0 * step);
                    let an = j.get(a, b);
                    num += (fd - an).powi(2);
                    den += an * an;
                }
            }
            worst = worst.max((num / den).sqrt());
        }
    }

    let errors: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&nd| {
            let (mesh, u) = flanked_line(nd, SolverMode::Novel);
            mesh.vertices()
                .iter()
                .zip(&u)
                .map(|(p, v)| (v - two_front_exact(p[0], 0.02)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst <= 1e-5 && monotone,
        format!(
            "Jacobian relative error {worst:.2e} (limit 1e-5); refinement errors {:.3e}/{:.3e}/{:.3e} s",
            errors[0], errors[1], errors[2]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("planar front speeds", planar_speeds),
        ("late central stimulus", late_central_stimulus),
        ("network path oracle", network_oracle),
        ("junction rule exhaustive", junction_exhaustiveness),
        ("healthy fixed point", healthy_fixed_point),
        ("reentry capture", reentry_capture),
        ("late lead no-op", late_lead_noop),
        ("coupled line oracle", coupled_line_oracle),
        ("pre-excitation EAT", wpw_earliest_activation),
        ("numerical hygiene", numerical_hygiene),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<26} {}  {} [{:.1} s]",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
