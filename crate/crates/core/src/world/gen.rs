//! Candidate generation, user simulation, coverage labels, dataset assembly.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::grid::{build_grid_graph, RoadGraph};
use super::{Route, Sample, WorldError};
use crate::util::{argmax_ties_low, mix_seed, seeded_rng};
use crate::world::dataset::SCHEMA_VERSION;

/// Dataset generator configuration. Defaults are the desk-scale benchmark:
/// 12×12 grid, 10 candidates, 8 history records, feature widths 62/10/31.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub candidates: usize,
    pub history_len: usize,
    /// Fraction of samples whose trajectory is replaced by a random
    /// non-ground-truth candidate's trajectory (misclick noise).
    pub noise: f64,
    /// Fraction of the chosen route's edges replaced by adjacent detours.
    pub deviation: f64,
    pub seed: u64,
    pub route_feature_width: usize,
    pub scene_width: usize,
    pub history_width: usize,
    /// Scale of the Gumbel noise added to the simulated user's utility.
    pub gumbel_scale: f64,
    /// Log-normal jitter applied to edge weights between candidate draws.
    pub jitter_sigma: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            width: 12,
            height: 12,
            samples: 20_000,
            candidates: 10,
            history_len: 8,
            noise: 0.0,
            deviation: 0.1,
            seed: 1,
            route_feature_width: 62,
            scene_width: 10,
            history_width: 31,
            gumbel_scale: 0.3,
            jitter_sigma: 0.4,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.width < 2 || self.height < 2 {
            return Err(WorldError::Config("grid must be at least 2x2".into()));
        }
        if self.candidates == 0 {
            return Err(WorldError::Config("candidates must be >= 1".into()));
        }
        if self.samples == 0 {
            return Err(WorldError::Config("samples must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(WorldError::Config(format!(
                "noise must be in [0, 1], got {}",
                self.noise
            )));
        }
        if !(0.0..1.0).contains(&self.deviation) {
            return Err(WorldError::Config(format!(
                "deviation must be in [0, 1), got {}",
                self.deviation
            )));
        }
        if self.route_feature_width < 21 || self.scene_width < 6 {
            return Err(WorldError::Config(
                "route feature width must be >= 21 and scene width >= 6".into(),
            ));
        }
        if self.history_width != 21 + self.scene_width {
            return Err(WorldError::Config(format!(
                "history width must be 21 + scene width, got {}",
                self.history_width
            )));
        }
        Ok(())
    }
}

/// Jaccard similarity of two edge-id sets.
pub fn coverage_rate(p: &[u32], u: &[u32]) -> Result<f64, WorldError> {
    if p.is_empty() && u.is_empty() {
        return Err(WorldError::Contract(
            "coverage rate of two empty edge sets".into(),
        ));
    }
    let ps: BTreeSet<u32> = p.iter().copied().collect();
    let us: BTreeSet<u32> = u.iter().copied().collect();
    let inter = ps.intersection(&us).count() as f64;
    let union = (ps.len() + us.len()) as f64 - inter;
    Ok(inter / union)
}

/// Per-route feature vector; index layout is fixed so history records can
/// reuse the first 21 slots. Unused slots stay zero.
pub fn route_features(graph: &RoadGraph, path: &[u32], width: usize) -> Vec<f64> {
    let mut f = vec![0.0; width];
    if path.is_empty() {
        return f;
    }
    let n = path.len() as f64;
    let times: Vec<f64> = path.iter().map(|&e| graph.edge(e).travel_time).collect();
    let lengths: Vec<f64> = path.iter().map(|&e| graph.edge(e).length).collect();
    let eta: f64 = times.iter().sum();
    let total_len: f64 = lengths.iter().sum();
    let toll_cost: f64 = path
        .iter()
        .map(|&e| {
            let edge = graph.edge(e);
            if edge.toll {
                2.0 + 0.01 * edge.length
            } else {
                0.0
            }
        })
        .sum();
    let lights = path.iter().filter(|&&e| graph.edge(e).light).count() as f64;
    let tolls = path.iter().filter(|&&e| graph.edge(e).toll).count() as f64;
    let mean_t = eta / n;
    let var_t = times.iter().map(|t| (t - mean_t).powi(2)).sum::<f64>() / n;

    f[0] = eta;
    f[1] = total_len;
    f[2] = toll_cost;
    f[3] = lights;
    f[4] = n;
    f[5] = mean_t;
    f[6] = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    f[7] = times.iter().cloned().fold(f64::INFINITY, f64::min);
    f[8] = var_t.sqrt();
    f[9] = total_len / n;
    f[10] = lengths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    f[11] = tolls / n;
    f[12] = lights / n;
    f[13] = eta / total_len;
    f[14] = turn_count(graph, path) as f64;
    f[15] = (1.0 + eta).ln();
    f[16] = (1.0 + total_len).ln();
    f[17] = n.sqrt();
    f[18] = toll_cost / (1.0 + total_len);
    f[19] = lights / n;
    f[20] = detour_factor(graph, path);
    f
}

fn turn_count(graph: &RoadGraph, path: &[u32]) -> usize {
    if path.len() < 2 {
        return 0;
    }
    // Recover node sequence, then count direction changes.
    let nodes = path_nodes(graph, path);
    let mut turns = 0;
    for w in nodes.windows(3) {
        let (x0, y0) = graph.node_xy(w[0]);
        let (x1, y1) = graph.node_xy(w[1]);
        let (x2, y2) = graph.node_xy(w[2]);
        let d1 = (x1 as i64 - x0 as i64, y1 as i64 - y0 as i64);
        let d2 = (x2 as i64 - x1 as i64, y2 as i64 - y1 as i64);
        if d1 != d2 {
            turns += 1;
        }
    }
    turns
}

/// Node sequence of an edge path, starting from the endpoint not shared
/// with the second edge.
fn path_nodes(graph: &RoadGraph, path: &[u32]) -> Vec<u32> {
    let first = graph.edge(path[0]);
    let start = if path.len() == 1 {
        first.a
    } else {
        let second = graph.edge(path[1]);
        if first.a == second.a || first.a == second.b {
            first.b
        } else {
            first.a
        }
    };
    let mut nodes = vec![start];
    let mut cur = start;
    for &e in path {
        cur = graph.opposite(e, cur);
        nodes.push(cur);
    }
    nodes
}

fn detour_factor(graph: &RoadGraph, path: &[u32]) -> f64 {
    let nodes = path_nodes(graph, path);
    let (x0, y0) = graph.node_xy(nodes[0]);
    let (x1, y1) = graph.node_xy(*nodes.last().unwrap());
    let manhattan = x0.abs_diff(x1) + y0.abs_diff(y1);
    path.len() as f64 / (1.0 + manhattan as f64)
}

/// Generate up to `n` distinct simple routes from `origin` to `destination`:
/// shortest paths under independently jittered edge weights (draw 0 is
/// unjittered), de-duplicated by edge set, topped up with random simple
/// walks. Returns the routes and whether the full count was reached.
pub fn generate_candidates(
    graph: &RoadGraph,
    origin: u32,
    destination: u32,
    n: usize,
    jitter_sigma: f64,
    feature_width: usize,
    seed: u64,
) -> Result<(Vec<Route>, bool), WorldError> {
    if origin == destination {
        return Err(WorldError::Config("origin equals destination".into()));
    }
    if n == 0 {
        return Err(WorldError::Config("candidate count must be >= 1".into()));
    }
    let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut routes: Vec<Vec<u32>> = Vec::new();

    let mut push_path = |path: Vec<u32>, routes: &mut Vec<Vec<u32>>| {
        let mut key = path.clone();
        key.sort_unstable();
        if seen.insert(key) {
            routes.push(path);
        }
    };

    let max_draws = 4 * n;
    for k in 0..max_draws {
        if routes.len() >= n {
            break;
        }
        let path = if k == 0 {
            graph.shortest_path(origin, destination, |e| graph.edge(e).travel_time)
        } else {
            let mut rng = seeded_rng(seed, 0xD1A0 + k as u64);
            let jitter: Vec<f64> = (0..graph.edges.len())
                .map(|_| (jitter_sigma * normal(&mut rng)).exp())
                .collect();
            graph.shortest_path(origin, destination, |e| {
                graph.edge(e).travel_time * jitter[e as usize]
            })
        };
        if let Some(p) = path {
            push_path(p, &mut routes);
        }
    }

    // Random simple walks to fill any gap.
    let mut walk_rng = seeded_rng(seed, 0x3A1C);
    let mut attempts = 0;
    while routes.len() < n && attempts < 60 * n {
        attempts += 1;
        if let Some(p) = random_simple_walk(graph, origin, destination, &mut walk_rng) {
            push_path(p, &mut routes);
        }
    }

    let complete = routes.len() >= n;
    let routes = routes
        .into_iter()
        .map(|edge_ids| {
            let features = route_features(graph, &edge_ids, feature_width);
            Route { edge_ids, features }
        })
        .collect();
    Ok((routes, complete))
}

fn random_simple_walk(
    graph: &RoadGraph,
    origin: u32,
    destination: u32,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<u32>> {
    let mut visited = vec![false; graph.node_count()];
    let mut path = Vec::new();
    let mut cur = origin;
    visited[cur as usize] = true;
    let cap = graph.node_count();
    for _ in 0..cap {
        if cur == destination {
            return Some(path);
        }
        let mut options: Vec<(u32, u32)> = graph
            .neighbors(cur)
            .iter()
            .copied()
            .filter(|&(_, next)| !visited[next as usize])
            .collect();
        if options.is_empty() {
            return None;
        }
        // Bias toward the destination so walks usually terminate.
        let (dx, dy) = graph.node_xy(destination);
        options.sort_by_key(|&(_, next)| {
            let (x, y) = graph.node_xy(next);
            x.abs_diff(dx) + y.abs_diff(dy)
        });
        let pick = if rng.random::<f64>() < 0.6 {
            0
        } else {
            rng.random_range(0..options.len())
        };
        let (edge, next) = options[pick];
        path.push(edge);
        visited[next as usize] = true;
        cur = next;
    }
    if cur == destination {
        Some(path)
    } else {
        None
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gumbel(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
    -(-u.ln()).ln()
}

/// Simulated user choice: argmax over candidates of `w · z(features)` plus
/// Gumbel noise, where `z` is the per-candidate-set z-score. Deterministic
/// for a given seed; ties resolve to the lowest index.
pub fn simulate_choice(
    candidates: &[Route],
    user_weights: &[f64],
    gumbel_scale: f64,
    seed: u64,
) -> Result<usize, WorldError> {
    if candidates.is_empty() {
        return Err(WorldError::Contract("choice over empty candidate set".into()));
    }
    let width = candidates[0].features.len();
    let n = candidates.len() as f64;
    let mut utilities = vec![0.0; candidates.len()];
    for d in 0..width.min(user_weights.len()) {
        let w = user_weights[d];
        if w == 0.0 {
            continue;
        }
        let mean: f64 = candidates.iter().map(|c| c.features[d]).sum::<f64>() / n;
        let var: f64 = candidates
            .iter()
            .map(|c| (c.features[d] - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt().max(1e-6);
        for (u, c) in utilities.iter_mut().zip(candidates) {
            *u += w * (c.features[d] - mean) / std;
        }
    }
    if gumbel_scale > 0.0 {
        let mut rng = seeded_rng(seed, 0x6B31);
        for u in utilities.iter_mut() {
            *u += gumbel_scale * gumbel(&mut rng);
        }
    }
    Ok(argmax_ties_low(&utilities))
}

/// Trajectory implied by a chosen route: its edge set with a
/// `ceil(deviation_rate · |edges|)` subset swapped for adjacent detour
/// edges. Returned sorted (set semantics).
pub fn derive_trajectory(
    graph: &RoadGraph,
    chosen: &Route,
    deviation_rate: f64,
    seed: u64,
) -> Vec<u32> {
    let mut u: BTreeSet<u32> = chosen.edge_ids.iter().copied().collect();
    let replace = if deviation_rate > 0.0 {
        (deviation_rate * chosen.edge_ids.len() as f64).ceil() as usize
    } else {
        0
    };
    if replace > 0 {
        let mut rng = seeded_rng(seed, 0xDE7A);
        let mut order: Vec<u32> = chosen.edge_ids.clone();
        order.shuffle(&mut rng);
        for &edge in order.iter().take(replace) {
            let e = graph.edge(edge);
            let mut detours: Vec<u32> = graph
                .neighbors(e.a)
                .iter()
                .chain(graph.neighbors(e.b).iter())
                .map(|&(id, _)| id)
                .filter(|id| !u.contains(id))
                .collect();
            detours.sort_unstable();
            detours.dedup();
            if let Some(&pick) = detours.get(rng.random_range(0..detours.len().max(1)).min(detours.len().saturating_sub(1))) {
                u.remove(&edge);
                u.insert(pick);
            }
        }
    }
    u.into_iter().collect()
}

/// Corrupt a `beta_true` fraction of samples: the trajectory is replaced by
/// the trajectory of a uniformly random non-ground-truth candidate, then
/// coverage and the ground-truth index are recomputed. The `is_noisy` flag
/// records the corruption for evaluation only.
pub fn inject_noise(
    samples: &mut [Sample],
    graph: &RoadGraph,
    beta_true: f64,
    deviation_rate: f64,
    seed: u64,
) -> Result<(), WorldError> {
    if !(0.0..=1.0).contains(&beta_true) {
        return Err(WorldError::Config(format!(
            "noise fraction must be in [0, 1], got {beta_true}"
        )));
    }
    if beta_true == 0.0 {
        return Ok(());
    }
    for sample in samples.iter_mut() {
        let mut rng = seeded_rng(seed, 0x401E ^ sample.sample_id.wrapping_mul(2654435761));
        if rng.random::<f64>() >= beta_true || sample.n_candidates < 2 {
            continue;
        }
        let mut pick = rng.random_range(0..sample.n_candidates - 1);
        if pick >= sample.gt_index {
            pick += 1;
        }
        let traj_seed = rng.random::<u64>();
        sample.trajectory_edge_ids =
            derive_trajectory(graph, &sample.candidates[pick], deviation_rate, traj_seed);
        relabel(sample)?;
        sample.is_noisy = true;
    }
    Ok(())
}

fn relabel(sample: &mut Sample) -> Result<(), WorldError> {
    sample.cr = sample
        .candidates
        .iter()
        .map(|c| coverage_rate(&c.edge_ids, &sample.trajectory_edge_ids))
        .collect::<Result<_, _>>()?;
    sample.gt_index = argmax_ties_low(&sample.cr);
    Ok(())
}

/// Build the full synthetic dataset for `cfg`. Reproducible byte-for-byte
/// from `(cfg, cfg.seed)`.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Vec<Sample>, WorldError> {
    cfg.validate()?;
    let graph = build_grid_graph(cfg.width, cfg.height, cfg.seed)?;
    let mut samples = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        samples.push(generate_sample(&graph, cfg, i as u64)?);
    }
    inject_noise(
        &mut samples,
        &graph,
        cfg.noise,
        cfg.deviation,
        mix_seed(cfg.seed, 0x9015E),
    )?;
    Ok(samples)
}

fn generate_sample(graph: &RoadGraph, cfg: &GenConfig, id: u64) -> Result<Sample, WorldError> {
    let base = mix_seed(cfg.seed, id.wrapping_mul(64));
    let mut rng = seeded_rng(base, 0);

    let (origin, destination) = pick_query(graph, &mut rng);
    let (candidates, _complete) = generate_candidates(
        graph,
        origin,
        destination,
        cfg.candidates,
        cfg.jitter_sigma,
        cfg.route_feature_width,
        mix_seed(base, 1),
    )?;

    let weights = user_weights(cfg.route_feature_width, &mut seeded_rng(base, 2));
    let scene = scene_vector(graph, origin, destination, cfg.scene_width, &mut rng);

    let mut history = Vec::with_capacity(cfg.history_len);
    for j in 0..cfg.history_len {
        let hseed = mix_seed(base, 3 + j as u64);
        history.push(history_record(graph, cfg, &weights, hseed)?);
    }

    let chosen = simulate_choice(&candidates, &weights, cfg.gumbel_scale, mix_seed(base, 40))?;
    let trajectory =
        derive_trajectory(graph, &candidates[chosen], cfg.deviation, mix_seed(base, 41));

    let cr: Vec<f64> = candidates
        .iter()
        .map(|c| coverage_rate(&c.edge_ids, &trajectory))
        .collect::<Result<_, _>>()?;
    let gt_index = argmax_ties_low(&cr);

    Ok(Sample {
        schema_version: SCHEMA_VERSION,
        sample_id: id,
        n_candidates: candidates.len(),
        candidates,
        scene,
        history,
        trajectory_edge_ids: trajectory,
        cr,
        gt_index,
        is_noisy: false,
    })
}

fn pick_query(graph: &RoadGraph, rng: &mut ChaCha8Rng) -> (u32, u32) {
    let n = graph.node_count() as u32;
    let min_dist = ((graph.width + graph.height) / 3).max(2);
    loop {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (ax, ay) = graph.node_xy(a);
        let (bx, by) = graph.node_xy(b);
        if a != b && ax.abs_diff(bx) + ay.abs_diff(by) >= min_dist {
            return (a, b);
        }
    }
}

/// Fixed per-user linear preference over route features. Negative weights
/// on cost-like dimensions; heterogeneity across users comes from the draw.
fn user_weights(width: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w = vec![0.0; width];
    w[0] = -(0.8 + 0.4 * rng.random::<f64>()); // ETA
    w[1] = -(0.1 + 0.3 * rng.random::<f64>()); // length
    w[2] = -(0.2 + 0.9 * rng.random::<f64>()); // toll cost
    w[3] = -(0.1 + 0.3 * rng.random::<f64>()); // lights
    w[14] = -(0.1 + 0.2 * rng.random::<f64>()); // turns
    w
}

fn scene_vector(
    graph: &RoadGraph,
    origin: u32,
    destination: u32,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut s = vec![0.0; width];
    s[0] = rng.random_range(0..24u32) as f64; // request-time bucket
    s[1] = rng.random::<f64>(); // origin familiarity
    s[2] = rng.random::<f64>(); // destination familiarity
    let day = rng.random_range(0..7u32);
    s[3] = day as f64 / 7.0;
    s[4] = if day >= 5 { 1.0 } else { 0.0 };
    let (ox, oy) = graph.node_xy(origin);
    let (dx, dy) = graph.node_xy(destination);
    s[5] = (ox.abs_diff(dx) + oy.abs_diff(dy)) as f64 / (graph.width + graph.height) as f64;
    s
}

/// One history record: the first 21 route features of the route the user
/// picked in an earlier query, followed by that query's scene vector with
/// the hour bucket rescaled to [0, 1].
fn history_record(
    graph: &RoadGraph,
    cfg: &GenConfig,
    weights: &[f64],
    seed: u64,
) -> Result<Vec<f64>, WorldError> {
    let mut rng = seeded_rng(seed, 0);
    let (origin, destination) = pick_query(graph, &mut rng);
    let (candidates, _) = generate_candidates(
        graph,
        origin,
        destination,
        4,
        cfg.jitter_sigma,
        cfg.route_feature_width,
        mix_seed(seed, 1),
    )?;
    let chosen = simulate_choice(&candidates, weights, cfg.gumbel_scale, mix_seed(seed, 2))?;
    let mut scene = scene_vector(graph, origin, destination, cfg.scene_width, &mut rng);
    scene[0] /= 24.0;
    let mut record = Vec::with_capacity(cfg.history_width);
    record.extend_from_slice(&candidates[chosen].features[..21]);
    record.extend_from_slice(&scene);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_graph() -> RoadGraph {
        build_grid_graph(2, 2, 5).unwrap()
    }

    #[test]
    fn coverage_rate_matches_hand_jaccard() {
        assert_eq!(coverage_rate(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert!((coverage_rate(&[1, 2], &[2, 3]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(coverage_rate(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert!(coverage_rate(&[], &[]).is_err());
    }

    #[test]
    fn coverage_rate_is_symmetric() {
        let p = [1u32, 5, 9, 12];
        let u = [5u32, 9, 20];
        assert_eq!(coverage_rate(&p, &u).unwrap(), coverage_rate(&u, &p).unwrap());
    }

    #[test]
    fn single_candidate_draw_is_the_unjittered_shortest_path() {
        let g = build_grid_graph(6, 6, 3).unwrap();
        let (routes, complete) = generate_candidates(&g, 0, 35, 1, 0.4, 62, 9).unwrap();
        assert!(complete);
        assert_eq!(routes.len(), 1);
        let sp = g.shortest_path(0, 35, |e| g.edge(e).travel_time).unwrap();
        assert_eq!(routes[0].edge_ids, sp);
    }

    #[test]
    fn two_by_two_opposite_corners_has_exactly_two_simple_paths() {
        let g = tiny_graph();
        // nodes: 0 1 / 2 3; the two 2-edge paths 0→3.
        let (routes, complete) = generate_candidates(&g, 0, 3, 2, 0.4, 62, 77).unwrap();
        assert!(complete);
        assert_eq!(routes.len(), 2);
        let mut sets: Vec<Vec<u32>> = routes
            .iter()
            .map(|r| {
                let mut s = r.edge_ids.clone();
                s.sort_unstable();
                s
            })
            .collect();
        sets.sort();
        assert_eq!(sets[0].len(), 2);
        assert_eq!(sets[1].len(), 2);
        assert_ne!(sets[0], sets[1]);
        // asking for more than exist returns all found with the flag cleared
        let (routes3, complete3) = generate_candidates(&g, 0, 3, 5, 0.4, 62, 77).unwrap();
        assert!(!complete3);
        assert_eq!(routes3.len(), 2);
    }

    #[test]
    fn generated_paths_are_simple_and_connect_endpoints() {
        let g = build_grid_graph(8, 8, 21).unwrap();
        let (routes, _) = generate_candidates(&g, 2, 61, 10, 0.4, 62, 13).unwrap();
        for r in &routes {
            // connects origin to destination
            let mut node = 2u32;
            let mut visited = std::collections::BTreeSet::from([node]);
            for &e in &r.edge_ids {
                node = g.opposite(e, node);
                assert!(visited.insert(node), "path revisits node {node}");
            }
            assert_eq!(node, 61);
            // edge set unique
            let set: BTreeSet<u32> = r.edge_ids.iter().copied().collect();
            assert_eq!(set.len(), r.edge_ids.len());
        }
    }

    #[test]
    fn choice_is_deterministic_and_respects_single_feature_weight() {
        let g = build_grid_graph(6, 6, 3).unwrap();
        let (routes, _) = generate_candidates(&g, 0, 35, 6, 0.5, 62, 4).unwrap();
        let mut w = vec![0.0; 62];
        w[0] = -1.0; // ETA only
        let idx = simulate_choice(&routes, &w, 0.0, 123).unwrap();
        let fastest = (0..routes.len())
            .min_by(|&a, &b| routes[a].features[0].total_cmp(&routes[b].features[0]))
            .unwrap();
        assert_eq!(idx, fastest);
        // same seed twice → identical choice, even with noise
        let a = simulate_choice(&routes, &w, 0.7, 99).unwrap();
        let b = simulate_choice(&routes, &w, 0.7, 99).unwrap();
        assert_eq!(a, b);
        // single candidate → index 0
        assert_eq!(simulate_choice(&routes[..1], &w, 1.0, 5).unwrap(), 0);
    }

    #[test]
    fn zero_deviation_trajectory_equals_chosen_edge_set() {
        let g = build_grid_graph(6, 6, 3).unwrap();
        let (routes, _) = generate_candidates(&g, 0, 35, 3, 0.4, 62, 4).unwrap();
        let u = derive_trajectory(&g, &routes[0], 0.0, 7);
        let mut expected: Vec<u32> = routes[0].edge_ids.clone();
        expected.sort_unstable();
        assert_eq!(u, expected);
        assert_eq!(coverage_rate(&routes[0].edge_ids, &u).unwrap(), 1.0);
    }

    #[test]
    fn half_deviation_on_four_edges_retains_exactly_two() {
        let g = build_grid_graph(6, 6, 3).unwrap();
        // find a 4-edge candidate
        let (routes, _) = generate_candidates(&g, 0, 14, 8, 0.5, 62, 8).unwrap();
        let four = routes
            .iter()
            .find(|r| r.edge_ids.len() == 4)
            .expect("a 4-edge route exists");
        let u = derive_trajectory(&g, four, 0.5, 31);
        assert!(!u.is_empty());
        let orig: BTreeSet<u32> = four.edge_ids.iter().copied().collect();
        let us: BTreeSet<u32> = u.iter().copied().collect();
        let retained = orig.intersection(&us).count();
        assert_eq!(retained, 2);
        let cr = coverage_rate(&four.edge_ids, &u).unwrap();
        let union = orig.union(&us).count() as f64;
        assert!((cr - retained as f64 / union).abs() < 1e-15);
        assert!(cr < 1.0);
    }

    #[test]
    fn noise_zero_keeps_dataset_unchanged_and_one_forces_all() {
        let cfg = GenConfig {
            samples: 40,
            width: 6,
            height: 6,
            candidates: 5,
            history_len: 2,
            deviation: 0.0,
            ..GenConfig::default()
        };
        let graph = build_grid_graph(cfg.width, cfg.height, cfg.seed).unwrap();
        let baseline = generate_dataset(&cfg).unwrap();

        let mut untouched = baseline.clone();
        inject_noise(&mut untouched, &graph, 0.0, cfg.deviation, 5).unwrap();
        assert_eq!(untouched, baseline);

        let mut forced = baseline.clone();
        inject_noise(&mut forced, &graph, 1.0, cfg.deviation, 5).unwrap();
        for (a, b) in forced.iter().zip(&baseline) {
            assert!(a.is_noisy);
            assert_ne!(a.gt_index, b.gt_index, "sample {}", a.sample_id);
        }
    }

    #[test]
    fn corrupted_fraction_concentrates_near_beta_true() {
        let cfg = GenConfig {
            samples: 10_000,
            width: 4,
            height: 4,
            candidates: 3,
            history_len: 0,
            deviation: 0.0,
            gumbel_scale: 0.0,
            ..GenConfig::default()
        };
        let graph = build_grid_graph(cfg.width, cfg.height, cfg.seed).unwrap();
        let mut samples = generate_dataset(&cfg).unwrap();
        inject_noise(&mut samples, &graph, 0.3, 0.0, 99).unwrap();
        let frac = samples.iter().filter(|s| s.is_noisy).count() as f64 / samples.len() as f64;
        assert!((frac - 0.3).abs() <= 0.02, "corrupted fraction {frac}");
    }

    #[test]
    fn gt_has_max_cr_with_low_index_ties_and_unique_full_coverage() {
        let cfg = GenConfig {
            samples: 30,
            width: 8,
            height: 8,
            candidates: 6,
            history_len: 1,
            deviation: 0.0,
            noise: 0.0,
            ..GenConfig::default()
        };
        let samples = generate_dataset(&cfg).unwrap();
        for s in &samples {
            let max = s.cr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s.cr[s.gt_index], max);
            assert!(s.cr.iter().take(s.gt_index).all(|&c| c < max));
            let full = s.cr.iter().filter(|&&c| c == 1.0).count();
            assert_eq!(full, 1, "exactly one candidate covers the trajectory");
        }
    }

    #[test]
    fn dataset_generation_is_reproducible() {
        let cfg = GenConfig {
            samples: 12,
            width: 6,
            height: 6,
            candidates: 4,
            history_len: 2,
            noise: 0.2,
            ..GenConfig::default()
        };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
