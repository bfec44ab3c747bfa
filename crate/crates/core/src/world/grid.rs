//! Grid road network with seeded edge attributes.

use rand::Rng;

use super::WorldError;
use crate::util::seeded_rng;

/// An undirected road segment between grid nodes `a` and `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeAttr {
    pub a: u32,
    pub b: u32,
    /// Base travel time in seconds.
    pub travel_time: f64,
    /// Length in meters.
    pub length: f64,
    pub toll: bool,
    pub light: bool,
}

/// A `width × height` lattice. Node id is `y * width + x`; edge ids follow
/// a fixed enumeration (per node: right neighbor, then down neighbor), so
/// they are stable for a given `(width, height, seed)`.
#[derive(Clone, Debug)]
pub struct RoadGraph {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<EdgeAttr>,
    adjacency: Vec<Vec<(u32, u32)>>,
}

impl RoadGraph {
    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn edge(&self, id: u32) -> &EdgeAttr {
        &self.edges[id as usize]
    }

    /// `(edge_id, neighbor_node)` pairs incident to `node`.
    pub fn neighbors(&self, node: u32) -> &[(u32, u32)] {
        &self.adjacency[node as usize]
    }

    pub fn node_xy(&self, node: u32) -> (usize, usize) {
        (node as usize % self.width, node as usize / self.width)
    }

    /// Other endpoint of `edge` as seen from `node`.
    pub fn opposite(&self, edge: u32, node: u32) -> u32 {
        let e = self.edge(edge);
        if e.a == node {
            e.b
        } else {
            e.a
        }
    }

    /// Nodes reachable from `start` (test oracle and sanity checks).
    pub fn reachable_count(&self, start: u32) -> usize {
        let mut seen = vec![false; self.node_count()];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start as usize] = true;
        let mut count = 1;
        while let Some(n) = queue.pop_front() {
            for &(_, next) in self.neighbors(n) {
                if !seen[next as usize] {
                    seen[next as usize] = true;
                    count += 1;
                    queue.push_back(next);
                }
            }
        }
        count
    }

    /// Cheapest path from `origin` to `destination` under per-edge weights,
    /// returned as an ordered edge-id list. Ties pop in node-id order so the
    /// result is deterministic.
    pub fn shortest_path<W: Fn(u32) -> f64>(
        &self,
        origin: u32,
        destination: u32,
        weight: W,
    ) -> Option<Vec<u32>> {
        let n = self.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent: Vec<Option<(u32, u32)>> = vec![None; n]; // (edge, prev node)
        let mut heap = std::collections::BinaryHeap::new();
        dist[origin as usize] = 0.0;
        heap.push(HeapItem {
            cost: 0.0,
            node: origin,
        });
        while let Some(HeapItem { cost, node }) = heap.pop() {
            if cost > dist[node as usize] {
                continue;
            }
            if node == destination {
                break;
            }
            for &(edge, next) in self.neighbors(node) {
                let c = cost + weight(edge);
                if c < dist[next as usize] {
                    dist[next as usize] = c;
                    parent[next as usize] = Some((edge, node));
                    heap.push(HeapItem { cost: c, node: next });
                }
            }
        }
        if dist[destination as usize].is_infinite() {
            return None;
        }
        let mut path = Vec::new();
        let mut cur = destination;
        while cur != origin {
            let (edge, prev) = parent[cur as usize]?;
            path.push(edge);
            cur = prev;
        }
        path.reverse();
        Some(path)
    }
}

struct HeapItem {
    cost: f64,
    node: u32,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.node == other.node
    }
}
impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on cost, then node id.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Build the lattice with seeded per-edge attributes. Deterministic for a
/// given `(width, height, seed)`; every node reaches every node.
pub fn build_grid_graph(width: usize, height: usize, seed: u64) -> Result<RoadGraph, WorldError> {
    if width < 2 || height < 2 {
        return Err(WorldError::Config(format!(
            "grid must be at least 2x2, got {width}x{height}"
        )));
    }
    let mut rng = seeded_rng(seed, 0xB00C);
    let mut edges = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let node = (y * width + x) as u32;
            if x + 1 < width {
                edges.push(random_edge(&mut rng, node, node + 1));
            }
            if y + 1 < height {
                edges.push(random_edge(&mut rng, node, node + width as u32));
            }
        }
    }
    let mut adjacency = vec![Vec::new(); width * height];
    for (id, e) in edges.iter().enumerate() {
        adjacency[e.a as usize].push((id as u32, e.b));
        adjacency[e.b as usize].push((id as u32, e.a));
    }
    Ok(RoadGraph {
        width,
        height,
        edges,
        adjacency,
    })
}

fn random_edge(rng: &mut impl Rng, a: u32, b: u32) -> EdgeAttr {
    let length = 80.0 + 160.0 * rng.random::<f64>();
    // Road class sets the base speed in m/s.
    let speed = match rng.random_range(0..3u8) {
        0 => 8.3,
        1 => 13.9,
        _ => 16.7,
    };
    let travel_time = length / speed * (0.9 + 0.3 * rng.random::<f64>());
    EdgeAttr {
        a,
        b,
        travel_time,
        length,
        toll: rng.random::<f64>() < 0.15,
        light: rng.random::<f64>() < 0.30,
    }
}
