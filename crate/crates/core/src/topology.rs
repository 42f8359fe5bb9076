//! Random geometric wireless networks, interface conflict graphs, link-rate
//! sampling and shortest-path biases.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::{self, SimRng};

/// Long-term link rates are drawn uniformly from this range.
pub const RATE_MIN: f64 = 10.0;
pub const RATE_MAX: f64 = 42.0;
/// Standard deviation of the per-slot rate fluctuation.
pub const RATE_STD: f64 = 3.0;
/// Per-slot rates stay within this many packets of the rounded long-term rate.
pub const RATE_SPREAD: i64 = 9;

pub const DEFAULT_RETRY_CAP: usize = 1000;

/// Density used throughout the experiments: eight neighbours per unit disk
/// before boundary effects.
pub fn default_density() -> f64 {
    8.0 / std::f64::consts::PI
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub link: usize,
}

/// A static wireless network. Node and link indices follow generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    seed: u64,
    side: f64,
    positions: Vec<[f64; 2]>,
    links: Vec<(usize, usize)>,
    long_term_rates: Vec<f64>,
    conflict: Vec<Vec<usize>>,
    neighbors: Vec<Vec<Neighbor>>,
}

/// On-disk form of a [`NetworkInstance`]. The conflict graph is derived on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub seed: u64,
    pub side: f64,
    pub positions: Vec<[f64; 2]>,
    pub links: Vec<[usize; 2]>,
    pub long_term_rates: Vec<f64>,
}

impl NetworkInstance {
    /// Builds an instance from explicit parts. Links are stored with the
    /// smaller endpoint first; the conflict graph is the line graph.
    pub fn from_parts(
        positions: Vec<[f64; 2]>,
        links: Vec<(usize, usize)>,
        long_term_rates: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let n = positions.len();
        if n < 2 {
            return Err(SimError::Config("a network needs at least two nodes".into()));
        }
        if links.len() != long_term_rates.len() {
            return Err(SimError::Config(format!(
                "{} links but {} rates",
                links.len(),
                long_term_rates.len()
            )));
        }
        let mut normalized = Vec::with_capacity(links.len());
        for &(a, b) in &links {
            if a >= n || b >= n || a == b {
                return Err(SimError::Config(format!("bad link ({a}, {b})")));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        {
            let mut sorted = normalized.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != normalized.len() {
                return Err(SimError::Config("duplicate link".into()));
            }
        }
        if let Some(r) = long_term_rates.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(SimError::Config(format!("link rate {r} is not positive")));
        }

        let mut neighbors = vec![Vec::new(); n];
        for (e, &(a, b)) in normalized.iter().enumerate() {
            neighbors[a].push(Neighbor { node: b, link: e });
            neighbors[b].push(Neighbor { node: a, link: e });
        }
        for list in &mut neighbors {
            list.sort_by_key(|nb| nb.node);
        }

        let mut conflict = vec![Vec::new(); normalized.len()];
        for list in &neighbors {
            for (x, nx) in list.iter().enumerate() {
                for ny in &list[x + 1..] {
                    conflict[nx.link].push(ny.link);
                    conflict[ny.link].push(nx.link);
                }
            }
        }
        for adj in &mut conflict {
            adj.sort_unstable();
        }

        let side = positions
            .iter()
            .flat_map(|p| p.iter().copied())
            .fold(0.0f64, f64::max);

        let net = NetworkInstance {
            seed,
            side,
            positions,
            links: normalized,
            long_term_rates,
            conflict,
            neighbors,
        };
        if !net.is_connected() {
            return Err(SimError::Config("connectivity graph is not connected".into()));
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn long_term_rates(&self) -> &[f64] {
        &self.long_term_rates
    }

    /// Conflict-graph adjacency over link indices.
    pub fn conflict_adjacency(&self) -> &[Vec<usize>] {
        &self.conflict
    }

    /// Neighbours of `node`, sorted by node id.
    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Number of directed links (two per undirected link).
    pub fn directed_link_count(&self) -> usize {
        2 * self.links.len()
    }

    /// Directed link id for transmissions from `from` over `link`.
    pub fn directed(&self, link: usize, from: usize) -> usize {
        let (a, b) = self.links[link];
        debug_assert!(from == a || from == b);
        if from == a {
            2 * link
        } else {
            2 * link + 1
        }
    }

    /// (sender, receiver) of a directed link.
    pub fn endpoints(&self, directed: usize) -> (usize, usize) {
        let (a, b) = self.links[directed / 2];
        if directed.is_multiple_of(2) {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// The opposite direction of a directed link.
    pub fn reverse(directed: usize) -> usize {
        directed ^ 1
    }

    /// Link index between `i` and `j`, if they are neighbours.
    pub fn link_between(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors[i]
            .binary_search_by_key(&j, |nb| nb.node)
            .ok()
            .map(|k| self.neighbors[i][k].link)
    }

    pub fn is_connected(&self) -> bool {
        connected(self.node_count(), &self.neighbors)
    }

    /// Mean degree of the conflict graph.
    pub fn mean_conflict_degree(&self) -> f64 {
        if self.conflict.is_empty() {
            return 0.0;
        }
        let total: usize = self.conflict.iter().map(Vec::len).sum();
        total as f64 / self.conflict.len() as f64
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            seed: self.seed,
            side: self.side,
            positions: self.positions.clone(),
            links: self.links.iter().map(|&(a, b)| [a, b]).collect(),
            long_term_rates: self.long_term_rates.clone(),
        }
    }

    pub fn from_file(file: NetworkFile) -> Result<Self> {
        let links = file.links.iter().map(|l| (l[0], l[1])).collect();
        let mut net = Self::from_parts(file.positions, links, file.long_term_rates, file.seed)?;
        net.side = file.side;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        Self::from_file(file)
    }
}

fn connected(n: usize, neighbors: &[Vec<Neighbor>]) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for nb in &neighbors[u] {
            if !seen[nb.node] {
                seen[nb.node] = true;
                count += 1;
                queue.push_back(nb.node);
            }
        }
    }
    count == n
}

/// Side length of the square holding `node_count` points at `density`.
pub fn square_side(node_count: usize, density: f64) -> f64 {
    (node_count as f64 / density).sqrt()
}

/// Generates a connected random geometric network with the default retry cap.
pub fn generate_network(node_count: usize, density: f64, seed: u64) -> Result<NetworkInstance> {
    generate_network_with_cap(node_count, density, seed, DEFAULT_RETRY_CAP)
}

/// Places points uniformly in a square of area `node_count / density`, links
/// pairs within unit distance, and resamples every position until the
/// connectivity graph is connected. Long-term rates are drawn once the
/// layout is accepted.
pub fn generate_network_with_cap(
    node_count: usize,
    density: f64,
    seed: u64,
    retry_cap: usize,
) -> Result<NetworkInstance> {
    if node_count < 2 {
        return Err(SimError::Config("node_count must be at least 2".into()));
    }
    if !(density > 0.0) || !density.is_finite() {
        return Err(SimError::Config(format!("density must be positive, got {density}")));
    }
    let side = square_side(node_count, density);
    let mut rng = rng::stream(seed, rng::TOPOLOGY);

    for _ in 0..retry_cap {
        let positions: Vec<[f64; 2]> = (0..node_count)
            .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
            .collect();
        let links = unit_disk_links(&positions);

        let mut neighbors = vec![Vec::new(); node_count];
        for (e, &(a, b)) in links.iter().enumerate() {
            neighbors[a].push(Neighbor { node: b, link: e });
            neighbors[b].push(Neighbor { node: a, link: e });
        }
        if !connected(node_count, &neighbors) {
            continue;
        }

        let rates = (0..links.len())
            .map(|_| rng.random_range(RATE_MIN..=RATE_MAX))
            .collect();
        let mut net = NetworkInstance::from_parts(positions, links, rates, seed)?;
        net.side = side;
        return Ok(net);
    }
    Err(SimError::Generation {
        attempts: retry_cap,
        reason: format!(
            "no connected layout for {node_count} nodes at density {density}; parameters infeasible"
        ),
    })
}

fn unit_disk_links(positions: &[[f64; 2]]) -> Vec<(usize, usize)> {
    let mut links = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            if dx * dx + dy * dy <= 1.0 {
                links.push((i, j));
            }
        }
    }
    links
}

/// Real-time link rates for one slot, one value per undirected link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateSample {
    pub slot: u64,
    pub rates: Vec<u32>,
}

/// Rounds a raw normal draw and clamps it into the admissible band around
/// the rounded long-term rate, never below one packet.
pub fn truncate_rate(long_term: f64, raw: f64) -> u32 {
    let center = long_term.round() as i64;
    let lo = (center - RATE_SPREAD).max(1);
    let hi = (center + RATE_SPREAD).max(lo);
    (raw.round() as i64).clamp(lo, hi) as u32
}

pub fn sample_link_rates(net: &NetworkInstance, slot: u64, rng: &mut SimRng) -> RateSample {
    let mut rates = Vec::with_capacity(net.link_count());
    fill_link_rates(net, rng, &mut rates);
    RateSample { slot, rates }
}

/// Same draws as [`sample_link_rates`], written into a reusable buffer.
pub fn fill_link_rates(net: &NetworkInstance, rng: &mut SimRng, out: &mut Vec<u32>) {
    out.clear();
    for &r in &net.long_term_rates {
        let normal = Normal::new(r, RATE_STD).expect("finite rate");
        out.push(truncate_rate(r, normal.sample(rng)));
    }
}

/// Queue-agnostic shortest-path biases, one per (node, commodity).
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    node_count: usize,
    /// `bias[i * n + c]` is the weighted distance from `i` to `c`.
    bias: Vec<f64>,
    edge_weights: Vec<f64>,
}

impl BiasTable {
    #[inline]
    pub fn get(&self, node: usize, commodity: usize) -> f64 {
        self.bias[node * self.node_count + commodity]
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Builds a table from explicit values (row-major by node).
    pub fn from_values(node_count: usize, bias: Vec<f64>, edge_weights: Vec<f64>) -> Self {
        assert_eq!(bias.len(), node_count * node_count);
        BiasTable { node_count, bias, edge_weights }
    }
}

/// Link weights `mean_rate * max_rate / rate`.
pub fn bias_edge_weights(rates: &[f64]) -> Vec<f64> {
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let max = rates.iter().copied().fold(f64::MIN, f64::max);
    rates.iter().map(|&r| mean * max / r).collect()
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest paths by one Dijkstra run per commodity.
pub fn compute_biases(net: &NetworkInstance) -> Result<BiasTable> {
    let n = net.node_count();
    let weights = bias_edge_weights(net.long_term_rates());
    let mut bias = vec![0.0; n * n];
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();

    for c in 0..n {
        dist.fill(f64::INFINITY);
        dist[c] = 0.0;
        heap.push(HeapEntry { dist: 0.0, node: c });
        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for nb in net.neighbors(u) {
                let cand = d + weights[nb.link];
                if cand < dist[nb.node] {
                    dist[nb.node] = cand;
                    heap.push(HeapEntry { dist: cand, node: nb.node });
                }
            }
        }
        for (i, &d) in dist.iter().enumerate() {
            if !d.is_finite() {
                return Err(SimError::Invariant(format!(
                    "node {i} cannot reach commodity {c} in a connected network"
                )));
            }
            bias[i * n + c] = d;
        }
    }
    Ok(BiasTable { node_count: n, bias, edge_weights: weights })
}
