//! Shortest-path-biased backpressure over per-commodity queues.
//!
//! The same per-step machinery drives two things: virtual routing, where
//! queues are plain counters and the packets moved over each directed link
//! are tallied into a [`CountTable`], and the physical SP-BP benchmark, where
//! queues hold real packets.

use std::collections::VecDeque;

use crate::error::{Result, SimError};
use crate::rng::SimRng;
use crate::scheduling::GreedyScheduler;
use crate::topology::{fill_link_rates, BiasTable, NetworkInstance};
use crate::traffic::{poisson, Flow, TrafficConfig};

/// Default pheromone floor.
pub const DEFAULT_PHEROMONE_FLOOR: f64 = 1e-6;

/// The set of commodities that carry traffic, with a dense index for each.
///
/// Commodities without flows still take part in commodity selection through
/// their biases; their queues are always empty, so they are not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commodities {
    ids: Vec<usize>,
    index_of: Vec<Option<usize>>,
}

impl Commodities {
    pub fn from_flows(node_count: usize, flows: &[Flow]) -> Self {
        let mut ids: Vec<usize> = flows.iter().map(|f| f.destination).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut index_of = vec![None; node_count];
        for (k, &c) in ids.iter().enumerate() {
            index_of[c] = Some(k);
        }
        Commodities { ids, index_of }
    }

    /// Commodities from explicit node ids.
    pub fn from_ids(node_count: usize, mut ids: Vec<usize>) -> Result<Self> {
        ids.sort_unstable();
        ids.dedup();
        let mut index_of = vec![None; node_count];
        for (k, &c) in ids.iter().enumerate() {
            if c >= node_count {
                return Err(SimError::Config(format!("commodity {c} is not a node")));
            }
            index_of[c] = Some(k);
        }
        Ok(Commodities { ids, index_of })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Commodity node ids, ascending.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn index(&self, commodity: usize) -> Option<usize> {
        self.index_of.get(commodity).copied().flatten()
    }

    pub fn node_count(&self) -> usize {
        self.index_of.len()
    }
}

/// Per-(node, commodity) queue lengths that backpressure reads and moves.
pub trait CommodityQueues {
    fn len(&self, node: usize, commodity_index: usize) -> u64;
}

/// Virtual per-commodity queue lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueueState {
    commodities: Commodities,
    lengths: Vec<u64>,
    pub step: u64,
}

impl VirtualQueueState {
    pub fn new(commodities: Commodities) -> Self {
        let lengths = vec![0; commodities.node_count() * commodities.len()];
        VirtualQueueState { commodities, lengths, step: 0 }
    }

    pub fn commodities(&self) -> &Commodities {
        &self.commodities
    }

    /// Queue length of `commodity` (a node id) at `node`; zero for commodities
    /// without traffic.
    pub fn length_of(&self, node: usize, commodity: usize) -> u64 {
        self.commodities
            .index(commodity)
            .map_or(0, |k| self.lengths[node * self.commodities.len() + k])
    }

    pub fn set(&mut self, node: usize, commodity: usize, value: u64) {
        let k = self.commodities.index(commodity).expect("commodity carries traffic");
        let c = self.commodities.len();
        self.lengths[node * c + k] = value;
    }

    pub fn total(&self) -> u64 {
        self.lengths.iter().sum()
    }

    fn slot_mut(&mut self, node: usize, k: usize) -> &mut u64 {
        let c = self.commodities.len();
        &mut self.lengths[node * c + k]
    }
}

impl CommodityQueues for VirtualQueueState {
    fn len(&self, node: usize, k: usize) -> u64 {
        self.lengths[node * self.commodities.len() + k]
    }
}

/// Packets of each commodity moved over each directed link.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    commodities: Commodities,
    counts: Vec<f64>,
    pub evaporation: f64,
}

impl CountTable {
    pub fn new(net: &NetworkInstance, commodities: Commodities, evaporation: f64) -> Self {
        assert!((0.0..1.0).contains(&evaporation), "count evaporation in [0, 1)");
        let counts = vec![0.0; net.directed_link_count() * commodities.len()];
        CountTable { commodities, counts, evaporation }
    }

    pub fn commodities(&self) -> &Commodities {
        &self.commodities
    }

    /// Count for a directed link and commodity node id.
    pub fn get(&self, directed: usize, commodity: usize) -> f64 {
        self.commodities
            .index(commodity)
            .map_or(0.0, |k| self.counts[directed * self.commodities.len() + k])
    }

    pub fn set(&mut self, directed: usize, commodity: usize, value: f64) {
        let k = self.commodities.index(commodity).expect("commodity carries traffic");
        let c = self.commodities.len();
        self.counts[directed * c + k] = value;
    }

    pub fn directed_link_count(&self) -> usize {
        if self.commodities.is_empty() {
            0
        } else {
            self.counts.len() / self.commodities.len()
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.counts
    }

    fn decay(&mut self) {
        if self.evaporation > 0.0 {
            let keep = 1.0 - self.evaporation;
            self.counts.iter_mut().for_each(|n| *n *= keep);
        }
    }

    fn add(&mut self, directed: usize, k: usize, amount: f64) {
        let c = self.commodities.len();
        self.counts[directed * c + k] += amount;
    }
}

/// Pheromone intensities per (directed link, commodity).
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneTable {
    commodities: Commodities,
    values: Vec<f64>,
    pub floor: f64,
}

impl PheromoneTable {
    pub fn from_parts(commodities: Commodities, values: Vec<f64>, floor: f64) -> Result<Self> {
        if !commodities.is_empty() && !values.len().is_multiple_of(commodities.len()) {
            return Err(SimError::Config("pheromone values do not match commodities".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= floor) || !v.is_finite()) {
            return Err(SimError::Config(format!("pheromone {v} below floor {floor}")));
        }
        Ok(PheromoneTable { commodities, values, floor })
    }

    pub fn commodities(&self) -> &Commodities {
        &self.commodities
    }

    /// Intensity for a directed link and commodity node id. Commodities that
    /// never carried traffic sit at the floor.
    pub fn get(&self, directed: usize, commodity: usize) -> f64 {
        self.commodities
            .index(commodity)
            .map_or(self.floor, |k| self.values[directed * self.commodities.len() + k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn pheromone_from_counts(
    net: &NetworkInstance,
    counts: &CountTable,
    floor: f64,
) -> PheromoneTable {
    assert!(floor > 0.0, "pheromone floor must be positive");
    let c = counts.commodities.len();
    let mut values = vec![0.0; counts.counts.len()];
    for d in 0..net.directed_link_count() {
        let r = NetworkInstance::reverse(d);
        for k in 0..c {
            let diff = counts.counts[d * c + k] - counts.counts[r * c + k];
            values[d * c + k] = diff.max(0.0) + floor;
        }
    }
    PheromoneTable { commodities: counts.commodities.clone(), values, floor }
}

/// Backpressure-maximizing commodity on `i -> j` by a scan over every node as
/// commodity. Returns the commodity and its clamped differential.
pub fn select_commodity(
    i: usize,
    j: usize,
    state: &VirtualQueueState,
    biases: &BiasTable,
) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for c in 0..biases.node_count() {
        let eta_i = state.length_of(i, c) as f64 + biases.get(i, c);
        let eta_j = state.length_of(j, c) as f64 + biases.get(j, c);
        let diff = eta_i - eta_j;
        if diff > best.1 {
            best = (c, diff);
        }
    }
    (best.0, best.1.max(0.0))
}

/// One scheduled backpressure transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub directed: usize,
    pub commodity_index: usize,
    /// min(queue, rate)
    pub count: u64,
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    commodity: usize,
    index: Option<usize>,
    differential: f64,
}

/// Precomputed per-network state for backpressure steps.
#[derive(Debug, Clone)]
pub struct SpbpPlanner {
    commodities: Commodities,
    /// Best differential among commodities without traffic, per directed link.
    idle_best: Vec<Option<(usize, f64)>>,
    scheduler: GreedyScheduler,
    utilities: Vec<f64>,
    senders: Vec<(usize, Choice)>,
    transfers: Vec<Transfer>,
}

impl SpbpPlanner {
    pub fn new(net: &NetworkInstance, biases: &BiasTable, commodities: Commodities) -> Self {
        let n = net.node_count();
        let idle: Vec<usize> = (0..n).filter(|&c| commodities.index(c).is_none()).collect();
        let idle_best = (0..net.directed_link_count())
            .map(|d| {
                let (i, j) = net.endpoints(d);
                let mut best: Option<(usize, f64)> = None;
                for &c in &idle {
                    let diff = (0.0 + biases.get(i, c)) - (0.0 + biases.get(j, c));
                    if best.is_none_or(|(_, b)| diff > b) {
                        best = Some((c, diff));
                    }
                }
                best
            })
            .collect();
        SpbpPlanner {
            commodities,
            idle_best,
            scheduler: GreedyScheduler::new(),
            utilities: Vec::new(),
            senders: Vec::new(),
            transfers: Vec::new(),
        }
    }

    pub fn commodities(&self) -> &Commodities {
        &self.commodities
    }

    fn choose<Q: CommodityQueues>(
        &self,
        net: &NetworkInstance,
        biases: &BiasTable,
        queues: &Q,
        directed: usize,
    ) -> Choice {
        let (i, j) = net.endpoints(directed);
        let mut best = Choice { commodity: usize::MAX, index: None, differential: f64::NEG_INFINITY };
        let better = |c: usize, diff: f64, best: &Choice| {
            diff > best.differential || (diff == best.differential && c < best.commodity)
        };
        for (k, &c) in self.commodities.ids.iter().enumerate() {
            let eta_i = queues.len(i, k) as f64 + biases.get(i, c);
            let eta_j = queues.len(j, k) as f64 + biases.get(j, c);
            let diff = eta_i - eta_j;
            if better(c, diff, &best) {
                best = Choice { commodity: c, index: Some(k), differential: diff };
            }
        }
        if let Some((c, diff)) = self.idle_best[directed] {
            if better(c, diff, &best) {
                best = Choice { commodity: c, index: None, differential: diff };
            }
        }
        best
    }

    /// Commodity selection, link weighting, scheduling and transfer sizing
    /// for one step, all read from the queue state before any move.
    pub fn plan<Q: CommodityQueues>(
        &mut self,
        net: &NetworkInstance,
        biases: &BiasTable,
        queues: &Q,
        rates: &[u32],
    ) -> &[Transfer] {
        let m = net.link_count();
        self.utilities.clear();
        self.senders.clear();
        for e in 0..m {
            let forward = self.choose(net, biases, queues, 2 * e);
            let backward = self.choose(net, biases, queues, 2 * e + 1);
            let w_f = forward.differential.max(0.0);
            let w_b = backward.differential.max(0.0);
            // Ties go to the smaller node id, which is the forward sender.
            let (d, choice, w) = if w_b > w_f { (2 * e + 1, backward, w_b) } else { (2 * e, forward, w_f) };
            let sender = net.endpoints(d).0;
            let nonempty = choice.index.is_some_and(|k| queues.len(sender, k) > 0);
            let weight = if nonempty { w } else { 0.0 };
            self.utilities.push(rates[e] as f64 * weight);
            self.senders.push((d, choice));
        }

        self.transfers.clear();
        let active = self.scheduler.run(&self.utilities, net.conflict_adjacency());
        for &e in active {
            let (d, choice) = self.senders[e];
            let k = choice.index.expect("scheduled links carry a commodity with traffic");
            let sender = net.endpoints(d).0;
            let count = queues.len(sender, k).min(rates[e] as u64);
            self.transfers.push(Transfer { directed: d, commodity_index: k, count });
        }
        self.transfers.sort_unstable_by_key(|t| t.directed);
        &self.transfers
    }

    /// Per-link utilities of the last planned step.
    pub fn last_utilities(&self) -> &[f64] {
        &self.utilities
    }
}

/// Totals for conservation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTotals {
    pub injected: u64,
    pub delivered: u64,
    pub queued: u64,
}

impl PhaseTotals {
    pub fn conserved(&self) -> bool {
        self.injected == self.delivered + self.queued
    }
}

/// One virtual step: plan on the current state, move counters, accumulate
/// counts, then add exogenous arrivals (`arrivals[k]` per flow in
/// `flows` order).
#[allow(clippy::too_many_arguments)]
pub fn spbp_step(
    planner: &mut SpbpPlanner,
    net: &NetworkInstance,
    biases: &BiasTable,
    state: &mut VirtualQueueState,
    rates: &[u32],
    counts: &mut CountTable,
    flows: &[Flow],
    arrivals: &[u32],
    totals: &mut PhaseTotals,
) -> Result<()> {
    let transfers = planner.plan(net, biases, state, rates).to_vec();
    counts.decay();
    for t in &transfers {
        let (i, j) = net.endpoints(t.directed);
        let q_i = state.slot_mut(i, t.commodity_index);
        if *q_i < t.count {
            return Err(SimError::Invariant(format!(
                "virtual queue at node {i} would go negative (len {}, moving {})",
                q_i, t.count
            )));
        }
        *q_i -= t.count;
        if planner.commodities.ids[t.commodity_index] == j {
            totals.delivered += t.count;
        } else {
            *state.slot_mut(j, t.commodity_index) += t.count;
        }
        counts.add(t.directed, t.commodity_index, t.count as f64);
    }
    for (flow, &a) in flows.iter().zip(arrivals) {
        if a > 0 {
            let k = planner.commodities.index(flow.destination).expect("flow commodity indexed");
            *state.slot_mut(flow.source, k) += a as u64;
            totals.injected += a as u64;
        }
    }
    state.step += 1;
    totals.queued = state.total();
    Ok(())
}

/// Result of a virtual backpressure phase.
#[derive(Debug, Clone)]
pub struct VirtualSpbpOutcome {
    pub counts: CountTable,
    pub state: VirtualQueueState,
    pub totals: PhaseTotals,
}

/// Runs `steps` virtual SP-BP steps with fresh rate samples and Poisson
/// arrivals drawn from `rng`. Bursty virtual flows use the cutoff in
/// virtual time.
#[allow(clippy::too_many_arguments)]
pub fn run_virtual_spbp(
    net: &NetworkInstance,
    virtual_flows: &[Flow],
    traffic: &TrafficConfig,
    steps: u64,
    biases: &BiasTable,
    count_evaporation: f64,
    rng: &mut SimRng,
) -> Result<VirtualSpbpOutcome> {
    let commodities = Commodities::from_flows(net.node_count(), virtual_flows);
    let mut planner = SpbpPlanner::new(net, biases, commodities.clone());
    let mut state = VirtualQueueState::new(commodities.clone());
    let mut counts = CountTable::new(net, commodities, count_evaporation);
    let mut totals = PhaseTotals::default();
    let mut rates = Vec::with_capacity(net.link_count());
    let mut arrivals = vec![0u32; virtual_flows.len()];

    for step in 0..steps {
        fill_link_rates(net, rng, &mut rates);
        for (a, f) in arrivals.iter_mut().zip(virtual_flows) {
            *a = poisson(f.arrival_rate(step, traffic), rng);
        }
        spbp_step(
            &mut planner,
            net,
            biases,
            &mut state,
            &rates,
            &mut counts,
            virtual_flows,
            &arrivals,
            &mut totals,
        )?;
        if !totals.conserved() {
            return Err(SimError::Invariant(format!(
                "virtual conservation broken at step {step}: {totals:?}"
            )));
        }
    }
    Ok(VirtualSpbpOutcome { counts, state, totals })
}

/// Physical per-commodity FIFO queues holding packet ids, used by the SP-BP
/// benchmark.
#[derive(Debug, Clone)]
pub struct PacketCommodityQueues {
    commodities: Commodities,
    queues: Vec<VecDeque<u32>>,
    buffer: Vec<(usize, u32)>,
}

impl PacketCommodityQueues {
    pub fn new(commodities: Commodities) -> Self {
        let queues = vec![VecDeque::new(); commodities.node_count() * commodities.len()];
        PacketCommodityQueues { commodities, queues, buffer: Vec::new() }
    }

    pub fn push(&mut self, node: usize, commodity: usize, packet: u32) {
        let k = self.commodities.index(commodity).expect("commodity carries traffic");
        let c = self.commodities.len();
        self.queues[node * c + k].push_back(packet);
    }

    pub fn total(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    pub fn queue(&self, node: usize, commodity: usize) -> Option<&VecDeque<u32>> {
        let k = self.commodities.index(commodity)?;
        Some(&self.queues[node * self.commodities.len() + k])
    }

    /// Applies transfers; each moved packet is reported through `on_move`
    /// with its receiver and whether the receiver is its commodity. Packets
    /// that are not delivered join the receiver's queue after all transfers
    /// of the step have been taken from the senders.
    pub fn apply(
        &mut self,
        net: &NetworkInstance,
        transfers: &[Transfer],
        mut on_move: impl FnMut(u32, usize, bool),
    ) {
        let c = self.commodities.len();
        self.buffer.clear();
        for t in transfers {
            let (i, j) = net.endpoints(t.directed);
            let commodity = self.commodities.ids[t.commodity_index];
            let q = &mut self.queues[i * c + t.commodity_index];
            debug_assert!(q.len() as u64 >= t.count);
            for _ in 0..t.count {
                let p = q.pop_front().expect("transfer sized by queue length");
                let delivered = commodity == j;
                on_move(p, j, delivered);
                if !delivered {
                    self.buffer.push((j * c + t.commodity_index, p));
                }
            }
        }
        for &(slot, p) in &self.buffer {
            self.queues[slot].push_back(p);
        }
    }
}

impl CommodityQueues for PacketCommodityQueues {
    fn len(&self, node: usize, k: usize) -> u64 {
        self.queues[node * self.commodities.len() + k].len() as u64
    }
}
