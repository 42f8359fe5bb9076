//! Per-neighbour FIFO queueing for pheromone-routed packets.
//!
//! At the start of a slot every packet waiting in a node's unassigned queue
//! picks an outgoing link at random from the routing policy. Links are then
//! weighted by their longer directional queue times the slot rate, scheduled,
//! and each active link drains its queue in FIFO order regardless of
//! commodity.

use std::collections::VecDeque;

use rand::Rng;

use crate::aco::AcoPheromoneState;
use crate::rng::SimRng;
use crate::spbp::PheromoneTable;
use crate::topology::NetworkInstance;
use crate::traffic::FlowKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow: u32,
    pub commodity: u32,
    pub kind: FlowKind,
    pub created_at: u64,
    pub delivered_at: Option<u64>,
}

/// Packets of a run, addressed by their index.
#[derive(Debug, Clone, Default)]
pub struct PacketArena {
    packets: Vec<Packet>,
}

impl PacketArena {
    pub fn push(&mut self, packet: Packet) -> u32 {
        let id = self.packets.len() as u32;
        self.packets.push(packet);
        id
    }

    pub fn get(&self, id: u32) -> &Packet {
        &self.packets[id as usize]
    }

    pub fn get_mut(&mut self, id: u32) -> &mut Packet {
        &mut self.packets[id as usize]
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter()
    }
}

/// Source of next-hop probabilities for route assignment.
pub trait RoutePolicy {
    /// Nonnegative weights over `node`'s neighbours (in neighbour order) for
    /// packets of `commodity`. All-zero weights mean uniform.
    fn weights(&self, net: &NetworkInstance, node: usize, commodity: usize, out: &mut Vec<f64>);
}

impl RoutePolicy for PheromoneTable {
    fn weights(&self, net: &NetworkInstance, node: usize, commodity: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            net.neighbors(node)
                .iter()
                .map(|nb| self.get(net.directed(nb.link, node), commodity)),
        );
    }
}

/// Live pheromones without the heuristic term.
impl RoutePolicy for AcoPheromoneState {
    fn weights(&self, net: &NetworkInstance, node: usize, commodity: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            net.neighbors(node)
                .iter()
                .map(|nb| self.rho(net.directed(nb.link, node), commodity)),
        );
    }
}

/// Probability vector over neighbours: weights normalized by their sum.
pub fn route_probabilities(
    policy: &impl RoutePolicy,
    net: &NetworkInstance,
    node: usize,
    commodity: usize,
) -> Vec<f64> {
    let mut w = Vec::new();
    policy.weights(net, node, commodity, &mut w);
    normalize(&mut w);
    w
}

pub(crate) fn normalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|x| *x = u);
    }
}

/// Samples an index from unnormalized nonnegative weights (uniform if all zero).
pub(crate) fn sample_index(weights: &[f64], rng: &mut SimRng) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return rng.random_range(0..weights.len());
    }
    let mut x = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if x < w {
            return k;
        }
        x -= w;
    }
    // Rounding left a sliver past the last bucket.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Unassigned queue per node plus one FIFO per directed link.
#[derive(Debug, Clone)]
pub struct NeighborQueues {
    unassigned: Vec<VecDeque<u32>>,
    outgoing: Vec<VecDeque<u32>>,
    inbox: Vec<(usize, u32)>,
    weights: Vec<f64>,
}

impl NeighborQueues {
    pub fn new(net: &NetworkInstance) -> Self {
        NeighborQueues {
            unassigned: vec![VecDeque::new(); net.node_count()],
            outgoing: vec![VecDeque::new(); net.directed_link_count()],
            inbox: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Appends a packet to `node`'s unassigned queue.
    pub fn enqueue(&mut self, node: usize, packet: u32) {
        self.unassigned[node].push_back(packet);
    }

    pub fn unassigned(&self, node: usize) -> &VecDeque<u32> {
        &self.unassigned[node]
    }

    pub fn outgoing(&self, directed: usize) -> &VecDeque<u32> {
        &self.outgoing[directed]
    }

    /// q_ij for a directed link.
    pub fn len(&self, directed: usize) -> usize {
        self.outgoing[directed].len()
    }

    pub fn total(&self) -> u64 {
        self.unassigned.iter().chain(&self.outgoing).map(|q| q.len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Moves every packet waiting at `node` onto an outgoing queue, sampled
    /// independently per packet. Packets whose commodity is `node` are
    /// handed to `on_delivered` instead.
    pub fn assign_routes(
        &mut self,
        net: &NetworkInstance,
        node: usize,
        commodity_of: impl Fn(u32) -> usize,
        policy: &impl RoutePolicy,
        rng: &mut SimRng,
        mut on_delivered: impl FnMut(u32),
    ) {
        let mut pending = std::mem::take(&mut self.unassigned[node]);
        let mut cached: Option<usize> = None;
        for p in pending.drain(..) {
            let c = commodity_of(p);
            if c == node {
                on_delivered(p);
                continue;
            }
            if cached != Some(c) {
                policy.weights(net, node, c, &mut self.weights);
                cached = Some(c);
            }
            let k = sample_index(&self.weights, rng);
            let nb = net.neighbors(node)[k];
            self.outgoing[net.directed(nb.link, node)].push_back(p);
        }
        // Keep the allocation.
        self.unassigned[node] = pending;
    }

    pub fn assign_all(
        &mut self,
        net: &NetworkInstance,
        commodity_of: impl Fn(u32) -> usize,
        policy: &impl RoutePolicy,
        rng: &mut SimRng,
        mut on_delivered: impl FnMut(u32),
    ) {
        for node in 0..net.node_count() {
            self.assign_routes(net, node, &commodity_of, policy, rng, &mut on_delivered);
        }
    }

    fn take_front(&mut self, directed: usize, count: usize) -> impl Iterator<Item = u32> + '_ {
        self.outgoing[directed].drain(..count)
    }
}

/// Link weight and transmission direction for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkUtility {
    pub utility: f64,
    /// Directed link chosen by the larger queue.
    pub directed: usize,
}

/// `max(q_ij, q_ji) * R_ij`, with the direction of the larger queue; on a
/// tie the smaller node id sends.
pub fn link_utilities(net: &NetworkInstance, queues: &NeighborQueues, rates: &[u32]) -> Vec<LinkUtility> {
    let mut out = Vec::with_capacity(net.link_count());
    fill_link_utilities(net, queues, rates, &mut out);
    out
}

pub fn fill_link_utilities(
    net: &NetworkInstance,
    queues: &NeighborQueues,
    rates: &[u32],
    out: &mut Vec<LinkUtility>,
) {
    out.clear();
    for e in 0..net.link_count() {
        let forward = queues.len(2 * e);
        let backward = queues.len(2 * e + 1);
        let (directed, q) = if backward > forward { (2 * e + 1, backward) } else { (2 * e, forward) };
        out.push(LinkUtility { utility: q as f64 * rates[e] as f64, directed });
    }
}

/// One packet crossing a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub packet: u32,
    pub directed: usize,
    pub delivered: bool,
}

/// Transmits `min(q_ij, R_ij)` packets in FIFO order on every active link.
/// Every hop is reported to `on_hop`; undelivered packets for which it returns
/// `true` join the receiver's unassigned queue after all senders have been
/// drained, the others leave the network.
pub fn transmit(
    net: &NetworkInstance,
    active: &[usize],
    directions: &[LinkUtility],
    queues: &mut NeighborQueues,
    rates: &[u32],
    commodity_of: impl Fn(u32) -> usize,
    mut on_hop: impl FnMut(Hop) -> bool,
) {
    let mut inbox = std::mem::take(&mut queues.inbox);
    inbox.clear();
    for &e in active {
        let d = directions[e].directed;
        let (_, j) = net.endpoints(d);
        let count = queues.len(d).min(rates[e] as usize);
        for p in queues.take_front(d, count) {
            let delivered = commodity_of(p) == j;
            let keep = on_hop(Hop { packet: p, directed: d, delivered });
            if !delivered && keep {
                inbox.push((j, p));
            }
        }
    }
    for &(j, p) in &inbox {
        queues.unassigned[j].push_back(p);
    }
    queues.inbox = inbox;
}
