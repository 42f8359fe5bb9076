//! Ant-colony benchmarks: heuristic-augmented ant routing, evaporating
//! pheromone updates, and proactive-ant maintenance during physical routing.

use rand::Rng;

use crate::error::{Result, SimError};
use crate::rng::SimRng;
use crate::router::{
    fill_link_utilities, normalize, sample_index, transmit, LinkUtility, NeighborQueues, RoutePolicy,
};
use crate::scheduling::GreedyScheduler;
use crate::spbp::{Commodities, PhaseTotals};
use crate::topology::{fill_link_rates, BiasTable, NetworkInstance};
use crate::traffic::{poisson, Flow, TrafficConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcoVariant {
    /// Constant deposit per link crossing; pheromones frozen afterwards.
    Baseline,
    /// Inverse-latency deposit on arrival; maintained by proactive ants.
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcoParams {
    pub evaporation: f64,
    /// Constant deposit per crossing for the baseline variant.
    pub deposit: f64,
    pub initial: f64,
    /// Probability that a proactive ant picks a uniformly random next hop.
    pub exploration: f64,
    /// Data packets per proactive ant.
    pub packets_per_ant: u64,
    /// Ants are dropped after `ttl_factor * |V|` hops.
    pub ttl_factor: usize,
}

impl Default for AcoParams {
    fn default() -> Self {
        AcoParams {
            evaporation: 0.002,
            deposit: 0.01,
            initial: 1.3,
            exploration: 0.10,
            packets_per_ant: 100,
            ttl_factor: 4,
        }
    }
}

/// Pheromones and heuristics per (directed link, commodity).
#[derive(Debug, Clone, PartialEq)]
pub struct AcoPheromoneState {
    commodities: Commodities,
    rho: Vec<f64>,
    heuristic: Vec<f64>,
    pub params: AcoParams,
}

/// One pheromone deposit for the end-of-step update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deposit {
    pub directed: usize,
    pub commodity_index: usize,
    pub amount: f64,
}

impl AcoPheromoneState {
    pub fn new(
        net: &NetworkInstance,
        biases: &BiasTable,
        commodities: Commodities,
        params: AcoParams,
    ) -> Self {
        assert!((0.0..1.0).contains(&params.evaporation), "evaporation in [0, 1)");
        let c = commodities.len();
        let d = net.directed_link_count();
        let mut heuristic = vec![0.0; d * c];
        for dl in 0..d {
            let (i, j) = net.endpoints(dl);
            for (k, &cm) in commodities.ids().iter().enumerate() {
                heuristic[dl * c + k] = biases.get(i, cm) - biases.get(j, cm);
            }
        }
        AcoPheromoneState { commodities, rho: vec![params.initial; d * c], heuristic, params }
    }

    pub fn commodities(&self) -> &Commodities {
        &self.commodities
    }

    /// Pheromone on a directed link for a commodity node id (zero when the
    /// commodity carries no traffic).
    pub fn rho(&self, directed: usize, commodity: usize) -> f64 {
        self.commodities
            .index(commodity)
            .map_or(0.0, |k| self.rho[directed * self.commodities.len() + k])
    }

    pub fn heuristic(&self, directed: usize, commodity: usize) -> f64 {
        self.commodities
            .index(commodity)
            .map_or(0.0, |k| self.heuristic[directed * self.commodities.len() + k])
    }

    pub fn set_rho(&mut self, directed: usize, commodity: usize, value: f64) {
        let k = self.commodities.index(commodity).expect("commodity carries traffic");
        let c = self.commodities.len();
        self.rho[directed * c + k] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    /// Evaporates every entry, then adds the step's deposits.
    pub fn update(&mut self, deposits: &[Deposit]) {
        let keep = 1.0 - self.params.evaporation;
        self.rho.iter_mut().for_each(|r| *r *= keep);
        let c = self.commodities.len();
        for dep in deposits {
            self.rho[dep.directed * c + dep.commodity_index] += dep.amount;
        }
    }

    /// The heuristic-augmented view used to route ants.
    pub fn ant_policy(&self) -> AntPolicy<'_> {
        AntPolicy(self)
    }
}

pub fn pheromone_update(state: &mut AcoPheromoneState, deposits: &[Deposit]) {
    state.update(deposits);
}

/// Ant routing weights `max(rho + h, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct AntPolicy<'a>(&'a AcoPheromoneState);

impl RoutePolicy for AntPolicy<'_> {
    fn weights(&self, net: &NetworkInstance, node: usize, commodity: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(net.neighbors(node).iter().map(|nb| {
            let d = net.directed(nb.link, node);
            (self.0.rho(d, commodity) + self.0.heuristic(d, commodity)).max(0.0)
        }));
    }
}

/// Ant routing probabilities at `node` for `commodity`, in neighbour order;
/// uniform when every clamped numerator is zero.
pub fn aco_route_probability(
    net: &NetworkInstance,
    node: usize,
    commodity: usize,
    state: &AcoPheromoneState,
) -> Vec<f64> {
    let mut w = Vec::new();
    state.ant_policy().weights(net, node, commodity, &mut w);
    normalize(&mut w);
    w
}

/// Removes cycles from a node walk: whenever a node reappears, everything
/// after its first visit is dropped.
pub fn excise_loops(walk: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(walk.len());
    for &v in walk {
        if let Some(k) = out.iter().position(|&x| x == v) {
            out.truncate(k + 1);
        } else {
            out.push(v);
        }
    }
    out
}

/// Inverse-latency deposits along the loop-free version of `walk`.
pub fn latency_deposits(
    net: &NetworkInstance,
    walk: &[usize],
    commodity_index: usize,
    latency: u64,
    out: &mut Vec<Deposit>,
) {
    debug_assert!(latency >= 1);
    let amount = 1.0 / latency as f64;
    for pair in excise_loops(walk).windows(2) {
        let link = net.link_between(pair[0], pair[1]).expect("ant walks follow links");
        out.push(Deposit { directed: net.directed(link, pair[0]), commodity_index, amount });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntPacket {
    pub commodity: usize,
    pub commodity_index: usize,
    pub emitted_at: u64,
    /// Nodes visited so far, starting at the source.
    pub walk: Vec<usize>,
}

impl AntPacket {
    pub fn current_node(&self) -> usize {
        *self.walk.last().expect("walk starts at the source")
    }

    pub fn hops(&self) -> usize {
        self.walk.len() - 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AntTotals {
    pub emitted: u64,
    pub arrived: u64,
    pub expired: u64,
    pub in_flight: u64,
}

impl AntTotals {
    pub fn conserved(&self) -> bool {
        self.emitted == self.arrived + self.expired + self.in_flight
    }

    pub fn as_phase(&self) -> PhaseTotals {
        PhaseTotals {
            injected: self.emitted,
            delivered: self.arrived + self.expired,
            queued: self.in_flight,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VirtualAcoOutcome {
    pub state: AcoPheromoneState,
    pub totals: AntTotals,
}

/// Virtual ant-colony routing. Ants are generated by the virtual flows,
/// queue in per-neighbour FIFOs, and move under the same Max-Weight
/// scheduling as data packets.
#[allow(clippy::too_many_arguments)]
pub fn run_virtual_aco(
    net: &NetworkInstance,
    virtual_flows: &[Flow],
    traffic: &TrafficConfig,
    steps: u64,
    biases: &BiasTable,
    variant: AcoVariant,
    params: AcoParams,
    rng: &mut SimRng,
) -> Result<VirtualAcoOutcome> {
    let commodities = Commodities::from_flows(net.node_count(), virtual_flows);
    let mut state = AcoPheromoneState::new(net, biases, commodities.clone(), params);
    let ttl = params.ttl_factor * net.node_count();

    let mut ants: Vec<AntPacket> = Vec::new();
    let mut queues = NeighborQueues::new(net);
    let mut scheduler = GreedyScheduler::new();
    let mut rates = Vec::new();
    let mut utilities: Vec<LinkUtility> = Vec::new();
    let mut weights = Vec::new();
    let mut deposits = Vec::new();
    let mut totals = AntTotals::default();

    for step in 0..steps {
        fill_link_rates(net, rng, &mut rates);

        let policy = state.ant_policy();
        queues.assign_all(net, |a| ants[a as usize].commodity, &policy, rng, |_| {
            unreachable!("ants are absorbed on arrival")
        });

        fill_link_utilities(net, &queues, &rates, &mut utilities);
        weights.clear();
        weights.extend(utilities.iter().map(|u| u.utility));
        let active = scheduler.run(&weights, net.conflict_adjacency());

        deposits.clear();
        let mut moved: Vec<(u32, usize, bool)> = Vec::new();
        transmit(net, active, &utilities, &mut queues, &rates, |a| ants[a as usize].commodity, |hop| {
            let ant = &ants[hop.packet as usize];
            let alive = hop.delivered || ant.hops() + 1 < ttl;
            moved.push((hop.packet, hop.directed, hop.delivered));
            alive
        });
        for (a, directed, delivered) in moved {
            let (_, j) = net.endpoints(directed);
            let ant = &mut ants[a as usize];
            ant.walk.push(j);
            if variant == AcoVariant::Baseline {
                deposits.push(Deposit {
                    directed,
                    commodity_index: ant.commodity_index,
                    amount: params.deposit,
                });
            }
            if delivered {
                totals.arrived += 1;
                if variant == AcoVariant::Ideal {
                    let latency = step - ant.emitted_at;
                    latency_deposits(net, &ant.walk, ant.commodity_index, latency, &mut deposits);
                }
            } else if ant.hops() >= ttl {
                totals.expired += 1;
            }
        }
        state.update(&deposits);

        for f in virtual_flows {
            let n = poisson(f.arrival_rate(step, traffic), rng);
            let k = commodities.index(f.destination).expect("flow commodity indexed");
            for _ in 0..n {
                let id = ants.len() as u32;
                ants.push(AntPacket {
                    commodity: f.destination,
                    commodity_index: k,
                    emitted_at: step,
                    walk: vec![f.source],
                });
                queues.enqueue(f.source, id);
                totals.emitted += 1;
            }
        }
        totals.in_flight = queues.total();
        if !totals.conserved() {
            return Err(SimError::Invariant(format!("ant conservation broken at step {step}: {totals:?}")));
        }
    }
    Ok(VirtualAcoOutcome { state, totals })
}

#[derive(Debug, Clone)]
struct ProactiveAnt {
    ant: AntPacket,
    /// Directed link the ant waits to cross.
    next: Option<usize>,
}

/// Proactive ants that keep Ant-Ideal pheromones fresh during physical
/// routing. Ants are control traffic: they cross one hop per slot whenever
/// the link they wait on is scheduled, without using data capacity.
#[derive(Debug, Clone)]
pub struct ProactiveAnts {
    injected: Vec<u64>,
    emitted: Vec<u64>,
    ants: Vec<ProactiveAnt>,
    ttl: usize,
    totals: AntTotals,
    deposits: Vec<Deposit>,
    weights: Vec<f64>,
}

impl ProactiveAnts {
    pub fn new(net: &NetworkInstance, flow_count: usize, params: &AcoParams) -> Self {
        ProactiveAnts {
            injected: vec![0; flow_count],
            emitted: vec![0; flow_count],
            ants: Vec::new(),
            ttl: params.ttl_factor * net.node_count(),
            totals: AntTotals::default(),
            deposits: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn totals(&self) -> AntTotals {
        self.totals
    }

    pub fn in_flight(&self) -> usize {
        self.ants.len()
    }

    /// Counts exogenous data arrivals and emits one ant per full block of
    /// `packets_per_ant` packets, cumulatively per flow. Returns the number
    /// of ants emitted.
    pub fn record_arrivals(
        &mut self,
        flow: &Flow,
        count: u32,
        slot: u64,
        state: &AcoPheromoneState,
    ) -> u64 {
        let f = flow.id;
        self.injected[f] += count as u64;
        let due = self.injected[f] / state.params.packets_per_ant;
        let k = state.commodities().index(flow.destination).expect("flow commodity indexed");
        let mut n = 0;
        while self.emitted[f] < due {
            self.emitted[f] += 1;
            self.ants.push(ProactiveAnt {
                ant: AntPacket {
                    commodity: flow.destination,
                    commodity_index: k,
                    emitted_at: slot,
                    walk: vec![flow.source],
                },
                next: None,
            });
            self.totals.emitted += 1;
            n += 1;
        }
        self.totals.in_flight = self.ants.len() as u64;
        n
    }

    /// Next-hop choice: uniform with probability `exploration`, otherwise the
    /// heuristic-augmented ant policy.
    fn choose(
        &mut self,
        net: &NetworkInstance,
        node: usize,
        commodity: usize,
        state: &AcoPheromoneState,
        rng: &mut SimRng,
    ) -> usize {
        let k = if rng.random_bool(state.params.exploration) {
            rng.random_range(0..net.degree(node))
        } else {
            state.ant_policy().weights(net, node, commodity, &mut self.weights);
            sample_index(&self.weights, rng)
        };
        net.directed(net.neighbors(node)[k].link, node)
    }

    /// Moves ants whose link is active this slot, deposits for arrivals, and
    /// applies the end-of-slot pheromone update.
    pub fn step(
        &mut self,
        net: &NetworkInstance,
        slot: u64,
        link_active: impl Fn(usize) -> bool,
        state: &mut AcoPheromoneState,
        rng: &mut SimRng,
    ) {
        let mut ants = std::mem::take(&mut self.ants);
        for pa in &mut ants {
            if pa.next.is_none() {
                let node = pa.ant.current_node();
                pa.next = Some(self.choose(net, node, pa.ant.commodity, state, rng));
            }
        }
        self.deposits.clear();
        ants.retain_mut(|pa| {
            let d = pa.next.expect("next hop chosen");
            if !link_active(d / 2) {
                return true;
            }
            let (_, j) = net.endpoints(d);
            pa.ant.walk.push(j);
            pa.next = None;
            if j == pa.ant.commodity {
                let latency = (slot - pa.ant.emitted_at).max(1);
                latency_deposits(net, &pa.ant.walk, pa.ant.commodity_index, latency, &mut self.deposits);
                self.totals.arrived += 1;
                false
            } else if pa.ant.hops() >= self.ttl {
                self.totals.expired += 1;
                false
            } else {
                true
            }
        });
        self.ants = ants;
        self.totals.in_flight = self.ants.len() as u64;
        state.update(&self.deposits);
    }
}
