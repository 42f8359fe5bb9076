//! Scenario orchestration: instance generation, policy establishment and
//! the physical slot loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aco::{run_virtual_aco, AcoParams, AcoPheromoneState, AcoVariant, ProactiveAnts};
use crate::error::{Result, SimError};
use crate::metrics::{MetricsCollector, MetricsReport, RunMetadata};
use crate::rng::{self, SimRng};
use crate::router::{fill_link_utilities, transmit, NeighborQueues, Packet, PacketArena, RoutePolicy};
use crate::scheduling::GreedyScheduler;
use crate::spbp::{
    pheromone_from_counts, run_virtual_spbp, Commodities, CountTable, PacketCommodityQueues,
    PhaseTotals, PheromoneTable, SpbpPlanner, DEFAULT_PHEROMONE_FLOOR,
};
use crate::topology::{
    compute_biases, default_density, fill_link_rates, generate_network_with_cap, BiasTable,
    NetworkInstance, DEFAULT_RETRY_CAP,
};
use crate::traffic::{
    arrival_matrix, derive_virtual_flows, generate_flows, Flow, FlowSet, TrafficConfig, VirtualMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AntBp,
    AntBpMirror,
    SpBp,
    AntBaseline,
    AntIdeal,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::AntBpMirror, Scheme::AntBp, Scheme::SpBp, Scheme::AntIdeal, Scheme::AntBaseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::AntBp => "ant_bp",
            Scheme::AntBpMirror => "ant_bp_mirror",
            Scheme::SpBp => "sp_bp",
            Scheme::AntBaseline => "ant_baseline",
            Scheme::AntIdeal => "ant_ideal",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| {
                SimError::Config(format!(
                    "unknown scheme `{s}` (expected one of ant_bp, ant_bp_mirror, sp_bp, ant_baseline, ant_ideal)"
                ))
            })
    }
}

/// Loads used to generate virtual traffic, when they differ from the
/// physical loads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualLoads {
    pub streaming: f64,
    pub bursty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub node_count: usize,
    pub density: f64,
    pub traffic: TrafficConfig,
    /// Virtual routing steps before the physical phase.
    pub virtual_steps: u64,
    /// Physical slots.
    pub slots: u64,
    pub seed: u64,
    pub virtual_loads: Option<VirtualLoads>,
    pub pheromone_floor: f64,
    pub count_evaporation: f64,
    pub retry_cap: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scheme: Scheme::SpBp,
            node_count: 100,
            density: default_density(),
            traffic: TrafficConfig::default(),
            virtual_steps: 1000,
            slots: 1000,
            seed: 1,
            virtual_loads: None,
            pheromone_floor: DEFAULT_PHEROMONE_FLOOR,
            count_evaporation: 0.0,
            retry_cap: DEFAULT_RETRY_CAP,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.virtual_steps < 1 || self.slots < 1 {
            return Err(SimError::Config("virtual_steps and slots must be at least 1".into()));
        }
        if self.node_count < 2 {
            return Err(SimError::Config("node_count must be at least 2".into()));
        }
        if !(self.pheromone_floor > 0.0) {
            return Err(SimError::Config("pheromone_floor must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.count_evaporation) {
            return Err(SimError::Config("count_evaporation must lie in [0, 1)".into()));
        }
        self.traffic.validate()
    }

    /// Traffic config for the virtual phase.
    pub fn virtual_traffic(&self) -> TrafficConfig {
        match self.virtual_loads {
            Some(v) => self.traffic.with_loads(v.streaming, v.bursty),
            None => self.traffic,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short content hash identifying the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Policy produced by the establishment phase.
#[derive(Debug, Clone)]
pub enum EstablishedPolicy {
    None,
    Pheromones { counts: CountTable, table: PheromoneTable },
    Aco { established: AcoPheromoneState },
}

/// Everything a scenario produced, for inspection beyond the report.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: MetricsReport,
    pub network: NetworkInstance,
    pub flows: FlowSet,
    /// `[slot][flow]` exogenous physical arrivals.
    pub arrivals: Vec<Vec<u32>>,
    pub virtual_totals: Option<PhaseTotals>,
    pub physical_totals: PhaseTotals,
    pub policy: EstablishedPolicy,
    /// Ant-Ideal pheromones at the end of the physical phase.
    pub final_aco: Option<AcoPheromoneState>,
}

/// Network, flows, biases and physical arrivals: the part of a scenario that
/// every scheme shares under one master seed.
#[derive(Debug, Clone)]
pub struct Instance {
    pub network: NetworkInstance,
    pub flows: FlowSet,
    pub biases: BiasTable,
}

impl Instance {
    pub fn generate(config: &ScenarioConfig) -> Result<Self> {
        let network =
            generate_network_with_cap(config.node_count, config.density, config.seed, config.retry_cap)?;
        let mut flow_rng = rng::stream(config.seed, rng::FLOWS);
        let flows = generate_flows(network.node_count(), &config.traffic, &mut flow_rng);
        let biases = compute_biases(&network)?;
        Ok(Instance { network, flows, biases })
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsReport> {
    simulate(config, None).map(|o| o.report)
}

/// Runs one scenario, optionally writing a per-slot JSON-lines trace.
pub fn simulate(config: &ScenarioConfig, trace: Option<&mut dyn Write>) -> Result<ScenarioOutcome> {
    config.validate()?;
    let instance = Instance::generate(config)?;
    simulate_instance(config, instance, trace)
}

pub fn simulate_instance(
    config: &ScenarioConfig,
    instance: Instance,
    trace: Option<&mut dyn Write>,
) -> Result<ScenarioOutcome> {
    config.validate()?;
    let Instance { network: net, flows, biases } = instance;
    let mut arrival_rng = rng::stream(config.seed, rng::PHYSICAL_ARRIVALS);
    let arrivals = arrival_matrix(&flows, &config.traffic, config.slots, &mut arrival_rng);

    let (policy, virtual_totals) = establish(config, &net, &flows, &biases)?;

    let meta = RunMetadata {
        scheme: config.scheme,
        streaming_load: config.traffic.streaming_load,
        bursty_load: config.traffic.bursty_load,
        master_seed: config.seed,
        config_hash: config.hash(),
        slots: config.slots,
        queued_at_end: 0,
    };

    let mut physical = Physical::new(config, &net, &flows, &arrivals, trace);
    let final_aco = match (&policy, config.scheme) {
        (EstablishedPolicy::None, _) => {
            physical.run_spbp(&biases)?;
            None
        }
        (EstablishedPolicy::Pheromones { table, .. }, _) => {
            physical.run_pheromone(table)?;
            None
        }
        (EstablishedPolicy::Aco { established }, Scheme::AntBaseline) => {
            physical.run_pheromone(established)?;
            None
        }
        (EstablishedPolicy::Aco { established }, _) => Some(physical.run_ant_ideal(established.clone())?),
    };

    let (metrics, queued) = physical.finish();
    let physical_totals = PhaseTotals { injected: metrics.injected(), delivered: metrics.delivered(), queued };
    if !physical_totals.conserved() {
        return Err(SimError::Invariant(format!("physical conservation broken: {physical_totals:?}")));
    }
    let report = metrics.finish(RunMetadata { queued_at_end: queued, ..meta });
    Ok(ScenarioOutcome {
        report,
        network: net,
        flows,
        arrivals,
        virtual_totals,
        physical_totals,
        policy,
        final_aco,
    })
}

fn establish(
    config: &ScenarioConfig,
    net: &NetworkInstance,
    flows: &[Flow],
    biases: &BiasTable,
) -> Result<(EstablishedPolicy, Option<PhaseTotals>)> {
    let mut rng = rng::stream(config.seed, rng::VIRTUAL_PHASE);
    let virtual_traffic = config.virtual_traffic();
    let k = config.virtual_steps;
    match config.scheme {
        Scheme::SpBp => Ok((EstablishedPolicy::None, None)),
        Scheme::AntBp | Scheme::AntBpMirror => {
            let mode = if config.scheme == Scheme::AntBp {
                VirtualMode::AllStreaming
            } else {
                VirtualMode::Mirror
            };
            let vflows = derive_virtual_flows(flows, mode);
            let out = run_virtual_spbp(net, &vflows, &virtual_traffic, k, biases, config.count_evaporation, &mut rng)?;
            let table = pheromone_from_counts(net, &out.counts, config.pheromone_floor);
            Ok((EstablishedPolicy::Pheromones { counts: out.counts, table }, Some(out.totals)))
        }
        Scheme::AntBaseline | Scheme::AntIdeal => {
            let variant = if config.scheme == Scheme::AntBaseline {
                AcoVariant::Baseline
            } else {
                AcoVariant::Ideal
            };
            let vflows = derive_virtual_flows(flows, VirtualMode::AllStreaming);
            let out = run_virtual_aco(net, &vflows, &virtual_traffic, k, biases, variant, AcoParams::default(), &mut rng)?;
            Ok((EstablishedPolicy::Aco { established: out.state }, Some(out.totals.as_phase())))
        }
    }
}

/// State of the physical phase shared by all schemes.
struct Physical<'a, 'w> {
    net: &'a NetworkInstance,
    flows: &'a [Flow],
    arrivals: &'a [Vec<u32>],
    slots: u64,
    packets: PacketArena,
    metrics: MetricsCollector,
    rates: Vec<u32>,
    rate_rng: SimRng,
    routing_rng: SimRng,
    exploration_rng: SimRng,
    scheduler: GreedyScheduler,
    trace: Option<&'w mut dyn Write>,
    queued: u64,
}

impl<'a, 'w> Physical<'a, 'w> {
    fn new(
        config: &ScenarioConfig,
        net: &'a NetworkInstance,
        flows: &'a [Flow],
        arrivals: &'a [Vec<u32>],
        trace: Option<&'w mut dyn Write>,
    ) -> Self {
        Physical {
            net,
            flows,
            arrivals,
            slots: config.slots,
            packets: PacketArena::default(),
            metrics: MetricsCollector::new(flows.len(), config.slots),
            rates: Vec::with_capacity(net.link_count()),
            rate_rng: rng::stream(config.seed, rng::PHYSICAL_RATES),
            routing_rng: rng::stream(config.seed, rng::ROUTING_CHOICES),
            exploration_rng: rng::stream(config.seed, rng::ANT_EXPLORATION),
            scheduler: GreedyScheduler::new(),
            trace,
            queued: 0,
        }
    }

    fn finish(self) -> (MetricsCollector, u64) {
        (self.metrics, self.queued)
    }

    /// Creates the slot's exogenous packets and hands each to `enqueue`.
    fn inject(&mut self, slot: u64, mut enqueue: impl FnMut(&Flow, u32)) {
        for (f, &count) in self.flows.iter().zip(&self.arrivals[slot as usize]) {
            if count == 0 {
                continue;
            }
            self.metrics.record_injection(f.id, f.kind, count as u64);
            for _ in 0..count {
                let id = self.packets.push(Packet {
                    flow: f.id as u32,
                    commodity: f.destination as u32,
                    kind: f.kind,
                    created_at: slot,
                    delivered_at: None,
                });
                enqueue(f, id);
            }
        }
    }

    fn write_trace(&mut self, slot: u64, moves: &[(usize, usize, u64)], queued: u64) -> Result<()> {
        if let Some(w) = self.trace.as_mut() {
            let line = serde_json::json!({
                "slot": slot,
                "transmissions": moves,
                "delivered": self.metrics.delivered(),
                "queued": queued,
            });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    fn check_conservation(&self, slot: u64, queued: u64) -> Result<()> {
        let injected = self.metrics.injected();
        let delivered = self.metrics.delivered();
        if injected != delivered + queued {
            return Err(SimError::Invariant(format!(
                "slot {slot}: injected {injected} != delivered {delivered} + queued {queued}"
            )));
        }
        Ok(())
    }

    /// Physical routing on live pheromones kept fresh by proactive ants.
    fn run_ant_ideal(&mut self, mut state: AcoPheromoneState) -> Result<AcoPheromoneState> {
        let net = self.net;
        let mut ants = ProactiveAnts::new(net, self.flows.len(), &state.params);
        let mut queues = NeighborQueues::new(net);
        let mut utilities = Vec::new();
        let mut weights = Vec::new();
        for slot in 0..self.slots {
            fill_link_rates(net, &mut self.rate_rng, &mut self.rates);
            let mut delivered_now = Vec::new();
            let packets = &self.packets;
            queues.assign_all(
                net,
                |p| packets.get(p).commodity as usize,
                &state,
                &mut self.routing_rng,
                |p| delivered_now.push(p),
            );
            let moves = self.schedule_and_transmit(&mut queues, &mut utilities, &mut weights, &mut delivered_now)?;
            for p in delivered_now {
                self.metrics.record_delivery(self.packets.get_mut(p), slot)?;
            }
            let scheduler = &self.scheduler;
            ants.step(net, slot, |e| scheduler.is_active(e), &mut state, &mut self.exploration_rng);

            let mut new = Vec::new();
            self.inject(slot, |f, id| new.push((f.source, id)));
            for (f, &count) in self.flows.iter().zip(&self.arrivals[slot as usize]) {
                if count > 0 {
                    ants.record_arrivals(f, count, slot, &state);
                }
            }
            for (src, id) in new {
                queues.enqueue(src, id);
            }
            let queued = queues.total();
            self.check_conservation(slot, queued)?;
            self.write_trace(slot, &moves, queued)?;
            self.queued = queued;
        }
        Ok(state)
    }

    /// Physical routing with a frozen pheromone policy over per-neighbour queues.
    fn run_pheromone(&mut self, policy: &impl RoutePolicy) -> Result<()> {
        let net = self.net;
        let mut queues = NeighborQueues::new(net);
        let mut utilities = Vec::new();
        let mut weights = Vec::new();
        for slot in 0..self.slots {
            fill_link_rates(net, &mut self.rate_rng, &mut self.rates);
            let mut delivered_now = Vec::new();
            let packets = &self.packets;
            queues.assign_all(
                net,
                |p| packets.get(p).commodity as usize,
                policy,
                &mut self.routing_rng,
                |p| delivered_now.push(p),
            );
            let moves = self.schedule_and_transmit(&mut queues, &mut utilities, &mut weights, &mut delivered_now)?;
            for p in delivered_now {
                self.metrics.record_delivery(self.packets.get_mut(p), slot)?;
            }
            let mut new = Vec::new();
            self.inject(slot, |f, id| new.push((f.source, id)));
            for (src, id) in new {
                queues.enqueue(src, id);
            }
            let queued = queues.total();
            self.check_conservation(slot, queued)?;
            self.write_trace(slot, &moves, queued)?;
            self.queued = queued;
        }
        Ok(())
    }

    /// Utilities, greedy schedule and FIFO transmission for one slot.
    /// Returns (sender, receiver, packets) per active link.
    fn schedule_and_transmit(
        &mut self,
        queues: &mut NeighborQueues,
        utilities: &mut Vec<crate::router::LinkUtility>,
        weights: &mut Vec<f64>,
        delivered: &mut Vec<u32>,
    ) -> Result<Vec<(usize, usize, u64)>> {
        let net = self.net;
        fill_link_utilities(net, queues, &self.rates, utilities);
        weights.clear();
        weights.extend(utilities.iter().map(|u| u.utility));
        let active = self.scheduler.run(weights, net.conflict_adjacency());
        let mut moves: Vec<(usize, usize, u64)> = Vec::with_capacity(active.len());
        let packets = &self.packets;
        transmit(net, active, utilities, queues, &self.rates, |p| packets.get(p).commodity as usize, |hop| {
            let (i, j) = net.endpoints(hop.directed);
            match moves.last_mut() {
                Some(m) if m.0 == i && m.1 == j => m.2 += 1,
                _ => moves.push((i, j, 1)),
            }
            if hop.delivered {
                delivered.push(hop.packet);
            }
            true
        });
        Ok(moves)
    }

    /// SP-BP directly on physical per-commodity queues.
    fn run_spbp(&mut self, biases: &BiasTable) -> Result<()> {
        let net = self.net;
        let commodities = Commodities::from_flows(net.node_count(), self.flows);
        let mut planner = SpbpPlanner::new(net, biases, commodities.clone());
        let mut queues = PacketCommodityQueues::new(commodities);
        for slot in 0..self.slots {
            fill_link_rates(net, &mut self.rate_rng, &mut self.rates);
            let transfers = planner.plan(net, biases, &queues, &self.rates);
            let mut delivered_now = Vec::new();
            queues.apply(net, transfers, |p, _, delivered| {
                if delivered {
                    delivered_now.push(p);
                }
            });
            let moves: Vec<(usize, usize, u64)> = transfers
                .iter()
                .filter(|t| t.count > 0)
                .map(|t| {
                    let (i, j) = net.endpoints(t.directed);
                    (i, j, t.count)
                })
                .collect();
            for p in delivered_now {
                self.metrics.record_delivery(self.packets.get_mut(p), slot)?;
            }
            let mut new = Vec::new();
            self.inject(slot, |f, id| new.push((f.source, f.destination, id)));
            for (src, dst, id) in new {
                queues.push(src, dst, id);
            }
            let queued = queues.total();
            self.check_conservation(slot, queued)?;
            self.write_trace(slot, &moves, queued)?;
            self.queued = queued;
        }
        Ok(())
    }
}
