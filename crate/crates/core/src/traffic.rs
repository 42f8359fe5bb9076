//! Flow sets, per-slot Poisson arrivals, and virtual-flow configurations.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::SimRng;

pub const BASE_RATE_MIN: f64 = 0.2;
pub const BASE_RATE_MAX: f64 = 1.0;
pub const DEFAULT_BURSTY_CUTOFF: u64 = 30;
pub const DEFAULT_BURSTY_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Streaming,
    Bursty,
}

impl FlowKind {
    pub const ALL: [FlowKind; 2] = [FlowKind::Streaming, FlowKind::Bursty];

    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::Streaming => "streaming",
            FlowKind::Bursty => "bursty",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: usize,
    pub source: usize,
    pub destination: usize,
    pub kind: FlowKind,
    /// Per-flow rate multiplier, fixed for the whole run.
    pub base_rate: f64,
}

impl Flow {
    /// Poisson mean of the arrivals at `slot` under `config`.
    pub fn arrival_rate(&self, slot: u64, config: &TrafficConfig) -> f64 {
        match self.kind {
            FlowKind::Streaming => config.streaming_load * self.base_rate,
            FlowKind::Bursty if slot < config.bursty_cutoff => {
                config.bursty_load * self.base_rate
            }
            FlowKind::Bursty => 0.0,
        }
    }
}

pub type FlowSet = Vec<Flow>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub streaming_load: f64,
    pub bursty_load: f64,
    pub bursty_cutoff: u64,
    pub bursty_probability: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            streaming_load: 2.0,
            bursty_load: 0.5,
            bursty_cutoff: DEFAULT_BURSTY_CUTOFF,
            bursty_probability: DEFAULT_BURSTY_PROBABILITY,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        let load_ok = |x: f64| x >= 0.0 && x.is_finite();
        if !load_ok(self.streaming_load) || !load_ok(self.bursty_load) {
            return Err(SimError::Config("traffic loads must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.bursty_probability) {
            return Err(SimError::Config("bursty_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Same cutoff and mix with different loads.
    pub fn with_loads(&self, streaming_load: f64, bursty_load: f64) -> Self {
        TrafficConfig { streaming_load, bursty_load, ..*self }
    }
}

/// Inclusive bounds on the number of flows for a network of `nodes` nodes.
pub fn flow_count_bounds(nodes: usize) -> (usize, usize) {
    let lo = (0.30 * nodes as f64).floor() as usize;
    let hi = (0.50 * nodes as f64).ceil() as usize;
    (lo.max(1), hi.max(1))
}

pub fn generate_flows(node_count: usize, config: &TrafficConfig, rng: &mut SimRng) -> FlowSet {
    assert!(node_count >= 2, "flows need at least two nodes");
    let (lo, hi) = flow_count_bounds(node_count);
    let count = rng.random_range(lo..=hi);
    (0..count)
        .map(|id| {
            let source = rng.random_range(0..node_count);
            let mut destination = rng.random_range(0..node_count - 1);
            if destination >= source {
                destination += 1;
            }
            let kind = if rng.random_bool(config.bursty_probability) {
                FlowKind::Bursty
            } else {
                FlowKind::Streaming
            };
            let base_rate = rng.random_range(BASE_RATE_MIN..BASE_RATE_MAX);
            Flow { id, source, destination, kind, base_rate }
        })
        .collect()
}

/// Draws a Poisson count with mean `rate`; zero for a zero rate.
pub fn poisson(rate: f64, rng: &mut SimRng) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(rate).expect("positive finite rate");
    dist.sample(rng) as u32
}

pub fn sample_arrivals(flow: &Flow, slot: u64, config: &TrafficConfig, rng: &mut SimRng) -> u32 {
    poisson(flow.arrival_rate(slot, config), rng)
}

/// Arrival matrix indexed `[slot][flow]`, one draw per flow per slot in flow
/// order so that the matrix depends only on flows, config and stream.
pub fn arrival_matrix(
    flows: &[Flow],
    config: &TrafficConfig,
    slots: u64,
    rng: &mut SimRng,
) -> Vec<Vec<u32>> {
    (0..slots)
        .map(|t| flows.iter().map(|f| sample_arrivals(f, t, config, rng)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VirtualMode {
    /// Every virtual flow streams at the virtual streaming load.
    AllStreaming,
    /// Virtual flows copy the physical kind and rate.
    Mirror,
}

/// Virtual counterparts of physical flows: same endpoints and base rate,
/// kind set by `mode`. Arrival rates come from the virtual traffic config.
pub fn derive_virtual_flows(flows: &[Flow], mode: VirtualMode) -> FlowSet {
    flows
        .iter()
        .map(|f| Flow {
            kind: match mode {
                VirtualMode::AllStreaming => FlowKind::Streaming,
                VirtualMode::Mirror => f.kind,
            },
            ..*f
        })
        .collect()
}
