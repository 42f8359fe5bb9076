//! Named, independently seeded random streams.
//!
//! Every stochastic phase of a scenario draws from its own stream, seeded by
//! hashing the master seed together with a label. Consuming more or fewer
//! draws in one phase therefore never shifts the draws seen by another, which
//! is what makes cross-scheme paired comparisons possible.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::SimError;

/// The generator used for every simulation stream.
pub type SimRng = ChaCha8Rng;

pub const TOPOLOGY: &str = "topology";
pub const FLOWS: &str = "flows";
pub const VIRTUAL_PHASE: &str = "virtual-phase";
pub const PHYSICAL_ARRIVALS: &str = "physical-arrivals";
pub const PHYSICAL_RATES: &str = "physical-rates";
pub const ROUTING_CHOICES: &str = "routing-choices";
pub const ANT_EXPLORATION: &str = "ant-exploration";

/// Labels of all streams a scenario uses.
pub const SCENARIO_STREAMS: [&str; 7] = [
    TOPOLOGY,
    FLOWS,
    VIRTUAL_PHASE,
    PHYSICAL_ARRIVALS,
    PHYSICAL_RATES,
    ROUTING_CHOICES,
    ANT_EXPLORATION,
];

/// Seed for the stream `label` under `master_seed`.
pub fn stream_seed(master_seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master_seed: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(stream_seed(master_seed, label))
}

/// Derives one stream per label. Labels must be distinct.
pub fn derive_rng_streams(
    master_seed: u64,
    labels: &[&str],
) -> Result<HashMap<String, SimRng>, SimError> {
    let mut out = HashMap::with_capacity(labels.len());
    for &label in labels {
        if out.insert(label.to_string(), stream(master_seed, label)).is_some() {
            return Err(SimError::Config(format!("duplicate rng stream label `{label}`")));
        }
    }
    Ok(out)
}
