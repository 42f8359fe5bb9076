//! Time-slotted simulator for wireless multi-hop networks comparing
//! pheromone routing established by virtual shortest-path-biased
//! backpressure (Ant-BP) against backpressure and ant-colony benchmarks.
//!
//! A scenario generates a random geometric network and a flow set, builds a
//! routing policy in a virtual phase, then runs physical slots of route
//! assignment, Max-Weight scheduling and transmission. See [`engine`] for the
//! entry points and [`experiments`] for the sweep harness.

pub mod aco;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod export;
pub mod metrics;
pub mod rng;
pub mod router;
pub mod scheduling;
pub mod spbp;
pub mod topology;
pub mod traffic;

pub use engine::{run_scenario, simulate, ScenarioConfig, Scheme};
pub use error::{Result, SimError};
pub use metrics::MetricsReport;
