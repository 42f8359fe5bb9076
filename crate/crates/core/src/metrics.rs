//! Per-class delivery and latency accounting, run reports and cross-run
//! aggregation.

use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::Scheme;
use crate::error::{Result, SimError};
use crate::router::Packet;
use crate::traffic::FlowKind;

pub const REPORT_CSV_HEADER: &str =
    "scheme,L_s,L_b,class,injected,delivered,delivery_ratio,mean_latency,throughput_mean,master_seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowClassStats {
    pub class: FlowKind,
    pub injected: u64,
    pub delivered: u64,
    /// Sum of per-packet latencies in slots.
    pub latency_sum: u64,
}

impl FlowClassStats {
    pub fn new(class: FlowKind) -> Self {
        FlowClassStats { class, injected: 0, delivered: 0, latency_sum: 0 }
    }

    /// Delivered over injected; 0/0 is reported as 1 with the flag set.
    pub fn delivery_ratio(&self) -> (f64, bool) {
        if self.injected == 0 {
            (1.0, true)
        } else {
            (self.delivered as f64 / self.injected as f64, false)
        }
    }

    pub fn mean_latency(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.latency_sum as f64 / self.delivered as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FlowCounts {
    pub injected: u64,
    pub delivered: u64,
}

/// Accumulates the events of one physical phase.
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    classes: [FlowClassStats; 2],
    per_flow: Vec<FlowCounts>,
    throughput: Vec<u64>,
}

impl MetricsCollector {
    pub fn new(flow_count: usize, slots: u64) -> Self {
        MetricsCollector {
            classes: [FlowClassStats::new(FlowKind::Streaming), FlowClassStats::new(FlowKind::Bursty)],
            per_flow: vec![FlowCounts::default(); flow_count],
            throughput: vec![0; slots as usize],
        }
    }

    pub fn record_injection(&mut self, flow: usize, kind: FlowKind, count: u64) {
        self.classes[kind.index()].injected += count;
        self.per_flow[flow].injected += count;
    }

    /// Marks `packet` delivered at `slot` and accounts its latency.
    pub fn record_delivery(&mut self, packet: &mut Packet, slot: u64) -> Result<()> {
        if let Some(earlier) = packet.delivered_at {
            return Err(SimError::Invariant(format!(
                "packet of flow {} delivered twice (slots {earlier} and {slot})",
                packet.flow
            )));
        }
        if slot < packet.created_at {
            return Err(SimError::Invariant("delivery before creation".into()));
        }
        packet.delivered_at = Some(slot);
        let stats = &mut self.classes[packet.kind.index()];
        stats.delivered += 1;
        stats.latency_sum += slot - packet.created_at;
        self.per_flow[packet.flow as usize].delivered += 1;
        if let Some(t) = self.throughput.get_mut(slot as usize) {
            *t += 1;
        }
        Ok(())
    }

    pub fn class(&self, kind: FlowKind) -> &FlowClassStats {
        &self.classes[kind.index()]
    }

    pub fn injected(&self) -> u64 {
        self.classes.iter().map(|c| c.injected).sum()
    }

    pub fn delivered(&self) -> u64 {
        self.classes.iter().map(|c| c.delivered).sum()
    }

    pub fn finish(self, meta: RunMetadata) -> MetricsReport {
        MetricsReport { meta, classes: self.classes, per_flow: self.per_flow, throughput: self.throughput }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub scheme: Scheme,
    pub streaming_load: f64,
    pub bursty_load: f64,
    pub master_seed: u64,
    pub config_hash: String,
    pub slots: u64,
    /// Packets still queued when the horizon ends.
    pub queued_at_end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub meta: RunMetadata,
    pub classes: [FlowClassStats; 2],
    pub per_flow: Vec<FlowCounts>,
    /// Delivered packets per slot.
    pub throughput: Vec<u64>,
}

impl MetricsReport {
    pub fn class(&self, kind: FlowKind) -> &FlowClassStats {
        &self.classes[kind.index()]
    }

    pub fn delivery_ratio(&self, kind: FlowKind) -> f64 {
        self.class(kind).delivery_ratio().0
    }

    pub fn mean_latency(&self, kind: FlowKind) -> Option<f64> {
        self.class(kind).mean_latency()
    }

    pub fn total_delivered(&self) -> u64 {
        self.throughput.iter().sum()
    }

    pub fn total_injected(&self) -> u64 {
        self.classes.iter().map(|c| c.injected).sum()
    }

    pub fn throughput_mean(&self) -> f64 {
        self.total_delivered() as f64 / self.meta.slots as f64
    }

    /// One CSV row per flow class, without header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for stats in &self.classes {
            let (ratio, _) = stats.delivery_ratio();
            let latency = stats.mean_latency().map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.meta.scheme,
                self.meta.streaming_load,
                self.meta.bursty_load,
                stats.class.as_str(),
                stats.injected,
                stats.delivered,
                ratio,
                latency,
                self.throughput_mean(),
                self.meta.master_seed
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_CSV_HEADER}\n{}", self.csv_rows())
    }

    pub fn throughput_csv(&self) -> String {
        let mut out = String::from("slot,delivered\n");
        for (t, d) in self.throughput.iter().enumerate() {
            let _ = writeln!(out, "{t},{d}");
        }
        out
    }
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std_error = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Some(Estimate { mean, std_error, samples: xs.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: FlowKind,
    pub delivery_ratio: Estimate,
    /// Over runs that delivered at least one packet of the class.
    pub latency: Option<Estimate>,
    /// Runs in which the class injected nothing.
    pub undefined_ratio_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: Scheme,
    pub streaming_load: f64,
    pub bursty_load: f64,
    pub runs: usize,
    pub classes: Vec<ClassSummary>,
    pub throughput: Estimate,
}

impl Summary {
    pub fn class(&self, kind: FlowKind) -> &ClassSummary {
        self.classes.iter().find(|c| c.class == kind).expect("both classes summarized")
    }
}

/// Unweighted mean and standard error of per-run figures across runs that
/// share scheme and load point.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Summary> {
    let first = reports.first().ok_or(SimError::Empty("no reports to aggregate"))?;
    let meta = &first.meta;
    if let Some(r) = reports.iter().find(|r| {
        r.meta.scheme != meta.scheme
            || r.meta.streaming_load != meta.streaming_load
            || r.meta.bursty_load != meta.bursty_load
    }) {
        return Err(SimError::Config(format!(
            "cannot aggregate {}@({}, {}) with {}@({}, {})",
            meta.scheme,
            meta.streaming_load,
            meta.bursty_load,
            r.meta.scheme,
            r.meta.streaming_load,
            r.meta.bursty_load
        )));
    }

    let classes = FlowKind::ALL
        .iter()
        .map(|&kind| {
            let ratios: Vec<f64> = reports.iter().map(|r| r.delivery_ratio(kind)).collect();
            let latencies: Vec<f64> = reports.iter().filter_map(|r| r.mean_latency(kind)).collect();
            ClassSummary {
                class: kind,
                delivery_ratio: Estimate::from_samples(&ratios).expect("non-empty"),
                latency: Estimate::from_samples(&latencies),
                undefined_ratio_runs: reports.iter().filter(|r| r.class(kind).delivery_ratio().1).count(),
            }
        })
        .collect();
    let throughput: Vec<f64> = reports.iter().map(|r| r.throughput_mean()).collect();
    Ok(Summary {
        scheme: meta.scheme,
        streaming_load: meta.streaming_load,
        bursty_load: meta.bursty_load,
        runs: reports.len(),
        classes,
        throughput: Estimate::from_samples(&throughput).expect("non-empty"),
    })
}
