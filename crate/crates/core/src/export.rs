//! Text formats for replaying and inspecting instances and routing tables.
//!
//! Instances (network plus flows) are JSON. Count and pheromone tables are
//! tab-separated, one row per (directed link, commodity), shown here with
//! spaces:
//!
//! ```text
//! # pheromone floor=0.000001
//! from  to  commodity  value
//! 0     1   7          12.000001
//! ```
//!
//! Lines starting with `#` carry metadata as `key=value` pairs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aco::AcoPheromoneState;
use crate::error::{Result, SimError};
use crate::spbp::{Commodities, CountTable, PheromoneTable};
use crate::topology::{NetworkFile, NetworkInstance};
use crate::traffic::{Flow, FlowSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub network: NetworkFile,
    pub flows: FlowSet,
}

pub fn instance_to_json(net: &NetworkInstance, flows: &[Flow]) -> String {
    let file = InstanceFile { network: net.to_file(), flows: flows.to_vec() };
    serde_json::to_string_pretty(&file).expect("instance serializes")
}

pub fn instance_from_json(text: &str) -> Result<(NetworkInstance, FlowSet)> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
    let net = NetworkInstance::from_file(file.network)?;
    for f in &file.flows {
        if f.source >= net.node_count() || f.destination >= net.node_count() || f.source == f.destination {
            return Err(SimError::Parse(format!("flow {} has invalid endpoints", f.id)));
        }
    }
    Ok((net, file.flows))
}

const TABLE_HEADER: &str = "from\tto\tcommodity\tvalue";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub from: usize,
    pub to: usize,
    pub commodity: usize,
    pub value: f64,
}

fn write_table(
    net: &NetworkInstance,
    commodities: &Commodities,
    title: &str,
    value: impl Fn(usize, usize) -> f64,
) -> String {
    let mut out = format!("# {title}\n{TABLE_HEADER}\n");
    for d in 0..net.directed_link_count() {
        let (i, j) = net.endpoints(d);
        for &c in commodities.ids() {
            let _ = writeln!(out, "{i}\t{j}\t{c}\t{}", value(d, c));
        }
    }
    out
}

pub fn counts_to_text(net: &NetworkInstance, counts: &CountTable) -> String {
    let title = format!("counts evaporation={}", counts.evaporation);
    write_table(net, counts.commodities(), &title, |d, c| counts.get(d, c))
}

pub fn pheromones_to_text(net: &NetworkInstance, table: &PheromoneTable) -> String {
    let title = format!("pheromone floor={}", table.floor);
    write_table(net, table.commodities(), &title, |d, c| table.get(d, c))
}

pub fn aco_to_text(net: &NetworkInstance, state: &AcoPheromoneState) -> String {
    let title = format!(
        "aco evaporation={} deposit={} initial={}",
        state.params.evaporation, state.params.deposit, state.params.initial
    );
    write_table(net, state.commodities(), &title, |d, c| state.rho(d, c))
}

pub type TableMeta = Vec<(String, String)>;

/// Parses table rows and the metadata pairs of the comment lines.
pub fn parse_table(text: &str) -> Result<(TableMeta, Vec<TableRow>)> {
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == TABLE_HEADER {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for pair in comment.split_whitespace() {
                if let Some((k, v)) = pair.split_once('=') {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = || SimError::Parse(format!("line {}: expected from, to, commodity, value", n + 1));
        if fields.len() != 4 {
            return Err(bad());
        }
        rows.push(TableRow {
            from: fields[0].parse().map_err(|_| bad())?,
            to: fields[1].parse().map_err(|_| bad())?,
            commodity: fields[2].parse().map_err(|_| bad())?,
            value: fields[3].parse().map_err(|_| bad())?,
        });
    }
    Ok((meta, rows))
}

/// Rebuilds a pheromone table written by [`pheromones_to_text`].
pub fn pheromones_from_text(net: &NetworkInstance, text: &str) -> Result<PheromoneTable> {
    let (meta, rows) = parse_table(text)?;
    let floor: f64 = meta
        .iter()
        .find(|(k, _)| k == "floor")
        .ok_or_else(|| SimError::Parse("missing floor".into()))?
        .1
        .parse()
        .map_err(|_| SimError::Parse("bad floor".into()))?;
    let mut ids: Vec<usize> = rows.iter().map(|r| r.commodity).collect();
    ids.sort_unstable();
    ids.dedup();
    let commodities = Commodities::from_ids(net.node_count(), ids)?;
    let c = commodities.len();
    let mut values = vec![floor; net.directed_link_count() * c];
    for r in rows {
        let link = net
            .link_between(r.from, r.to)
            .ok_or_else(|| SimError::Parse(format!("no link {} -> {}", r.from, r.to)))?;
        let k = commodities.index(r.commodity).expect("collected above");
        values[net.directed(link, r.from) * c + k] = r.value;
    }
    PheromoneTable::from_parts(commodities, values, floor)
}
