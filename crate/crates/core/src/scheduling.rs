//! Max-Weight link scheduling on the conflict graph.
//!
//! The simulator schedules with an ordered greedy: links are visited by
//! utility (descending) then index (ascending) and activated when no
//! conflicting link is already on. An exhaustive solver is provided for
//! checking the greedy on small instances.

use std::cmp::Ordering;

use crate::error::{Result, SimError};

/// Largest link count the exhaustive solver accepts.
pub const BRUTE_FORCE_MAX_LINKS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub active: Vec<bool>,
    pub total_utility: f64,
}

impl Schedule {
    fn from_active(active: Vec<bool>, utilities: &[f64]) -> Self {
        let total_utility = active
            .iter()
            .zip(utilities)
            .filter(|(on, _)| **on)
            .map(|(_, u)| *u)
            .sum();
        Schedule { active, total_utility }
    }

    pub fn active_links(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(e, on)| on.then_some(e))
            .collect()
    }

    /// No two active links conflict.
    pub fn is_independent(&self, conflict: &[Vec<usize>]) -> bool {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, on)| **on)
            .all(|(e, _)| conflict[e].iter().all(|&f| !self.active[f]))
    }

    /// Every positive-utility link is either active or blocked by an active one.
    pub fn is_maximal(&self, utilities: &[f64], conflict: &[Vec<usize>]) -> bool {
        (0..self.active.len()).all(|e| {
            self.active[e] || utilities[e] <= 0.0 || conflict[e].iter().any(|&f| self.active[f])
        })
    }
}

fn greedy_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Reusable greedy scheduler that keeps its buffers between slots.
#[derive(Debug, Default, Clone)]
pub struct GreedyScheduler {
    order: Vec<(usize, f64)>,
    active: Vec<bool>,
    chosen: Vec<usize>,
}

impl GreedyScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the active links in activation order.
    pub fn run(&mut self, utilities: &[f64], conflict: &[Vec<usize>]) -> &[usize] {
        debug_assert_eq!(utilities.len(), conflict.len());
        self.order.clear();
        self.order.extend(
            utilities
                .iter()
                .enumerate()
                .filter(|(_, u)| **u > 0.0)
                .map(|(e, u)| (e, *u)),
        );
        self.order.sort_unstable_by(|a, b| greedy_order(*a, *b));
        self.active.clear();
        self.active.resize(utilities.len(), false);
        self.chosen.clear();
        for &(e, _) in &self.order {
            if conflict[e].iter().all(|&f| !self.active[f]) {
                self.active[e] = true;
                self.chosen.push(e);
            }
        }
        &self.chosen
    }

    pub fn is_active(&self, link: usize) -> bool {
        self.active[link]
    }
}

pub fn greedy_max_weight(utilities: &[f64], conflict: &[Vec<usize>]) -> Schedule {
    assert_eq!(utilities.len(), conflict.len(), "one utility per link");
    let mut scheduler = GreedyScheduler::new();
    scheduler.run(utilities, conflict);
    Schedule::from_active(scheduler.active, utilities)
}

/// Exact maximum-weight independent set by enumeration. Ties go to the
/// lexicographically smallest sorted set of active links.
pub fn brute_force_mwis(utilities: &[f64], conflict: &[Vec<usize>]) -> Result<Schedule> {
    let m = utilities.len();
    if m > BRUTE_FORCE_MAX_LINKS {
        return Err(SimError::OracleBound { links: m, bound: BRUTE_FORCE_MAX_LINKS });
    }
    assert_eq!(m, conflict.len(), "one utility per link");

    let candidates: Vec<usize> = (0..m).filter(|&e| utilities[e] > 0.0).collect();
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    let mut current = Vec::new();
    let mut active = vec![false; m];
    search(&candidates, 0, utilities, conflict, &mut active, &mut current, &mut best);

    let mut out = vec![false; m];
    for &e in &best.1 {
        out[e] = true;
    }
    Ok(Schedule::from_active(out, utilities))
}

fn search(
    candidates: &[usize],
    pos: usize,
    utilities: &[f64],
    conflict: &[Vec<usize>],
    active: &mut [bool],
    current: &mut Vec<usize>,
    best: &mut (f64, Vec<usize>),
) {
    if pos == candidates.len() {
        let total: f64 = current.iter().map(|&e| utilities[e]).sum();
        if total > best.0 || (total == best.0 && current.as_slice() < best.1.as_slice()) {
            *best = (total, current.clone());
        }
        return;
    }
    let e = candidates[pos];
    if conflict[e].iter().all(|&f| !active[f]) {
        active[e] = true;
        current.push(e);
        search(candidates, pos + 1, utilities, conflict, active, current, best);
        current.pop();
        active[e] = false;
    }
    search(candidates, pos + 1, utilities, conflict, active, current, best);
}
