//! Random conflict graphs and an exhaustive independent-set reference.

use antbp::scheduling::{brute_force_mwis, greedy_max_weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn conflict_graph(links: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); links];
    for &(a, b) in edges {
        let (a, b) = (a % links, b % links);
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    adj.iter_mut().for_each(|v| v.sort_unstable());
    adj
}

/// Best total utility over all independent sets, by plain enumeration.
pub fn exhaustive_best(utilities: &[f64], adj: &[Vec<usize>]) -> f64 {
    let m = utilities.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << m) {
        let members: Vec<usize> = (0..m).filter(|&e| mask >> e & 1 == 1).collect();
        if members.iter().all(|&e| adj[e].iter().all(|&f| mask >> f & 1 == 0)) {
            best = best.max(members.iter().map(|&e| utilities[e]).sum());
        }
    }
    best
}

/// Checks greedy schedules on `graphs` random instances. Returns how many
/// instances were small enough for the exhaustive comparison.
pub fn check_random_schedules(graphs: u64, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for g in 0..graphs {
        let m = if g % 2 == 0 { rng.random_range(1..=12) } else { rng.random_range(1..60) };
        let edges: Vec<(usize, usize)> =
            (0..rng.random_range(0..3 * m)).map(|_| (rng.random_range(0..m), rng.random_range(0..m))).collect();
        let adj = conflict_graph(m, &edges);
        let utilities: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..3) {
                0 => 0.0,
                1 => rng.random_range(0..6) as f64,
                _ => rng.random_range(0.0..100.0),
            })
            .collect();

        let s = greedy_max_weight(&utilities, &adj);
        let active = s.active_links();
        assert!(s.is_independent(&adj), "graph {g}: not independent");
        for e in 0..m {
            let blocked = adj[e].iter().any(|f| active.contains(f));
            if active.contains(&e) {
                assert!(utilities[e] > 0.0, "graph {g}: zero-utility link {e} scheduled");
                assert!(!blocked, "graph {g}: link {e} conflicts with the schedule");
            } else if utilities[e] > 0.0 {
                assert!(blocked, "graph {g}: schedule not maximal at link {e}");
            }
        }
        if m <= 12 {
            let best = exhaustive_best(&utilities, &adj);
            assert!(s.total_utility <= best + 1e-9, "graph {g}: greedy beats the optimum");
            let exact = brute_force_mwis(&utilities, &adj).unwrap();
            assert!((exact.total_utility - best).abs() <= 1e-9, "graph {g}: oracle is not optimal");
            compared += 1;
        }
    }
    compared
}
