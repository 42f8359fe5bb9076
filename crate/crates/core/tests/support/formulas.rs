//! Routing, utility and pheromone formulas checked against scalar
//! re-implementations on randomized inputs. Each check runs `cases`
//! randomized cases and panics on the first mismatch.

use antbp::aco::{aco_route_probability, latency_deposits, AcoParams, AcoPheromoneState, Deposit};
use antbp::router::{link_utilities, route_probabilities, NeighborQueues, RoutePolicy};
use antbp::spbp::{
    pheromone_from_counts, select_commodity, Commodities, CountTable, PheromoneTable, SpbpPlanner,
    VirtualQueueState,
};
use antbp::topology::{compute_biases, default_density, generate_network, BiasTable, NetworkInstance};
use antbp::traffic::{Flow, FlowKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case_rng(formula: u64, case: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(formula * 1_000_003 + case)
}

fn random_network(rng: &mut ChaCha8Rng) -> NetworkInstance {
    let n = rng.random_range(4..24);
    generate_network(n, default_density(), rng.random()).unwrap()
}

fn random_commodities(net: &NetworkInstance, rng: &mut ChaCha8Rng) -> Commodities {
    let n = net.node_count();
    let flows: Vec<Flow> = (0..rng.random_range(1..=n))
        .map(|id| {
            let source = rng.random_range(0..n);
            let destination = (source + rng.random_range(1..n)) % n;
            Flow { id, source, destination, kind: FlowKind::Streaming, base_rate: 1.0 }
        })
        .collect();
    Commodities::from_flows(n, &flows)
}

/// Either true shortest-path biases or small integers that force ties.
fn random_biases(net: &NetworkInstance, rng: &mut ChaCha8Rng) -> BiasTable {
    if rng.random_bool(0.5) {
        compute_biases(net).unwrap()
    } else {
        let n = net.node_count();
        let bias = (0..n * n).map(|_| rng.random_range(0..4) as f64).collect();
        BiasTable::from_values(n, bias, vec![])
    }
}

fn random_queues(commodities: &Commodities, rng: &mut ChaCha8Rng) -> VirtualQueueState {
    let mut state = VirtualQueueState::new(commodities.clone());
    for node in 0..commodities.node_count() {
        for &c in commodities.ids() {
            if rng.random_bool(0.5) {
                state.set(node, c, rng.random_range(0..40));
            }
        }
    }
    state
}

/// max over all commodities of (q_i + B_i) - (q_j + B_j), first maximum wins.
fn oracle_differential(i: usize, j: usize, q: &VirtualQueueState, b: &BiasTable) -> (usize, f64) {
    let n = b.node_count();
    let eta = |v: usize, c: usize| q.length_of(v, c) as f64 + b.get(v, c);
    let diffs: Vec<f64> = (0..n).map(|c| eta(i, c) - eta(j, c)).collect();
    let best = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c = diffs.iter().position(|&d| d == best).unwrap();
    (c, best)
}

pub fn pheromone_routing_probability(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(1, case);
        let net = random_network(&mut rng);
        let commodities = random_commodities(&net, &mut rng);
        let floor = 1e-6;
        let values: Vec<f64> = (0..net.directed_link_count() * commodities.len())
            .map(|_| if rng.random_bool(0.3) { floor } else { floor + rng.random_range(0.0..500.0) })
            .collect();
        let table = PheromoneTable::from_parts(commodities.clone(), values, floor).unwrap();
        let node = rng.random_range(0..net.node_count());
        let c = commodities.ids()[rng.random_range(0..commodities.len())];
        let got = route_probabilities(&table, &net, node, c);

        let rho: Vec<f64> = net
            .neighbors(node)
            .iter()
            .map(|nb| table.get(net.directed(nb.link, node), c))
            .collect();
        let total: f64 = rho.iter().sum();
        let want: Vec<f64> = rho.iter().map(|r| r / total).collect();
        assert_eq!(got, want, "case {case}");
    }
}

struct RandomWeights(Vec<f64>);

impl RoutePolicy for RandomWeights {
    fn weights(&self, net: &NetworkInstance, node: usize, _c: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(net.neighbors(node).iter().map(|nb| self.0[net.directed(nb.link, node)]));
    }
}

pub fn physical_link_utility(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(2, case);
        let net = random_network(&mut rng);
        let n = net.node_count();
        let mut queues = NeighborQueues::new(&net);
        let mut id = 0u32;
        for node in 0..n {
            for _ in 0..rng.random_range(0..30) {
                queues.enqueue(node, id);
                id += 1;
            }
        }
        let policy = RandomWeights((0..net.directed_link_count()).map(|_| rng.random_range(0.0..1.0)).collect());
        queues.assign_all(&net, |_| n, &policy, &mut rng, |_| panic!("nothing is delivered"));
        let rates: Vec<u32> = (0..net.link_count()).map(|_| rng.random_range(1..=51)).collect();

        let got = link_utilities(&net, &queues, &rates);
        for (e, &(a, b)) in net.links().iter().enumerate() {
            let q_ab = queues.len(net.directed(e, a));
            let q_ba = queues.len(net.directed(e, b));
            let want = q_ab.max(q_ba) as f64 * rates[e] as f64;
            assert_eq!(got[e].utility, want, "case {case} link {e}");
            let sender = net.endpoints(got[e].directed).0;
            assert_eq!(sender, if q_ba > q_ab { b } else { a });
        }
    }
}

pub fn commodity_selection(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(4, case);
        let net = random_network(&mut rng);
        let commodities = random_commodities(&net, &mut rng);
        let b = random_biases(&net, &mut rng);
        let q = random_queues(&commodities, &mut rng);
        let e = rng.random_range(0..net.link_count());
        let (i, j) = net.links()[e];
        let (i, j) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
        let (c, best) = oracle_differential(i, j, &q, &b);
        assert_eq!(select_commodity(i, j, &q, &b), (c, best.max(0.0)), "case {case}");
    }
}

pub fn backpressure_link_weight(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(5, case);
        let net = random_network(&mut rng);
        let commodities = random_commodities(&net, &mut rng);
        let b = random_biases(&net, &mut rng);
        let q = random_queues(&commodities, &mut rng);
        let rates: Vec<u32> = (0..net.link_count()).map(|_| rng.random_range(1..=51)).collect();
        let mut planner = SpbpPlanner::new(&net, &b, commodities.clone());
        planner.plan(&net, &b, &q, &rates);

        for (e, &(a, bnode)) in net.links().iter().enumerate() {
            let (c_ab, w_ab) = oracle_differential(a, bnode, &q, &b);
            let (c_ba, w_ba) = oracle_differential(bnode, a, &q, &b);
            let (w_ab, w_ba) = (w_ab.max(0.0), w_ba.max(0.0));
            let (sender, c, w) = if w_ba > w_ab { (bnode, c_ba, w_ba) } else { (a, c_ab, w_ab) };
            let indicator = if q.length_of(sender, c) > 0 { 1.0 } else { 0.0 };
            let want = rates[e] as f64 * (w * indicator);
            assert_eq!(planner.last_utilities()[e], want, "case {case} link {e}");
        }
    }
}

pub fn pheromone_from_count_differences(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(8, case);
        let net = random_network(&mut rng);
        let commodities = random_commodities(&net, &mut rng);
        let mut counts = CountTable::new(&net, commodities.clone(), 0.0);
        for d in 0..net.directed_link_count() {
            for &c in commodities.ids() {
                if rng.random_bool(0.6) {
                    counts.set(d, c, rng.random_range(0..300) as f64);
                }
            }
        }
        let floor = if rng.random_bool(0.5) { 1e-6 } else { rng.random_range(1e-9..1.0) };
        let table = pheromone_from_counts(&net, &counts, floor);
        for (e, &(a, b)) in net.links().iter().enumerate() {
            for &c in commodities.ids() {
                let ab = net.directed(e, a);
                let ba = net.directed(e, b);
                let want_ab = (counts.get(ab, c) - counts.get(ba, c)).max(0.0) + floor;
                let want_ba = (counts.get(ba, c) - counts.get(ab, c)).max(0.0) + floor;
                assert_eq!(table.get(ab, c), want_ab, "case {case}");
                assert_eq!(table.get(ba, c), want_ba, "case {case}");
            }
        }
    }
}

fn random_aco_state(net: &NetworkInstance, rng: &mut ChaCha8Rng) -> (AcoPheromoneState, BiasTable) {
    let commodities = random_commodities(net, rng);
    let b = random_biases(net, rng);
    let mut state = AcoPheromoneState::new(net, &b, commodities.clone(), AcoParams::default());
    for d in 0..net.directed_link_count() {
        for &c in commodities.ids() {
            let r = match rng.random_range(0..3) {
                0 => 0.0,
                1 => 1.3,
                _ => rng.random_range(0.0..80.0),
            };
            state.set_rho(d, c, r);
        }
    }
    (state, b)
}

pub fn ant_routing_probability(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(9, case);
        let net = random_network(&mut rng);
        let (state, b) = random_aco_state(&net, &mut rng);
        let node = rng.random_range(0..net.node_count());
        let ids = state.commodities().ids();
        let c = ids[rng.random_range(0..ids.len())];
        let got = aco_route_probability(&net, node, c, &state);

        let num: Vec<f64> = net
            .neighbors(node)
            .iter()
            .map(|nb| {
                let h = b.get(node, c) - b.get(nb.node, c);
                (state.rho(net.directed(nb.link, node), c) + h).max(0.0)
            })
            .collect();
        let total: f64 = num.iter().sum();
        let want: Vec<f64> = if total > 0.0 {
            num.iter().map(|x| x / total).collect()
        } else {
            vec![1.0 / num.len() as f64; num.len()]
        };
        assert_eq!(got, want, "case {case}");
    }
}

pub fn pheromone_evaporation_and_deposit(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(10, case);
        let net = random_network(&mut rng);
        let (mut state, _) = random_aco_state(&net, &mut rng);
        let c = state.commodities().len();
        let d = net.directed_link_count();
        let before = state.values().to_vec();
        let deposits: Vec<Deposit> = (0..rng.random_range(0..20))
            .map(|_| Deposit {
                directed: rng.random_range(0..d),
                commodity_index: rng.random_range(0..c),
                amount: if rng.random_bool(0.5) { 0.01 } else { 1.0 / rng.random_range(1..200) as f64 },
            })
            .collect();
        state.update(&deposits);

        let eps = AcoParams::default().evaporation;
        let mut want: Vec<f64> = before.iter().map(|r| (1.0 - eps) * r).collect();
        for dep in &deposits {
            want[dep.directed * c + dep.commodity_index] += dep.amount;
        }
        assert_eq!(state.values(), &want[..], "case {case}");
    }
}

/// Loop-free path by jumping past the last visit of each node.
fn oracle_excise(walk: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < walk.len() {
        let v = walk[k];
        out.push(v);
        k = walk.iter().rposition(|&x| x == v).unwrap() + 1;
    }
    out
}

pub fn latency_deposit_along_loop_free_path(cases: u64) {
    for case in 0..cases {
        let mut rng = case_rng(11, case);
        let net = random_network(&mut rng);
        let mut walk = vec![rng.random_range(0..net.node_count())];
        for _ in 0..rng.random_range(1..40) {
            let nbs = net.neighbors(*walk.last().unwrap());
            walk.push(nbs[rng.random_range(0..nbs.len())].node);
        }
        let latency = rng.random_range(1..500u64);
        let k = rng.random_range(0..5);
        let mut got = Vec::new();
        latency_deposits(&net, &walk, k, latency, &mut got);

        let path = oracle_excise(&walk);
        let want: Vec<Deposit> = path
            .windows(2)
            .map(|p| Deposit {
                directed: net.directed(net.link_between(p[0], p[1]).unwrap(), p[0]),
                commodity_index: k,
                amount: 1.0 / latency as f64,
            })
            .collect();
        assert_eq!(got, want, "case {case}");
        let mut seen = path.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), path.len(), "path is loop-free");
    }
}
