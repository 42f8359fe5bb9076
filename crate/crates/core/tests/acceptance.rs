//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
//!
//! Statistical criteria use `ACCEPTANCE_INSTANCES` instances per point
//! (default 10) and `ACCEPTANCE_JOBS` worker threads (default: all cores).

mod support;

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use antbp::engine::simulate;
use antbp::experiments::{builtin_plan, run_plan, PlanResult};
use antbp::topology::{default_density, generate_network};
use antbp::traffic::FlowKind::{Bursty, Streaming};
use antbp::{ScenarioConfig, Scheme};
use support::{formulas, scheduling};

type Check = Box<dyn FnOnce() -> (bool, String)>;

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn run_sweep(name: &str, instances: usize, jobs: usize, keep_points: Option<usize>) -> PlanResult {
    let mut plan = builtin_plan(name).expect("built-in plan");
    plan.instances = instances;
    if let Some(k) = keep_points {
        plan.points.truncate(k);
    }
    let result = run_plan(&plan, jobs, None).expect("plan runs");
    assert_eq!(result.failure_count(), 0, "{name}: runs failed");
    result
}

fn c1_scheduling() -> (bool, String) {
    let start = Instant::now();
    let compared = scheduling::check_random_schedules(1000, 2024);
    let t = start.elapsed();
    (t < Duration::from_secs(60), format!("1000 graphs valid, {compared} matched against exhaustive search, {}", secs(t)))
}

fn c2_conservation() -> (bool, String) {
    let start = Instant::now();
    let mut runs = 0;
    for seed in 1..=20 {
        for scheme in Scheme::ALL {
            let out = simulate(&ScenarioConfig { scheme, seed, ..Default::default() }, None).expect("scenario runs");
            let p = out.physical_totals;
            assert!(p.conserved(), "{scheme} seed {seed}: physical {p:?}");
            assert_eq!(p.injected, out.report.total_injected());
            assert_eq!(p.delivered, out.report.total_delivered());
            if let Some(v) = out.virtual_totals {
                assert!(v.conserved(), "{scheme} seed {seed}: virtual {v:?}");
            }
            runs += 1;
        }
    }
    let t = start.elapsed();
    (t < Duration::from_secs(600), format!("{runs} runs conserve packets in both phases, {}", secs(t)))
}

fn c3_formulas() -> (bool, String) {
    let checks: [(&str, fn(u64)); 8] = [
        ("pheromone routing", formulas::pheromone_routing_probability),
        ("link utility", formulas::physical_link_utility),
        ("commodity selection", formulas::commodity_selection),
        ("backpressure weight", formulas::backpressure_link_weight),
        ("pheromone from counts", formulas::pheromone_from_count_differences),
        ("ant routing", formulas::ant_routing_probability),
        ("evaporation and deposit", formulas::pheromone_evaporation_and_deposit),
        ("latency deposit", formulas::latency_deposit_along_loop_free_path),
    ];
    for (_, check) in checks {
        check(1000);
    }
    (true, format!("{} formulas x 1000 cases exact", checks.len()))
}

fn c4_determinism() -> (bool, String) {
    let mut arrivals = None;
    for scheme in Scheme::ALL {
        let cfg = ScenarioConfig { scheme, seed: 5, ..Default::default() };
        let mut trace_a = Vec::new();
        let mut trace_b = Vec::new();
        let a = simulate(&cfg, Some(&mut trace_a)).expect("scenario runs");
        let b = simulate(&cfg, Some(&mut trace_b)).expect("scenario runs");
        assert_eq!(a.report.to_csv().as_bytes(), b.report.to_csv().as_bytes(), "{scheme}: CSV differs");
        assert_eq!(trace_a, trace_b, "{scheme}: trace differs");
        match &arrivals {
            None => arrivals = Some(a.arrivals),
            Some(first) => assert_eq!(first, &a.arrivals, "{scheme}: arrivals differ"),
        }
    }
    (true, "byte-identical CSV and trace per scheme, one arrival matrix across 5 schemes".into())
}

fn c5_topology() -> (bool, String) {
    let degrees: Vec<f64> = (1..=20u64)
        .map(|seed| {
            let net = generate_network(100, default_density(), seed).expect("network");
            for (e, &(a, b)) in net.links().iter().enumerate() {
                assert_eq!(net.conflict_adjacency()[e].len(), net.degree(a) + net.degree(b) - 2);
            }
            net.mean_conflict_degree()
        })
        .collect();
    let mean = degrees.iter().sum::<f64>() / degrees.len() as f64;
    ((mean - 15.4).abs() <= 1.5, format!("mean conflict degree {mean:.3} over 20 instances (target 15.4 +/- 1.5)"))
}

fn c6_mixed(mixed: &PlanResult) -> (bool, String) {
    let p = &mixed.points[0];
    let s = |scheme| p.scheme(scheme).unwrap().summary.as_ref().unwrap();
    let sp = s(Scheme::SpBp).class(Bursty);
    let bp = s(Scheme::AntBp).class(Bursty);
    let sp_lat = sp.latency.unwrap().mean;
    let bp_lat = bp.latency.unwrap().mean;
    let ok_sp = (sp.delivery_ratio.mean - 0.906).abs() <= 0.04;
    let ok_bp = (bp.delivery_ratio.mean - 0.975).abs() <= 0.02;
    let ok_lat = sp_lat >= 2.0 * bp_lat;
    (
        ok_sp && ok_bp && ok_lat,
        format!(
            "L_b=0.5 bursty ratio sp_bp {:.3} (0.906 +/- 0.04) ant_bp {:.3} (0.975 +/- 0.02); latency sp_bp {:.1} / ant_bp {:.1} = {:.2} (>= 2)",
            sp.delivery_ratio.mean,
            bp.delivery_ratio.mean,
            sp_lat,
            bp_lat,
            sp_lat / bp_lat
        ),
    )
}

fn c7_ordering(mixed: &PlanResult) -> (bool, String) {
    let order = [Scheme::AntBpMirror, Scheme::AntBp, Scheme::SpBp, Scheme::AntIdeal, Scheme::AntBaseline];
    let avg: Vec<f64> = order
        .iter()
        .map(|&scheme| {
            let v: Vec<f64> = mixed
                .points
                .iter()
                .map(|p| p.scheme(scheme).unwrap().summary.as_ref().unwrap().class(Streaming).delivery_ratio.mean)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let ok = avg.windows(2).all(|w| w[0] >= w[1] - 0.005);
    let listed: Vec<String> = order.iter().zip(&avg).map(|(s, a)| format!("{s} {a:.4}")).collect();
    (ok, format!("streaming ratio over L_b sweep: {}", listed.join(" >= ")))
}

fn c8_mirror(mixed: &PlanResult) -> (bool, String) {
    let p = &mixed.points[0];
    let r = |scheme| p.scheme(scheme).unwrap().summary.as_ref().unwrap().class(Bursty).delivery_ratio.mean;
    let (bp, mirror) = (r(Scheme::AntBp), r(Scheme::AntBpMirror));
    (bp - mirror >= 0.02, format!("L_b=0.5 bursty ratio ant_bp {bp:.3} - ant_bp_mirror {mirror:.3} = {:.3} (>= 0.02)", bp - mirror))
}

fn c9_throughput(thr: &PlanResult) -> (bool, String) {
    let mut low = Vec::new();
    let mut high = Vec::new();
    for p in &thr.points {
        let t = |scheme| p.scheme(scheme).unwrap().summary.as_ref().unwrap().throughput.mean;
        let ratio = t(Scheme::AntBp) / t(Scheme::SpBp);
        if p.point.streaming_load <= 3.0 {
            low.push((p.point.streaming_load, ratio));
        } else {
            high.push(ratio);
        }
    }
    let low_ok = low.iter().all(|(_, r)| (r - 1.0).abs() <= 0.05);
    let high_mean = high.iter().sum::<f64>() / high.len() as f64;
    let high_ok = (high_mean - 0.844).abs() <= 0.08;
    let lows: Vec<String> = low.iter().map(|(l, r)| format!("{l}:{r:.3}")).collect();
    (
        low_ok && high_ok,
        format!(
            "ant_bp/sp_bp throughput at L_s {} (within 5%); mean over L_s 4..12 {high_mean:.3} (0.844 +/- 0.08)",
            lows.join(" ")
        ),
    )
}

/// Competition rank (1 = best) of `scheme` by bursty delivery ratio.
fn bursty_rank(ratios: &HashMap<Scheme, f64>, scheme: Scheme) -> usize {
    1 + ratios.values().filter(|&&r| r > ratios[&scheme]).count()
}

fn c10_robustness(rob: &PlanResult, instances: usize) -> (bool, String) {
    let need = (8 * instances).div_ceil(10);
    let mut ok = true;
    let mut parts = Vec::new();
    for p in &rob.points {
        let mut kept = 0;
        for k in 0..instances {
            let ratios: HashMap<Scheme, f64> = p
                .schemes
                .iter()
                .map(|s| (s.scheme, s.reports[k].delivery_ratio(Bursty)))
                .collect();
            if bursty_rank(&ratios, Scheme::AntBp) <= 2 && bursty_rank(&ratios, Scheme::AntBpMirror) <= 2 {
                kept += 1;
            }
        }
        ok &= kept >= need;
        parts.push(format!("physical ({}, {}): {kept}/{instances}", p.point.streaming_load, p.point.bursty_load));
    }
    (ok, format!("virtual (1, 1), ant_bp and ant_bp_mirror top-2 bursty: {} (need {need})", parts.join(", ")))
}

fn main() -> ExitCode {
    let instances = env_usize("ACCEPTANCE_INSTANCES", 10);
    let jobs = env_usize("ACCEPTANCE_JOBS", 0);
    println!("acceptance: {instances} instances per statistical point");
    panic::set_hook(Box::new(|_| {}));

    let mut sweeps: HashMap<&str, PlanResult> = HashMap::new();
    let mut sweep = |name: &'static str, keep: Option<usize>| {
        let r = panic::catch_unwind(AssertUnwindSafe(|| run_sweep(name, instances, jobs, keep)));
        if let Ok(r) = r {
            sweeps.insert(name, r);
        }
    };
    let start = Instant::now();
    sweep("mixed", None);
    sweep("throughput", None);
    sweep("robustness", Some(2));
    let sweep_time = start.elapsed();

    let mixed = sweeps.remove("mixed");
    let thr = sweeps.remove("throughput");
    let rob = sweeps.remove("robustness");
    let needs = |r: Option<PlanResult>, f: fn(&PlanResult) -> (bool, String)| -> Check {
        Box::new(move || match r {
            Some(r) => f(&r),
            None => (false, "sweep failed".into()),
        })
    };

    let criteria: Vec<(u8, &str, Check)> = vec![
        (1, "scheduling validity", Box::new(c1_scheduling)),
        (2, "conservation", Box::new(c2_conservation)),
        (3, "formula conformance", Box::new(c3_formulas)),
        (4, "determinism and pairing", Box::new(c4_determinism)),
        (5, "topology statistics", Box::new(c5_topology)),
        (6, "mixed traffic at L_b=0.5", needs(mixed.clone(), c6_mixed)),
        (7, "streaming delivery ordering", needs(mixed.clone(), c7_ordering)),
        (8, "mirror last-packet degradation", needs(mixed, c8_mirror)),
        (9, "throughput sweep", needs(thr, c9_throughput)),
        (
            10,
            "robustness grid",
            Box::new(move || match rob {
                Some(r) => c10_robustness(&r, instances),
                None => (false, "sweep failed".into()),
            }),
        ),
    ];

    let mut failed = 0;
    for (id, name, check) in criteria {
        let (pass, detail) = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into());
                (false, msg)
            }
        };
        if !pass {
            failed += 1;
        }
        println!("[{}] {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed (sweeps {})", 10 - failed, secs(sweep_time));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
