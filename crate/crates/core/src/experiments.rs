//! Experiment plans: sweeps over load points, schemes and instances with
//! paired seeds, aggregated into CSV curves.
//!
//! A plan file is TOML:
//!
//! ```toml
//! name = "mixed"
//! schemes = ["ant_bp", "sp_bp"]
//! instances = 10
//! seed = 1
//!
//! [base]            # any scenario config field
//! slots = 1000
//!
//! [sweep]           # one axis over physical loads...
//! parameter = "bursty_load"
//! values = [0.5, 1.0, 2.0]
//!
//! [[points]]        # ...and/or explicit points
//! streaming_load = 2.0
//! bursty_load = 20.0
//! virtual_loads = { streaming = 1.0, bursty = 10.0 }
//! ```
//!
//! Instance `k` of every point and scheme uses master seed `seed + k`, so all
//! schemes at a point see the same network, flows and arrivals.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_scenario, ScenarioConfig, Scheme, VirtualLoads};
use crate::error::{Result, SimError};
use crate::metrics::{aggregate, MetricsReport, Summary, REPORT_CSV_HEADER};
use crate::traffic::FlowKind;

pub const DEFAULT_INSTANCES: usize = 10;

pub const SUMMARY_CSV_HEADER: &str = "scheme,L_s,L_b,virtual_L_s,virtual_L_b,class,runs,failures,\
delivery_ratio,delivery_ratio_se,mean_latency,mean_latency_se,throughput_mean,throughput_se,undefined_ratio_runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    StreamingLoad,
    BurstyLoad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Physical loads of one sweep point, with optional distinct virtual loads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub streaming_load: f64,
    pub bursty_load: f64,
    #[serde(default)]
    pub virtual_loads: Option<VirtualLoads>,
}

impl SweepPoint {
    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        cfg.traffic = cfg.traffic.with_loads(self.streaming_load, self.bursty_load);
        if self.virtual_loads.is_some() {
            cfg.virtual_loads = self.virtual_loads;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    #[serde(default)]
    pub base: ScenarioConfig,
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
    #[serde(default)]
    pub points: Vec<SweepPoint>,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_instances() -> usize {
    DEFAULT_INSTANCES
}

fn default_seed() -> u64 {
    1
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances < 1 {
            return Err(SimError::Config("instances must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(SimError::Config("plan lists no schemes".into()));
        }
        if let Some(axis) = &self.sweep {
            if axis.values.is_empty() {
                return Err(SimError::Config("sweep values are empty".into()));
            }
        }
        if self.points().is_empty() {
            return Err(SimError::Config("plan has no sweep points".into()));
        }
        for p in self.points() {
            p.apply(&self.base).validate()?;
        }
        Ok(())
    }

    /// Axis points first, then explicit points.
    pub fn points(&self) -> Vec<SweepPoint> {
        let traffic = &self.base.traffic;
        let mut out: Vec<SweepPoint> = self
            .sweep
            .iter()
            .flat_map(|axis| {
                axis.values.iter().map(move |&v| match axis.parameter {
                    SweepParameter::StreamingLoad => {
                        SweepPoint { streaming_load: v, bursty_load: traffic.bursty_load, virtual_loads: None }
                    }
                    SweepParameter::BurstyLoad => {
                        SweepPoint { streaming_load: traffic.streaming_load, bursty_load: v, virtual_loads: None }
                    }
                })
            })
            .collect();
        out.extend(self.points.iter().copied());
        out
    }

    pub fn instance_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_add(k as u64)
    }
}

pub const BUILTIN_PLANS: [&str; 3] = ["mixed", "robustness", "throughput"];

pub fn builtin_plan(name: &str) -> Option<ExperimentPlan> {
    let mut base = ScenarioConfig::default();
    let plan = |base: ScenarioConfig, sweep, points| ExperimentPlan {
        name: name.to_string(),
        base,
        sweep,
        points,
        schemes: all_schemes(),
        instances: DEFAULT_INSTANCES,
        seed: 1,
        out_dir: None,
    };
    match name {
        "mixed" => {
            base.traffic.streaming_load = 2.0;
            let mut values = vec![0.5];
            values.extend((1..=10).map(f64::from));
            Some(plan(base, Some(SweepAxis { parameter: SweepParameter::BurstyLoad, values }), vec![]))
        }
        "robustness" => {
            let point = |vs, vb, s, b| SweepPoint {
                streaming_load: s,
                bursty_load: b,
                virtual_loads: Some(VirtualLoads { streaming: vs, bursty: vb }),
            };
            let points = vec![
                point(1.0, 1.0, 0.5, 0.5),
                point(1.0, 1.0, 2.0, 2.0),
                point(1.0, 10.0, 0.5, 5.0),
                point(1.0, 10.0, 2.0, 20.0),
            ];
            Some(plan(base, None, points))
        }
        "throughput" => {
            base.traffic.bursty_probability = 0.0;
            let mut values = vec![0.5];
            values.extend((1..=12).map(f64::from));
            Some(plan(base, Some(SweepAxis { parameter: SweepParameter::StreamingLoad, values }), vec![]))
        }
        _ => None,
    }
}

/// A run that failed, kept so the sweep can continue.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub scheme: Scheme,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scheme: Scheme,
    /// Successful runs, by instance.
    pub reports: Vec<MetricsReport>,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub index: usize,
    pub point: SweepPoint,
    pub schemes: Vec<SchemeResult>,
    pub failures: Vec<RunFailure>,
}

impl PointResult {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeResult> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }

    pub fn runs_csv(&self) -> String {
        let mut out = format!("{REPORT_CSV_HEADER}\n");
        for s in &self.schemes {
            for r in &s.reports {
                out.push_str(&r.csv_rows());
            }
        }
        out
    }

    /// Aggregate rows without header.
    pub fn summary_rows(&self) -> String {
        let mut out = String::new();
        let (vs, vb) = match self.point.virtual_loads {
            Some(v) => (v.streaming.to_string(), v.bursty.to_string()),
            None => (String::new(), String::new()),
        };
        for s in &self.schemes {
            let failures = self.failures.iter().filter(|f| f.scheme == s.scheme).count();
            let Some(summary) = &s.summary else {
                for kind in FlowKind::ALL {
                    let _ = writeln!(
                        out,
                        "{},{},{},{vs},{vb},{},0,{failures},,,,,,,0",
                        s.scheme,
                        self.point.streaming_load,
                        self.point.bursty_load,
                        kind.as_str()
                    );
                }
                continue;
            };
            for c in &summary.classes {
                let (lat, lat_se) = match c.latency {
                    Some(e) => (e.mean.to_string(), e.std_error.to_string()),
                    None => (String::new(), String::new()),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{vs},{vb},{},{},{failures},{},{},{lat},{lat_se},{},{},{}",
                    s.scheme,
                    self.point.streaming_load,
                    self.point.bursty_load,
                    c.class.as_str(),
                    summary.runs,
                    c.delivery_ratio.mean,
                    c.delivery_ratio.std_error,
                    summary.throughput.mean,
                    summary.throughput.std_error,
                    c.undefined_ratio_runs
                );
            }
        }
        out
    }

    pub fn failures_csv(&self) -> String {
        let mut out = String::from("scheme,master_seed,error\n");
        for f in &self.failures {
            let _ = writeln!(out, "{},{},\"{}\"", f.scheme, f.seed, f.error.replace('"', "'"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub plan: ExperimentPlan,
    pub points: Vec<PointResult>,
}

impl PlanResult {
    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_CSV_HEADER}\n");
        for p in &self.points {
            out.push_str(&p.summary_rows());
        }
        out
    }

    pub fn failure_count(&self) -> usize {
        self.points.iter().map(|p| p.failures.len()).sum()
    }
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs one sweep point: every scheme on every instance.
pub fn run_point(plan: &ExperimentPlan, index: usize, point: SweepPoint) -> PointResult {
    let base = point.apply(&plan.base);
    let jobs: Vec<(Scheme, usize)> = plan
        .schemes
        .iter()
        .flat_map(|&s| (0..plan.instances).map(move |k| (s, k)))
        .collect();
    let outcomes: Vec<(Scheme, u64, Result<MetricsReport>)> = jobs
        .par_iter()
        .map(|&(scheme, k)| {
            let seed = plan.instance_seed(k);
            let cfg = ScenarioConfig { scheme, seed, ..base.clone() };
            (scheme, seed, run_scenario(&cfg))
        })
        .collect();

    let mut failures = Vec::new();
    let mut schemes: Vec<SchemeResult> =
        plan.schemes.iter().map(|&scheme| SchemeResult { scheme, reports: vec![], summary: None }).collect();
    for (scheme, seed, outcome) in outcomes {
        let slot = schemes.iter_mut().find(|s| s.scheme == scheme).expect("planned scheme");
        match outcome {
            Ok(report) => slot.reports.push(report),
            Err(e) => failures.push(RunFailure { scheme, seed, error: e.to_string() }),
        }
    }
    for s in &mut schemes {
        s.summary = aggregate(&s.reports).ok();
    }
    PointResult { index, point, schemes, failures }
}

/// Runs a whole plan on `jobs` worker threads (0 picks the core count).
/// With `out`, each point's CSVs are written as soon as the point completes,
/// and the combined summary at the end.
pub fn run_plan(plan: &ExperimentPlan, jobs: usize, out: Option<&Path>) -> Result<PlanResult> {
    plan.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("plan.toml"), &plan.to_toml())?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SimError::Config(format!("worker pool: {e}")))?;
    let mut points = Vec::new();
    for (index, point) in plan.points().into_iter().enumerate() {
        let result = pool.install(|| run_point(plan, index, point));
        if let Some(dir) = out {
            write_atomic(&dir.join(format!("point_{index:02}_runs.csv")), &result.runs_csv())?;
            write_atomic(
                &dir.join(format!("point_{index:02}_summary.csv")),
                &format!("{SUMMARY_CSV_HEADER}\n{}", result.summary_rows()),
            )?;
            if !result.failures.is_empty() {
                write_atomic(&dir.join(format!("point_{index:02}_failures.csv")), &result.failures_csv())?;
            }
        }
        points.push(result);
    }
    let result = PlanResult { plan: plan.clone(), points };
    if let Some(dir) = out {
        write_atomic(&dir.join("summary.csv"), &result.summary_csv())?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(schemes: Vec<Scheme>, instances: usize) -> ExperimentPlan {
        let base = ScenarioConfig { node_count: 15, virtual_steps: 40, slots: 40, ..Default::default() };
        ExperimentPlan {
            name: "tiny".into(),
            base,
            sweep: Some(SweepAxis { parameter: SweepParameter::BurstyLoad, values: vec![0.5, 1.0] }),
            points: vec![],
            schemes,
            instances,
            seed: 9,
            out_dir: None,
        }
    }

    #[test]
    fn builtin_plans_have_expected_grids() {
        let mixed = builtin_plan("mixed").unwrap();
        let pts = mixed.points();
        assert_eq!(pts.len(), 11);
        assert!(pts.iter().all(|p| p.streaming_load == 2.0));
        assert_eq!(pts[0].bursty_load, 0.5);
        assert_eq!(pts[10].bursty_load, 10.0);
        assert_eq!(mixed.schemes.len(), 5);

        let thr = builtin_plan("throughput").unwrap();
        assert_eq!(thr.points().len(), 13);
        assert_eq!(thr.base.traffic.bursty_probability, 0.0);
        assert_eq!(thr.points()[12].streaming_load, 12.0);

        let rob = builtin_plan("robustness").unwrap();
        let pts = rob.points();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[3].virtual_loads, Some(VirtualLoads { streaming: 1.0, bursty: 10.0 }));
        assert_eq!((pts[3].streaming_load, pts[3].bursty_load), (2.0, 20.0));
        assert!(builtin_plan("nope").is_none());
    }

    #[test]
    fn plan_toml_round_trip_and_validation() {
        for name in BUILTIN_PLANS {
            let plan = builtin_plan(name).unwrap();
            assert_eq!(ExperimentPlan::from_toml(&plan.to_toml()).unwrap(), plan);
        }
        let text = "name = \"x\"\ninstances = 0\n[sweep]\nparameter = \"bursty_load\"\nvalues = [1.0]\n";
        assert!(ExperimentPlan::from_toml(text).is_err());
        let text = "name = \"x\"\n[sweep]\nparameter = \"bursty_load\"\nvalues = []\n";
        assert!(ExperimentPlan::from_toml(text).is_err());
        assert!(ExperimentPlan::from_toml("name = \"x\"\n").is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_paired() {
        let plan = tiny(vec![Scheme::SpBp, Scheme::AntBp], 2);
        let a = run_plan(&plan, 1, None).unwrap();
        let b = run_plan(&plan, 2, None).unwrap();
        assert_eq!(a.summary_csv(), b.summary_csv());
        assert_eq!(a.failure_count(), 0);
        let p = &a.points[0];
        let injected = |s| p.scheme(s).unwrap().reports.iter().map(|r| r.total_injected()).collect::<Vec<_>>();
        assert_eq!(injected(Scheme::SpBp), injected(Scheme::AntBp));
    }

    #[test]
    fn degenerate_sweep_matches_single_run() {
        let mut plan = tiny(vec![Scheme::AntBp], 1);
        plan.sweep = Some(SweepAxis { parameter: SweepParameter::BurstyLoad, values: vec![0.5] });
        let result = run_plan(&plan, 1, None).unwrap();
        let cfg = ScenarioConfig { scheme: Scheme::AntBp, seed: 9, ..plan.points()[0].apply(&plan.base) };
        let single = run_scenario(&cfg).unwrap();
        let summary = result.points[0].schemes[0].summary.as_ref().unwrap();
        assert_eq!(summary.runs, 1);
        for kind in FlowKind::ALL {
            assert_eq!(summary.class(kind).delivery_ratio.mean, single.delivery_ratio(kind));
            assert_eq!(summary.class(kind).delivery_ratio.std_error, 0.0);
        }
        assert_eq!(summary.throughput.mean, single.throughput_mean());
        assert_eq!(result.points[0].runs_csv(), single.to_csv());
    }

    #[test]
    fn failures_are_recorded_and_sweep_continues() {
        let mut plan = tiny(vec![Scheme::SpBp], 1);
        plan.base.retry_cap = 0;
        let result = run_plan(&plan, 1, None).unwrap();
        assert_eq!(result.points.len(), 2);
        assert_eq!(result.failure_count(), 2);
        assert!(result.summary_csv().lines().nth(1).unwrap().contains(",0,1,"));
    }

    #[test]
    fn outputs_are_written_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let plan = tiny(vec![Scheme::SpBp], 1);
        run_plan(&plan, 1, Some(dir.path())).unwrap();
        for f in ["plan.toml", "summary.csv", "point_00_runs.csv", "point_01_summary.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + 2 * 2);
        assert!(!dir.path().join("summary.csv.tmp").exists());
    }
}
