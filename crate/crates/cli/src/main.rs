use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use antbp::engine::EstablishedPolicy;
use antbp::experiments::{builtin_plan, run_plan, write_atomic, ExperimentPlan, BUILTIN_PLANS};
use antbp::export::{aco_to_text, counts_to_text, instance_to_json, pheromones_to_text};
use antbp::{simulate, ScenarioConfig, Scheme, SimError};

#[derive(Parser)]
#[command(name = "antbp", version, about = "Wireless multi-hop routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report CSV.
    Run {
        /// TOML scenario config; defaults are used when omitted.
        config: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "ANTBP_OUT", default_value = "results")]
        out: PathBuf,
        /// Write a per-slot JSON-lines trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the instance as JSON and the established routing table as TSV.
        #[arg(long)]
        export: bool,
    },
    /// Run a built-in or file-defined experiment plan.
    Sweep {
        /// Built-in plan name or path to a TOML plan.
        plan: String,
        #[arg(long)]
        instances: Option<usize>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, env = "ANTBP_OUT", default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List built-in experiment plans.
    ListPlans,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, scheme, seed, out, trace, export } => {
            cmd_run(config.as_deref(), scheme, seed, &out, trace.as_deref(), export)
        }
        Command::Sweep { plan, instances, jobs, out, seed } => cmd_sweep(&plan, instances, jobs, &out, seed),
        Command::ListPlans => {
            cmd_list_plans();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(
    config_path: Option<&Path>,
    scheme: Option<Scheme>,
    seed: Option<u64>,
    out: &Path,
    trace_path: Option<&Path>,
    export: bool,
) -> anyhow::Result<()> {
    let mut config = match config_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = scheme {
        config.scheme = s;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut trace = match trace_path {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let outcome = simulate(&config, trace.as_mut().map(|w| w as &mut dyn Write));
    if let Some(w) = trace.as_mut() {
        w.flush()?;
    }
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ SimError::Invariant(_)) => {
            let path = out.join(format!("diagnostic_{}_seed{}.txt", config.scheme, config.seed));
            write_atomic(&path, &format!("{e}\n\n{}", config.to_toml()))?;
            bail!("{e} (diagnostic written to {})", path.display());
        }
        Err(e) => return Err(e.into()),
    };

    let stem = format!("{}_seed{}", config.scheme, config.seed);
    let report = &outcome.report;
    write_atomic(&out.join(format!("{stem}.csv")), &report.to_csv())?;
    write_atomic(&out.join(format!("{stem}_throughput.csv")), &report.throughput_csv())?;
    if export {
        write_atomic(&out.join(format!("{stem}_instance.json")), &instance_to_json(&outcome.network, &outcome.flows))?;
        let net = &outcome.network;
        match &outcome.policy {
            EstablishedPolicy::None => {}
            EstablishedPolicy::Pheromones { counts, table } => {
                write_atomic(&out.join(format!("{stem}_counts.tsv")), &counts_to_text(net, counts))?;
                write_atomic(&out.join(format!("{stem}_pheromone.tsv")), &pheromones_to_text(net, table))?;
            }
            EstablishedPolicy::Aco { established } => {
                write_atomic(&out.join(format!("{stem}_pheromone.tsv")), &aco_to_text(net, established))?;
            }
        }
    }

    let fmt_latency = |l: Option<f64>| l.map_or("-".to_string(), |l| format!("{l:.1}"));
    use antbp::traffic::FlowKind::{Bursty, Streaming};
    println!(
        "{} seed={} streaming: ratio={:.3} latency={} bursty: ratio={:.3} latency={} throughput={:.2} -> {}",
        config.scheme,
        config.seed,
        report.delivery_ratio(Streaming),
        fmt_latency(report.mean_latency(Streaming)),
        report.delivery_ratio(Bursty),
        fmt_latency(report.mean_latency(Bursty)),
        report.throughput_mean(),
        out.join(format!("{stem}.csv")).display()
    );
    Ok(())
}

fn cmd_sweep(
    plan_ref: &str,
    instances: Option<usize>,
    jobs: usize,
    out: &Path,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let mut plan = match builtin_plan(plan_ref) {
        Some(p) => p,
        None => {
            let path = Path::new(plan_ref);
            if !path.exists() {
                bail!("`{plan_ref}` is neither a built-in plan ({}) nor a file", BUILTIN_PLANS.join(", "));
            }
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentPlan::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
    };
    if let Some(n) = instances {
        plan.instances = n;
    }
    if let Some(s) = seed {
        plan.seed = s;
    }
    let dir = plan.out_dir.clone().unwrap_or_else(|| out.join(&plan.name));
    let result = run_plan(&plan, jobs, Some(&dir))?;
    let runs = plan.points().len() * plan.schemes.len() * plan.instances;
    println!(
        "{}: {} points, {} runs, {} failed -> {}",
        plan.name,
        result.points.len(),
        runs,
        result.failure_count(),
        dir.join("summary.csv").display()
    );
    Ok(())
}

fn cmd_list_plans() {
    for name in BUILTIN_PLANS {
        let plan = builtin_plan(name).expect("built-in");
        let schemes: Vec<&str> = plan.schemes.iter().map(|s| s.as_str()).collect();
        println!(
            "{name}\t{} points\t{} instances\tschemes: {}",
            plan.points().len(),
            plan.instances,
            schemes.join(",")
        );
    }
}
