use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use perseus_core::costmodel::{synth_profile, BlockingPower, ProfileSet};
use perseus_core::dag::{min_imbalance_partition, parse_dag_spec, Kind};
use perseus_core::emulator::{
    savings_csv, schedule_energy, simulate, straggler_savings, timeline_csv, timeline_svg, ClusterScenario, Scaling,
};
use perseus_core::frontier::{discover_frontier, frontier_csv, schedule_json, FrontierBundle};
use perseus_core::oracle::{brute_force_frontier, gap_report};
use perseus_core::service::{AppState, ServiceConfig};
use perseus_core::units::{quanta_to_us, secs_to_quanta};
use perseus_core::{Error, Workload};

#[derive(Parser)]
#[command(name = "perseus", version, about = "Energy schedules for pipeline-parallel training")]
struct Cli {
    /// Time quantum in microseconds.
    #[arg(long, global = true, default_value_t = 1)]
    quantum_us: u32,
    /// Blocking power in watts (default: the profile file's value, else 75).
    #[arg(long, global = true)]
    p_blocking_watts: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    Weak,
    Strong,
}

#[derive(Subcommand)]
enum Command {
    /// Split layers into stages with minimal latency imbalance.
    Partition {
        /// JSON array of per-layer latencies (or whitespace-separated numbers).
        #[arg(long)]
        layers: PathBuf,
        #[arg(long)]
        stages: usize,
    },
    /// Characterize the time-energy frontier of a pipeline.
    Optimize {
        /// `1f1b:<N>x<M>`, `gpipe:<N>x<M>` or `file:<path>`.
        #[arg(long)]
        dag: String,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long, default_value_t = 1000)]
        tau_us: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emulate straggler scenarios for an optimized pipeline.
    Emulate {
        /// `bundle.json` written by `optimize`, or its output directory.
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long = "straggler-factor", value_delimiter = ',', num_args = 1.., default_value = "1.0")]
        straggler_factors: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        pipelines: usize,
        #[arg(long, value_enum, default_value = "weak")]
        scaling: ScalingArg,
        /// Global batch in microbatches for strong scaling.
        #[arg(long)]
        global_microbatches: Option<usize>,
        /// Directory for savings, breakdown and timeline files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP job service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        /// Working directory (overridden by PERSEUS_WORKDIR).
        #[arg(long, default_value = "perseus-work")]
        workdir: PathBuf,
    },
    /// Write a synthetic profile file from a cubic DVFS power model.
    SynthProfiles {
        #[arg(long)]
        stages: usize,
        /// Forward time of stage 0 at the highest frequency, in milliseconds.
        #[arg(long, default_value_t = 10.0)]
        forward_ms: f64,
        /// Each later stage is this fraction heavier than the previous one.
        #[arg(long, default_value_t = 0.1)]
        imbalance: f64,
        #[arg(long, value_delimiter = ',', default_value = "1410,1305,1200,1095,990,885,780,675")]
        freqs: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare against exhaustive enumeration (tiny instances only).
    #[command(hide = true)]
    Oracle {
        #[arg(long)]
        dag: String,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long, default_value_t = 1000)]
        tau_us: i64,
    },
}

enum Failure {
    Invalid(String),
    Optimization(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Partition { ref layers, stages } => partition(layers, stages),
        Command::Optimize { ref dag, ref profiles, tau_us, ref out } => optimize(&cli, dag, profiles, tau_us, out),
        Command::Emulate { ref schedule, ref straggler_factors, pipelines, scaling, global_microbatches, ref out } => {
            emulate(schedule, straggler_factors, pipelines, scaling, global_microbatches, out.as_deref())
        }
        Command::Serve { addr, workers, ref workdir } => serve(&cli, addr, workers, workdir),
        Command::SynthProfiles { stages, forward_ms, imbalance, ref freqs, ref out } => {
            synth(&cli, stages, forward_ms, imbalance, freqs, out)
        }
        Command::Oracle { ref dag, ref profiles, tau_us } => oracle(&cli, dag, profiles, tau_us),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Optimization(msg)) => {
            eprintln!("optimization failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn read_layers(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(v) = serde_json::from_str::<Vec<f64>>(&text) {
        return Ok(v);
    }
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Failure::Invalid(format!("bad layer latency {t:?}"))))
        .collect()
}

fn partition(layers: &Path, stages: usize) -> Result<(), Failure> {
    let result = min_imbalance_partition(&read_layers(layers)?, stages)?;
    println!("{}", serde_json::to_string(&result).expect("partition serializes"));
    Ok(())
}

fn load_workload(cli: &Cli, dag: &str, profiles: &Path) -> Result<(Workload, serde_json::Value), Failure> {
    let dag = parse_dag_spec(dag)?;
    let text = std::fs::read_to_string(profiles)?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    let set = ProfileSet::from_json_str(&text, cli.quantum_us, cli.p_blocking_watts)?;
    Ok((Workload::new(dag, set)?, doc))
}

fn tau_quanta(tau_us: i64, quantum_us: u32) -> Result<i64, Failure> {
    if tau_us <= 0 {
        return Err(Failure::Invalid(format!("--tau-us must be positive, got {tau_us}")));
    }
    if quantum_us == 0 {
        return Err(Failure::Invalid("--quantum-us must be positive".into()));
    }
    Ok(secs_to_quanta(tau_us as f64 * 1e-6, quantum_us).max(1))
}

fn optimize(cli: &Cli, dag: &str, profiles: &Path, tau_us: i64, out: &Path) -> Result<(), Failure> {
    let tau = tau_quanta(tau_us, cli.quantum_us)?;
    let (w, doc) = load_workload(cli, dag, profiles)?;
    let frontier = discover_frontier(&w, tau).map_err(|e| Failure::Optimization(e.to_string()))?;
    let q = cli.quantum_us;
    let schedules_dir = out.join("schedules");
    std::fs::create_dir_all(&schedules_dir)?;
    std::fs::write(out.join("frontier.csv"), frontier_csv(&frontier, q))?;
    for s in frontier.schedules() {
        std::fs::write(schedules_dir.join(format!("schedule_{:05}.json", s.id)), schedule_json(s, q) + "\n")?;
    }
    let summary = format!(
        "T_min_us={} T_star_us={} steps={}",
        quanta_to_us(frontier.t_min, q),
        quanta_to_us(frontier.t_star, q),
        frontier.steps()
    );
    std::fs::write(out.join("summary.txt"), format!("{summary}\n"))?;
    let bundle = FrontierBundle {
        quantum_us: q,
        p_blocking_watts: w.profiles().p_blocking.watts(),
        tau_us,
        dag: w.dag().clone(),
        profiles: doc,
        frontier,
    };
    std::fs::write(out.join("bundle.json"), bundle.to_json_string())?;
    println!("{summary}");
    Ok(())
}

fn emulate(
    schedule: &Path,
    factors: &[f64],
    pipelines: usize,
    scaling: ScalingArg,
    global_microbatches: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let path = if schedule.is_dir() { schedule.join("bundle.json") } else { schedule.to_path_buf() };
    let bundle = FrontierBundle::from_json_str(&std::fs::read_to_string(&path)?)
        .map_err(|e| Failure::Invalid(format!("malformed schedule bundle {}: {e}", path.display())))?;
    let w = bundle.workload()?;
    let microbatches = w.dag().computations().iter().filter_map(|c| c.microbatch).max().map_or(1, |m| m + 1);
    let scaling = match scaling {
        ScalingArg::Weak => Scaling::Weak { microbatches },
        ScalingArg::Strong => Scaling::Strong { global_microbatches: global_microbatches.unwrap_or(microbatches * pipelines) },
    };
    let scenario = ClusterScenario::new(pipelines, scaling)?;
    if scenario.microbatches_per_pipeline() != microbatches {
        eprintln!(
            "note: scenario runs {} microbatches per pipeline but the bundle's DAG has {microbatches}; \
             re-optimize that shape for exact numbers",
            scenario.microbatches_per_pipeline()
        );
    }
    let rows = straggler_savings(&w, &bundle.frontier, &scenario, factors)?;
    let csv = savings_csv(&rows);
    print!("{csv}");
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("savings.csv"), &csv)?;
        let mut breakdown = String::from("factor,straggler_time_us,savings_mj,intrinsic_mj,extrinsic_mj\n");
        for r in &rows {
            breakdown.push_str(&format!(
                "{},{},{},{},{}\n",
                r.factor,
                quanta_to_us(r.straggler_time, w.quantum_us()),
                r.savings_mj,
                r.intrinsic_mj,
                r.extrinsic_mj
            ));
        }
        std::fs::write(out.join("breakdown.csv"), breakdown)?;
        let factor = factors.first().copied().unwrap_or(1.0);
        let t_prime = (w.t_min() as f64 * factor).round() as i64;
        let chosen = bundle.frontier.lookup(t_prime);
        let timeline = simulate(w.dag(), &chosen.realized)?;
        std::fs::write(out.join("timeline.csv"), timeline_csv(&w, &timeline, chosen))?;
        std::fs::write(out.join("timeline.svg"), timeline_svg(&w, &timeline, chosen))?;
        let report = schedule_energy(&w, chosen, t_prime.max(timeline.iteration_time))?;
        std::fs::write(out.join("energy.json"), serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
    }
    Ok(())
}

fn serve(cli: &Cli, addr: std::net::SocketAddr, workers: usize, workdir: &Path) -> Result<(), Failure> {
    let workdir = std::env::var_os("PERSEUS_WORKDIR").map(PathBuf::from).unwrap_or_else(|| workdir.to_path_buf());
    let config = ServiceConfig { workdir, workers, quantum_us: cli.quantum_us, p_blocking_watts: cli.p_blocking_watts };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let state = AppState::open(config)?;
        eprintln!("listening on {addr}");
        perseus_core::service::serve(addr, state).await
    })?;
    Ok(())
}

fn synth(cli: &Cli, stages: usize, forward_ms: f64, imbalance: f64, freqs: &[u32], out: &Path) -> Result<(), Failure> {
    if stages == 0 || !(forward_ms > 0.0) || !(imbalance >= 0.0) || freqs.len() < 2 {
        return Err(Failure::Invalid("need stages >= 1, positive forward time, imbalance >= 0, >= 2 frequencies".into()));
    }
    let top = *freqs.iter().max().unwrap() as f64;
    let mut profiles = Vec::new();
    for s in 0..stages {
        // cycles so that the forward pass takes `forward_ms` at the top frequency
        let work = forward_ms * 1e-3 * top * 1e6 * (1.0 + imbalance).powi(s as i32);
        profiles.push(synth_profile(s, Kind::Forward, work, 90.0, 7e-8, freqs, cli.quantum_us)?);
        profiles.push(synth_profile(s, Kind::Backward, 2.0 * work, 90.0, 7e-8, freqs, cli.quantum_us)?);
    }
    let p = BlockingPower::new(cli.p_blocking_watts.unwrap_or(perseus_core::units::DEFAULT_P_BLOCKING_WATTS))?;
    let set = ProfileSet::new(profiles, p, cli.quantum_us)?;
    std::fs::write(out, set.to_json_string() + "\n")?;
    Ok(())
}

fn oracle(cli: &Cli, dag: &str, profiles: &Path, tau_us: i64) -> Result<(), Failure> {
    let tau = tau_quanta(tau_us, cli.quantum_us)?;
    let (w, _) = load_workload(cli, dag, profiles)?;
    let exact = brute_force_frontier(&w)?;
    let frontier = discover_frontier(&w, tau).map_err(|e| Failure::Optimization(e.to_string()))?;
    println!("t_us,exact_energy_mj");
    for p in &exact.points {
        println!("{},{}", quanta_to_us(p.time, cli.quantum_us), p.energy_mj);
    }
    let report = gap_report(&exact, &frontier);
    println!(
        "max_gap={:.6} mean_gap={:.6} schedule_max_gap={:.6}",
        report.max_gap, report.mean_gap, report.schedule_max_gap
    );
    Ok(())
}
