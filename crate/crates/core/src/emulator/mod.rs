//! Discrete-event emulation of one training iteration, the three-part energy
//! decomposition, straggler scenarios, and frequency-knob baselines.

mod baseline;
mod render;

use serde::{Deserialize, Serialize};

use crate::dag::{check_durations, NodeDag};
use crate::error::{invalid, Error, Result};
use crate::frontier::{all_max_schedule, EnergySchedule, Frontier};
use crate::units::{power_energy_mj, MilliJoules, Quanta};
use crate::workload::Workload;

pub use baseline::{baseline_zeus_global, baseline_zeus_per_stage, BaselinePoint};
pub use render::{savings_csv, timeline_csv, timeline_svg};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub start: Vec<Quanta>,
    pub end: Vec<Quanta>,
    /// Busy intervals per stage, in start order.
    pub stage_busy: Vec<Vec<(Quanta, Quanta)>>,
    pub iteration_time: Quanta,
}

impl Timeline {
    /// Idle gaps between consecutive computations of a stage.
    pub fn stage_gaps(&self, stage: usize) -> Vec<(Quanta, Quanta)> {
        self.stage_busy[stage]
            .windows(2)
            .filter(|w| w[1].0 > w[0].1)
            .map(|w| (w[0].1, w[1].0))
            .collect()
    }
}

/// Runs every computation as soon as all of its predecessors finish.
pub fn simulate(dag: &NodeDag, durations: &[Quanta]) -> Result<Timeline> {
    check_durations(dag.len(), durations)?;
    let order = dag.topo_order()?;
    let preds = dag.predecessors();
    let mut start = vec![0; dag.len()];
    let mut end = vec![0; dag.len()];
    for &v in &order {
        start[v] = preds[v].iter().map(|&p| end[p]).max().unwrap_or(0);
        end[v] = start[v] + durations[v];
    }
    let mut stage_busy = vec![Vec::new(); dag.num_stages()];
    for c in dag.computations() {
        stage_busy[c.stage].push((start[c.id], end[c.id]));
    }
    for busy in &mut stage_busy {
        busy.sort();
    }
    let iteration_time = end.iter().copied().max().unwrap_or(0);
    Ok(Timeline { start, end, stage_busy, iteration_time })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEnergy {
    pub computation_mj: MilliJoules,
    pub blocking_mj: MilliJoules,
    pub straggler_mj: MilliJoules,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Sum of computation energies.
    pub computation_mj: MilliJoules,
    /// Blocking inside the iteration: `P (N T - sum t)`.
    pub blocking_mj: MilliJoules,
    /// Waiting for the straggler: `P N (T' - T)`.
    pub straggler_mj: MilliJoules,
    pub total_mj: MilliJoules,
    /// `sum(e - P t) + P N T'`.
    pub effective_total_mj: MilliJoules,
    pub per_stage: Vec<StageEnergy>,
}

/// Energy of one pipeline iteration that waits until `straggler_time`.
pub fn energy_report(
    w: &Workload,
    timeline: &Timeline,
    times: &[Quanta],
    energies: &[MilliJoules],
    straggler_time: Quanta,
) -> Result<EnergyReport> {
    let t = timeline.iteration_time;
    if straggler_time < t {
        return Err(invalid(format!("straggler time {straggler_time} is shorter than the iteration ({t})")));
    }
    let p = w.profiles().p_blocking.watts();
    let q = w.quantum_us();
    let stages = w.num_stages() as i64;
    let busy: Quanta = times.iter().sum();
    let computation_mj: MilliJoules = energies.iter().sum();
    let blocking_mj = power_energy_mj(p, stages * t - busy, q);
    let straggler_mj = power_energy_mj(p, stages * (straggler_time - t), q);
    let total_mj = computation_mj + blocking_mj + straggler_mj;
    let effective: MilliJoules = times.iter().zip(energies).map(|(&ti, &e)| w.effective_mj(e, ti)).sum();
    let effective_total_mj = effective + power_energy_mj(p, stages * straggler_time, q);
    // each per-computation rounding moves the two forms apart by under 1 mJ
    if (total_mj - effective_total_mj).abs() > times.len() as i64 + 1 {
        return Err(Error::InvalidInput(format!(
            "energy decompositions disagree: {total_mj} vs {effective_total_mj}"
        )));
    }
    let per_stage = (0..w.num_stages())
        .map(|s| {
            let members = w.dag().stage_members(s);
            let stage_busy: Quanta = members.iter().map(|&i| times[i]).sum();
            StageEnergy {
                computation_mj: members.iter().map(|&i| energies[i]).sum(),
                blocking_mj: power_energy_mj(p, t - stage_busy, q),
                straggler_mj: power_energy_mj(p, straggler_time - t, q),
            }
        })
        .collect();
    Ok(EnergyReport { computation_mj, blocking_mj, straggler_mj, total_mj, effective_total_mj, per_stage })
}

/// [`energy_report`] for a schedule's realized frequencies.
pub fn schedule_energy(w: &Workload, schedule: &EnergySchedule, straggler_time: Quanta) -> Result<EnergyReport> {
    let timeline = simulate(w.dag(), &schedule.realized)?;
    energy_report(w, &timeline, &schedule.realized, &schedule.realized_energy_mj, straggler_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    /// Every pipeline keeps this many microbatches.
    Weak { microbatches: usize },
    /// The global batch (in microbatches) is split across pipelines.
    Strong { global_microbatches: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterScenario {
    pub pipelines: usize,
    pub scaling: Scaling,
}

impl ClusterScenario {
    pub fn new(pipelines: usize, scaling: Scaling) -> Result<Self> {
        if pipelines == 0 {
            return Err(invalid("need at least one pipeline"));
        }
        let s = Self { pipelines, scaling };
        if s.microbatches_per_pipeline() == 0 {
            return Err(invalid("fewer microbatches than pipelines"));
        }
        Ok(s)
    }

    pub fn microbatches_per_pipeline(&self) -> usize {
        match self.scaling {
            Scaling::Weak { microbatches } => microbatches,
            Scaling::Strong { global_microbatches } => global_microbatches / self.pipelines,
        }
    }

    /// Large-scale strong-scaling rows: 8-stage, 8-way tensor-parallel
    /// pipelines sharing a global batch of 1536 microbatches on 1024 to 8192
    /// GPUs.
    pub fn strong_scaling_rows() -> Vec<(usize, ClusterScenario)> {
        [16usize, 32, 64, 128]
            .iter()
            .map(|&p| {
                let s = ClusterScenario { pipelines: p, scaling: Scaling::Strong { global_microbatches: 1536 } };
                (p * 8 * 8, s)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub factor: f64,
    pub straggler_time: Quanta,
    /// Savings relative to every pipeline at all-max frequencies.
    pub savings_pct: f64,
    pub savings_mj: MilliJoules,
    /// Part of the savings available without any straggler.
    pub intrinsic_mj: MilliJoules,
    pub extrinsic_mj: MilliJoules,
}

/// Cluster energy savings for each straggler slowdown factor.
///
/// The straggler runs at all-max frequencies and takes `factor * T_min`;
/// every other pipeline runs `frontier.lookup(T')`. The baseline runs every
/// pipeline at all-max frequencies. With a single pipeline there is no
/// non-straggler and the table is empty.
pub fn straggler_savings(
    w: &Workload,
    frontier: &Frontier,
    scenario: &ClusterScenario,
    factors: &[f64],
) -> Result<Vec<SavingsRow>> {
    if scenario.pipelines <= 1 {
        return Ok(Vec::new());
    }
    let others = scenario.pipelines as i64 - 1;
    let all_max = all_max_schedule(w);
    let fastest = frontier.lookup(w.t_min());
    factors
        .iter()
        .map(|&factor| {
            if !(factor.is_finite() && factor >= 1.0) {
                return Err(invalid(format!("straggler factor must be >= 1, got {factor}")));
            }
            let t_prime = (w.t_min() as f64 * factor).round() as Quanta;
            // the effective form shares one rounded `P N T'` term across
            // schedules, so it cancels exactly in the differences
            let baseline = schedule_energy(w, &all_max, t_prime)?.effective_total_mj;
            let chosen = schedule_energy(w, frontier.lookup(t_prime), t_prime)?.effective_total_mj;
            let intrinsic = schedule_energy(w, fastest, t_prime)?.effective_total_mj;
            let savings_mj = others * (baseline - chosen);
            let intrinsic_mj = others * (baseline - intrinsic);
            let cluster = scenario.pipelines as i64 * baseline;
            Ok(SavingsRow {
                factor,
                straggler_time: t_prime,
                savings_pct: 100.0 * savings_mj as f64 / cluster as f64,
                savings_mj,
                intrinsic_mj,
                extrinsic_mj: savings_mj - intrinsic_mj,
            })
        })
        .collect()
}
