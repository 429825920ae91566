//! Iterative discovery of the iteration-time/energy frontier.
//!
//! Starting from the schedule where every computation runs at its
//! minimum-energy frequency, each step shortens the iteration time by `tau`
//! with the smallest energy increase: the critical sub-DAG is annotated with
//! flow bounds, its minimum cut picks computations to speed up (S -> T
//! edges) and to slow down (T -> S edges), and the result is re-discretized
//! to real frequencies.

mod io;

use serde::{Deserialize, Serialize};

use crate::dag::{annotate_slack, critical_subdag};
use crate::error::{invalid, Error, Result};
use crate::flow::{build_capacity_dag, max_flow_lower_bounds, min_cut_from_flow, FlowEdge, FlowGraph, MaxFlow};
use crate::units::{MilliJoules, Quanta};
use crate::workload::Workload;

pub use io::{frontier_csv, schedule_json, FrontierBundle, ScheduleDocument, ScheduleEntry};

/// One point of the frontier: planned durations/energies from the relaxed
/// problem and the frequencies (with profiled times/energies) realizing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergySchedule {
    pub id: usize,
    pub planned: Vec<Quanta>,
    pub planned_energy_mj: Vec<MilliJoules>,
    /// `None` for computations without a tunable frequency.
    pub frequencies: Vec<Option<u32>>,
    pub realized: Vec<Quanta>,
    pub realized_energy_mj: Vec<MilliJoules>,
    pub t_planned: Quanta,
    pub t_realized: Quanta,
    /// Effective energy (`sum(e - P_blocking * t)`) of the planned schedule.
    pub energy_planned_mj: MilliJoules,
    /// Effective energy of the realized schedule.
    pub energy_realized_mj: MilliJoules,
    /// Sum of min-cut costs paid to reach this schedule from the previous one.
    pub cut_cost_mj: MilliJoules,
}

impl EnergySchedule {
    /// Builds a schedule from planned durations and discretizes it.
    pub fn from_planned(w: &Workload, planned: Vec<Quanta>) -> Self {
        Self::from_planned_near(w, planned, None)
    }

    /// [`EnergySchedule::from_planned`], also trying `hint` (Pareto indices of
    /// a neighbouring schedule) as a starting assignment.
    fn from_planned_near(w: &Workload, planned: Vec<Quanta>, hint: Option<&[usize]>) -> Self {
        let planned_energy_mj: Vec<MilliJoules> =
            planned.iter().enumerate().map(|(i, &t)| w.planned_energy_mj(i, t)).collect();
        let energy_planned_mj =
            planned.iter().zip(&planned_energy_mj).map(|(&t, &e)| w.effective_mj(e, t)).sum();
        let t_planned = w.iteration_time(&planned);
        let mut s = Self {
            id: 0,
            planned,
            planned_energy_mj,
            frequencies: Vec::new(),
            realized: Vec::new(),
            realized_energy_mj: Vec::new(),
            t_planned,
            t_realized: 0,
            energy_planned_mj,
            energy_realized_mj: 0,
            cut_cost_mj: 0,
        };
        let picks = discrete_picks(w, &s.planned, s.t_planned, hint);
        apply_picks(&mut s, w, &picks);
        s
    }

    /// Pareto index of each computation's realized point.
    fn picks(&self, w: &Workload) -> Vec<usize> {
        (0..self.realized.len())
            .map(|i| {
                let freq = self.frequencies[i].unwrap_or(0);
                w.model(i).pareto().iter().position(|p| p.time == self.realized[i] && p.freq_mhz == freq).unwrap_or(0)
            })
            .collect()
    }
}

/// Assigns each computation the slowest Pareto frequency whose profiled time
/// is within its planned duration (the fastest one if none is), hands the
/// slack this rounding leaves back to the computations that save the most
/// energy with it, then recomputes realized time and energy.
pub fn discretize(schedule: &mut EnergySchedule, w: &Workload) {
    let picks = discrete_picks(w, &schedule.planned, schedule.t_planned, None);
    apply_picks(schedule, w, &picks);
}

/// Sets the realized side of `schedule` from Pareto indices.
fn apply_picks(schedule: &mut EnergySchedule, w: &Workload, picks: &[usize]) {
    let points: Vec<_> = picks.iter().enumerate().map(|(i, &k)| w.model(i).pareto()[k]).collect();
    schedule.frequencies = points.iter().map(|p| (p.freq_mhz > 0).then_some(p.freq_mhz)).collect();
    schedule.realized = points.iter().map(|p| p.time).collect();
    schedule.realized_energy_mj = points.iter().map(|p| p.energy_mj).collect();
    schedule.t_realized = w.iteration_time(&schedule.realized);
    schedule.energy_realized_mj = points.iter().map(|p| w.effective_mj(p.energy_mj, p.time)).sum();
}

/// Pareto index per computation realizing `planned` within `deadline`.
///
/// Three roundings seed the search: up to the slowest point no longer than
/// planned, to the nearest point, and down to the fastest point no shorter
/// than planned; `hint`, when given, is a fourth. Seeds that overrun are
/// repaired first. Each seed's slack is spent greedily, and the cheapest
/// (earlier seed on ties) is refined by [`reclaim_slack`].
fn discrete_picks(w: &Workload, planned: &[Quanta], deadline: Quanta, hint: Option<&[usize]>) -> Vec<usize> {
    let eff = |i: usize, k: usize| {
        let p = w.model(i).pareto()[k];
        w.effective_mj(p.energy_mj, p.time)
    };
    let round = |choose: fn(&[crate::costmodel::ProfilePoint], Quanta) -> usize| -> Vec<usize> {
        planned.iter().enumerate().map(|(i, &t)| choose(w.model(i).pareto(), t)).collect()
    };
    let up = |pareto: &[crate::costmodel::ProfilePoint], t: Quanta| {
        pareto.iter().rposition(|p| p.time <= t).unwrap_or(0)
    };
    let nearest = |pareto: &[crate::costmodel::ProfilePoint], t: Quanta| {
        (0..pareto.len()).min_by_key(|&k| ((pareto[k].time - t).abs(), k)).unwrap()
    };
    let down = |pareto: &[crate::costmodel::ProfilePoint], t: Quanta| {
        pareto.iter().position(|p| p.time >= t).unwrap_or(pareto.len() - 1)
    };
    let seeds = [Some(round(up)), Some(round(nearest)), Some(round(down)), hint.map(<[usize]>::to_vec)];
    let mut spent: Vec<(MilliJoules, Vec<usize>)> = Vec::new();
    for seed in seeds.into_iter().flatten() {
        let mut picks = seed;
        if repair(w, &mut picks, deadline, None, &eff).is_none() {
            continue;
        }
        let none = vec![false; picks.len()];
        spend(w, &mut picks, deadline, &none);
        if spent.iter().all(|(_, p)| *p != picks) {
            spent.push((total_effective(w, &picks), picks));
        }
    }
    // refinement is the expensive part: small problems refine every seed,
    // large ones only the cheapest
    if planned.len() > REFINE_ALL_SEEDS_MAX {
        spent.sort_by_key(|(e, _)| *e);
        spent.truncate(1);
    }
    let mut best: Option<(MilliJoules, Vec<usize>)> = None;
    for (_, mut picks) in spent {
        reclaim_slack(w, &mut picks, deadline);
        let energy = total_effective(w, &picks);
        if best.as_ref().is_none_or(|(e, _)| energy < *e) {
            best = Some((energy, picks));
        }
    }
    best.map_or_else(|| round(up), |(_, picks)| picks)
}

const REFINE_ALL_SEEDS_MAX: usize = 48;

fn total_effective(w: &Workload, picks: &[usize]) -> MilliJoules {
    picks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let p = w.model(i).pareto()[k];
            w.effective_mj(p.energy_mj, p.time)
        })
        .sum()
}

/// Spends the float of `picks` on slow-downs both greedy ways (largest
/// saving, largest saving per quantum) and keeps the cheaper.
fn spend(w: &Workload, picks: &mut Vec<usize>, deadline: Quanta, frozen: &[bool]) {
    let eff = |i: usize, k: usize| {
        let p = w.model(i).pareto()[k];
        w.effective_mj(p.energy_mj, p.time)
    };
    let mut by_rate = picks.clone();
    slow_down(w, picks, deadline, frozen, false, &eff);
    slow_down(w, &mut by_rate, deadline, frozen, true, &eff);
    if total_effective(w, &by_rate) < total_effective(w, picks) {
        *picks = by_rate;
    }
}

/// Speeds up computations (never `skip`) on the overrunning paths, cheapest
/// energy per quantum first, until the iteration fits in `deadline`.
/// Returns the energy added, or `None` if it cannot fit.
fn repair(
    w: &Workload,
    picks: &mut [usize],
    deadline: Quanta,
    skip: Option<usize>,
    eff: &impl Fn(usize, usize) -> MilliJoules,
) -> Option<MilliJoules> {
    let mut cost = 0;
    loop {
        let durations: Vec<Quanta> = picks.iter().enumerate().map(|(k, &p)| w.model(k).pareto()[p].time).collect();
        let floats = w.floats(&durations, deadline);
        let worst = floats.iter().copied().min().unwrap_or(0);
        if worst >= 0 {
            return Some(cost);
        }
        let mut pick: Option<(f64, usize)> = None;
        for k in (0..picks.len()).filter(|&k| Some(k) != skip && floats[k] == worst && picks[k] > 0) {
            let pareto = w.model(k).pareto();
            let gain = (pareto[picks[k]].time - pareto[picks[k] - 1].time).min(-worst);
            let rate = (eff(k, picks[k] - 1) - eff(k, picks[k])) as f64 / gain as f64;
            if pick.is_none_or(|(r, _)| rate < r) {
                pick = Some((rate, k));
            }
        }
        let (_, k) = pick?;
        cost += eff(k, picks[k] - 1) - eff(k, picks[k]);
        picks[k] -= 1;
    }
}

/// Local search over Pareto indices under `deadline`: compound moves that
/// slow one computation, buy the time back on the overrunning paths and
/// spend any slack this frees, and the reverse (speed one up, then spend).
/// Every accepted move strictly lowers effective energy, so the search
/// terminates. Scanning resumes after the last accepted move and stops once
/// a full round finds nothing.
fn reclaim_slack(w: &Workload, picks: &mut Vec<usize>, deadline: Quanta) {
    let eff = |i: usize, k: usize| {
        let p = w.model(i).pareto()[k];
        w.effective_mj(p.energy_mj, p.time)
    };
    let n = picks.len();
    let mut frozen = vec![false; n];
    let mut current = total_effective(w, picks);
    let mut since_improvement = 0;
    let mut i = 0;
    while since_improvement < n {
        let mut improved = false;
        // slow i down to any slower point, repairing elsewhere
        for j in picks[i] + 1..w.model(i).pareto().len() {
            let mut trial = picks.clone();
            trial[i] = j;
            if repair(w, &mut trial, deadline, Some(i), &eff).is_none() {
                continue;
            }
            for (k, f) in frozen.iter_mut().enumerate() {
                *f = k == i || trial[k] < picks[k];
            }
            spend(w, &mut trial, deadline, &frozen);
            let e = total_effective(w, &trial);
            if e < current {
                (*picks, current, improved) = (trial, e, true);
                break;
            }
        }
        // or buy time on i first, then spend it
        if !improved {
            for j in 0..picks[i] {
                let mut trial = picks.clone();
                trial[i] = j;
                for (k, f) in frozen.iter_mut().enumerate() {
                    *f = k == i;
                }
                spend(w, &mut trial, deadline, &frozen);
                let e = total_effective(w, &trial);
                if e < current {
                    (*picks, current, improved) = (trial, e, true);
                    break;
                }
            }
        }
        if improved {
            since_improvement = 0;
        } else {
            since_improvement += 1;
            i = (i + 1) % n;
        }
    }
}

/// Slow-downs within float, leaving `frozen` alone: largest saving first,
/// or largest saving per quantum of float used when `by_rate`.
fn slow_down(
    w: &Workload,
    picks: &mut [usize],
    deadline: Quanta,
    frozen: &[bool],
    by_rate: bool,
    eff: &impl Fn(usize, usize) -> MilliJoules,
) {
    loop {
        let durations: Vec<Quanta> = picks.iter().enumerate().map(|(k, &p)| w.model(k).pareto()[p].time).collect();
        let floats = w.floats(&durations, deadline);
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, &k) in picks.iter().enumerate() {
            if frozen[i] {
                continue;
            }
            let pareto = w.model(i).pareto();
            for j in (k + 1..pareto.len()).filter(|&j| pareto[j].time - pareto[k].time <= floats[i]) {
                let saving = eff(i, k) - eff(i, j);
                if saving <= 0 {
                    continue;
                }
                let score = if by_rate {
                    saving as f64 / (pareto[j].time - pareto[k].time).max(1) as f64
                } else {
                    saving as f64
                };
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, i, j));
                }
            }
        }
        match best {
            Some((_, i, j)) => picks[i] = j,
            None => return,
        }
    }
}

/// Every computation at its minimum-energy Pareto point.
pub fn min_energy_schedule(w: &Workload) -> EnergySchedule {
    EnergySchedule::from_planned(w, w.min_energy_durations())
}

/// Every computation at its maximum frequency, slack left unused: the
/// baseline savings are measured against.
pub fn all_max_schedule(w: &Workload) -> EnergySchedule {
    let mut s = EnergySchedule::from_planned(w, w.fastest_durations());
    apply_picks(&mut s, w, &vec![0; w.len()]);
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextSchedule {
    Next(EnergySchedule),
    AtMinimum,
}

/// Shortens the planned iteration time by `tau` (less if that would pass the
/// all-max time) with minimal effective-energy increase.
///
/// The reduction is applied in sub-steps. Each sub-step moves by at most the
/// smallest positive edge slack, so no non-critical path can overtake the
/// critical ones, and shrinks further when the cheapest cut would have to
/// speed up a computation with less room than the step.
pub fn get_next_schedule(w: &Workload, schedule: &EnergySchedule, tau: Quanta) -> Result<NextSchedule> {
    if tau <= 0 {
        return Err(invalid("tau must be positive"));
    }
    let start = schedule.t_planned;
    if start <= w.t_min() {
        return Ok(NextSchedule::AtMinimum);
    }
    let target = (start - tau).max(w.t_min());
    let mut durations = schedule.planned.clone();
    let mut cost = 0;
    let mut t = start;
    while t > target {
        match reduce_once(w, &mut durations, t - target)? {
            None => break,
            Some(c) => cost += c,
        }
        let next = w.iteration_time(&durations);
        if next >= t {
            return Err(Error::InvalidInput(format!(
                "min-cut step failed to shorten the iteration ({t} -> {next})"
            )));
        }
        t = next;
    }
    if t == start {
        return Ok(NextSchedule::AtMinimum);
    }
    // the previous assignment, sped up where needed, is usually close
    let mut next = EnergySchedule::from_planned_near(w, durations, Some(&schedule.picks(w)));
    next.id = schedule.id + 1;
    next.cut_cost_mj = cost;
    Ok(NextSchedule::Next(next))
}

/// One min-cut sub-step of at most `max_delta`. Returns the cut cost, or
/// `None` when no cut can shorten the critical paths.
fn reduce_once(w: &Workload, durations: &mut [Quanta], max_delta: Quanta) -> Result<Option<MilliJoules>> {
    let annotation = annotate_slack(w.edge_dag(), durations)?;
    let critical = critical_subdag(w.edge_dag(), &annotation);
    let curves = w.curves();
    let mut delta = max_delta.min(annotation.min_positive_slack().unwrap_or(Quanta::MAX));
    loop {
        let cap = build_capacity_dag(&critical, durations, curves, delta)?;
        let (graph, flow) = match max_flow_lower_bounds(&cap.graph) {
            MaxFlow::Feasible(f) => (cap.graph, f),
            MaxFlow::Infeasible => {
                // Slow-down credits cannot be honored together; price speed-ups only.
                let relaxed: Vec<FlowEdge> =
                    cap.graph.edges().iter().map(|e| FlowEdge { lower: 0, ..*e }).collect();
                let g = FlowGraph::new(cap.graph.num_nodes(), cap.graph.source(), cap.graph.sink(), relaxed)?;
                let f = max_flow_lower_bounds(&g).feasible().expect("zero lower bounds are feasible");
                (g, f)
            }
        };
        let cut = min_cut_from_flow(&graph, &flow);
        if cut.unbounded {
            // Retry with the largest step some blocked computation can still take.
            let room = critical
                .edges()
                .iter()
                .filter_map(|arc| arc.payload)
                .filter_map(|id| curves[id].map(|c| durations[id] - c.t_min))
                .filter(|&r| r > 0 && r < delta)
                .max();
            match room {
                Some(r) => {
                    delta = r;
                    continue;
                }
                None => return Ok(None),
            }
        }
        let mut realized_cost = 0;
        for &k in &cut.forward {
            if let Some(id) = cap.payloads[k] {
                if curves[id].is_some() {
                    durations[id] -= delta;
                }
            }
            realized_cost += graph.edges()[k].upper.unwrap_or(0);
        }
        for &k in &cut.backward {
            if let Some(id) = cap.payloads[k] {
                if let Some(c) = curves[id] {
                    if durations[id] + delta <= c.t_max {
                        durations[id] += delta;
                        realized_cost -= graph.edges()[k].lower;
                    }
                }
            }
        }
        return Ok(Some(realized_cost));
    }
}

/// Ordered frontier from `T*` (index 0) down to `T_min`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frontier {
    schedules: Vec<EnergySchedule>,
    pub t_min: Quanta,
    pub t_star: Quanta,
    pub tau: Quanta,
    /// `best_from[i]`: schedule with the least realized energy among `i..`.
    best_from: Vec<usize>,
}

impl Frontier {
    pub fn new(schedules: Vec<EnergySchedule>, t_min: Quanta, tau: Quanta) -> Result<Self> {
        if schedules.is_empty() {
            return Err(invalid("a frontier needs at least one schedule"));
        }
        if schedules.windows(2).any(|w| w[1].t_planned >= w[0].t_planned) {
            return Err(invalid("frontier schedules must have strictly decreasing planned time"));
        }
        let t_star = schedules[0].t_planned;
        let mut best_from = vec![0; schedules.len()];
        let last = schedules.len() - 1;
        best_from[last] = last;
        for i in (0..last).rev() {
            let b = best_from[i + 1];
            best_from[i] =
                if schedules[i].energy_realized_mj <= schedules[b].energy_realized_mj { i } else { b };
        }
        Ok(Self { schedules, t_min, t_star, tau, best_from })
    }

    pub fn schedules(&self) -> &[EnergySchedule] {
        &self.schedules
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    /// Number of frontier steps taken (schedules minus the seed).
    pub fn steps(&self) -> usize {
        self.schedules.len() - 1
    }

    pub fn fastest(&self) -> &EnergySchedule {
        self.schedules.last().unwrap()
    }

    /// Schedule to run when the slowest pipeline takes `straggler_time`:
    /// among schedules planned within `max(T_min, min(T*, T'))`, the one with
    /// the least realized energy (the slowest such on ties). Binary search
    /// plus a precomputed suffix minimum.
    pub fn lookup(&self, straggler_time: Quanta) -> &EnergySchedule {
        let bound = straggler_time.min(self.t_star).max(self.t_min);
        let first = self.schedules.partition_point(|s| s.t_planned > bound);
        let first = first.min(self.schedules.len() - 1);
        &self.schedules[self.best_from[first]]
    }
}

/// Traces the frontier from the minimum-energy schedule down to the all-max
/// iteration time in steps of `tau` quanta.
pub fn discover_frontier(w: &Workload, tau: Quanta) -> Result<Frontier> {
    if tau <= 0 {
        return Err(invalid("tau must be a positive number of quanta"));
    }
    let mut current = min_energy_schedule(w);
    let mut schedules = vec![current.clone()];
    while current.t_planned > w.t_min() {
        match get_next_schedule(w, &current, tau)? {
            NextSchedule::AtMinimum => break,
            NextSchedule::Next(s) => {
                schedules.push(s.clone());
                current = s;
            }
        }
    }
    Frontier::new(schedules, w.t_min(), tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{BlockingPower, FrequencyProfile, ProfilePoint, ProfileSet};
    use crate::dag::{Computation, Kind, NodeDag};

    fn single(points: Vec<ProfilePoint>) -> Workload {
        let dag = NodeDag::new(vec![Computation::forward(0, 0, 0)], vec![]).unwrap();
        let prof = FrequencyProfile::new(0, Kind::Forward, points).unwrap();
        let set = ProfileSet::new([prof], BlockingPower::new(0.0).unwrap(), 1).unwrap();
        Workload::new(dag, set).unwrap()
    }

    fn pt(freq_mhz: u32, time: Quanta, energy_mj: MilliJoules) -> ProfilePoint {
        ProfilePoint { freq_mhz, time, energy_mj }
    }

    #[test]
    fn min_energy_of_single_computation() {
        let w = single(vec![pt(1000, 1, 9_000), pt(500, 2, 5_000)]);
        let s = min_energy_schedule(&w);
        assert_eq!(s.planned, vec![2]);
        assert_eq!(s.t_planned, 2);
        assert_eq!(s.frequencies, vec![Some(500)]);
    }

    #[test]
    fn single_computation_steps_exactly() {
        // t in [100, 1100] quanta, tau = 100 -> 10 steps
        let w = single(vec![pt(1400, 100, 9_000), pt(1000, 400, 6_000), pt(700, 1100, 4_000)]);
        let f = discover_frontier(&w, 100).unwrap();
        let times: Vec<_> = f.schedules().iter().map(|s| s.t_planned).collect();
        assert_eq!(times, (0..=10).map(|k| 1100 - 100 * k).collect::<Vec<_>>());
        assert_eq!(f.steps(), 10);
        match get_next_schedule(&w, f.fastest(), 100).unwrap() {
            NextSchedule::AtMinimum => {}
            other => panic!("expected minimum, got {other:?}"),
        }
    }

    #[test]
    fn final_step_is_clipped() {
        let w = single(vec![pt(1400, 100, 9_000), pt(700, 350, 4_000)]);
        let f = discover_frontier(&w, 100).unwrap();
        let times: Vec<_> = f.schedules().iter().map(|s| s.t_planned).collect();
        assert_eq!(times, vec![350, 250, 150, 100]);
    }

    #[test]
    fn constant_only_dag_has_one_schedule() {
        let dag = NodeDag::new(
            vec![Computation { duration_us: Some(40), ..Computation::constant(0, 0) }],
            vec![],
        )
        .unwrap();
        let set = ProfileSet::new([], BlockingPower::default(), 1).unwrap();
        let w = Workload::new(dag, set).unwrap();
        let f = discover_frontier(&w, 10).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.t_min, 40);
        assert_eq!(f.t_star, 40);
        assert_eq!(f.schedules()[0].energy_realized_mj, 0);
    }

    #[test]
    fn lookup_cases() {
        let w = single(vec![pt(1400, 100, 9_000), pt(1000, 400, 6_000), pt(700, 1100, 4_000)]);
        let f = discover_frontier(&w, 100).unwrap();
        assert_eq!(f.lookup(100).t_planned, 100);
        assert_eq!(f.lookup(0).t_planned, 100);
        assert_eq!(f.lookup(555).t_planned, 500);
        assert_eq!(f.lookup(5_000).t_planned, 1100);
    }

    #[test]
    fn rejects_bad_tau() {
        let w = single(vec![pt(1000, 1, 9_000), pt(500, 2, 5_000)]);
        assert!(discover_frontier(&w, 0).is_err());
    }
}
