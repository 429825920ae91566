//! Exhaustive ground truth for tiny instances: every frequency assignment is
//! simulated and the (iteration time, effective energy) outcomes are reduced
//! to their Pareto set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costmodel::{ClassModel, ProfilePoint};
use crate::error::{Error, Result};
use crate::frontier::Frontier;
use crate::units::{MilliJoules, Quanta};
use crate::workload::Workload;

pub const COMBINATION_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactPoint {
    pub time: Quanta,
    pub energy_mj: MilliJoules,
    pub frequencies: Vec<Option<u32>>,
}

/// Pareto-optimal outcomes, ascending time and strictly decreasing energy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactFrontier {
    pub points: Vec<ExactPoint>,
}

impl ExactFrontier {
    /// Least effective energy achievable within `budget`.
    pub fn optimum_at(&self, budget: Quanta) -> Option<MilliJoules> {
        let k = self.points.partition_point(|p| p.time <= budget);
        k.checked_sub(1).map(|i| self.points[i].energy_mj)
    }
}

/// Every profiled point of a tunable computation, unfiltered, so the oracle
/// does not inherit the planner's notion of which points are worth using.
fn choices(w: &Workload, id: usize) -> Vec<ProfilePoint> {
    match w.model(id) {
        ClassModel::Tunable { .. } => {
            let c = w.dag().computation(id);
            w.profiles().profile(c.stage, c.kind).expect("tunable classes are profiled").points().to_vec()
        }
        ClassModel::Fixed(p) => vec![*p],
    }
}

/// Number of assignments the oracle would enumerate.
pub fn combinations(w: &Workload) -> u128 {
    (0..w.len()).map(|i| choices(w, i).len() as u128).fold(1u128, |acc, k| acc.saturating_mul(k))
}

struct Search<'a> {
    order: &'a [usize],
    preds: Vec<Vec<usize>>,
    choices: Vec<Vec<ProfilePoint>>,
    effective: Vec<Vec<MilliJoules>>,
    end: Vec<Quanta>,
    pick: Vec<usize>,
    best: BTreeMap<Quanta, (MilliJoules, Vec<usize>)>,
}

impl Search<'_> {
    fn run(&mut self, depth: usize, time: Quanta, energy: MilliJoules) {
        if depth == self.order.len() {
            let better = self.best.get(&time).is_none_or(|(e, _)| energy < *e);
            if better {
                self.best.insert(time, (energy, self.pick.clone()));
            }
            return;
        }
        let v = self.order[depth];
        let start = self.preds[v].iter().map(|&p| self.end[p]).max().unwrap_or(0);
        for k in 0..self.choices[v].len() {
            self.end[v] = start + self.choices[v][k].time;
            self.pick[v] = k;
            self.run(depth + 1, time.max(self.end[v]), energy + self.effective[v][k]);
        }
    }
}

/// Enumerates every combination of profiled frequencies.
pub fn brute_force_frontier(w: &Workload) -> Result<ExactFrontier> {
    let needed = combinations(w);
    if needed > COMBINATION_BUDGET {
        return Err(Error::BudgetExceeded { needed, budget: COMBINATION_BUDGET });
    }
    let order = w.dag().topo_order()?;
    let choices: Vec<Vec<ProfilePoint>> = (0..w.len()).map(|i| choices(w, i)).collect();
    let effective = choices
        .iter()
        .map(|c| c.iter().map(|p| w.effective_mj(p.energy_mj, p.time)).collect())
        .collect();
    let mut search = Search {
        order: &order,
        preds: w.dag().predecessors(),
        effective,
        end: vec![0; w.len()],
        pick: vec![0; w.len()],
        best: BTreeMap::new(),
        choices,
    };
    search.run(0, 0, 0);
    let mut points: Vec<ExactPoint> = Vec::new();
    for (time, (energy_mj, pick)) in std::mem::take(&mut search.best) {
        if points.last().is_some_and(|p| p.energy_mj <= energy_mj) {
            continue;
        }
        let frequencies = pick
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let f = search.choices[i][k].freq_mhz;
                (w.curves()[i].is_some() && f > 0).then_some(f)
            })
            .collect();
        points.push(ExactPoint { time, energy_mj, frequencies });
    }
    Ok(ExactFrontier { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub budget: Quanta,
    pub exact_mj: MilliJoules,
    pub algorithm_mj: MilliJoules,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Budget = each exact point's time; the algorithm answers with `lookup`.
    pub by_budget: Vec<GapEntry>,
    /// Budget = each frontier schedule's realized time.
    pub by_schedule: Vec<GapEntry>,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub schedule_max_gap: f64,
}

fn relative_gap(algorithm: MilliJoules, exact: MilliJoules) -> f64 {
    (algorithm - exact) as f64 / exact.abs().max(1) as f64
}

/// Relative energy gaps between the algorithm's realized schedules and the
/// exact optimum at the same time budget.
pub fn gap_report(exact: &ExactFrontier, frontier: &Frontier) -> GapReport {
    let by_budget: Vec<GapEntry> = exact
        .points
        .iter()
        .map(|p| {
            let algorithm_mj = frontier.lookup(p.time).energy_realized_mj;
            GapEntry { budget: p.time, exact_mj: p.energy_mj, algorithm_mj, gap: relative_gap(algorithm_mj, p.energy_mj) }
        })
        .collect();
    let by_schedule: Vec<GapEntry> = frontier
        .schedules()
        .iter()
        .filter_map(|s| {
            let exact_mj = exact.optimum_at(s.t_realized)?;
            Some(GapEntry {
                budget: s.t_realized,
                exact_mj,
                algorithm_mj: s.energy_realized_mj,
                gap: relative_gap(s.energy_realized_mj, exact_mj),
            })
        })
        .collect();
    let max = |v: &[GapEntry]| v.iter().map(|g| g.gap).fold(0.0, f64::max);
    let mean_gap =
        if by_budget.is_empty() { 0.0 } else { by_budget.iter().map(|g| g.gap).sum::<f64>() / by_budget.len() as f64 };
    GapReport { max_gap: max(&by_budget), schedule_max_gap: max(&by_schedule), mean_gap, by_budget, by_schedule }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{BlockingPower, FrequencyProfile, ProfileSet};
    use crate::dag::{Computation, Kind, NodeDag};
    use crate::frontier::discover_frontier;

    fn pt(freq_mhz: u32, time: Quanta, energy_mj: MilliJoules) -> ProfilePoint {
        ProfilePoint { freq_mhz, time, energy_mj }
    }

    fn set(profiles: Vec<FrequencyProfile>) -> ProfileSet {
        ProfileSet::new(profiles, BlockingPower::new(0.0).unwrap(), 1).unwrap()
    }

    #[test]
    fn single_computation_returns_its_pareto_points() {
        let dag = NodeDag::new(vec![Computation::forward(0, 0, 0)], vec![]).unwrap();
        let prof =
            FrequencyProfile::new(0, Kind::Forward, vec![pt(1400, 10, 90), pt(1000, 14, 70), pt(700, 20, 60)]).unwrap();
        let w = Workload::new(dag, set(vec![prof])).unwrap();
        let ex = brute_force_frontier(&w).unwrap();
        let got: Vec<_> = ex.points.iter().map(|p| (p.time, p.energy_mj, p.frequencies[0])).collect();
        assert_eq!(got, vec![(10, 90, Some(1400)), (14, 70, Some(1000)), (20, 60, Some(700))]);
        assert_eq!(ex.optimum_at(9), None);
        assert_eq!(ex.optimum_at(15), Some(70));
    }

    #[test]
    fn independent_pair_is_filtered() {
        let dag = NodeDag::new(vec![Computation::forward(0, 0, 0), Computation::forward(1, 1, 0)], vec![]).unwrap();
        let a = FrequencyProfile::new(0, Kind::Forward, vec![pt(2, 1, 10), pt(1, 2, 5)]).unwrap();
        let b = FrequencyProfile::new(1, Kind::Forward, vec![pt(2, 1, 10), pt(1, 3, 4)]).unwrap();
        let w = Workload::new(dag, set(vec![a, b])).unwrap();
        let got: Vec<_> = brute_force_frontier(&w).unwrap().points.iter().map(|p| (p.time, p.energy_mj)).collect();
        // outcomes: (1,20) (2,15) (3,14) (3,9) -> (3,14) dominated
        assert_eq!(got, vec![(1, 20), (2, 15), (3, 9)]);
    }

    #[test]
    fn budget_guard() {
        let comps = (0..24).map(|i| Computation::forward(i, 0, i)).collect();
        let dag = NodeDag::new(comps, vec![]).unwrap();
        let prof = FrequencyProfile::new(0, Kind::Forward, vec![pt(3, 1, 30), pt(2, 2, 20), pt(1, 3, 15)]).unwrap();
        let w = Workload::new(dag, set(vec![prof])).unwrap();
        assert!(matches!(brute_force_frontier(&w), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn constant_only_has_zero_gap() {
        let comps = vec![Computation::constant(0, 0), Computation::constant(1, 0)];
        let dag = NodeDag::new(comps, vec![(0, 1)]).unwrap();
        let w = Workload::new(dag, set(vec![])).unwrap();
        let ex = brute_force_frontier(&w).unwrap();
        let f = discover_frontier(&w, 1).unwrap();
        let r = gap_report(&ex, &f);
        assert!(r.by_budget.iter().chain(&r.by_schedule).all(|g| g.gap == 0.0));
    }
}
