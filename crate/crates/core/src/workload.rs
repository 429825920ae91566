//! A DAG bound to its profiles: the unit every planner and simulator works on.

use crate::costmodel::{ClassModel, ExpCurve, ProfilePoint, ProfileSet};
use crate::dag::{to_edge_centric, EdgeDag, Kind, NodeDag};
use crate::error::{Error, Result};
use crate::units::{power_energy_mj, secs_to_quanta, MilliJoules, Quanta};

#[derive(Debug, Clone)]
pub struct Workload {
    dag: NodeDag,
    profiles: ProfileSet,
    edge_dag: EdgeDag,
    models: Vec<ClassModel>,
    curves: Vec<Option<ExpCurve>>,
    order: Vec<usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    t_min: Quanta,
}

impl Workload {
    /// Resolves the model of every computation. Forward and backward
    /// computations need a `(stage, kind)` profile. Constant computations use
    /// their fixed `duration_us` (drawing blocking power), a `constant`
    /// profile for their stage, or take no time at all.
    pub fn new(dag: NodeDag, profiles: ProfileSet) -> Result<Self> {
        let models = dag
            .computations()
            .iter()
            .map(|c| {
                if c.kind == Kind::Constant {
                    if let Some(us) = c.duration_us {
                        let time = secs_to_quanta(us as f64 * 1e-6, profiles.quantum_us);
                        let energy = power_energy_mj(profiles.p_blocking.watts(), time, profiles.quantum_us);
                        return Ok(ClassModel::Fixed(ProfilePoint { freq_mhz: 0, time, energy_mj: energy }));
                    }
                }
                match profiles.model(c.stage, c.kind) {
                    Some(ClassModel::Fixed(p)) => Ok(ClassModel::Fixed(*p)),
                    // A constant-kind computation has one frequency choice.
                    Some(m) if c.kind == Kind::Constant => Ok(ClassModel::Fixed(m.fastest())),
                    Some(m) => Ok(m.clone()),
                    None if c.kind == Kind::Constant => {
                        Ok(ClassModel::Fixed(ProfilePoint { freq_mhz: 0, time: 0, energy_mj: 0 }))
                    }
                    None => Err(Error::MissingProfile { stage: c.stage, kind: c.kind }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let curves = models.iter().map(|m| m.curve().copied()).collect();
        let order = dag.topo_order()?;
        let preds = dag.predecessors();
        let succs = dag.successors();
        let edge_dag = to_edge_centric(&dag);
        let mut w = Self { dag, profiles, edge_dag, models, curves, order, preds, succs, t_min: 0 };
        w.t_min = w.iteration_time(&w.fastest_durations());
        Ok(w)
    }

    pub fn dag(&self) -> &NodeDag {
        &self.dag
    }

    pub fn profiles(&self) -> &ProfileSet {
        &self.profiles
    }

    pub fn edge_dag(&self) -> &EdgeDag {
        &self.edge_dag
    }

    pub fn model(&self, id: usize) -> &ClassModel {
        &self.models[id]
    }

    /// Fitted curve per computation, `None` for fixed ones.
    pub fn curves(&self) -> &[Option<ExpCurve>] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.dag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dag.is_empty()
    }

    pub fn quantum_us(&self) -> u32 {
        self.profiles.quantum_us
    }

    pub fn num_stages(&self) -> usize {
        self.dag.num_stages()
    }

    /// Iteration time with every computation at its maximum frequency.
    pub fn t_min(&self) -> Quanta {
        self.t_min
    }

    pub fn fastest_durations(&self) -> Vec<Quanta> {
        self.models.iter().map(|m| m.fastest().time).collect()
    }

    pub fn min_energy_durations(&self) -> Vec<Quanta> {
        self.models.iter().map(|m| m.min_energy().time).collect()
    }

    /// Profiled point at the maximum frequency, per computation.
    pub fn all_max_points(&self) -> Vec<ProfilePoint> {
        self.models.iter().map(|m| m.fastest()).collect()
    }

    /// Longest path through the DAG under `durations`.
    pub fn iteration_time(&self, durations: &[Quanta]) -> Quanta {
        let mut end = vec![0; self.len()];
        let mut t = 0;
        for &v in &self.order {
            let start = self.preds[v].iter().map(|&p| end[p]).max().unwrap_or(0);
            end[v] = start + durations[v];
            t = t.max(end[v]);
        }
        t
    }

    /// How much each computation can grow without the iteration exceeding
    /// `deadline` (total float; negative when already over).
    pub fn floats(&self, durations: &[Quanta], deadline: Quanta) -> Vec<Quanta> {
        let mut end = vec![0; self.len()];
        for &v in &self.order {
            end[v] = self.preds[v].iter().map(|&p| end[p]).max().unwrap_or(0) + durations[v];
        }
        let mut latest_end = vec![deadline; self.len()];
        for &v in self.order.iter().rev() {
            latest_end[v] = self.succs[v].iter().map(|&s| latest_end[s] - durations[s]).min().unwrap_or(deadline);
        }
        (0..self.len()).map(|v| latest_end[v] - end[v]).collect()
    }

    /// Planned (relaxed) energy of computation `id` at duration `t`. Curves
    /// model effective energy, so the blocking share is added back.
    pub fn planned_energy_mj(&self, id: usize, t: Quanta) -> MilliJoules {
        match &self.models[id] {
            ClassModel::Tunable { curve, .. } => {
                curve.eval_mj(t) + power_energy_mj(self.profiles.p_blocking.watts(), t, self.profiles.quantum_us)
            }
            ClassModel::Fixed(p) => p.energy_mj,
        }
    }

    pub fn effective_mj(&self, e: MilliJoules, t: Quanta) -> MilliJoules {
        self.profiles.effective_mj(e, t)
    }
}
