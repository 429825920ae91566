use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EnergySchedule, Frontier};
use crate::costmodel::ProfileSet;
use crate::dag::NodeDag;
use crate::error::Result;
use crate::units::quanta_to_us;
use crate::workload::Workload;

/// `t_planned_us,t_realized_us,energy_planned_mj,energy_realized_mj,schedule_id`
pub fn frontier_csv(frontier: &Frontier, quantum_us: u32) -> String {
    let mut out = String::from("t_planned_us,t_realized_us,energy_planned_mj,energy_realized_mj,schedule_id\n");
    for s in frontier.schedules() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            quanta_to_us(s.t_planned, quantum_us),
            quanta_to_us(s.t_realized, quantum_us),
            s.energy_planned_mj,
            s.energy_realized_mj,
            s.id
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub id: usize,
    pub freq_mhz: Option<u32>,
    pub t_planned_us: i64,
    pub e_planned_mj: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub schedule_id: usize,
    pub t_planned_us: i64,
    pub t_realized_us: i64,
    pub energy_planned_mj: i64,
    pub energy_realized_mj: i64,
    pub computations: Vec<ScheduleEntry>,
}

impl ScheduleDocument {
    pub fn from_schedule(s: &EnergySchedule, quantum_us: u32) -> Self {
        Self {
            schedule_id: s.id,
            t_planned_us: quanta_to_us(s.t_planned, quantum_us),
            t_realized_us: quanta_to_us(s.t_realized, quantum_us),
            energy_planned_mj: s.energy_planned_mj,
            energy_realized_mj: s.energy_realized_mj,
            computations: (0..s.planned.len())
                .map(|i| ScheduleEntry {
                    id: i,
                    freq_mhz: s.frequencies[i],
                    t_planned_us: quanta_to_us(s.planned[i], quantum_us),
                    e_planned_mj: s.planned_energy_mj[i],
                })
                .collect(),
        }
    }
}

pub fn schedule_json(s: &EnergySchedule, quantum_us: u32) -> String {
    serde_json::to_string_pretty(&ScheduleDocument::from_schedule(s, quantum_us)).expect("schedule serializes")
}

/// Everything needed to re-run or emulate a characterized pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierBundle {
    pub quantum_us: u32,
    pub p_blocking_watts: f64,
    pub tau_us: i64,
    pub dag: NodeDag,
    /// The profile document as given (same format as the profile file).
    pub profiles: serde_json::Value,
    pub frontier: Frontier,
}

impl FrontierBundle {
    pub fn workload(&self) -> Result<Workload> {
        let profiles = ProfileSet::from_json_str(&self.profiles.to_string(), self.quantum_us, Some(self.p_blocking_watts))?;
        Workload::new(self.dag.clone(), profiles)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }
}
