use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::costmodel::{ClassModel, FrequencyProfile, ProfilePoint};
use crate::dag::Kind;
use crate::units::{MilliJoules, Quanta};
use crate::workload::Workload;

/// One operating point of a frequency-knob baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselinePoint {
    /// The swept frequency.
    pub anchor_mhz: u32,
    pub frequencies: Vec<Option<u32>>,
    pub times: Vec<Quanta>,
    pub energies_mj: Vec<MilliJoules>,
    pub t_realized: Quanta,
    /// `sum(e - P_blocking * t)`, comparable to a frontier's realized energy.
    pub energy_mj: MilliJoules,
}

fn tunable_profile(w: &Workload, id: usize) -> Option<&FrequencyProfile> {
    match w.model(id) {
        ClassModel::Tunable { .. } => {
            let c = w.dag().computation(id);
            w.profiles().profile(c.stage, c.kind)
        }
        ClassModel::Fixed(_) => None,
    }
}

fn evaluate(w: &Workload, anchor_mhz: u32, pick: impl Fn(usize) -> Option<ProfilePoint>) -> BaselinePoint {
    let points: Vec<ProfilePoint> = (0..w.len()).map(|i| pick(i).unwrap_or_else(|| w.model(i).fastest())).collect();
    let times: Vec<Quanta> = points.iter().map(|p| p.time).collect();
    BaselinePoint {
        anchor_mhz,
        frequencies: (0..w.len()).map(|i| tunable_profile(w, i).map(|_| points[i].freq_mhz)).collect(),
        t_realized: w.iteration_time(&times),
        energy_mj: points.iter().map(|p| w.effective_mj(p.energy_mj, p.time)).sum(),
        energies_mj: points.iter().map(|p| p.energy_mj).collect(),
        times,
    }
}

/// Frequencies profiled for every tunable class, highest first.
fn common_frequencies(w: &Workload) -> Vec<u32> {
    let mut common: Option<BTreeSet<u32>> = None;
    for i in 0..w.len() {
        if let Some(p) = tunable_profile(w, i) {
            let f: BTreeSet<u32> = p.points().iter().map(|p| p.freq_mhz).collect();
            common = Some(match common {
                None => f,
                Some(c) => c.intersection(&f).copied().collect(),
            });
        }
    }
    common.unwrap_or_default().into_iter().rev().collect()
}

/// Every GPU locked to one common frequency, swept from the highest down.
pub fn baseline_zeus_global(w: &Workload) -> Vec<BaselinePoint> {
    common_frequencies(w)
        .into_iter()
        .map(|f| evaluate(w, f, |i| tunable_profile(w, i).and_then(|p| p.at_frequency(f))))
        .collect()
}

/// The heaviest stage sweeps its frequency; every other stage takes the one
/// frequency (forward and backward alike) whose forward time is closest to
/// the heaviest stage's forward time, faster or slower.
pub fn baseline_zeus_per_stage(w: &Workload) -> Vec<BaselinePoint> {
    let stages = w.num_stages();
    let forward = |s: usize| w.profiles().profile(s, Kind::Forward);
    let heaviest = (0..stages)
        .filter_map(|s| forward(s).map(|p| (p.max_frequency_point().time, s)))
        .max_by_key(|&(t, s)| (t, std::cmp::Reverse(s)))
        .map(|(_, s)| s);
    let Some(heaviest) = heaviest else {
        return baseline_zeus_global(w);
    };
    let anchors: Vec<ProfilePoint> = forward(heaviest).unwrap().points().to_vec();
    anchors
        .iter()
        .map(|anchor| {
            let target = anchor.time;
            let per_stage: Vec<Option<u32>> = (0..stages)
                .map(|s| {
                    if s == heaviest {
                        return Some(anchor.freq_mhz);
                    }
                    // ties go to the higher frequency
                    forward(s).and_then(|p| {
                        p.points().iter().min_by_key(|q| ((q.time - target).abs(), std::cmp::Reverse(q.freq_mhz)))
                    })
                    .map(|q| q.freq_mhz)
                })
                .collect();
            evaluate(w, anchor.freq_mhz, |i| {
                let profile = tunable_profile(w, i)?;
                let f = per_stage[w.dag().computation(i).stage]?;
                profile.at_frequency(f).or_else(|| {
                    profile.points().iter().min_by_key(|q| (q.freq_mhz as i64 - f as i64).abs()).copied()
                })
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{BlockingPower, ProfileSet};
    use crate::dag::build_1f1b;

    fn prof(stage: usize, kind: Kind, pts: &[(u32, Quanta, MilliJoules)]) -> FrequencyProfile {
        let points = pts.iter().map(|&(freq_mhz, time, energy_mj)| ProfilePoint { freq_mhz, time, energy_mj }).collect();
        FrequencyProfile::new(stage, kind, points).unwrap()
    }

    fn workload(light: &[(u32, Quanta, MilliJoules)]) -> Workload {
        let heavy = [(1400, 100, 1000), (1000, 130, 800)];
        let set = ProfileSet::new(
            [
                prof(0, Kind::Forward, &heavy),
                prof(0, Kind::Backward, &heavy),
                prof(1, Kind::Forward, light),
                prof(1, Kind::Backward, light),
            ],
            BlockingPower::new(50.0).unwrap(),
            1,
        )
        .unwrap();
        Workload::new(build_1f1b(2, 2).unwrap(), set).unwrap()
    }

    #[test]
    fn balanced_pipeline_matches_global() {
        let w = workload(&[(1400, 100, 1000), (1000, 130, 800)]);
        assert_eq!(baseline_zeus_global(&w), baseline_zeus_per_stage(&w));
    }

    #[test]
    fn closest_match_can_be_slower_than_t_min() {
        let w = workload(&[(1400, 60, 900), (1000, 102, 500)]);
        let top = &baseline_zeus_per_stage(&w)[0];
        assert_eq!(top.anchor_mhz, 1400);
        assert!(top.t_realized > w.t_min());
        assert_eq!(baseline_zeus_global(&w)[0].t_realized, w.t_min());
    }
}
