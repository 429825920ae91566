//! Per-computation frequency profiles and the energy cost model.

mod fit;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dag::Kind;
use crate::error::{invalid, Error, Result};
use crate::units::{
    joules_to_mj, mj_to_joules, power_energy_mj, quanta_to_secs, secs_to_quanta, MilliJoules,
    Quanta, DEFAULT_P_BLOCKING_WATTS,
};

pub use fit::{e_minus, e_plus, fit_exp, ExpCurve, C_GRID};

/// One profiled frequency of a computation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub freq_mhz: u32,
    pub time: Quanta,
    pub energy_mj: MilliJoules,
}

/// Power drawn while a GPU blocks on communication.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BlockingPower(f64);

impl BlockingPower {
    pub fn new(watts: f64) -> Result<Self> {
        if !(watts.is_finite() && watts >= 0.0) {
            return Err(invalid(format!("blocking power must be non-negative, got {watts}")));
        }
        Ok(Self(watts))
    }

    pub fn watts(self) -> f64 {
        self.0
    }
}

impl Default for BlockingPower {
    fn default() -> Self {
        Self(DEFAULT_P_BLOCKING_WATTS)
    }
}

/// `e - P_blocking * t`, in joules. `t` is in quanta of `quantum_us`.
pub fn effective_energy(e_joules: f64, t: Quanta, quantum_us: u32, p: BlockingPower) -> f64 {
    e_joules - p.0 * quanta_to_secs(t, quantum_us)
}

/// Integer-millijoule form of [`effective_energy`].
pub fn effective_energy_mj(e: MilliJoules, t: Quanta, quantum_us: u32, p: BlockingPower) -> MilliJoules {
    e - power_energy_mj(p.0, t, quantum_us)
}

/// Keeps the points not dominated in (time, energy), sorted by ascending
/// time with strictly decreasing energy.
pub fn pareto_filter(points: &[ProfilePoint]) -> Vec<ProfilePoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|p, q| {
        p.time
            .cmp(&q.time)
            .then(p.energy_mj.cmp(&q.energy_mj))
            .then(q.freq_mhz.cmp(&p.freq_mhz))
    });
    let mut out: Vec<ProfilePoint> = Vec::new();
    for p in sorted {
        if out.last().is_none_or(|last| p.energy_mj < last.energy_mj) {
            out.push(p);
        }
    }
    out
}

/// Points a planner may use: Pareto-optimal in (time, effective energy),
/// ascending time. Slower than the raw minimum-energy point can still pay
/// off, since waiting at `P_blocking` is charged anyway.
pub fn effective_pareto(points: &[ProfilePoint], quantum_us: u32, p: BlockingPower) -> Vec<ProfilePoint> {
    let effective: Vec<ProfilePoint> = points
        .iter()
        .map(|pt| ProfilePoint { energy_mj: effective_energy_mj(pt.energy_mj, pt.time, quantum_us, p), ..*pt })
        .collect();
    pareto_filter(&effective)
        .iter()
        .map(|e| *points.iter().find(|pt| pt.freq_mhz == e.freq_mhz && pt.time == e.time).unwrap())
        .collect()
}

/// Fits the relaxation of a class's effective energy. When the planning
/// points are exactly the raw-energy Pareto points, the exponential is fitted
/// to raw energy and `P_blocking * t` subtracted through the linear term;
/// otherwise (slow points past the raw minimum are worth keeping) the
/// exponential is fitted to effective energy directly, shifted up so the
/// log-linear fit stays defined.
fn fit_effective(
    pareto: &[ProfilePoint],
    raw_pareto: &[ProfilePoint],
    quantum_us: u32,
    p: BlockingPower,
) -> Result<ExpCurve> {
    if pareto == raw_pareto {
        let mut curve = fit_exp(pareto, quantum_us)?;
        curve.linear = -p.watts();
        return Ok(curve);
    }
    let effective: Vec<ProfilePoint> = pareto
        .iter()
        .map(|pt| ProfilePoint { energy_mj: effective_energy_mj(pt.energy_mj, pt.time, quantum_us, p), ..*pt })
        .collect();
    // the offset search only covers [0, lowest) of the shifted data; lift it
    // so the asymptote may sit well below the lowest point
    let lowest = effective.iter().map(|pt| pt.energy_mj).min().unwrap_or(0);
    let highest = effective.iter().map(|pt| pt.energy_mj).max().unwrap_or(0);
    let shift = (4 * (highest - lowest) - lowest).max(0);
    let shifted: Vec<ProfilePoint> =
        effective.iter().map(|pt| ProfilePoint { energy_mj: pt.energy_mj + shift, ..*pt }).collect();
    let mut curve = fit_exp(&shifted, quantum_us)?;
    curve.c -= mj_to_joules(shift);
    Ok(curve)
}

/// Profiled points for one (stage, kind) class, by descending frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub stage: usize,
    pub kind: Kind,
    points: Vec<ProfilePoint>,
}

impl FrequencyProfile {
    pub fn new(stage: usize, kind: Kind, mut points: Vec<ProfilePoint>) -> Result<Self> {
        let min_points = if kind == Kind::Constant { 1 } else { 2 };
        if points.len() < min_points {
            return Err(invalid(format!(
                "stage {stage} {} profile needs at least {min_points} points",
                kind.as_str()
            )));
        }
        if let Some(p) = points.iter().find(|p| p.freq_mhz == 0 || p.time <= 0 || p.energy_mj <= 0) {
            return Err(invalid(format!("profile point must be positive: {p:?}")));
        }
        points.sort_by(|p, q| q.freq_mhz.cmp(&p.freq_mhz));
        if points.windows(2).any(|w| w[0].freq_mhz == w[1].freq_mhz) {
            return Err(invalid(format!("duplicate frequency in stage {stage} {} profile", kind.as_str())));
        }
        Ok(Self { stage, kind, points })
    }

    pub fn points(&self) -> &[ProfilePoint] {
        &self.points
    }

    pub fn max_frequency_point(&self) -> ProfilePoint {
        self.points[0]
    }

    pub fn at_frequency(&self, freq_mhz: u32) -> Option<ProfilePoint> {
        self.points.iter().copied().find(|p| p.freq_mhz == freq_mhz)
    }

    pub fn pareto(&self) -> Vec<ProfilePoint> {
        pareto_filter(&self.points)
    }
}

/// Cubic DVFS power model: `time = work / f`, `power = p_static + k f^3`.
pub fn synth_profile(
    stage: usize,
    kind: Kind,
    work_cycles: f64,
    p_static: f64,
    k: f64,
    frequencies: &[u32],
    quantum_us: u32,
) -> Result<FrequencyProfile> {
    if !(work_cycles > 0.0 && p_static > 0.0 && k >= 0.0) {
        return Err(invalid("synthetic profile parameters must be positive"));
    }
    let points = frequencies
        .iter()
        .map(|&f| {
            let secs = work_cycles / (f as f64 * 1e6);
            let power = p_static + k * (f as f64).powi(3);
            ProfilePoint {
                freq_mhz: f,
                time: secs_to_quanta(secs, quantum_us),
                energy_mj: joules_to_mj(power * secs),
            }
        })
        .collect();
    FrequencyProfile::new(stage, kind, points)
}

/// How a class of computations is planned.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassModel {
    /// Tunable: effective-energy Pareto points (ascending time) and the
    /// relaxation fitted to their effective energy.
    Tunable { pareto: Vec<ProfilePoint>, curve: ExpCurve },
    /// A single usable choice: runs at this point.
    Fixed(ProfilePoint),
}

impl ClassModel {
    pub fn fastest(&self) -> ProfilePoint {
        match self {
            ClassModel::Tunable { pareto, .. } => pareto[0],
            ClassModel::Fixed(p) => *p,
        }
    }

    pub fn min_energy(&self) -> ProfilePoint {
        match self {
            ClassModel::Tunable { pareto, .. } => *pareto.last().unwrap(),
            ClassModel::Fixed(p) => *p,
        }
    }

    pub fn curve(&self) -> Option<&ExpCurve> {
        match self {
            ClassModel::Tunable { curve, .. } => Some(curve),
            ClassModel::Fixed(_) => None,
        }
    }

    pub fn pareto(&self) -> &[ProfilePoint] {
        match self {
            ClassModel::Tunable { pareto, .. } => pareto,
            ClassModel::Fixed(p) => std::slice::from_ref(p),
        }
    }

    /// Slowest Pareto frequency whose profiled time is at most `planned`,
    /// or the fastest point when none is.
    pub fn frequency_for(&self, planned: Quanta) -> ProfilePoint {
        let pareto = self.pareto();
        pareto.iter().rev().find(|p| p.time <= planned).copied().unwrap_or(pareto[0])
    }
}

/// All class profiles of one job plus the blocking power and time quantum.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub p_blocking: BlockingPower,
    pub quantum_us: u32,
    profiles: BTreeMap<(usize, Kind), FrequencyProfile>,
    models: BTreeMap<(usize, Kind), ClassModel>,
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    #[serde(default = "default_p_blocking")]
    p_blocking_watts: f64,
    profiles: Vec<ProfileEntry>,
}

fn default_p_blocking() -> f64 {
    DEFAULT_P_BLOCKING_WATTS
}

#[derive(Serialize, Deserialize)]
struct ProfileEntry {
    stage: usize,
    kind: Kind,
    points: Vec<PointEntry>,
}

#[derive(Serialize, Deserialize)]
struct PointEntry {
    freq_mhz: u32,
    time_s: f64,
    energy_j: f64,
}

impl ProfileSet {
    pub fn new(
        profiles: impl IntoIterator<Item = FrequencyProfile>,
        p_blocking: BlockingPower,
        quantum_us: u32,
    ) -> Result<Self> {
        if quantum_us == 0 {
            return Err(invalid("quantum must be positive"));
        }
        let mut map = BTreeMap::new();
        let mut models = BTreeMap::new();
        for prof in profiles {
            let key = (prof.stage, prof.kind);
            let pareto = effective_pareto(prof.points(), quantum_us, p_blocking);
            let model = if pareto.len() < 2 {
                ClassModel::Fixed(pareto[0])
            } else {
                match fit_effective(&pareto, &prof.pareto(), quantum_us, p_blocking) {
                    Ok(curve) => ClassModel::Tunable { pareto, curve },
                    Err(Error::DegenerateFit(_)) => ClassModel::Fixed(pareto[0]),
                    Err(e) => return Err(e),
                }
            };
            if map.insert(key, prof).is_some() {
                return Err(invalid(format!("duplicate profile for stage {} {}", key.0, key.1.as_str())));
            }
            models.insert(key, model);
        }
        Ok(Self { p_blocking, quantum_us, profiles: map, models })
    }

    /// Parses the profile file format. `p_blocking_override` wins over the
    /// file's `p_blocking_watts`.
    pub fn from_json_str(s: &str, quantum_us: u32, p_blocking_override: Option<f64>) -> Result<Self> {
        let file: ProfileFile = serde_json::from_str(s)?;
        let p = BlockingPower::new(p_blocking_override.unwrap_or(file.p_blocking_watts))?;
        let profiles = file
            .profiles
            .into_iter()
            .map(|e| {
                let points = e
                    .points
                    .iter()
                    .map(|p| {
                        if !(p.time_s > 0.0 && p.energy_j > 0.0) {
                            return Err(invalid("profile times and energies must be positive"));
                        }
                        Ok(ProfilePoint {
                            freq_mhz: p.freq_mhz,
                            time: secs_to_quanta(p.time_s, quantum_us).max(1),
                            energy_mj: joules_to_mj(p.energy_j).max(1),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                FrequencyProfile::new(e.stage, e.kind, points)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(profiles, p, quantum_us)
    }

    pub fn from_json_file(path: impl AsRef<Path>, quantum_us: u32, p_blocking_override: Option<f64>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, quantum_us, p_blocking_override)
    }

    pub fn to_json_string(&self) -> String {
        let file = ProfileFile {
            p_blocking_watts: self.p_blocking.watts(),
            profiles: self
                .profiles
                .values()
                .map(|p| ProfileEntry {
                    stage: p.stage,
                    kind: p.kind,
                    points: p
                        .points()
                        .iter()
                        .map(|pt| PointEntry {
                            freq_mhz: pt.freq_mhz,
                            time_s: quanta_to_secs(pt.time, self.quantum_us),
                            energy_j: mj_to_joules(pt.energy_mj),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("profiles serialize")
    }

    pub fn profile(&self, stage: usize, kind: Kind) -> Option<&FrequencyProfile> {
        self.profiles.get(&(stage, kind))
    }

    pub fn model(&self, stage: usize, kind: Kind) -> Option<&ClassModel> {
        self.models.get(&(stage, kind))
    }

    pub fn profiles(&self) -> impl Iterator<Item = &FrequencyProfile> {
        self.profiles.values()
    }

    pub fn effective_mj(&self, e: MilliJoules, t: Quanta) -> MilliJoules {
        effective_energy_mj(e, t, self.quantum_us, self.p_blocking)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(freq_mhz: u32, time: Quanta, energy_mj: MilliJoules) -> ProfilePoint {
        ProfilePoint { freq_mhz, time, energy_mj }
    }

    #[test]
    fn dominated_point_removed() {
        let pts = [pt(1000, 2, 10_000), pt(800, 3, 8_000), pt(600, 4, 9_000)];
        assert_eq!(pareto_filter(&pts), vec![pts[0], pts[1]]);
        assert_eq!(pareto_filter(&pts[..1]), vec![pts[0]]);
    }

    #[test]
    fn effective_energy_arithmetic() {
        let p = BlockingPower::new(75.0).unwrap();
        assert!((effective_energy(600.0, 2_000_000, 1, p) - 450.0).abs() < 1e-9);
        assert_eq!(effective_energy(150.0, 2_000_000, 1, p), 0.0);
        assert_eq!(effective_energy_mj(600_000, 2_000_000, 1, p), 450_000);
        assert!(BlockingPower::new(-1.0).is_err());
    }

    #[test]
    fn blocking_power_keeps_slow_points() {
        let pts = [pt(1000, 2_000_000, 300_000), pt(800, 3_000_000, 250_000), pt(600, 4_000_000, 260_000)];
        let p = BlockingPower::new(75.0).unwrap();
        assert_eq!(pareto_filter(&pts).len(), 2);
        assert_eq!(effective_pareto(&pts, 1, p), pts.to_vec());
        assert_eq!(effective_pareto(&pts, 1, BlockingPower::new(0.0).unwrap()), pareto_filter(&pts));

        // effective energies 150 J, 25 J, -40 J: fitted after a shift
        let curve = fit_effective(&pts, &pareto_filter(&pts), 1, p).unwrap();
        for (pt, want) in pts.iter().zip([150_000, 25_000, -40_000]) {
            assert!((curve.eval_mj(pt.time) - want).abs() < 1_000, "{:?}", curve);
        }
    }

    #[test]
    fn raw_fit_carries_blocking_power_linearly() {
        let pts = [pt(1000, 2_000_000, 300_000), pt(800, 3_000_000, 250_000)];
        let p = BlockingPower::new(10.0).unwrap();
        let curve = fit_effective(&pts, &pts, 1, p).unwrap();
        assert_eq!(curve.linear, -10.0);
        let raw = fit_exp(&pts, 1).unwrap();
        assert!((curve.eval_mj(2_500_000) - (raw.eval_mj(2_500_000) - 25_000)).abs() <= 1);
    }

    #[test]
    fn synthetic_profile_minimum_is_interior() {
        let freqs: Vec<u32> = (600..=1400).step_by(200).collect();
        let prof = synth_profile(0, Kind::Forward, 1e9, 80.0, 1e-7, &freqs, 1).unwrap();
        let min = prof.points().iter().min_by_key(|p| p.energy_mj).unwrap();
        // 600: 169.3 J, 800: 164.0 J, 1000: 180.0 J
        assert_eq!(min.freq_mhz, 800);
        assert_eq!(prof.at_frequency(800).unwrap().energy_mj, 164_000);
        assert_eq!(prof.at_frequency(600).unwrap().time, 1_666_667);

        let flat = synth_profile(0, Kind::Forward, 1e9, 80.0, 0.0, &freqs, 1).unwrap();
        let pareto = flat.pareto();
        assert_eq!(pareto.len(), 1);
        assert_eq!(pareto[0].freq_mhz, 1400);

        let double = synth_profile(0, Kind::Forward, 2e9, 80.0, 1e-7, &freqs, 1).unwrap();
        for (a, b) in prof.points().iter().zip(double.points()) {
            assert!((b.time - 2 * a.time).abs() <= 1);
            assert!((b.energy_mj - 2 * a.energy_mj).abs() <= 1);
        }
    }

    #[test]
    fn profile_file_round_trip() {
        let text = r#"{"p_blocking_watts":60.0,"profiles":[{"stage":0,"kind":"forward","points":[
            {"freq_mhz":1410,"time_s":0.032,"energy_j":9.1},
            {"freq_mhz":1200,"time_s":0.036,"energy_j":8.0},
            {"freq_mhz":1000,"time_s":0.042,"energy_j":7.4}]}]}"#;
        let set = ProfileSet::from_json_str(text, 1, None).unwrap();
        assert_eq!(set.p_blocking.watts(), 60.0);
        let prof = set.profile(0, Kind::Forward).unwrap();
        assert_eq!(prof.max_frequency_point(), pt(1410, 32_000, 9_100));
        assert!(matches!(set.model(0, Kind::Forward), Some(ClassModel::Tunable { .. })));
        let again = ProfileSet::from_json_str(&set.to_json_string(), 1, None).unwrap();
        assert_eq!(again, set);
        let overridden = ProfileSet::from_json_str(text, 1, Some(75.0)).unwrap();
        assert_eq!(overridden.p_blocking.watts(), 75.0);
    }

    #[test]
    fn frequency_threshold() {
        let pareto = vec![pt(1410, 1_900_000, 30_000), pt(1200, 2_300_000, 25_000), pt(1000, 2_800_000, 22_000)];
        let curve = fit_exp(&pareto, 1).unwrap();
        let model = ClassModel::Tunable { pareto, curve };
        assert_eq!(model.frequency_for(2_400_000).freq_mhz, 1200);
        assert_eq!(model.frequency_for(2_300_000).freq_mhz, 1200);
        assert_eq!(model.frequency_for(1_000_000).freq_mhz, 1410);
    }
}
