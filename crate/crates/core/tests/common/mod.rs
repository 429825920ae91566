#![allow(dead_code)]

use perseus_core::costmodel::{synth_profile, BlockingPower, FrequencyProfile, ProfilePoint, ProfileSet};
use perseus_core::dag::{build_1f1b, build_gpipe, Kind, NodeDag};
use perseus_core::oracle::combinations;
use perseus_core::{Frontier, Workload};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub const FREQS: [u32; 8] = [1410, 1305, 1200, 1095, 990, 885, 780, 675];

/// Profile with `k` points lying exactly on `c + a exp(-t / s)` (mJ, µs),
/// fastest time `t0` and slowest around 1.3-1.7 x `t0`.
pub fn exp_profile(rng: &mut TestRng, stage: usize, kind: Kind, k: usize, t0: f64) -> FrequencyProfile {
    let e0 = t0 * rng.gen_range(0.25..0.35);
    let c = e0 * rng.gen_range(0.5..0.65);
    let s = t0 * rng.gen_range(0.3..0.8);
    let a = (e0 - c) / (-t0 / s).exp();
    let span = t0 * rng.gen_range(0.3..0.7);
    let mut times: Vec<i64> = (0..k)
        .map(|j| {
            let frac = j as f64 / (k - 1).max(1) as f64;
            let jitter = if j == 0 || j + 1 == k { 0.0 } else { rng.gen_range(-0.15..0.15) / (k - 1) as f64 };
            (t0 + span * (frac + jitter)).round() as i64
        })
        .collect();
    times.dedup();
    let points = times
        .iter()
        .enumerate()
        .map(|(j, &t)| ProfilePoint {
            freq_mhz: FREQS[j * (FREQS.len() - 1) / (k - 1).max(1)],
            time: t,
            energy_mj: (c + a * (-(t as f64) / s).exp()).round() as i64,
        })
        .collect();
    FrequencyProfile::new(stage, kind, points).unwrap()
}

/// Stage-imbalanced profiles for an `N`-stage pipeline; `k(stage, kind)`
/// picks the number of frequencies per class.
pub fn exp_profiles(
    rng: &mut TestRng,
    stages: usize,
    p_blocking: f64,
    mut k: impl FnMut(&mut TestRng, usize, Kind) -> usize,
) -> ProfileSet {
    let mut profiles = Vec::new();
    for s in 0..stages {
        let fwd = 10_000.0 * rng.gen_range(0.7..1.3);
        let kf = k(rng, s, Kind::Forward);
        profiles.push(exp_profile(rng, s, Kind::Forward, kf, fwd));
        let kb = k(rng, s, Kind::Backward);
        let bwd = fwd * rng.gen_range(1.8..2.2);
        profiles.push(exp_profile(rng, s, Kind::Backward, kb, bwd));
    }
    ProfileSet::new(profiles, BlockingPower::new(p_blocking).unwrap(), 1).unwrap()
}

pub fn pipeline(gpipe: bool, stages: usize, microbatches: usize) -> NodeDag {
    if gpipe {
        build_gpipe(stages, microbatches).unwrap()
    } else {
        build_1f1b(stages, microbatches).unwrap()
    }
}

/// Random tiny instance whose brute-force enumeration stays under `max_combos`.
pub fn tiny_instance(rng: &mut TestRng, max_combos: u128) -> Workload {
    loop {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let dag = pipeline(rng.gen_bool(0.3), n, m);
        let p = [0.0, 30.0, 75.0][rng.gen_range(0..3)];
        let set = exp_profiles(rng, n, p, |r, _, _| r.gen_range(2..=4));
        let w = Workload::new(dag, set).unwrap();
        if combinations(&w) <= max_combos {
            return w;
        }
    }
}

/// Cubic-power profiles (8 frequencies); stage `s` does `work[s]` cycles
/// forward and twice that backward.
pub fn synth_set(work: &[f64], p_blocking: f64) -> ProfileSet {
    let mut profiles = Vec::new();
    for (s, &w) in work.iter().enumerate() {
        profiles.push(synth_profile(s, Kind::Forward, w, 90.0, 7e-8, &FREQS, 1).unwrap());
        profiles.push(synth_profile(s, Kind::Backward, 2.0 * w, 90.0, 7e-8, &FREQS, 1).unwrap());
    }
    ProfileSet::new(profiles, BlockingPower::new(p_blocking).unwrap(), 1).unwrap()
}

/// Random stage-imbalanced pipeline on cubic-power profiles.
pub fn synth_pipeline(rng: &mut TestRng) -> Workload {
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(2..=6);
    let work: Vec<f64> = (0..n).map(|_| 1.2e7 * rng.gen_range(0.6..1.4)).collect();
    let p = [0.0, 40.0, 75.0][rng.gen_range(0..3)];
    Workload::new(pipeline(rng.gen_bool(0.3), n, m), synth_set(&work, p)).unwrap()
}

/// Steps whose planned-time decrease is not exactly `tau`; only the final
/// step may be shorter, and only when it lands on `T_min`.
pub fn step_violations(f: &Frontier) -> usize {
    let ts: Vec<i64> = f.schedules().iter().map(|s| s.t_planned).collect();
    ts.windows(2)
        .enumerate()
        .filter(|&(k, p)| {
            let d = p[0] - p[1];
            let last = k + 2 == ts.len();
            !(d == f.tau || (last && d > 0 && d < f.tau && p[1] == f.t_min))
        })
        .count()
}

/// `tau` giving roughly `steps` frontier steps.
pub fn tau_for(w: &Workload, steps: i64) -> i64 {
    let t_star = perseus_core::frontier::min_energy_schedule(w).t_planned;
    (t_star - w.t_min()) / steps + 1
}
