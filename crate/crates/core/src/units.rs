//! Integer time and energy units.
//!
//! Durations are counted in quanta of `quantum_us` microseconds and energies
//! in millijoules, so critical-path membership and flow capacities compare
//! exactly.

/// A duration expressed as a whole number of quanta.
pub type Quanta = i64;

/// Energy in millijoules.
pub type MilliJoules = i64;

pub const DEFAULT_QUANTUM_US: u32 = 1;
pub const DEFAULT_P_BLOCKING_WATTS: f64 = 75.0;
pub const DEFAULT_TAU_US: u64 = 1000;

/// Rounds half-up to the nearest integer.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

pub fn joules_to_mj(j: f64) -> MilliJoules {
    round_half_up(j * 1000.0)
}

pub fn mj_to_joules(mj: MilliJoules) -> f64 {
    mj as f64 / 1000.0
}

/// Converts quanta to seconds.
pub fn quanta_to_secs(t: Quanta, quantum_us: u32) -> f64 {
    t as f64 * quantum_us as f64 * 1e-6
}

/// Converts seconds to the nearest whole number of quanta.
pub fn secs_to_quanta(secs: f64, quantum_us: u32) -> Quanta {
    round_half_up(secs * 1e6 / quantum_us as f64)
}

pub fn quanta_to_us(t: Quanta, quantum_us: u32) -> i64 {
    t * quantum_us as i64
}

/// Energy drawn by `watts` over `t` quanta, in millijoules.
pub fn power_energy_mj(watts: f64, t: Quanta, quantum_us: u32) -> MilliJoules {
    // W * us = uJ
    round_half_up(watts * t as f64 * quantum_us as f64 / 1000.0)
}
