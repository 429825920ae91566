//! Energy scheduling for pipeline-parallel training: finds, for every
//! iteration time between the all-max-frequency time and the minimum-energy
//! time, per-computation GPU frequencies that minimize energy, and picks the
//! right one when another pipeline straggles.

pub mod costmodel;
pub mod dag;
pub mod emulator;
pub mod error;
pub mod flow;
pub mod frontier;
pub mod oracle;
pub mod service;
pub mod units;
pub mod workload;

pub use error::{Error, Result};
pub use frontier::{discover_frontier, EnergySchedule, Frontier};
pub use workload::Workload;
