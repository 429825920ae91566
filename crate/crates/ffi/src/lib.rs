//! C ABI over the frontier planner.
//!
//! Every function returns a `PERSEUS_*` status code and writes results
//! through out-pointers. On failure, `perseus_last_error_message` describes
//! the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use perseus_core::costmodel::ProfileSet;
use perseus_core::dag::{min_imbalance_partition, parse_dag_spec};
use perseus_core::frontier::{discover_frontier, EnergySchedule, Frontier};
use perseus_core::units::{quanta_to_us, secs_to_quanta};
use perseus_core::{Error, Workload};

pub const PERSEUS_OK: i32 = 0;
/// A required pointer argument was null.
pub const PERSEUS_ERR_NULL: i32 = 1;
/// Malformed DAG, profiles or arguments.
pub const PERSEUS_ERR_INVALID: i32 = 2;
/// Frontier characterization failed.
pub const PERSEUS_ERR_OPTIMIZE: i32 = 3;
/// Schedule or computation index out of range.
pub const PERSEUS_ERR_RANGE: i32 = 4;
/// Internal panic caught at the boundary.
pub const PERSEUS_ERR_PANIC: i32 = 5;

/// Opaque handle to a characterized pipeline.
pub struct PerseusFrontier {
    workload: Workload,
    frontier: Frontier,
}

impl PerseusFrontier {
    fn schedule(&self, index: usize) -> Option<&EnergySchedule> {
        self.frontier.schedules().get(index)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, recording its error message and mapping panics.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PERSEUS_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            PERSEUS_ERR_PANIC
        }
    }
}

fn invalid(e: Error) -> (i32, String) {
    (PERSEUS_ERR_INVALID, e.to_string())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err((PERSEUS_ERR_NULL, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (PERSEUS_ERR_INVALID, format!("{what} is not UTF-8")))
}

fn null(what: &str) -> (i32, String) {
    (PERSEUS_ERR_NULL, format!("{what} is null"))
}

unsafe fn handle<'a>(h: *const PerseusFrontier) -> Result<&'a PerseusFrontier, (i32, String)> {
    h.as_ref().ok_or_else(|| null("frontier handle"))
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn perseus_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Characterizes the frontier of `dag_spec` (`1f1b:NxM`, `gpipe:NxM` or
/// `file:path`) under a profile document and stores a new handle in `out`.
/// A negative `p_blocking_watts` keeps the profile document's value.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perseus_frontier_new(
    dag_spec: *const c_char,
    profiles_json: *const c_char,
    quantum_us: u32,
    p_blocking_watts: f64,
    tau_us: i64,
    out: *mut *mut PerseusFrontier,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = text(dag_spec, "dag_spec")?;
        let profiles = text(profiles_json, "profiles_json")?;
        if quantum_us == 0 || tau_us <= 0 {
            return Err((PERSEUS_ERR_INVALID, "quantum_us and tau_us must be positive".into()));
        }
        let p = (p_blocking_watts >= 0.0).then_some(p_blocking_watts);
        let set = ProfileSet::from_json_str(profiles, quantum_us, p).map_err(invalid)?;
        let workload = Workload::new(parse_dag_spec(spec).map_err(invalid)?, set).map_err(invalid)?;
        let tau = secs_to_quanta(tau_us as f64 * 1e-6, quantum_us).max(1);
        let frontier = discover_frontier(&workload, tau).map_err(|e| (PERSEUS_ERR_OPTIMIZE, e.to_string()))?;
        *out = Box::into_raw(Box::new(PerseusFrontier { workload, frontier }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from `perseus_frontier_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn perseus_frontier_free(h: *mut PerseusFrontier) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Iteration times at all-max frequencies and at minimum energy.
///
/// # Safety
/// `h` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn perseus_frontier_times(h: *const PerseusFrontier, t_min_us: *mut i64, t_star_us: *mut i64) -> i32 {
    guard(|| {
        let h = handle(h)?;
        if t_min_us.is_null() || t_star_us.is_null() {
            return Err(null("out"));
        }
        let q = h.workload.quantum_us();
        *t_min_us = quanta_to_us(h.frontier.t_min, q);
        *t_star_us = quanta_to_us(h.frontier.t_star, q);
        Ok(())
    })
}

/// Number of frontier schedules and of computations per schedule.
///
/// # Safety
/// `h` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn perseus_frontier_size(
    h: *const PerseusFrontier,
    num_schedules: *mut usize,
    num_computations: *mut usize,
) -> i32 {
    guard(|| {
        let h = handle(h)?;
        if num_schedules.is_null() || num_computations.is_null() {
            return Err(null("out"));
        }
        *num_schedules = h.frontier.len();
        *num_computations = h.workload.len();
        Ok(())
    })
}

/// Index of the schedule to run when the slowest pipeline takes
/// `straggler_time_us`.
///
/// # Safety
/// `h` must be a live handle; `index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perseus_frontier_lookup(h: *const PerseusFrontier, straggler_time_us: i64, index: *mut usize) -> i32 {
    guard(|| {
        let h = handle(h)?;
        if index.is_null() {
            return Err(null("index"));
        }
        let q = h.workload.quantum_us() as i64;
        let chosen = h.frontier.lookup(straggler_time_us.div_euclid(q));
        *index = h.frontier.schedules().iter().position(|s| s.id == chosen.id).expect("lookup returns a member");
        Ok(())
    })
}

/// Planned/realized iteration time and realized effective energy of a
/// schedule.
///
/// # Safety
/// `h` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn perseus_schedule_summary(
    h: *const PerseusFrontier,
    index: usize,
    t_planned_us: *mut i64,
    t_realized_us: *mut i64,
    energy_realized_mj: *mut i64,
) -> i32 {
    guard(|| {
        let h = handle(h)?;
        if t_planned_us.is_null() || t_realized_us.is_null() || energy_realized_mj.is_null() {
            return Err(null("out"));
        }
        let s = h.schedule(index).ok_or_else(|| (PERSEUS_ERR_RANGE, format!("no schedule {index}")))?;
        let q = h.workload.quantum_us();
        *t_planned_us = quanta_to_us(s.t_planned, q);
        *t_realized_us = quanta_to_us(s.t_realized, q);
        *energy_realized_mj = s.energy_realized_mj;
        Ok(())
    })
}

/// Frequency of computation `computation` in schedule `index`; 0 for
/// computations without a tunable frequency.
///
/// # Safety
/// `h` must be a live handle; `freq_mhz` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perseus_schedule_frequency(
    h: *const PerseusFrontier,
    index: usize,
    computation: usize,
    freq_mhz: *mut u32,
) -> i32 {
    guard(|| {
        let h = handle(h)?;
        if freq_mhz.is_null() {
            return Err(null("freq_mhz"));
        }
        let s = h.schedule(index).ok_or_else(|| (PERSEUS_ERR_RANGE, format!("no schedule {index}")))?;
        let f = s
            .frequencies
            .get(computation)
            .ok_or_else(|| (PERSEUS_ERR_RANGE, format!("no computation {computation}")))?;
        *freq_mhz = f.unwrap_or(0);
        Ok(())
    })
}

/// Splits `num_layers` latencies into `num_stages` contiguous stages.
/// `boundaries` receives `num_stages + 1` layer indices.
///
/// # Safety
/// `latencies` must hold `num_layers` values; `boundaries` must have room
/// for `num_stages + 1`; `ratio` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perseus_partition(
    latencies: *const f64,
    num_layers: usize,
    num_stages: usize,
    boundaries: *mut usize,
    ratio: *mut f64,
) -> i32 {
    guard(|| {
        if latencies.is_null() || boundaries.is_null() || ratio.is_null() {
            return Err(null("argument"));
        }
        let layers = std::slice::from_raw_parts(latencies, num_layers);
        let result = min_imbalance_partition(layers, num_stages).map_err(invalid)?;
        std::slice::from_raw_parts_mut(boundaries, result.boundaries.len()).copy_from_slice(&result.boundaries);
        *ratio = result.ratio;
        Ok(())
    })
}
