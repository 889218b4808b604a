//! C ABI for the hybrid-coverage simulator.
//!
//! Every function returns an [`HcStatus`]. On anything but `HC_STATUS_OK` a
//! message is available from [`hc_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use hybrid_coverage::automaton::Mode;
use hybrid_coverage::engine::{check_theorems, Scenario, Simulation, Verdict};
use hybrid_coverage::geometry::Spheroid;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    /// The simulation halted on a fault; the handle stays readable.
    Fault = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcVerdict {
    Pass = 0,
    Warn = 1,
    Fail = 2,
}

impl From<Verdict> for HcVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => HcVerdict::Pass,
            Verdict::Warn => HcVerdict::Warn,
            Verdict::Fail => HcVerdict::Fail,
        }
    }
}

/// Summary of the scenario checks. Margins are in seconds except
/// `avoidance_margin`, which is a length.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcCheckReport {
    pub interception: HcVerdict,
    pub interception_margin: f64,
    pub p_max: f64,
    pub schedule: HcVerdict,
    pub schedule_margin_best: f64,
    pub schedule_margin_worst: f64,
    pub avoidance: HcVerdict,
    pub avoidance_margin: f64,
    pub capacity: HcVerdict,
    pub overall: HcVerdict,
}

/// Opaque simulation handle.
pub struct HcSimulation {
    sim: Simulation,
    fault: Option<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn guard(f: impl FnOnce() -> HcStatus) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            HcStatus::Panic
        }
    }
}

fn mode_code(m: Option<Mode>) -> i32 {
    m.map_or(-1, |m| m.index() as i32)
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn scenario_from(text: *const c_char) -> Result<Scenario, HcStatus> {
    if text.is_null() {
        set_error("scenario text is null");
        return Err(HcStatus::NullPointer);
    }
    let Ok(s) = CStr::from_ptr(text).to_str() else {
        set_error("scenario text is not UTF-8");
        return Err(HcStatus::InvalidArgument);
    };
    Scenario::from_toml(s, "<ffi>").map_err(|e| {
        set_error(e.to_string());
        HcStatus::Parse
    })
}

fn create(sc: Scenario, out: *mut *mut HcSimulation) -> HcStatus {
    match Simulation::new(sc) {
        Ok(sim) => {
            let h = Box::new(HcSimulation { sim, fault: None });
            // SAFETY: checked non-null by the callers.
            unsafe { *out = Box::into_raw(h) };
            HcStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            HcStatus::InvalidArgument
        }
    }
}

/// Build a simulation from TOML scenario text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_new(text: *const c_char, out: *mut *mut HcSimulation) -> HcStatus {
    guard(|| {
        if out.is_null() {
            set_error("output handle pointer is null");
            return HcStatus::NullPointer;
        }
        match scenario_from(text) {
            Ok(sc) => create(sc, out),
            Err(s) => s,
        }
    })
}

/// Build the baseline scenario with the given seed.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_new_baseline(seed: u64, out: *mut *mut HcSimulation) -> HcStatus {
    guard(|| {
        if out.is_null() {
            set_error("output handle pointer is null");
            return HcStatus::NullPointer;
        }
        let mut sc = Scenario::baseline();
        sc.simulation.seed = seed;
        create(sc, out)
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from `hc_simulation_new*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_free(sim: *mut HcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

unsafe fn handle<'a>(sim: *mut HcSimulation) -> Result<&'a mut HcSimulation, HcStatus> {
    sim.as_mut().ok_or_else(|| {
        set_error("simulation handle is null");
        HcStatus::NullPointer
    })
}

/// Advance by `steps` fixed steps. Returns `HC_STATUS_FAULT` once a fault
/// halts the run, now or earlier.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_step(sim: *mut HcSimulation, steps: u64) -> HcStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if let Some(f) = &h.fault {
            set_error(f.clone());
            return HcStatus::Fault;
        }
        for _ in 0..steps {
            if let Err(e) = h.sim.advance() {
                let msg = format!("{} fault: {e}", e.class());
                set_error(msg.clone());
                h.fault = Some(msg);
                return HcStatus::Fault;
            }
        }
        HcStatus::Ok
    })
}

/// Current time and normalized coverage error.
///
/// # Safety
/// `sim` must be a live handle; the outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_status(
    sim: *mut HcSimulation,
    time: *mut f64,
    coverage_error: *mut f64,
) -> HcStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if let Some(t) = time.as_mut() {
            *t = h.sim.time();
        }
        if let Some(e) = coverage_error.as_mut() {
            *e = h.sim.field().normalized_error(h.sim.mesh());
        }
        HcStatus::Ok
    })
}

/// Number of agents in the scenario.
///
/// # Safety
/// `sim` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_agent_count(sim: *mut HcSimulation, count: *mut usize) -> HcStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let Some(c) = count.as_mut() else {
            set_error("count pointer is null");
            return HcStatus::NullPointer;
        };
        *c = h.sim.agents().len();
        HcStatus::Ok
    })
}

/// Position of agent `index` into `xyz[0..3]` and its mode: 0 local coverage,
/// 1 return to base, 2 particle intercept, 3 partition transfer, 4 surface
/// transfer, −1 not yet deployed.
///
/// # Safety
/// `sim` must be a live handle, `xyz` must hold three doubles, `mode` must
/// be writable or null.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_agent(
    sim: *mut HcSimulation,
    index: usize,
    xyz: *mut f64,
    mode: *mut i32,
) -> HcStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let Some(a) = h.sim.agents().get(index) else {
            set_error(format!("agent index {index} out of range"));
            return HcStatus::InvalidArgument;
        };
        if xyz.is_null() {
            set_error("position pointer is null");
            return HcStatus::NullPointer;
        }
        let p = a.state.position;
        ptr::copy_nonoverlapping([p.x, p.y, p.z].as_ptr(), xyz, 3);
        if let Some(m) = mode.as_mut() {
            *m = mode_code(a.deployed.then_some(a.disc.mode));
        }
        HcStatus::Ok
    })
}

/// Number of events logged so far.
///
/// # Safety
/// `sim` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_event_count(sim: *mut HcSimulation, count: *mut usize) -> HcStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let Some(c) = count.as_mut() else {
            set_error("count pointer is null");
            return HcStatus::NullPointer;
        };
        *c = h.sim.events().len();
        HcStatus::Ok
    })
}

/// Evaluate the scenario checks for TOML scenario text.
///
/// # Safety
/// `text` must be NUL-terminated and `report` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_check(text: *const c_char, report: *mut HcCheckReport) -> HcStatus {
    guard(|| {
        if report.is_null() {
            set_error("report pointer is null");
            return HcStatus::NullPointer;
        }
        let sc = match scenario_from(text) {
            Ok(sc) => sc,
            Err(s) => return s,
        };
        let r = check_theorems(&sc);
        *report = HcCheckReport {
            interception: r.interception.verdict.into(),
            interception_margin: r.interception.margin,
            p_max: r.interception.p_max,
            schedule: r.schedule.verdict.into(),
            schedule_margin_best: r.schedule.margin[0],
            schedule_margin_worst: r.schedule.margin[1],
            avoidance: r.avoidance.verdict.into(),
            avoidance_margin: r.avoidance.margin,
            capacity: r.capacity.verdict.into(),
            overall: r.overall().into(),
        };
        HcStatus::Ok
    })
}

/// Shortest surface distance and initial heading (radians clockwise from
/// north) between two points given by geodetic latitude and longitude in
/// radians on the spheroid with radii `a` (equatorial) and `c` (polar).
///
/// # Safety
/// `distance` must be writable; `heading` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn hc_geodesic(
    a: f64,
    c: f64,
    lat1: f64,
    lon1: f64,
    lat2: f64,
    lon2: f64,
    distance: *mut f64,
    heading: *mut f64,
) -> HcStatus {
    guard(|| {
        let Some(d) = distance.as_mut() else {
            set_error("distance pointer is null");
            return HcStatus::NullPointer;
        };
        let s = match Spheroid::new(a, c) {
            Ok(s) => s,
            Err(e) => {
                set_error(e.to_string());
                return HcStatus::InvalidArgument;
            }
        };
        if ![lat1, lon1, lat2, lon2].iter().all(|x| x.is_finite()) {
            set_error("coordinates must be finite");
            return HcStatus::InvalidArgument;
        }
        let g = s.geodesic(&s.point_from_geodetic(lat1, lon1), &s.point_from_geodetic(lat2, lon2));
        *d = g.distance;
        if let Some(h) = heading.as_mut() {
            *h = g.initial_heading;
        }
        HcStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_handles_are_rejected() {
        unsafe {
            assert_eq!(hc_simulation_step(ptr::null_mut(), 1), HcStatus::NullPointer);
            assert_eq!(hc_simulation_new_baseline(1, ptr::null_mut()), HcStatus::NullPointer);
            let msg = CStr::from_ptr(hc_last_error()).to_str().unwrap();
            assert!(msg.contains("null"), "{msg}");
            hc_simulation_free(ptr::null_mut());
        }
    }

    #[test]
    fn mode_codes_follow_mode_order() {
        assert_eq!(mode_code(None), -1);
        assert_eq!(mode_code(Some(Mode::LocalCoverage)), 0);
        assert_eq!(mode_code(Some(Mode::SurfaceTransfer)), 4);
    }
}
