//! C ABI for the pursuit-evasion simulator.
//!
//! Foreign runtimes (Python, C++, Julia trainers) drive episodes through
//! opaque handles: load a scenario, create a simulation, read observations,
//! submit normalized joint actions, collect rewards and the terminal flag.
//! Every fallible call returns a `PursuitStatus`; the most recent failure
//! message is retrievable per thread via `pursuit_last_error`.
//!
//! The generated header lands in `include/pursuit.h` at build time.

use pursuit_arena::engine::Simulation;
use pursuit_arena::learner::ACTION_DIM;
use pursuit_arena::perception::observation_dim_idx;
use pursuit_arena::{load_scenario, load_scenario_file, Scenario};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::sync::Arc;

/// ABI version reported by `pursuit_abi_version`; bump on breaking change.
pub const PURSUIT_ABI_VERSION: u32 = 1;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PursuitStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    IoError = 5,
    IndexOutOfRange = 6,
    BufferTooSmall = 7,
    EpisodeOver = 8,
    InternalError = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &pursuit_arena::Error) -> PursuitStatus {
    use pursuit_arena::Error::*;
    match err {
        Parse { .. } => PursuitStatus::ParseError,
        Io { .. } => PursuitStatus::IoError,
        Validation(_) | DegenerateMap(_) | MissingTarget | NumericInput(_) | Usage(_) => {
            PursuitStatus::ValidationError
        }
        UnknownRobot(_) => PursuitStatus::IndexOutOfRange,
        _ => PursuitStatus::InternalError,
    }
}

/// Opaque scenario handle.
pub struct PursuitScenario {
    inner: Arc<Scenario>,
}

/// Opaque single-episode simulation handle.
pub struct PursuitSim {
    sim: Simulation,
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn pursuit_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn pursuit_abi_version() -> u32 {
    PURSUIT_ABI_VERSION
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, PursuitStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PursuitStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PursuitStatus::InvalidUtf8
    })
}

fn emit_scenario(
    result: pursuit_arena::Result<Scenario>,
    out: *mut *mut PursuitScenario,
) -> PursuitStatus {
    match result {
        Ok(s) => {
            let handle = Box::new(PursuitScenario { inner: Arc::new(s) });
            unsafe { *out = Box::into_raw(handle) };
            PursuitStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Load and validate a scenario TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn pursuit_scenario_load(
    path: *const c_char,
    out: *mut *mut PursuitScenario,
) -> PursuitStatus {
    if out.is_null() {
        set_error("null output pointer");
        return PursuitStatus::NullArgument;
    }
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    emit_scenario(load_scenario_file(Path::new(path)), out)
}

/// Parse and validate a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn pursuit_scenario_from_str(
    toml: *const c_char,
    out: *mut *mut PursuitScenario,
) -> PursuitStatus {
    if out.is_null() {
        set_error("null output pointer");
        return PursuitStatus::NullArgument;
    }
    let text = match cstr_arg(toml) {
        Ok(t) => t,
        Err(s) => return s,
    };
    emit_scenario(load_scenario(text), out)
}

/// # Safety
/// `scenario` must come from a `pursuit_scenario_*` constructor and not be
/// freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pursuit_scenario_free(scenario: *mut PursuitScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pursuit_scenario_num_robots(scenario: *const PursuitScenario) -> u32 {
    if scenario.is_null() {
        return 0;
    }
    let scenario = &*scenario;
    scenario.inner.roster.len() as u32
}

/// Copy robot `index`'s id into `buf` (NUL-terminated). `written` receives
/// the id length excluding the NUL.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pursuit_scenario_robot_id(
    scenario: *const PursuitScenario,
    index: u32,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> PursuitStatus {
    if scenario.is_null() || buf.is_null() || written.is_null() {
        set_error("null argument");
        return PursuitStatus::NullArgument;
    }
    let scenario = &*scenario;
    let roster = &scenario.inner.roster;
    let Some(spec) = roster.get(index as usize) else {
        set_error(&format!("robot index {index} out of range"));
        return PursuitStatus::IndexOutOfRange;
    };
    let bytes = spec.id.as_bytes();
    if bytes.len() + 1 > cap {
        set_error(&format!(
            "id needs {} bytes, buffer has {cap}",
            bytes.len() + 1
        ));
        return PursuitStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    *written = bytes.len();
    PursuitStatus::Ok
}

/// Entries each robot steers with (UAV: planar acceleration; UGV: linear
/// and angular velocity request), all normalized to [−1, 1].
#[no_mangle]
pub extern "C" fn pursuit_action_dim() -> u32 {
    ACTION_DIM as u32
}

/// Create a seeded episode over `scenario`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_new(
    scenario: *const PursuitScenario,
    seed: u64,
    out: *mut *mut PursuitSim,
) -> PursuitStatus {
    if scenario.is_null() || out.is_null() {
        set_error("null argument");
        return PursuitStatus::NullArgument;
    }
    match Simulation::new(Arc::clone(&(*scenario).inner), seed) {
        Ok(sim) => {
            *out = Box::into_raw(Box::new(PursuitSim { sim }));
            PursuitStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// # Safety
/// `sim` must come from `pursuit_sim_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_free(sim: *mut PursuitSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Restart the episode with a fresh seed.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_reset(sim: *mut PursuitSim, seed: u64) -> PursuitStatus {
    if sim.is_null() {
        set_error("null simulation");
        return PursuitStatus::NullArgument;
    }
    match (*sim).sim.reset(seed) {
        Ok(()) => PursuitStatus::Ok,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_done(sim: *const PursuitSim) -> bool {
    !sim.is_null() && (*sim).sim.done()
}

/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_steps_used(sim: *const PursuitSim) -> u32 {
    if sim.is_null() {
        return 0;
    }
    (*sim).sim.steps_used()
}

/// Observation length for one robot (fixed for the scenario's lifetime).
///
/// # Safety
/// `sim` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_obs_dim(
    sim: *const PursuitSim,
    robot: u32,
    out: *mut usize,
) -> PursuitStatus {
    if sim.is_null() || out.is_null() {
        set_error("null argument");
        return PursuitStatus::NullArgument;
    }
    let scenario = (*sim).sim.scenario();
    if robot as usize >= scenario.roster.len() {
        set_error(&format!("robot index {robot} out of range"));
        return PursuitStatus::IndexOutOfRange;
    }
    *out = observation_dim_idx(scenario, robot as usize);
    PursuitStatus::Ok
}

/// Copy robot `robot`'s current observation into `buf`.
///
/// # Safety
/// `buf` must point to at least `cap` writable f64 slots.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_observe(
    sim: *const PursuitSim,
    robot: u32,
    buf: *mut f64,
    cap: usize,
) -> PursuitStatus {
    if sim.is_null() || buf.is_null() {
        set_error("null argument");
        return PursuitStatus::NullArgument;
    }
    let scenario = (*sim).sim.scenario();
    if robot as usize >= scenario.roster.len() {
        set_error(&format!("robot index {robot} out of range"));
        return PursuitStatus::IndexOutOfRange;
    }
    let obs = (*sim).sim.observe_all();
    let v = &obs[robot as usize];
    if v.len() > cap {
        set_error(&format!(
            "observation needs {} slots, buffer has {cap}",
            v.len()
        ));
        return PursuitStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    PursuitStatus::Ok
}

/// Advance one step. `actions` holds `num_robots × pursuit_action_dim()`
/// values in roster order, each in [−1, 1]. On success `rewards_out` (when
/// non-null, `num_robots` slots) receives per-robot step rewards and
/// `terminal_out` (when non-null) the episode-over flag.
///
/// # Safety
/// Pointers must honor the stated lengths; `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pursuit_sim_step(
    sim: *mut PursuitSim,
    actions: *const f64,
    actions_len: usize,
    rewards_out: *mut f64,
    rewards_cap: usize,
    terminal_out: *mut bool,
) -> PursuitStatus {
    if sim.is_null() || actions.is_null() {
        set_error("null argument");
        return PursuitStatus::NullArgument;
    }
    let sim = &mut *sim;
    if sim.sim.done() {
        set_error("episode already terminal; call pursuit_sim_reset");
        return PursuitStatus::EpisodeOver;
    }
    let n = sim.sim.scenario().roster.len();
    if actions_len != n * ACTION_DIM {
        set_error(&format!(
            "actions must hold {} values ({n} robots × {ACTION_DIM}), got {actions_len}",
            n * ACTION_DIM
        ));
        return PursuitStatus::BufferTooSmall;
    }
    let flat = std::slice::from_raw_parts(actions, actions_len);
    let joint: Vec<Vec<f64>> = flat.chunks(ACTION_DIM).map(|c| c.to_vec()).collect();
    match sim.sim.step(&joint) {
        Ok(record) => {
            if !rewards_out.is_null() {
                if rewards_cap < n {
                    set_error(&format!(
                        "rewards buffer needs {n} slots, has {rewards_cap}"
                    ));
                    return PursuitStatus::BufferTooSmall;
                }
                for (i, r) in record.rewards.iter().enumerate() {
                    *rewards_out.add(i) = r.total;
                }
            }
            if !terminal_out.is_null() {
                *terminal_out = record.outcome.terminal;
            }
            PursuitStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}
