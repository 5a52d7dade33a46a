//! C ABI over the slicing simulator and its controllers.
//!
//! Every object crosses the boundary as an opaque pointer that the caller
//! releases with the matching `*_free` function. Fallible calls return an
//! [`HmppoStatus`]; on failure the message is kept per thread and can be
//! copied out with [`hmppo_last_error`]. Panics never unwind into C: they are
//! caught and reported as [`HmppoStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hmppo::baselines::{
    Controller, DqnAgent, GreedyController, PolicyController, StaticController, DQN_CHECKPOINT_KIND,
};
use hmppo::env::{AllocationDecision, Scenario, SlicingEnv, NUM_COSTS};
use hmppo::eval::run_episode;
use hmppo::ppo::{check_dims, checkpoint_kind, Trainer};
use hmppo::traffic::{synth_trace, Pattern};
use hmppo::Error;

/// Length of the cost array in [`HmppoStepResult`].
pub const HMPPO_NUM_COSTS: usize = 3;
const _: () = assert!(HMPPO_NUM_COSTS == NUM_COSTS);

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HmppoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    NotFound = 4,
    Parse = 5,
    Io = 6,
    Integrity = 7,
    Version = 8,
    Dimension = 9,
    Divergence = 10,
    InvalidAction = 11,
    Panic = 12,
    Other = 13,
}

/// Synthetic traffic shapes accepted by [`hmppo_env_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HmppoPattern {
    Constant = 0,
    Diurnal = 1,
    Bursty = 2,
}

impl From<HmppoPattern> for Pattern {
    fn from(p: HmppoPattern) -> Self {
        match p {
            HmppoPattern::Constant => Pattern::Constant,
            HmppoPattern::Diurnal => Pattern::Diurnal,
            HmppoPattern::Bursty => Pattern::Bursty,
        }
    }
}

/// Measurements of one environment step.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HmppoStepResult {
    /// Fraction of active users with every QoS target met.
    pub satisfaction: f64,
    /// Delay-violation, reliability-violation and isolation-overdraw rates.
    pub costs: [f64; HMPPO_NUM_COSTS],
    pub served_bits: f64,
    pub offered_bits: f64,
    /// Nonzero once the episode horizon is reached.
    pub done: u8,
}

/// Opaque scenario handle.
pub struct HmppoScenario(Scenario);

/// Opaque environment handle.
pub struct HmppoEnv(SlicingEnv);

/// Opaque controller handle (greedy, static or a trained checkpoint).
pub struct HmppoController(Box<dyn Controller>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> HmppoStatus {
    match e {
        Error::InvalidDemand(_) | Error::InvalidInput(_) | Error::Shape { .. } => HmppoStatus::InvalidArgument,
        Error::InvalidConfig(_) | Error::Toml(_) => HmppoStatus::InvalidConfig,
        Error::NotFound(_) => HmppoStatus::NotFound,
        Error::Parse { .. } | Error::Json(_) => HmppoStatus::Parse,
        Error::Io { .. } => HmppoStatus::Io,
        Error::Integrity(_) => HmppoStatus::Integrity,
        Error::Version { .. } => HmppoStatus::Version,
        Error::Dimension(_) => HmppoStatus::Dimension,
        Error::Divergence(_) => HmppoStatus::Divergence,
        Error::InvalidAction(_) => HmppoStatus::InvalidAction,
        Error::Plot(_) => HmppoStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (HmppoStatus, String)>) -> HmppoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HmppoStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HmppoStatus::Panic
        }
    }
}

fn lift(e: Error) -> (HmppoStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HmppoStatus, String) {
    (HmppoStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> (HmppoStatus, String) {
    (HmppoStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (HmppoStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| bad("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), (HmppoStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hmppo_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hmppo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates the built-in desk scenario.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hmppo_scenario_desk(out: *mut *mut HmppoScenario) -> HmppoStatus {
    guard(|| out_ptr(out, HmppoScenario(Scenario::desk())))
}

/// Loads and validates a scenario TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as in [`hmppo_scenario_desk`].
#[no_mangle]
pub unsafe extern "C" fn hmppo_scenario_load(path: *const c_char, out: *mut *mut HmppoScenario) -> HmppoStatus {
    guard(|| {
        let s = Scenario::load(path_arg(path)?).map_err(lift)?;
        out_ptr(out, HmppoScenario(s))
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hmppo_scenario_free(scenario: *mut HmppoScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of slices, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmppo_scenario_num_slices(scenario: *const HmppoScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.num_slices())
}

/// Number of users, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmppo_scenario_num_users(scenario: *const HmppoScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.num_users())
}

/// Creates an environment driven by a synthetic trace at `load` (in `[0, 1.2]`).
///
/// # Safety
/// `scenario` must be a live handle; `out` as in [`hmppo_scenario_desk`].
#[no_mangle]
pub unsafe extern "C" fn hmppo_env_new(
    scenario: *const HmppoScenario,
    load: f64,
    pattern: HmppoPattern,
    seed: u64,
    out: *mut *mut HmppoEnv,
) -> HmppoStatus {
    guard(|| {
        let s = &scenario.as_ref().ok_or_else(|| null("scenario"))?.0;
        s.validate().map_err(lift)?;
        let trace = synth_trace(load, pattern.into(), s.env.horizon, seed, s.num_slices()).map_err(lift)?;
        out_ptr(out, HmppoEnv(SlicingEnv::new(s, trace, seed)))
    })
}

/// # Safety
/// `env` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hmppo_env_free(env: *mut HmppoEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Restarts the episode on the same trace.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmppo_env_reset(env: *mut HmppoEnv) -> HmppoStatus {
    guard(|| {
        env.as_mut().ok_or_else(|| null("env"))?.0.reset_with(None);
        Ok(())
    })
}

fn apply(
    env: &mut SlicingEnv,
    decision: &AllocationDecision,
    out: *mut HmppoStepResult,
) -> Result<(), (HmppoStatus, String)> {
    if env.done() {
        return Err(bad("episode is over; call hmppo_env_reset"));
    }
    let o = env.step(decision);
    let satisfied = o.qos.iter().filter(|q| q.satisfied()).count() as f64 / o.qos.len().max(1) as f64;
    let r = HmppoStepResult {
        satisfaction: satisfied,
        costs: o.costs,
        served_bits: o.served_bits,
        offered_bits: o.offered_bits,
        done: env.done() as u8,
    };
    if !out.is_null() {
        // SAFETY: checked non-null; the caller guarantees it is writable.
        unsafe { *out = r };
    }
    Ok(())
}

/// Applies a caller-built decision. `admissions` holds one byte per slice,
/// `slice_budgets` three shares (radio, bandwidth, compute) per slice, and
/// `user_allocations` three shares per user. Infeasible values are projected
/// onto the feasible set. `out` may be null.
///
/// # Safety
/// Array pointers must reference at least the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn hmppo_env_step(
    env: *mut HmppoEnv,
    admissions: *const u8,
    slice_budgets: *const f64,
    user_allocations: *const f64,
    out: *mut HmppoStepResult,
) -> HmppoStatus {
    guard(|| {
        let env = &mut env.as_mut().ok_or_else(|| null("env"))?.0;
        if admissions.is_null() || slice_budgets.is_null() || user_allocations.is_null() {
            return Err(null("decision array"));
        }
        let s = env.census().num_slices();
        let u = env.census().num_users();
        let adm = std::slice::from_raw_parts(admissions, s);
        let budgets = std::slice::from_raw_parts(slice_budgets, 3 * s);
        let users = std::slice::from_raw_parts(user_allocations, 3 * u);
        if budgets.iter().chain(users).any(|v| !v.is_finite()) {
            return Err((HmppoStatus::InvalidAction, "decision contains non-finite shares".into()));
        }
        let triple = |c: &[f64]| [c[0], c[1], c[2]];
        let decision = AllocationDecision {
            admissions: adm.iter().map(|&a| a != 0).collect(),
            slice_budgets: budgets.chunks(3).map(triple).collect(),
            user_allocations: users.chunks(3).map(triple).collect(),
        };
        apply(env, &decision, out)
    })
}

/// Nonzero once the episode horizon is reached (also for a null handle).
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmppo_env_done(env: *const HmppoEnv) -> u8 {
    env.as_ref().map_or(1, |e| e.0.done() as u8)
}

/// Creates the priority-greedy controller.
///
/// # Safety
/// `out` as in [`hmppo_scenario_desk`].
#[no_mangle]
pub unsafe extern "C" fn hmppo_controller_greedy(out: *mut *mut HmppoController) -> HmppoStatus {
    guard(|| out_ptr(out, HmppoController(Box::new(GreedyController))))
}

/// Creates a static controller with fixed per-slice shares summing to at most 1.
///
/// # Safety
/// `shares` must point to `num_slices` values; `out` as in [`hmppo_scenario_desk`].
#[no_mangle]
pub unsafe extern "C" fn hmppo_controller_static(
    shares: *const f64,
    num_slices: usize,
    out: *mut *mut HmppoController,
) -> HmppoStatus {
    guard(|| {
        if shares.is_null() {
            return Err(null("shares"));
        }
        let v = std::slice::from_raw_parts(shares, num_slices).to_vec();
        let c = StaticController::new(v, num_slices).map_err(lift)?;
        out_ptr(out, HmppoController(Box::new(c)))
    })
}

/// Loads a trained PPO or DQN checkpoint and checks it against `scenario`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `scenario` a live handle and `out`
/// as in [`hmppo_scenario_desk`].
#[no_mangle]
pub unsafe extern "C" fn hmppo_controller_load(
    path: *const c_char,
    scenario: *const HmppoScenario,
    out: *mut *mut HmppoController,
) -> HmppoStatus {
    guard(|| {
        let path = path_arg(path)?;
        let s = &scenario.as_ref().ok_or_else(|| null("scenario"))?.0;
        let c: Box<dyn Controller> = if checkpoint_kind(&path).map_err(lift)? == DQN_CHECKPOINT_KIND {
            let agent = DqnAgent::load(&path).map_err(lift)?;
            check_dims(&agent.layout, s).map_err(lift)?;
            Box::new(agent.controller())
        } else {
            let t = Trainer::load_for(&path, s).map_err(lift)?;
            Box::new(PolicyController::new(t.model, "ppo"))
        };
        out_ptr(out, HmppoController(c))
    })
}

/// # Safety
/// `controller` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hmppo_controller_free(controller: *mut HmppoController) {
    if !controller.is_null() {
        drop(Box::from_raw(controller));
    }
}

/// Lets `controller` decide and applies the decision to `env`. `out` may be null.
///
/// # Safety
/// `controller` and `env` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn hmppo_controller_step(
    controller: *mut HmppoController,
    env: *mut HmppoEnv,
    out: *mut HmppoStepResult,
) -> HmppoStatus {
    guard(|| {
        let c = &mut controller.as_mut().ok_or_else(|| null("controller"))?.0;
        let env = &mut env.as_mut().ok_or_else(|| null("env"))?.0;
        let d = c.decide(env);
        apply(env, &d, out)
    })
}

/// Resets `env` and runs a full episode, writing the mean satisfaction rate.
///
/// # Safety
/// `controller` and `env` must be live handles; `satisfaction` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmppo_run_episode(
    controller: *mut HmppoController,
    env: *mut HmppoEnv,
    satisfaction: *mut f64,
) -> HmppoStatus {
    guard(|| {
        let c = &mut controller.as_mut().ok_or_else(|| null("controller"))?.0;
        let env = &mut env.as_mut().ok_or_else(|| null("env"))?.0;
        if satisfaction.is_null() {
            return Err(null("satisfaction"));
        }
        env.reset_with(None);
        let rec = run_episode(c.as_mut(), env).map_err(lift)?;
        *satisfaction = rec.satisfaction;
        Ok(())
    })
}
