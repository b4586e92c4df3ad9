//! C ABI for the pivotal planner.
//!
//! Objects and trajectories are opaque heap handles released with their
//! `*_free` function. Every fallible call returns a [`PivotalStatus`]; on
//! failure a message is kept per thread and read with
//! [`pivotal_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pivotal::margin::UncertaintyKind;
use pivotal::object::{contact_geometry, ObjectConfig, ObjectParams, PoseState};
use pivotal::ocp::{solve_nominal, OcpSpec};
use pivotal::robust::{solve_robust, RobustConfig};
use pivotal::solver::SolverOptions;
use pivotal::trajectory::{Mode, Trajectory};
use pivotal::validate::{
    mass_perturbations, perturb_sweep, static_feasible, Perturbation, STATIC_TOL,
};
use pivotal::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Singular = 4,
    SolveFailed = 5,
    Io = 6,
    Panic = 7,
}

/// Uncertainty kind selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotalKind {
    Mass = 0,
    Com = 1,
}

/// Optimization mode selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotalMode {
    Nominal = 0,
    RobustMass = 1,
    RobustCom = 2,
}

/// Opaque object parameters.
pub struct PivotalObject(ObjectParams);

/// Opaque planned trajectory.
pub struct PivotalTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PivotalStatus {
    match e {
        Error::Domain(_) => PivotalStatus::Domain,
        Error::SingularConfiguration { .. } => PivotalStatus::Singular,
        Error::Config(_) | Error::Json(_) | Error::Csv(_) => PivotalStatus::InvalidArgument,
        Error::Build(_) | Error::RejectedSolution { .. } | Error::Solve(_) => {
            PivotalStatus::SolveFailed
        }
        Error::Io(_) => PivotalStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PivotalStatus>) -> PivotalStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PivotalStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            PivotalStatus::Panic
        }
    }
}

fn fail(e: Error) -> PivotalStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> PivotalStatus {
    set_error(format!("null pointer: {what}"));
    PivotalStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PivotalStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        PivotalStatus::InvalidArgument
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, PivotalStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PivotalStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

fn kind_of(k: PivotalKind) -> UncertaintyKind {
    match k {
        PivotalKind::Mass => UncertaintyKind::Mass,
        PivotalKind::Com => UncertaintyKind::Com,
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn pivotal_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pivotal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses an object configuration (JSON, lengths in mm, mass in g).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pivotal_object_from_json(
    json: *const c_char,
    out: *mut *mut PivotalObject,
) -> PivotalStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let cfg = ObjectConfig::from_json(text).map_err(fail)?;
        let obj = ObjectParams::from_config(&cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(PivotalObject(obj)));
        Ok(())
    })
}

/// Releases an object; null is ignored.
///
/// # Safety
/// `obj` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pivotal_object_free(obj: *mut PivotalObject) {
    if !obj.is_null() {
        drop(Box::from_raw(obj));
    }
}

/// Object mass in kg.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pivotal_object_mass(
    obj: *const PivotalObject,
    out: *mut f64,
) -> PivotalStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(obj, "obj")?.0.m;
        Ok(())
    })
}

/// Solves a pivoting problem with `n` steps and default solver options.
/// `n = 0` selects 60 steps for rectangles and 15 for stepped profiles.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pivotal_optimize(
    obj: *const PivotalObject,
    mode: PivotalMode,
    alpha: f64,
    n: usize,
    out: *mut *mut PivotalTrajectory,
) -> PivotalStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let obj = &ref_arg(obj, "obj")?.0;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            set_error("alpha must be nonnegative");
            return Err(PivotalStatus::InvalidArgument);
        }
        let n = match (n, &obj.profile) {
            (0, pivotal::object::Profile::Rect { .. }) => pivotal::cli::DEFAULT_N_RECT,
            (0, pivotal::object::Profile::Stepped { .. }) => pivotal::cli::DEFAULT_N_STEPPED,
            (n, _) => n,
        };
        let spec = OcpSpec::for_object(obj, n);
        spec.validate().map_err(fail)?;
        let opts = SolverOptions::default();
        let mode = match mode {
            PivotalMode::Nominal => Mode::Nominal,
            PivotalMode::RobustMass => Mode::RobustMass,
            PivotalMode::RobustCom => Mode::RobustCom,
        };
        let (traj, _) = match mode.robust_kind() {
            None => solve_nominal(obj, &spec, &opts),
            Some(kind) => solve_robust(obj, &spec, &RobustConfig::new(kind, alpha), &opts, None),
        }
        .map_err(fail)?;
        *out = Box::into_raw(Box::new(PivotalTrajectory(traj)));
        Ok(())
    })
}

/// Parses a trajectory file.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pivotal_trajectory_from_json(
    json: *const c_char,
    out: *mut *mut PivotalTrajectory,
) -> PivotalStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let traj = Trajectory::from_json(str_arg(json, "json")?).map_err(fail)?;
        *out = Box::into_raw(Box::new(PivotalTrajectory(traj)));
        Ok(())
    })
}

/// Serializes a trajectory; release the string with [`pivotal_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pivotal_trajectory_to_json(
    traj: *const PivotalTrajectory,
    out: *mut *mut c_char,
) -> PivotalStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = ref_arg(traj, "traj")?.0.to_json().map_err(fail)?;
        *out = CString::new(text)
            .map_err(|_| PivotalStatus::InvalidArgument)?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pivotal_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases a trajectory; null is ignored.
///
/// # Safety
/// `traj` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pivotal_trajectory_free(traj: *mut PivotalTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of control steps.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pivotal_trajectory_steps(
    traj: *const PivotalTrajectory,
    out: *mut usize,
) -> PivotalStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(traj, "traj")?.0.steps();
        Ok(())
    })
}

/// Copies the pose and input of step `k` into `state[2]` and `input[2]`.
///
/// # Safety
/// Pointers must be valid; `state` and `input` must hold two doubles each.
#[no_mangle]
pub unsafe extern "C" fn pivotal_trajectory_step(
    traj: *const PivotalTrajectory,
    k: usize,
    state: *mut f64,
    input: *mut f64,
) -> PivotalStatus {
    guard(|| {
        let t = &ref_arg(traj, "traj")?.0;
        if state.is_null() || input.is_null() {
            return Err(null("state/input"));
        }
        if k >= t.steps() {
            set_error(format!("step {k} out of range ({} steps)", t.steps()));
            return Err(PivotalStatus::InvalidArgument);
        }
        let s = t.states[k];
        let u = t.controls[k];
        *state = s.theta;
        *state.add(1) = s.p_y;
        *input = u.0;
        *input.add(1) = u.1;
        Ok(())
    })
}

/// Worst-case margins over the horizon in both directions (N or m).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pivotal_trajectory_worst_margins(
    traj: *const PivotalTrajectory,
    kind: PivotalKind,
    plus: *mut f64,
    minus: *mut f64,
) -> PivotalStatus {
    guard(|| {
        let t = &ref_arg(traj, "traj")?.0;
        let plus = out_arg(plus, "plus")?;
        let minus = out_arg(minus, "minus")?;
        let prof = t.margin_profile(kind_of(kind), None).map_err(fail)?;
        *plus = prof.worst_plus;
        *minus = prof.worst_minus;
        Ok(())
    })
}

/// Static feasibility of one `(pose, input)` pair with `eps` N of added
/// weight and CoM shift `r` m.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pivotal_static_feasible(
    obj: *const PivotalObject,
    theta: f64,
    p_y: f64,
    f_np: f64,
    f_tp: f64,
    eps: f64,
    r: f64,
    out: *mut bool,
) -> PivotalStatus {
    guard(|| {
        let obj = &ref_arg(obj, "obj")?.0;
        let out = out_arg(out, "out")?;
        let geom = contact_geometry(obj, PoseState::new(theta, p_y)).map_err(fail)?;
        *out = static_feasible(&geom, (f_np, f_tp), obj, eps, r, STATIC_TOL).map_err(fail)?;
        Ok(())
    })
}

/// Executes the trajectory at each true mass (g); writes 1 to `pass[i]` when
/// every step stays statically feasible and 0 otherwise.
///
/// # Safety
/// `masses_g` and `pass` must hold `len` elements each (may be null when `len = 0`).
#[no_mangle]
pub unsafe extern "C" fn pivotal_sweep_mass(
    traj: *const PivotalTrajectory,
    masses_g: *const f64,
    len: usize,
    pass: *mut u8,
) -> PivotalStatus {
    guard(|| {
        let t = &ref_arg(traj, "traj")?.0;
        if len == 0 {
            return Ok(());
        }
        if masses_g.is_null() || pass.is_null() {
            return Err(null("masses_g/pass"));
        }
        let masses = std::slice::from_raw_parts(masses_g, len);
        let eps = mass_perturbations(&t.object, masses).map_err(fail)?;
        let report = perturb_sweep(t, Perturbation::Mass, &eps).map_err(fail)?;
        let pass = std::slice::from_raw_parts_mut(pass, len);
        for (p, row) in pass.iter_mut().zip(&report.rows) {
            *p = row.pass as u8;
        }
        Ok(())
    })
}
