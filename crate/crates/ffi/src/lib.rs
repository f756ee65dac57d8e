//! C interface. Families and policies are opaque handles owned by the caller
//! and released with the matching `*_free` function. Every fallible call
//! returns an `HmStatus`; on failure `hm_last_error` describes the problem
//! until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hmpomdp::clock::WallClock;
use hmpomdp::eval::{robust_evaluate, EvalMode, EvalOptions};
use hmpomdp::fsc::FscParams;
use hmpomdp::io::{parse_model, parse_model_str, read_policy, write_policy};
use hmpomdp::model::ModelFamily;
use hmpomdp::optimize::{rfpg, OptimizerConfig};
use hmpomdp::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InputError = 3,
    RuntimeError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Robust evaluator selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HmEvalMode {
    Ar = 0,
    Enum = 1,
}

/// A parsed model family.
pub struct HmFamily {
    family: ModelFamily,
}

/// Controller parameters.
pub struct HmPolicy {
    params: FscParams,
}

/// Optimizer settings; fill with `hm_solve_options_default` first.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct HmSolveOptions {
    pub timeout_seconds: f64,
    pub alpha: f64,
    pub beta: f64,
    pub clip: f64,
    pub gd_steps: usize,
    pub seed: u64,
    /// Memory nodes; 0 probes a memory model.
    pub nodes: usize,
    /// Outer iteration cap; 0 means none.
    pub max_iterations: usize,
    pub eval_mode: HmEvalMode,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(e: Error) -> HmStatus {
    let status = if e.is_input_error() {
        HmStatus::InputError
    } else {
        HmStatus::RuntimeError
    };
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> HmStatus) -> HmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            HmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, HmStatus> {
    if p.is_null() {
        set_error("null string argument".into());
        return Err(HmStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        HmStatus::InvalidUtf8
    })
}

macro_rules! nonnull {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            set_error(format!("null argument `{}`", stringify!($p)));
            return HmStatus::NullArgument;
        })+
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a model file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_family_load(path: *const c_char, out: *mut *mut HmFamily) -> HmStatus {
    guard(|| {
        nonnull!(out);
        let path = tri!(str_arg(path));
        match parse_model(path) {
            Ok(family) => {
                *out = Box::into_raw(Box::new(HmFamily { family }));
                HmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses a model from text in the model-file format.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_family_from_string(text: *const c_char, out: *mut *mut HmFamily) -> HmStatus {
    guard(|| {
        nonnull!(out);
        let text = tri!(str_arg(text));
        match parse_model_str(text) {
            Ok(family) => {
                *out = Box::into_raw(Box::new(HmFamily { family }));
                HmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a family. Null is ignored.
///
/// # Safety
/// `family` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hm_family_free(family: *mut HmFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// Number of instances, saturated at `UINT64_MAX`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_family_instance_count(family: *const HmFamily, out: *mut u64) -> HmStatus {
    guard(|| {
        nonnull!(family, out);
        *out = u64::try_from((*family).family.instance_count()).unwrap_or(u64::MAX);
        HmStatus::Ok
    })
}

/// Number of holes, i.e. the length of an instance index.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_family_hole_count(family: *const HmFamily, out: *mut usize) -> HmStatus {
    guard(|| {
        nonnull!(family, out);
        *out = (*family).family.holes.len();
        HmStatus::Ok
    })
}

/// Default optimizer settings.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_solve_options_default(out: *mut HmSolveOptions) -> HmStatus {
    guard(|| {
        nonnull!(out);
        let d = OptimizerConfig::default();
        *out = HmSolveOptions {
            timeout_seconds: d.timeout_seconds,
            alpha: d.alpha,
            beta: d.beta,
            clip: d.clip,
            gd_steps: d.gd_steps,
            seed: d.seed,
            nodes: 0,
            max_iterations: 0,
            eval_mode: HmEvalMode::Ar,
        };
        HmStatus::Ok
    })
}

fn eval_options(mode: HmEvalMode) -> EvalOptions {
    EvalOptions {
        mode: match mode {
            HmEvalMode::Ar => EvalMode::Ar,
            HmEvalMode::Enum => EvalMode::Enum,
        },
        ..EvalOptions::default()
    }
}

/// Optimizes a robust controller. On success `*out` owns the best policy
/// found and `*robust_value` holds its robust value (NaN if the budget ran
/// out before the first evaluation).
///
/// # Safety
/// Pointers must be valid; `robust_value` may be null.
#[no_mangle]
pub unsafe extern "C" fn hm_solve(
    family: *const HmFamily,
    options: *const HmSolveOptions,
    out: *mut *mut HmPolicy,
    robust_value: *mut f64,
) -> HmStatus {
    guard(|| {
        nonnull!(family, options, out);
        let family = &(*family).family;
        let o = *options;
        let cfg = OptimizerConfig {
            alpha: o.alpha,
            beta: o.beta,
            clip: o.clip,
            gd_steps: o.gd_steps,
            timeout_seconds: o.timeout_seconds,
            max_iterations: (o.max_iterations > 0).then_some(o.max_iterations),
            seed: o.seed,
            eval: eval_options(o.eval_mode),
            objective: family.objective(),
            nodes: (o.nodes > 0).then_some(o.nodes),
            ..OptimizerConfig::default()
        };
        match rfpg(family, &cfg, &WallClock::new()) {
            Ok(outcome) => {
                if !robust_value.is_null() {
                    *robust_value = outcome.best_value.unwrap_or(f64::NAN);
                }
                *out = Box::into_raw(Box::new(HmPolicy { params: outcome.best }));
                HmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Robust value of a policy. When `worst_index` is non-null it receives the
/// option of each hole for the worst instance; `len` must be at least the
/// hole count.
///
/// # Safety
/// Pointers must be valid; `worst_index` may be null.
#[no_mangle]
pub unsafe extern "C" fn hm_robust_evaluate(
    family: *const HmFamily,
    policy: *const HmPolicy,
    mode: HmEvalMode,
    value: *mut f64,
    worst_index: *mut usize,
    len: usize,
) -> HmStatus {
    guard(|| {
        nonnull!(family, policy, value);
        let family = &(*family).family;
        if let Err(e) = (*policy).params.check_space(&family.controller_space()) {
            return fail(e);
        }
        let result = match robust_evaluate(family, &(*policy).params.realize(), &eval_options(mode)) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        if !worst_index.is_null() {
            let index = &result.worst_index.0;
            if len < index.len() {
                set_error(format!(
                    "index buffer holds {len} entries, {} needed",
                    index.len()
                ));
                return HmStatus::BufferTooSmall;
            }
            std::slice::from_raw_parts_mut(worst_index, index.len()).copy_from_slice(index);
        }
        *value = result.robust_value;
        HmStatus::Ok
    })
}

/// Writes a policy file for `family`.
///
/// # Safety
/// Pointers must be valid and `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn hm_policy_save(
    family: *const HmFamily,
    policy: *const HmPolicy,
    path: *const c_char,
) -> HmStatus {
    guard(|| {
        nonnull!(family, policy);
        let path = tri!(str_arg(path));
        match write_policy(&(*family).family, &(*policy).params, path) {
            Ok(()) => HmStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Reads a policy file and checks it against `family`.
///
/// # Safety
/// Pointers must be valid and `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn hm_policy_load(
    family: *const HmFamily,
    path: *const c_char,
    out: *mut *mut HmPolicy,
) -> HmStatus {
    guard(|| {
        nonnull!(family, out);
        let path = tri!(str_arg(path));
        match read_policy(&(*family).family, path) {
            Ok(params) => {
                *out = Box::into_raw(Box::new(HmPolicy { params }));
                HmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a policy. Null is ignored.
///
/// # Safety
/// `policy` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hm_policy_free(policy: *mut HmPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}
