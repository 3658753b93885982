//! C interface to the controller-synthesis engine.
//!
//! Problems and sessions are opaque handles. Every fallible call returns a
//! [`CsStatus`]; on failure the message is kept per thread and can be copied
//! out with [`cs_last_error_message`]. Strings returned by this library must
//! be released with [`cs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ctrlsynth::cli::{render_report, RunConfig};
use ctrlsynth::controller::deserialize;
use ctrlsynth::orchestrator::{run_session, score_fixed, DesignProblem, DesignSession};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Internal = 5,
}

/// A validated design problem.
pub struct CsProblem {
    inner: DesignProblem,
}

/// A finished design session.
pub struct CsSession {
    inner: DesignSession,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), (CsStatus, String)>) -> CsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CsStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CsStatus, String)> {
    if p.is_null() {
        return Err((CsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (CsStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or NULL if the last
/// call succeeded. Free with [`cs_string_free`].
#[no_mangle]
pub extern "C" fn cs_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |m| m.clone().into_raw())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a TOML run configuration into a problem handle.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_problem_from_toml(
    config_toml: *const c_char,
    out: *mut *mut CsProblem,
) -> CsStatus {
    guard(|| {
        if out.is_null() {
            return Err((CsStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let text = read_str(config_toml, "config_toml")?;
        let cfg = RunConfig::parse(text).map_err(|e| (CsStatus::Parse, e.to_string()))?;
        let problem = cfg.problem();
        problem
            .validate()
            .map_err(|e| (CsStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(CsProblem { inner: problem }));
        Ok(())
    })
}

/// # Safety
/// `problem` must be NULL or a handle from [`cs_problem_from_toml`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_problem_free(problem: *mut CsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs a full design session. Blocks until it terminates.
///
/// # Safety
/// `problem` must be a live problem handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_session_run(
    problem: *const CsProblem,
    out: *mut *mut CsSession,
) -> CsStatus {
    guard(|| {
        if problem.is_null() || out.is_null() {
            return Err((CsStatus::NullPointer, "problem or out is null".into()));
        }
        *out = ptr::null_mut();
        let outcome =
            run_session(&(*problem).inner, false).map_err(|e| (CsStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(CsSession {
            inner: outcome.session,
        }));
        Ok(())
    })
}

/// # Safety
/// `session` must be NULL or a handle from [`cs_session_run`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_session_free(session: *mut CsSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// 1 if the session ended with every specification met, 0 otherwise or on NULL.
///
/// # Safety
/// `session` must be NULL or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn cs_session_specs_met(session: *const CsSession) -> i32 {
    session.as_ref().map_or(0, |s| s.inner.specs_met() as i32)
}

/// Number of outer iterations, 0 on NULL.
///
/// # Safety
/// `session` must be NULL or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn cs_session_iterations(session: *const CsSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.iterations.len())
}

/// Performance index of the best design, NaN on NULL.
///
/// # Safety
/// `session` must be NULL or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn cs_session_best_j(session: *const CsSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| s.inner.best.index_j)
}

/// Session log as JSON. Free with [`cs_string_free`]; NULL on NULL input.
///
/// # Safety
/// `session` must be NULL or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn cs_session_log_json(session: *const CsSession) -> *mut c_char {
    session
        .as_ref()
        .map_or(ptr::null_mut(), |s| into_c_string(s.inner.to_json()))
}

/// Markdown report. Free with [`cs_string_free`]; NULL on NULL input.
///
/// # Safety
/// `session` must be NULL or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn cs_session_report(session: *const CsSession) -> *mut c_char {
    session
        .as_ref()
        .map_or(ptr::null_mut(), |s| into_c_string(render_report(&s.inner)))
}

/// Simulates a structure document at fixed parameters and writes the
/// feedback document (metrics, index, flags) as JSON to `out_json`.
///
/// # Safety
/// `problem` must be a live problem handle, `structure_json` NUL-terminated,
/// `theta` valid for `theta_len` reads (or NULL when `theta_len` is 0), and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_simulate(
    problem: *const CsProblem,
    structure_json: *const c_char,
    theta: *const f64,
    theta_len: usize,
    out_json: *mut *mut c_char,
) -> CsStatus {
    guard(|| {
        if problem.is_null() || out_json.is_null() || (theta.is_null() && theta_len > 0) {
            return Err((
                CsStatus::NullPointer,
                "problem, theta or out_json is null".into(),
            ));
        }
        *out_json = ptr::null_mut();
        let text = read_str(structure_json, "structure_json")?;
        let structure = deserialize(text).map_err(|e| (CsStatus::Parse, e.to_string()))?;
        let theta = if theta_len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(theta, theta_len)
        };
        let (fb, _) = score_fixed(&structure, theta, &(*problem).inner)
            .map_err(|e| (CsStatus::Config, e.to_string()))?;
        *out_json = into_c_string(fb.to_document());
        Ok(())
    })
}
