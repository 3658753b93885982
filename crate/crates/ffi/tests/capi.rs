use std::ffi::{CStr, CString};
use std::ptr;

use ctrlsynth_ffi::*;

const SMALL: &str = r#"
initial_template = "ConstDuty"

[plant]
v_in = 50.0
l = 0.001
c = 0.0011
r_load_nominal = 50.0
f_sw = 20000.0
v_ref = 100.0

[scenario]
t_end = 0.2

[pso]
swarm_size = 10
max_iters = 10

[session]
k_max = 1
"#;

const CONST_DUTY: &str = r#"{"name":"ConstDuty","output":0,"nodes":[{"id":0,"kind":"Param","children":[],"param_index":0}]}"#;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { cs_string_free(s) };
    out
}

fn problem(text: &str) -> Result<*mut CsProblem, (CsStatus, String)> {
    let c = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    let status = unsafe { cs_problem_from_toml(c.as_ptr(), &mut p) };
    if status == CsStatus::Ok {
        assert!(cs_last_error_message().is_null());
        Ok(p)
    } else {
        assert!(p.is_null());
        Err((status, take(cs_last_error_message())))
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(cs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn bad_config_reports_field() {
    let (status, msg) = problem(&SMALL.replace("l = 0.001", "l = -0.001")).unwrap_err();
    assert_eq!(status, CsStatus::Config);
    assert!(msg.contains("invalid plant.l"), "{msg}");

    let (status, msg) = problem("[plant]\nv_in = ").unwrap_err();
    assert_eq!(status, CsStatus::Parse);
    assert!(!msg.is_empty());
}

#[test]
fn null_arguments_are_rejected() {
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { cs_problem_from_toml(ptr::null(), &mut p) },
        CsStatus::NullPointer
    );
    assert_eq!(
        unsafe { cs_session_run(ptr::null(), ptr::null_mut()) },
        CsStatus::NullPointer
    );
    assert_eq!(unsafe { cs_session_specs_met(ptr::null()) }, 0);
    assert!(unsafe { cs_session_best_j(ptr::null()) }.is_nan());
    assert!(unsafe { cs_session_report(ptr::null()) }.is_null());
    unsafe {
        cs_problem_free(ptr::null_mut());
        cs_session_free(ptr::null_mut());
        cs_string_free(ptr::null_mut());
    }
}

#[test]
fn simulate_const_duty() {
    let p = problem(SMALL).unwrap();
    let s = CString::new(CONST_DUTY).unwrap();
    let theta = [0.5];
    let mut out = ptr::null_mut();
    let status = unsafe { cs_simulate(p, s.as_ptr(), theta.as_ptr(), 1, &mut out) };
    assert_eq!(status, CsStatus::Ok);
    let doc: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert!(doc["metrics"]["sse_volts"].as_f64().unwrap() < 0.5);

    let status = unsafe { cs_simulate(p, s.as_ptr(), ptr::null(), 0, &mut out) };
    assert_eq!(status, CsStatus::Config);
    assert!(take(cs_last_error_message()).contains("expected d_θ=1, got 0"));

    let bad = CString::new("{\"nodes\": [").unwrap();
    let status = unsafe { cs_simulate(p, bad.as_ptr(), theta.as_ptr(), 1, &mut out) };
    assert_eq!(status, CsStatus::Parse);
    unsafe { cs_problem_free(p) };
}

#[test]
fn session_round_trip() {
    let p = problem(SMALL).unwrap();
    let mut s = ptr::null_mut();
    let status = unsafe { cs_session_run(p, &mut s) };
    if status != CsStatus::Ok {
        panic!("{status:?}: {}", take(cs_last_error_message()));
    }
    assert_eq!(unsafe { cs_session_iterations(s) }, 1);
    assert!(unsafe { cs_session_best_j(s) }.is_finite());
    let log = take(unsafe { cs_session_log_json(s) });
    let parsed = ctrlsynth::cli::parse_session(&log).unwrap();
    assert_eq!(parsed.iterations.len(), 1);
    let report = take(unsafe { cs_session_report(s) });
    assert_eq!(report, ctrlsynth::cli::render_report(&parsed));
    unsafe {
        cs_session_free(s);
        cs_problem_free(p);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/ctrlsynth.h");
    for name in [
        "cs_version",
        "cs_last_error_message",
        "cs_string_free",
        "cs_problem_from_toml",
        "cs_problem_free",
        "cs_session_run",
        "cs_session_free",
        "cs_session_specs_met",
        "cs_session_iterations",
        "cs_session_best_j",
        "cs_session_log_json",
        "cs_session_report",
        "cs_simulate",
        "typedef struct CsProblem CsProblem",
        "CS_STATUS_NULL_POINTER = 1",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ctrlsynth.h\"\n\
         int main(void) {\n\
           CsProblem *p = 0;\n\
           CsStatus s = cs_problem_from_toml(\"\", &p);\n\
           cs_problem_free(p);\n\
           return s == CS_STATUS_OK;\n\
         }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
