mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{small_config, CONST_DUTY_DOC};
use ctrlsynth::cli::report::{convergence_csv, parse_convergence_csv, render_report};
use ctrlsynth::cli::{load_session, parse_session};

fn ctrlsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrlsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUICK: &str = r#"load_events = [{ time = 0.04, r_load = 100.0 }, { time = 0.08, r_load = 50.0 }]

[pso]
swarm_size = 8
max_iters = 6
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn run_quick(dir: &Path, session: &str) -> (Output, std::path::PathBuf) {
    let cfg = write(
        dir,
        "run.cfg",
        &small_config(0.12, &format!("{QUICK}\n[session]\n{session}\n")),
    );
    let out = dir.join("out");
    let o = ctrlsynth(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    (o, out)
}

#[test]
fn negative_inductance_exits_two_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.cfg",
        &small_config(0.1, "").replace("l = 0.001", "l = -0.001"),
    );
    let o = ctrlsynth(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("plant.l"), "{err}");
}

#[test]
fn unknown_keys_and_missing_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "typo.cfg",
        &small_config(0.1, "\n[pso]\nswarm = 3\n"),
    );
    let o = ctrlsynth(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("swarm"), "{}", stderr(&o));

    let o = ctrlsynth(&["run", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(o.status.code(), Some(2));

    let o = ctrlsynth(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unmet_specs_exit_one_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.cfg",
        &format!(
            "initial_template = \"ConstDuty\"\n{}\n[spec]\nmax_overshoot_pct = 1e-9\nmax_sse_pct = 1e-9\n\n[session]\nk_max = 1\n",
            small_config(0.12, QUICK)
        ),
    );
    let out = dir.path().join("out");
    let o = ctrlsynth(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    for f in [
        "session.json",
        "report.md",
        "convergence.csv",
        "timings.csv",
        "final_trajectory.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let session = load_session(&out.join("session.json")).unwrap();
    assert_eq!(session.iterations.len(), 1);
    assert!(!session.specs_met());
}

#[test]
fn replay_reproduces_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_quick(dir.path(), "k_max = 3");
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    let replay_dir = dir.path().join("replay");
    let log = out.join("session.json");
    let r = ctrlsynth(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--out",
        replay_dir.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let original = fs::read(out.join("report.md")).unwrap();
    assert_eq!(fs::read(replay_dir.join("report.md")).unwrap(), original);
    assert_eq!(r.stdout, original);
    assert_eq!(
        fs::read(replay_dir.join("convergence.csv")).unwrap(),
        fs::read(out.join("convergence.csv")).unwrap()
    );
}

#[test]
fn truncated_or_foreign_logs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = run_quick(dir.path(), "k_max = 2");
    let text = fs::read_to_string(out.join("session.json")).unwrap();
    let cut = write(dir.path(), "cut.json", &text[..text.len() / 2]);
    let o = ctrlsynth(&["replay", "--log", &cut]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not a session log"), "{}", stderr(&o));

    let v2 = write(
        dir.path(),
        "v2.json",
        &text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1),
    );
    let o = ctrlsynth(&["replay", "--log", &v2]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("unsupported schema_version 2"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn convergence_rows_match_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_quick(
        dir.path(),
        "k_max = 6\nstagnation_patience = 0\n\n[spec]\nmax_overshoot_pct = 1e-9\nmax_sse_pct = 1e-9\n",
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let session = load_session(&out.join("session.json")).unwrap();
    let rows =
        parse_convergence_csv(&fs::read_to_string(out.join("convergence.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), session.iterations.len());
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1));
    for ((k, j), it) in rows.iter().zip(&session.iterations) {
        assert_eq!(*k, it.k);
        let rel = (j - it.best_j_so_far).abs() / it.best_j_so_far.abs().max(1e-300);
        assert!(rel <= 5e-9, "{j} vs {}", it.best_j_so_far);
    }
    assert_eq!(
        parse_convergence_csv(&convergence_csv(&session)).unwrap(),
        rows,
        "csv is stable under a second rendering"
    );
}

#[test]
fn report_best_column_never_increases() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = run_quick(dir.path(), "k_max = 4\nstagnation_patience = 0");
    let session = parse_session(&fs::read_to_string(out.join("session.json")).unwrap()).unwrap();
    let report = render_report(&session);
    let header = report
        .lines()
        .find(|l| l.starts_with('|') && l.contains("best J"))
        .expect("iteration table");
    let cols: Vec<&str> = header.split('|').map(str::trim).collect();
    let best_col = cols.iter().position(|c| *c == "best J").unwrap();
    let best: Vec<f64> = report
        .lines()
        .skip_while(|l| *l != header)
        .skip(2)
        .take_while(|l| l.starts_with('|'))
        .map(|l| {
            l.split('|')
                .map(str::trim)
                .nth(best_col)
                .unwrap()
                .parse()
                .unwrap()
        })
        .collect();
    assert_eq!(best.len(), session.iterations.len());
    assert!(best.windows(2).all(|w| w[1] <= w[0]), "{best:?}");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let structure = write(dir.path(), "cd.json", CONST_DUTY_DOC);
    let scenario = write(dir.path(), "sc.cfg", &small_config(0.05, ""));
    let runs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|sub| {
            let out = dir.path().join(sub);
            let o = ctrlsynth(&[
                "simulate",
                "--structure",
                &structure,
                "--theta",
                "0.5",
                "--scenario",
                &scenario,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            assert!(out.join("metrics.json").is_file());
            fs::read(out.join("trajectory.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].len() > 1000);
}

#[test]
fn simulate_rejects_wrong_theta_length() {
    let dir = tempfile::tempdir().unwrap();
    let structure = write(dir.path(), "cd.json", CONST_DUTY_DOC);
    let scenario = write(dir.path(), "sc.cfg", &small_config(0.05, ""));
    let o = ctrlsynth(&[
        "simulate",
        "--structure",
        &structure,
        "--theta",
        "0.5,0.1",
        "--scenario",
        &scenario,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("expected d_θ=1, got 2"),
        "{}",
        stderr(&o)
    );

    let o = ctrlsynth(&[
        "simulate",
        "--structure",
        &structure,
        "--theta",
        "abc",
        "--scenario",
        &scenario,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta[0]"), "{}", stderr(&o));
}
