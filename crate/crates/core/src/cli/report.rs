//! Markdown report and CSV series derived from a session log.
//!
//! Everything here reads only the [`DesignSession`], so a replayed log
//! reproduces the run-time report byte for byte.

use std::fmt::Write;

use crate::controller::StructureDoc;
use crate::evaluator::{PerformanceFeedback, SpecFlag};
use crate::orchestrator::{DesignSession, IterationRecord};
use crate::plant::{fmt_sig, fmt_sig9};

pub const CONVERGENCE_HEADER: &str = "k,best_j";

/// `k,best_j` rows, one per iteration.
pub fn convergence_csv(session: &DesignSession) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for it in &session.iterations {
        let _ = writeln!(out, "{},{}", it.k, fmt_sig9(it.best_j_so_far));
    }
    out
}

pub fn parse_convergence_csv(text: &str) -> Result<Vec<(usize, f64)>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CONVERGENCE_HEADER) {
        return Err("bad convergence header".into());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            let (k, j) = l
                .split_once(',')
                .ok_or_else(|| format!("row {}: expected 2 columns", n + 1))?;
            let k = k
                .trim()
                .parse()
                .map_err(|e| format!("row {}: {e}", n + 1))?;
            let j = j
                .trim()
                .parse()
                .map_err(|e| format!("row {}: {e}", n + 1))?;
            Ok((k, j))
        })
        .collect()
}

fn num(x: f64) -> String {
    fmt_sig(x, 4)
}

fn flags(fb: &PerformanceFeedback) -> String {
    if fb.spec_flags.is_empty() {
        "-".into()
    } else {
        fb.spec_flags
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn iteration_row(out: &mut String, it: &IterationRecord) {
    let m = &it.feedback.metrics;
    let source = it
        .action
        .source
        .map(|s| format!(" ({})", s.as_str()))
        .unwrap_or_default();
    let _ = writeln!(
        out,
        "| {} | {}{} | {} | {} | {} | {} | {} | {} | {} | {} |",
        it.k,
        it.action.kind,
        source,
        it.structure.name,
        it.theta.len(),
        num(it.feedback.index_j),
        num(it.best_j_so_far),
        num(m.overshoot_pct),
        num(m.sse_volts),
        num(m.chattering_tv),
        flags(&it.feedback),
    );
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn structure_json(doc: &StructureDoc) -> String {
    serde_json::to_string_pretty(doc).expect("structure documents always serialize")
}

pub fn render_report(session: &DesignSession) -> String {
    let best = session.best_record();
    let spec = &session.spec;
    let m = &best.feedback.metrics;
    let mut out = String::new();

    let _ = writeln!(out, "# Design session report\n");
    let _ = writeln!(out, "- initial template: {}", session.initial_template);
    let _ = writeln!(out, "- proposer mode: {}", session.mode.as_str());
    let _ = writeln!(out, "- seed: {}", session.seed);
    let _ = writeln!(out, "- iterations: {}", session.iterations.len());
    let _ = write!(
        out,
        "- termination: {}",
        session.termination_reason.as_str()
    );
    if !session.termination_note.is_empty() {
        let _ = write!(out, " ({})", session.termination_note);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "- specs met: {}\n",
        if session.specs_met() { "yes" } else { "no" }
    );

    let _ = writeln!(out, "## Iterations\n");
    let _ = writeln!(
        out,
        "| k | action | structure | d_theta | J | best J | overshoot % | e_ss V | duty TV | flags |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|");
    for it in &session.iterations {
        iteration_row(&mut out, it);
    }

    let sse_limit_v = spec.max_sse_pct / 100.0 * session.v_ref;
    let _ = writeln!(out, "\n## Specifications (best design, k = {})\n", best.k);
    let _ = writeln!(out, "| spec | limit | value | result |");
    let _ = writeln!(out, "|---|---|---|---|");
    let _ = writeln!(
        out,
        "| overshoot | < {} % | {} % | {} |",
        num(spec.max_overshoot_pct),
        num(m.overshoot_pct),
        verdict(!best.feedback.has(SpecFlag::OvershootExceeded) && !m.diverged)
    );
    let _ = writeln!(
        out,
        "| steady-state error | < {} V | {} V | {} |",
        num(sse_limit_v),
        num(m.sse_volts),
        verdict(!best.feedback.has(SpecFlag::SseExceeded) && !m.diverged)
    );
    let _ = writeln!(
        out,
        "| duty total variation | < {} | {} | {} |",
        num(spec.chattering_threshold),
        num(m.chattering_tv),
        verdict(!best.feedback.has(SpecFlag::ChatteringDetected) && !m.diverged)
    );
    let _ = writeln!(
        out,
        "| bounded response | - | - | {} |",
        verdict(!m.diverged)
    );
    let _ = writeln!(
        out,
        "| settling (advisory) | {} % band | {} s | {} |",
        num(spec.settling_band_pct),
        num(m.settling_time_s),
        if m.settling_slow { "slow" } else { "ok" }
    );

    let _ = writeln!(out, "\n## Best controller\n");
    let _ = writeln!(out, "J = {}\n", fmt_sig9(session.best.index_j));
    let theta: Vec<String> = best.theta.as_slice().iter().map(|x| fmt_sig9(*x)).collect();
    let _ = writeln!(out, "theta = [{}]\n", theta.join(", "));
    let _ = writeln!(
        out,
        "```json\n{}\n```\n",
        structure_json(&session.best.structure)
    );

    let _ = writeln!(out, "## Convergence\n");
    let _ = writeln!(out, "```csv\n{}```", convergence_csv(session));
    out
}
