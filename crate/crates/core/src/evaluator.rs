//! Closed-loop metrics, the weighted performance index and the feedback
//! document handed to the proposer.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::Trajectory;

/// Fraction of each constant-load segment averaged for the steady-state error.
pub const SSE_WINDOW_FRACTION: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("steady-state window {window} s is longer than a {segment} s constant-load segment")]
    WindowTooLong { window: f64, segment: f64 },
    #[error("trajectory is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerformanceSpec {
    pub max_overshoot_pct: f64,
    pub max_sse_pct: f64,
    pub settling_band_pct: f64,
    pub chattering_threshold: f64,
}

impl Default for PerformanceSpec {
    fn default() -> Self {
        Self {
            max_overshoot_pct: 5.0,
            max_sse_pct: 2.0,
            settling_band_pct: 2.0,
            chattering_threshold: 2.0,
        }
    }
}

impl PerformanceSpec {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("max_overshoot_pct", self.max_overshoot_pct),
            ("max_sse_pct", self.max_sse_pct),
            ("settling_band_pct", self.settling_band_pct),
            ("chattering_threshold", self.chattering_threshold),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("spec.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn describe(&self, v_ref: f64) -> String {
        format!(
            "maximum peak overshoot Mp < {}%; steady-state error e_ss < {}% of the rated output ({} V)",
            self.max_overshoot_pct,
            self.max_sse_pct,
            self.max_sse_pct / 100.0 * v_ref
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub overshoot_pct: f64,
    pub sse_volts: f64,
    pub sse_pct: f64,
    pub settling_time_s: f64,
    pub iae_volt_s: f64,
    pub itae: f64,
    pub chattering_tv: f64,
    pub recovery_time_s: Vec<f64>,
    /// Band never re-entered before a segment ended.
    pub settling_slow: bool,
    pub diverged: bool,
}

impl MetricsReport {
    pub fn diverged() -> Self {
        Self {
            diverged: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSet {
    pub w_overshoot: f64,
    pub w_sse: f64,
    /// Applied to settling time plus every recovery time.
    pub w_settling: f64,
    pub w_chattering: f64,
    pub w_iae: f64,
    pub w_itae: f64,
    /// Added once per violated spec threshold.
    pub penalty: f64,
    /// Index assigned to diverged runs.
    pub j_div: f64,
}

impl Default for WeightSet {
    fn default() -> Self {
        Self {
            w_overshoot: 2.0,
            w_sse: 10.0,
            w_settling: 20.0,
            w_chattering: 0.05,
            w_iae: 0.0,
            w_itae: 0.0,
            penalty: 100.0,
            j_div: 1e6,
        }
    }
}

impl WeightSet {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("w_overshoot", self.w_overshoot),
            ("w_sse", self.w_sse),
            ("w_settling", self.w_settling),
            ("w_chattering", self.w_chattering),
            ("w_iae", self.w_iae),
            ("w_itae", self.w_itae),
            ("penalty", self.penalty),
            ("j_div", self.j_div),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("weights.{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecFlag {
    Diverged,
    ChatteringDetected,
    OvershootExceeded,
    SseExceeded,
    SettlingSlow,
}

impl SpecFlag {
    pub const ALL: [SpecFlag; 5] = [
        SpecFlag::Diverged,
        SpecFlag::ChatteringDetected,
        SpecFlag::OvershootExceeded,
        SpecFlag::SseExceeded,
        SpecFlag::SettlingSlow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecFlag::Diverged => "diverged",
            SpecFlag::ChatteringDetected => "chattering_detected",
            SpecFlag::OvershootExceeded => "overshoot_exceeded",
            SpecFlag::SseExceeded => "sse_exceeded",
            SpecFlag::SettlingSlow => "settling_slow",
        }
    }

    /// Flags that block `specs_met`. `settling_slow` is advisory.
    pub fn blocks_specs(self) -> bool {
        !matches!(self, SpecFlag::SettlingSlow)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

impl fmt::Display for SpecFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceFeedback {
    pub metrics: MetricsReport,
    pub index_j: f64,
    pub spec_flags: BTreeSet<SpecFlag>,
    pub specs_met: bool,
    pub iteration: usize,
}

impl PerformanceFeedback {
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("feedback always serializes")
    }

    pub fn has(&self, flag: SpecFlag) -> bool {
        self.spec_flags.contains(&flag)
    }
}

/// Peak excess of `v_c` over `v_ref`, in percent of `v_ref`.
pub fn overshoot(traj: &Trajectory, v_ref: f64) -> f64 {
    let peak = traj.v_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    100.0 * (peak - v_ref).max(0.0) / v_ref
}

/// Index ranges of constant-load segments, split at the given event times.
pub fn segments(traj: &Trajectory, event_times: &[f64]) -> Vec<Range<usize>> {
    let mut bounds = vec![0];
    for &te in event_times {
        let k = traj.t.partition_point(|&t| t + 1e-12 < te);
        if k > *bounds.last().unwrap() && k < traj.len() {
            bounds.push(k);
        }
    }
    bounds.push(traj.len());
    bounds.windows(2).map(|w| w[0]..w[1]).collect()
}

fn segment_duration(traj: &Trajectory, seg: &Range<usize>) -> f64 {
    seg.len() as f64 * traj.dt()
}

/// Worst absolute deviation of the tail mean from `v_ref` over all segments,
/// averaging the last `window` seconds of each.
pub fn steady_state_error(
    traj: &Trajectory,
    v_ref: f64,
    window: f64,
    event_times: &[f64],
) -> Result<f64, MetricsError> {
    if traj.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dt = traj.dt().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for seg in segments(traj, event_times) {
        let dur = segment_duration(traj, &seg);
        if window > dur + 1e-12 {
            return Err(MetricsError::WindowTooLong {
                window,
                segment: dur,
            });
        }
        let n = ((window / dt).round() as usize).clamp(1, seg.len());
        let tail = &traj.v_c[seg.end - n..seg.end];
        let mean = tail.iter().sum::<f64>() / n as f64;
        worst = worst.max((mean - v_ref).abs());
    }
    Ok(worst)
}

/// As [`steady_state_error`] with the window a fraction of each segment.
pub fn steady_state_error_frac(
    traj: &Trajectory,
    v_ref: f64,
    fraction: f64,
    event_times: &[f64],
) -> Result<f64, MetricsError> {
    if traj.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut worst: f64 = 0.0;
    for seg in segments(traj, event_times) {
        let n = ((seg.len() as f64 * fraction).round() as usize).clamp(1, seg.len());
        let tail = &traj.v_c[seg.end - n..seg.end];
        let mean = tail.iter().sum::<f64>() / n as f64;
        worst = worst.max((mean - v_ref).abs());
    }
    Ok(worst)
}

/// Total variation of the duty sequence.
pub fn chattering(traj: &Trajectory) -> f64 {
    traj.duty.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlingReport {
    pub settling_time_s: f64,
    pub recovery_time_s: Vec<f64>,
    pub slow: bool,
}

/// Settling time before the first event and recovery time after each event.
///
/// Within a segment the time reported is from the segment start to the first
/// sample of the final in-band run; a segment ending out of band reports its
/// full length and sets `slow`.
pub fn settling_recovery(
    traj: &Trajectory,
    v_ref: f64,
    band_pct: f64,
    event_times: &[f64],
) -> SettlingReport {
    let band = band_pct / 100.0 * v_ref;
    let mut times = Vec::new();
    let mut slow = false;
    for seg in segments(traj, event_times) {
        let start_t = traj.t[seg.start];
        let last_out = seg
            .clone()
            .rev()
            .find(|&k| (traj.v_c[k] - v_ref).abs() > band);
        let value = match last_out {
            None => 0.0,
            Some(k) if k + 1 == seg.end => {
                slow = true;
                segment_duration(traj, &seg)
            }
            Some(k) => traj.t[k + 1] - start_t,
        };
        times.push(value);
    }
    let settling_time_s = times.first().copied().unwrap_or(0.0);
    SettlingReport {
        settling_time_s,
        recovery_time_s: times.into_iter().skip(1).collect(),
        slow,
    }
}

/// Full metric set for a finished run.
pub fn compute_metrics(
    traj: &Trajectory,
    v_ref: f64,
    event_times: &[f64],
    spec: &PerformanceSpec,
) -> Result<MetricsReport, MetricsError> {
    if traj.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sse_volts = steady_state_error_frac(traj, v_ref, SSE_WINDOW_FRACTION, event_times)?;
    let settle = settling_recovery(traj, v_ref, spec.settling_band_pct, event_times);
    let dt = traj.dt();
    let (mut iae, mut itae) = (0.0, 0.0);
    for (t, v) in traj.t.iter().zip(&traj.v_c) {
        let e = (v_ref - v).abs();
        iae += e * dt;
        itae += t * e * dt;
    }
    Ok(MetricsReport {
        overshoot_pct: overshoot(traj, v_ref),
        sse_volts,
        sse_pct: 100.0 * sse_volts / v_ref,
        settling_time_s: settle.settling_time_s,
        iae_volt_s: iae,
        itae,
        chattering_tv: chattering(traj),
        recovery_time_s: settle.recovery_time_s,
        settling_slow: settle.slow,
        diverged: false,
    })
}

/// Flags raised by a metric report against the spec.
pub fn spec_flags(metrics: &MetricsReport, spec: &PerformanceSpec) -> BTreeSet<SpecFlag> {
    let mut flags = BTreeSet::new();
    if metrics.diverged {
        flags.insert(SpecFlag::Diverged);
        return flags;
    }
    if metrics.overshoot_pct >= spec.max_overshoot_pct {
        flags.insert(SpecFlag::OvershootExceeded);
    }
    if metrics.sse_pct >= spec.max_sse_pct {
        flags.insert(SpecFlag::SseExceeded);
    }
    if metrics.chattering_tv > spec.chattering_threshold {
        flags.insert(SpecFlag::ChatteringDetected);
    }
    if metrics.settling_slow {
        flags.insert(SpecFlag::SettlingSlow);
    }
    flags
}

/// `J = Σ w_i M_i + penalty · (violated thresholds)`; diverged runs get `j_div`.
pub fn performance_index(
    metrics: &MetricsReport,
    weights: &WeightSet,
    spec: &PerformanceSpec,
) -> f64 {
    if metrics.diverged {
        return weights.j_div;
    }
    let recovery: f64 = metrics.recovery_time_s.iter().sum();
    let weighted = weights.w_overshoot * metrics.overshoot_pct
        + weights.w_sse * metrics.sse_volts
        + weights.w_settling * (metrics.settling_time_s + recovery)
        + weights.w_chattering * metrics.chattering_tv
        + weights.w_iae * metrics.iae_volt_s
        + weights.w_itae * metrics.itae;
    let violations = spec_flags(metrics, spec)
        .into_iter()
        .filter(|f| f.blocks_specs())
        .count();
    weighted + weights.penalty * violations as f64
}

pub fn make_feedback(
    metrics: MetricsReport,
    index_j: f64,
    spec: &PerformanceSpec,
    iteration: usize,
) -> PerformanceFeedback {
    let spec_flags = spec_flags(&metrics, spec);
    let specs_met = !spec_flags.iter().any(|f| f.blocks_specs());
    PerformanceFeedback {
        metrics,
        index_j,
        spec_flags,
        specs_met,
        iteration,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(v: &[f64]) -> Trajectory {
        let mut t = Trajectory::default();
        for (k, &x) in v.iter().enumerate() {
            t.push(k as f64 * 0.01, x, 1.0, 0.5, 50.0, 100.0);
        }
        t
    }

    #[test]
    fn overshoot_values() {
        assert_eq!(overshoot(&trace(&[100.0; 10]), 100.0), 0.0);
        assert!((overshoot(&trace(&[90.0, 104.0, 100.0]), 100.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn overshoot_gate() {
        let spec = PerformanceSpec::default();
        let m = |o| MetricsReport {
            overshoot_pct: o,
            ..Default::default()
        };
        assert!(!spec_flags(&m(4.9), &spec).contains(&SpecFlag::OvershootExceeded));
        assert!(spec_flags(&m(5.1), &spec).contains(&SpecFlag::OvershootExceeded));
    }

    #[test]
    fn sse_constant_offset() {
        let tr = trace(&[99.0; 100]);
        assert!((steady_state_error(&tr, 100.0, 0.2, &[]).unwrap() - 1.0).abs() < 1e-12);
        assert!((steady_state_error_frac(&tr, 100.0, 0.2, &[]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sse_gate_at_two_volts() {
        let spec = PerformanceSpec::default();
        let m = |v: f64| MetricsReport {
            sse_volts: v,
            sse_pct: v,
            ..Default::default()
        };
        assert!(!spec_flags(&m(1.9), &spec).contains(&SpecFlag::SseExceeded));
        assert!(spec_flags(&m(2.1), &spec).contains(&SpecFlag::SseExceeded));
    }

    #[test]
    fn sse_window_too_long() {
        let tr = trace(&[100.0; 50]);
        // events at 0.25 s: segments of 0.25 s each
        let err = steady_state_error(&tr, 100.0, 0.3, &[0.25]).unwrap_err();
        assert!(matches!(err, MetricsError::WindowTooLong { .. }));
    }

    #[test]
    fn sse_reports_worst_segment() {
        let mut v = vec![100.0; 50];
        v[25..].iter_mut().for_each(|x| *x = 97.0);
        let tr = trace(&v);
        let e = steady_state_error(&tr, 100.0, 0.05, &[0.25]).unwrap();
        assert!((e - 3.0).abs() < 1e-12);
    }

    #[test]
    fn chattering_values() {
        assert_eq!(chattering(&trace(&[100.0; 10])), 0.0);
        let mut tr = trace(&[100.0; 11]);
        for (k, d) in tr.duty.iter_mut().enumerate() {
            *d = if k % 2 == 0 { 0.4 } else { 0.6 };
        }
        assert!((chattering(&tr) - 0.2 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn settling_definitions() {
        let r = settling_recovery(&trace(&[100.0; 20]), 100.0, 2.0, &[]);
        assert_eq!(r.settling_time_s, 0.0);
        assert!(!r.slow);
        let mut v = vec![100.0; 20];
        for x in v.iter_mut().take(5) {
            *x = 80.0;
        }
        let r = settling_recovery(&trace(&v), 100.0, 2.0, &[]);
        assert!((r.settling_time_s - 0.05).abs() < 1e-12);
    }

    #[test]
    fn never_settles_is_slow() {
        let mut v = vec![100.0; 20];
        v[19] = 50.0;
        let r = settling_recovery(&trace(&v), 100.0, 2.0, &[]);
        assert!(r.slow);
        assert!((r.settling_time_s - 0.2).abs() < 1e-12);
    }

    #[test]
    fn recovery_per_event() {
        let mut v = vec![100.0; 30];
        v[10] = 90.0;
        v[11] = 95.0;
        let r = settling_recovery(&trace(&v), 100.0, 2.0, &[0.1, 0.2]);
        assert_eq!(r.recovery_time_s.len(), 2);
        assert!((r.recovery_time_s[0] - 0.02).abs() < 1e-12);
        assert_eq!(r.recovery_time_s[1], 0.0);
    }

    #[test]
    fn index_examples() {
        let spec = PerformanceSpec::default();
        let zero = WeightSet {
            w_overshoot: 0.0,
            w_sse: 0.0,
            w_settling: 0.0,
            w_chattering: 0.0,
            w_iae: 0.0,
            w_itae: 0.0,
            penalty: 0.0,
            j_div: 1e6,
        };
        assert_eq!(
            performance_index(&MetricsReport::default(), &WeightSet::default(), &spec),
            0.0
        );
        let m = MetricsReport {
            sse_volts: 2.0,
            ..Default::default()
        };
        let w = WeightSet { w_sse: 3.0, ..zero };
        assert_eq!(performance_index(&m, &w, &spec), 6.0);
        assert_eq!(
            performance_index(&MetricsReport::diverged(), &w, &spec),
            1e6
        );
    }

    #[test]
    fn feedback_flags() {
        let spec = PerformanceSpec::default();
        let fb = make_feedback(MetricsReport::default(), 0.0, &spec, 0);
        assert!(fb.specs_met && fb.spec_flags.is_empty());
        let fb = make_feedback(
            MetricsReport {
                overshoot_pct: 7.0,
                ..Default::default()
            },
            0.0,
            &spec,
            1,
        );
        assert_eq!(
            fb.spec_flags.iter().copied().collect::<Vec<_>>(),
            vec![SpecFlag::OvershootExceeded]
        );
        assert!(!fb.specs_met);
        let fb = make_feedback(MetricsReport::diverged(), 1e6, &spec, 2);
        assert!(fb.has(SpecFlag::Diverged) && !fb.specs_met);
    }

    #[test]
    fn feedback_document_field_names() {
        let fb = make_feedback(
            MetricsReport::default(),
            1.5,
            &PerformanceSpec::default(),
            3,
        );
        let v: serde_json::Value = serde_json::from_str(&fb.to_document()).unwrap();
        for key in ["metrics", "index_j", "spec_flags", "specs_met", "iteration"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in [
            "overshoot_pct",
            "sse_volts",
            "sse_pct",
            "settling_time_s",
            "iae_volt_s",
            "itae",
            "chattering_tv",
            "recovery_time_s",
            "diverged",
        ] {
            assert!(v["metrics"].get(key).is_some(), "{key}");
        }
    }
}
