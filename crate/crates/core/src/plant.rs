//! Averaged continuous-conduction model of a DC-DC boost converter.
//!
//! ```text
//! di_l/dt = (v_in - (1 - d) v_c) / L
//! dv_c/dt = ((1 - d) i_l - v_c / R) / C
//! ```
//!
//! The diode blocks reverse inductor current, so `i_l` is clamped at zero
//! after every integration step.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerStructure, InterpError, Interpreter, InterpreterState, Signals};

/// Any state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("simulation diverged at t={t:.6} s (i_l={i_l}, v_c={v_c})")]
    Diverged { t: f64, i_l: f64, v_c: f64 },
    #[error("invalid {field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Interpreter(#[from] InterpError),
}

fn config_err(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::Config {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// Input voltage, V.
    pub v_in: f64,
    /// Inductance, H.
    pub l: f64,
    /// Capacitance, F.
    pub c: f64,
    /// Nominal load, Ω.
    pub r_load_nominal: f64,
    /// Switching frequency, Hz.
    pub f_sw: f64,
    /// Output voltage reference, V.
    pub v_ref: f64,
}

impl PlantParams {
    /// 50 V → 100 V, 1 mH, 1100 µF, 50 Ω, 20 kHz.
    pub fn reference() -> Self {
        Self {
            v_in: 50.0,
            l: 1e-3,
            c: 1100e-6,
            r_load_nominal: 50.0,
            f_sw: 20e3,
            v_ref: 100.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("plant.v_in", self.v_in),
            ("plant.l", self.l),
            ("plant.c", self.c),
            ("plant.r_load_nominal", self.r_load_nominal),
            ("plant.f_sw", self.f_sw),
            ("plant.v_ref", self.v_ref),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if self.v_ref <= self.v_in {
            return Err(config_err(
                "plant.v_ref",
                format!(
                    "must exceed v_in for boost operation ({} <= {})",
                    self.v_ref, self.v_in
                ),
            ));
        }
        Ok(())
    }

    /// Ideal steady-state duty `1 - v_in / v_ref`.
    pub fn nominal_duty(&self) -> f64 {
        1.0 - self.v_in / self.v_ref
    }

    /// One-line summary used in prompts and reports.
    pub fn summary(&self) -> String {
        format!(
            "DC-DC boost converter: V_in = {} V, V_ref = {} V, L = {} mH, C = {} uF, R_load = {} Ohm, f_sw = {} kHz",
            self.v_in,
            self.v_ref,
            self.l * 1e3,
            self.c * 1e6,
            self.r_load_nominal,
            self.f_sw / 1e3
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEvent {
    pub time: f64,
    pub r_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub plant: PlantParams,
    #[serde(default)]
    pub load_events: Vec<LoadEvent>,
    pub t_end: f64,
    /// `(i_l, v_c)` at t = 0; defaults to `(0, v_in)`.
    #[serde(default)]
    pub initial_state: Option<(f64, f64)>,
}

impl Scenario {
    /// No load events.
    pub fn nominal(plant: PlantParams, t_end: f64) -> Self {
        Self {
            plant,
            load_events: Vec::new(),
            t_end,
            initial_state: None,
        }
    }

    /// 1 s run, load 50 Ω → 100 Ω at 0.25 s and back at 0.5 s.
    pub fn reference_load_steps() -> Self {
        let plant = PlantParams::reference();
        Self {
            plant,
            load_events: vec![
                LoadEvent {
                    time: 0.25,
                    r_load: 100.0,
                },
                LoadEvent {
                    time: 0.5,
                    r_load: 50.0,
                },
            ],
            t_end: 1.0,
            initial_state: None,
        }
    }

    pub fn initial(&self) -> PlantState {
        let (i_l, v_c) = self.initial_state.unwrap_or((0.0, self.plant.v_in));
        PlantState { i_l, v_c, t: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.plant.validate()?;
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(config_err("t_end", "must be positive"));
        }
        let mut last = f64::NEG_INFINITY;
        for ev in &self.load_events {
            if !(ev.time >= 0.0 && ev.time <= self.t_end) {
                return Err(config_err(
                    "load_events",
                    format!("event time {} outside [0, t_end]", ev.time),
                ));
            }
            if ev.time <= last {
                return Err(config_err(
                    "load_events",
                    "event times must be strictly increasing",
                ));
            }
            if !(ev.r_load.is_finite() && ev.r_load > 0.0) {
                return Err(config_err(
                    "load_events",
                    format!("r_load must be positive, got {}", ev.r_load),
                ));
            }
            last = ev.time;
        }
        if let Some((i_l, v_c)) = self.initial_state {
            if !(i_l.is_finite() && v_c.is_finite() && i_l >= 0.0) {
                return Err(config_err("initial_state", "must be finite with i_l >= 0"));
            }
        }
        Ok(())
    }

    /// Load resistance in effect at time `t`.
    pub fn r_load_at(&self, t: f64) -> f64 {
        let mut r = self.plant.r_load_nominal;
        for ev in &self.load_events {
            if t + 1e-12 >= ev.time {
                r = ev.r_load;
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Controller update period, s.
    pub control_dt: f64,
    /// RK4 substeps per control period.
    pub substeps: u32,
    pub duty_min: f64,
    pub duty_max: f64,
}

impl SimConfig {
    /// One update per switching period, 10 substeps, duty in [0.02, 0.95].
    pub fn for_plant(plant: &PlantParams) -> Self {
        Self {
            control_dt: 1.0 / plant.f_sw,
            substeps: 10,
            duty_min: 0.02,
            duty_max: 0.95,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.control_dt.is_finite() && self.control_dt > 0.0) {
            return Err(config_err("control_dt", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(config_err("substeps", "must be at least 1"));
        }
        if !(0.0 <= self.duty_min && self.duty_min < self.duty_max && self.duty_max <= 1.0) {
            return Err(config_err(
                "duty_min/duty_max",
                "need 0 <= duty_min < duty_max <= 1",
            ));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::for_plant(&PlantParams::reference())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub i_l: f64,
    pub v_c: f64,
    pub t: f64,
}

/// Time derivatives `(di_l/dt, dv_c/dt)` of the averaged model.
pub fn derivatives(
    state: &PlantState,
    duty: f64,
    r_load: f64,
    plant: &PlantParams,
) -> Result<(f64, f64), SimError> {
    if !(state.i_l.is_finite() && state.v_c.is_finite() && duty.is_finite()) {
        return Err(SimError::Diverged {
            t: state.t,
            i_l: state.i_l,
            v_c: state.v_c,
        });
    }
    Ok(rates(state.i_l, state.v_c, 1.0 - duty, r_load, plant))
}

#[inline(always)]
fn rates(i_l: f64, v_c: f64, off: f64, r_load: f64, p: &PlantParams) -> (f64, f64) {
    ((p.v_in - off * v_c) / p.l, (off * i_l - v_c / r_load) / p.c)
}

#[inline(always)]
fn rk4(i_l: f64, v_c: f64, off: f64, r: f64, dt: f64, p: &PlantParams) -> (f64, f64) {
    let (a1, b1) = rates(i_l, v_c, off, r, p);
    let (a2, b2) = rates(i_l + 0.5 * dt * a1, v_c + 0.5 * dt * b1, off, r, p);
    let (a3, b3) = rates(i_l + 0.5 * dt * a2, v_c + 0.5 * dt * b2, off, r, p);
    let (a4, b4) = rates(i_l + dt * a3, v_c + dt * b3, off, r, p);
    (
        i_l + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        v_c + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

fn check(i_l: f64, v_c: f64, t: f64) -> Result<(), SimError> {
    if i_l.is_finite()
        && v_c.is_finite()
        && i_l.abs() <= DIVERGENCE_LIMIT
        && v_c.abs() <= DIVERGENCE_LIMIT
    {
        Ok(())
    } else {
        Err(SimError::Diverged { t, i_l, v_c })
    }
}

/// One classical RK4 step with the diode guard.
pub fn step(
    state: &PlantState,
    duty: f64,
    r_load: f64,
    dt: f64,
    plant: &PlantParams,
) -> Result<PlantState, SimError> {
    derivatives(state, duty, r_load, plant)?;
    let (i_l, v_c) = rk4(state.i_l, state.v_c, 1.0 - duty, r_load, dt, plant);
    let t = state.t + dt;
    check(i_l, v_c, t)?;
    Ok(PlantState {
        i_l: i_l.max(0.0),
        v_c,
        t,
    })
}

/// Uniformly sampled closed-loop run: one row per control period, holding the
/// state at the start of the period and the duty applied during it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub v_c: Vec<f64>,
    pub i_l: Vec<f64>,
    pub duty: Vec<f64>,
    pub r_load: Vec<f64>,
    pub v_ref: Vec<f64>,
}

pub const CSV_HEADER: &str = "t,v_c,i_l,duty,r_load,v_ref";

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            v_c: Vec::with_capacity(n),
            i_l: Vec::with_capacity(n),
            duty: Vec::with_capacity(n),
            r_load: Vec::with_capacity(n),
            v_ref: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sample spacing, or 0 for fewer than two samples.
    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    pub fn push(&mut self, t: f64, v_c: f64, i_l: f64, duty: f64, r_load: f64, v_ref: f64) {
        self.t.push(t);
        self.v_c.push(v_c);
        self.i_l.push(i_l);
        self.duty.push(duty);
        self.r_load.push(r_load);
        self.v_ref.push(v_ref);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 72 + 32);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for k in 0..self.len() {
            let row = [
                self.t[k],
                self.v_c[k],
                self.i_l[k],
                self.duty[k],
                self.r_load[k],
                self.v_ref[k],
            ];
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", fmt_sig9(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(format!("bad header: {other:?}")),
        }
        let mut tr = Trajectory::default();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| format!("row {}: {e}", n + 1))?;
            if vals.len() != 6 {
                return Err(format!(
                    "row {}: expected 6 columns, got {}",
                    n + 1,
                    vals.len()
                ));
            }
            tr.push(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]);
        }
        Ok(tr)
    }
}

/// Fixed-point decimal rendering with 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    fmt_sig(x, 9)
}

pub fn fmt_sig(x: f64, sig: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() {
            "0".into()
        } else {
            format!("{x}")
        };
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (sig - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Closed-loop run of `controller` with parameters `theta`.
///
/// The duty is computed once per control period, clamped to
/// `[duty_min, duty_max]`, and held over the RK4 substeps.
pub fn simulate(
    controller: &ControllerStructure,
    theta: &[f64],
    scenario: &Scenario,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    let mut interp = Interpreter::new(controller)?;
    simulate_compiled(&mut interp, controller, theta, scenario, cfg)
}

/// As [`simulate`], reusing a compiled interpreter.
pub fn simulate_compiled(
    interp: &mut Interpreter,
    controller: &ControllerStructure,
    theta: &[f64],
    scenario: &Scenario,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    scenario.validate()?;
    cfg.validate()?;
    if theta.len() != interp.param_dimension() {
        return Err(InterpError::DimensionMismatch {
            expected: interp.param_dimension(),
            got: theta.len(),
        }
        .into());
    }
    let plant = &scenario.plant;
    let steps = (scenario.t_end / cfg.control_dt).round() as usize;
    let h = cfg.control_dt / cfg.substeps as f64;
    let mut istate = InterpreterState::new(controller);
    let init = scenario.initial();
    let (mut i_l, mut v_c) = (init.i_l, init.v_c);
    let mut prev_duty = 0.0;
    let mut traj = Trajectory::with_capacity(steps);

    let mut next_event = 0;
    let mut r = plant.r_load_nominal;
    for k in 0..steps {
        let t = k as f64 * cfg.control_dt;
        while next_event < scenario.load_events.len()
            && t + 1e-12 >= scenario.load_events[next_event].time
        {
            r = scenario.load_events[next_event].r_load;
            next_event += 1;
        }
        let signals = Signals {
            error: plant.v_ref - v_c,
            v_c,
            i_l,
            v_ref: plant.v_ref,
            prev_duty,
        };
        let raw = interp.step(theta, &signals, &mut istate, cfg.control_dt)?;
        let duty = raw.clamp(cfg.duty_min, cfg.duty_max);
        traj.push(t, v_c, i_l, duty, r, plant.v_ref);

        let off = 1.0 - duty;
        for _ in 0..cfg.substeps {
            let (ni, nv) = rk4(i_l, v_c, off, r, h, plant);
            i_l = ni.max(0.0);
            v_c = nv;
        }
        check(i_l, v_c, t + cfg.control_dt)?;
        prev_duty = duty;
    }
    Ok(traj)
}
