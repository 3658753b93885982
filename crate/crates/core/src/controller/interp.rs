use thiserror::Error;

use super::structure::{describe_violations, ControllerStructure, PrimitiveKind, Violation};

/// Smallest denominator magnitude used by `SafeDiv` and `Sat`.
pub const DIV_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum InterpError {
    #[error("invalid structure:\n{}", describe_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("expected d_θ={expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("interpreter state does not match structure ({expected} slots, got {got})")]
    StateShape { expected: usize, got: usize },
    #[error("interpreter overflow: node {node} ({kind}) produced a non-finite value")]
    Overflow { node: usize, kind: &'static str },
}

/// Measured quantities available to a control law at one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Signals {
    pub error: f64,
    pub v_c: f64,
    pub i_l: f64,
    pub v_ref: f64,
    pub prev_duty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SignalId {
    Error,
    VC,
    IL,
    VRef,
    PrevDuty,
}

impl SignalId {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "error" => SignalId::Error,
            "v_c" => SignalId::VC,
            "i_l" => SignalId::IL,
            "v_ref" => SignalId::VRef,
            "prev_duty" => SignalId::PrevDuty,
            _ => return None,
        })
    }

    fn read(self, s: &Signals) -> f64 {
        match self {
            SignalId::Error => s.error,
            SignalId::VC => s.v_c,
            SignalId::IL => s.i_l,
            SignalId::VRef => s.v_ref,
            SignalId::PrevDuty => s.prev_duty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeState {
    Stateless,
    Integrator { acc: f64 },
    FilteredDeriv { prev_input: Option<f64>, value: f64 },
    AdaptiveGain { gain: f64 },
}

/// Per-simulation memory of the stateful nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpreterState {
    slots: Vec<NodeState>,
}

impl InterpreterState {
    /// Fresh state: accumulators at zero, adaptive gains at their initial value.
    pub fn new(structure: &ControllerStructure) -> Self {
        let slots = structure
            .nodes
            .iter()
            .map(|n| match n.kind {
                PrimitiveKind::Integrator { .. } => NodeState::Integrator { acc: 0.0 },
                PrimitiveKind::FilteredDeriv => NodeState::FilteredDeriv {
                    prev_input: None,
                    value: 0.0,
                },
                PrimitiveKind::AdaptiveGain { initial } => NodeState::AdaptiveGain {
                    gain: initial.max(0.0),
                },
                _ => NodeState::Stateless,
            })
            .collect();
        Self { slots }
    }

    pub fn slot(&self, node: usize) -> Option<&NodeState> {
        self.slots.get(node)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Param(usize),
    Signal(SignalId),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    SafeDiv(usize, usize),
    Neg(usize),
    Abs(usize),
    Sign(usize),
    Sat(usize, usize),
    Integrator(usize, f64),
    FilteredDeriv(usize, usize),
    Gain(usize, usize),
    Min(usize, usize),
    Max(usize, usize),
    AdaptiveGain(usize, usize, usize),
}

/// A structure compiled to a flat evaluation schedule.
#[derive(Debug, Clone)]
pub struct Interpreter {
    schedule: Vec<(usize, Op)>,
    node_count: usize,
    output: usize,
    dim: usize,
    values: Vec<f64>,
    kinds: Vec<&'static str>,
}

impl Interpreter {
    pub fn new(structure: &ControllerStructure) -> Result<Self, InterpError> {
        structure.validate_default().map_err(InterpError::Invalid)?;
        let dim = structure.param_dimension().map_err(InterpError::Invalid)?;
        let reach = structure.reachable();
        let order = structure
            .topo_order()
            .map_err(|node| InterpError::Invalid(vec![Violation::Cycle { node }]))?;
        let mut schedule = Vec::new();
        for i in order.into_iter().filter(|&i| reach[i]) {
            let node = &structure.nodes[i];
            let c = &node.children;
            let op = match &node.kind {
                PrimitiveKind::Const(v) => Op::Const(*v),
                PrimitiveKind::Param(p) => Op::Param(*p),
                PrimitiveKind::Signal(name) => {
                    Op::Signal(SignalId::parse(name).ok_or_else(|| {
                        InterpError::Invalid(vec![Violation::UnknownSignal {
                            node: i,
                            name: name.clone(),
                        }])
                    })?)
                }
                PrimitiveKind::Add => Op::Add(c[0], c[1]),
                PrimitiveKind::Sub => Op::Sub(c[0], c[1]),
                PrimitiveKind::Mul => Op::Mul(c[0], c[1]),
                PrimitiveKind::SafeDiv => Op::SafeDiv(c[0], c[1]),
                PrimitiveKind::Neg => Op::Neg(c[0]),
                PrimitiveKind::Abs => Op::Abs(c[0]),
                PrimitiveKind::Sign => Op::Sign(c[0]),
                PrimitiveKind::Sat => Op::Sat(c[0], c[1]),
                PrimitiveKind::Integrator { limit } => Op::Integrator(c[0], *limit),
                PrimitiveKind::FilteredDeriv => Op::FilteredDeriv(c[0], c[1]),
                PrimitiveKind::Gain(p) => Op::Gain(c[0], *p),
                PrimitiveKind::Min => Op::Min(c[0], c[1]),
                PrimitiveKind::Max => Op::Max(c[0], c[1]),
                PrimitiveKind::AdaptiveGain { .. } => Op::AdaptiveGain(c[0], c[1], c[2]),
            };
            schedule.push((i, op));
        }
        Ok(Self {
            schedule,
            node_count: structure.nodes.len(),
            output: structure.output,
            dim,
            values: vec![0.0; structure.nodes.len()],
            kinds: structure.nodes.iter().map(|n| n.kind.name()).collect(),
        })
    }

    pub fn param_dimension(&self) -> usize {
        self.dim
    }

    /// Evaluates the law once, advancing stateful nodes by `dt`. Returns the
    /// raw (unclamped) duty.
    pub fn step(
        &mut self,
        theta: &[f64],
        signals: &Signals,
        state: &mut InterpreterState,
        dt: f64,
    ) -> Result<f64, InterpError> {
        if theta.len() != self.dim {
            return Err(InterpError::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        if state.slots.len() != self.node_count {
            return Err(InterpError::StateShape {
                expected: self.node_count,
                got: state.slots.len(),
            });
        }
        let v = &mut self.values;
        for (i, op) in &self.schedule {
            let i = *i;
            let out = match *op {
                Op::Const(c) => c,
                Op::Param(p) => theta[p],
                Op::Signal(s) => s.read(signals),
                Op::Add(a, b) => v[a] + v[b],
                Op::Sub(a, b) => v[a] - v[b],
                Op::Mul(a, b) => v[a] * v[b],
                Op::SafeDiv(a, b) => v[a] / floor_magnitude(v[b]),
                Op::Neg(a) => -v[a],
                Op::Abs(a) => v[a].abs(),
                Op::Sign(a) => sign(v[a]),
                Op::Sat(a, w) => (v[a] / v[w].abs().max(DIV_FLOOR)).clamp(-1.0, 1.0),
                Op::Integrator(a, limit) => {
                    let x = v[a];
                    match &mut state.slots[i] {
                        NodeState::Integrator { acc } => {
                            *acc = (*acc + x * dt).clamp(-limit, limit);
                            *acc
                        }
                        _ => return Err(shape_err(self.node_count)),
                    }
                }
                Op::FilteredDeriv(a, s) => {
                    let x = v[a];
                    let alpha = v[s].clamp(0.0, 1.0);
                    match &mut state.slots[i] {
                        NodeState::FilteredDeriv { prev_input, value } => {
                            if let Some(prev) = *prev_input {
                                let raw = (x - prev) / dt;
                                *value += alpha * (raw - *value);
                            }
                            *prev_input = Some(x);
                            *value
                        }
                        _ => return Err(shape_err(self.node_count)),
                    }
                }
                Op::Gain(a, p) => theta[p] * v[a],
                Op::Min(a, b) => v[a].min(v[b]),
                Op::Max(a, b) => v[a].max(v[b]),
                Op::AdaptiveGain(d, r, l) => {
                    let (driver, rate, leak) = (v[d], v[r], v[l]);
                    match &mut state.slots[i] {
                        NodeState::AdaptiveGain { gain } => {
                            *gain = (*gain + (rate * driver.abs() - leak * *gain) * dt).max(0.0);
                            *gain
                        }
                        _ => return Err(shape_err(self.node_count)),
                    }
                }
            };
            if !out.is_finite() {
                return Err(InterpError::Overflow {
                    node: i,
                    kind: self.kinds[i],
                });
            }
            v[i] = out;
        }
        Ok(v[self.output])
    }
}

fn shape_err(n: usize) -> InterpError {
    InterpError::StateShape {
        expected: n,
        got: n,
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn floor_magnitude(x: f64) -> f64 {
    if x.abs() >= DIV_FLOOR {
        x
    } else if x < 0.0 {
        -DIV_FLOOR
    } else {
        DIV_FLOOR
    }
}

/// One-shot evaluation; compiles the structure on every call.
pub fn eval_control(
    structure: &ControllerStructure,
    theta: &[f64],
    signals: &Signals,
    state: &mut InterpreterState,
    dt: f64,
) -> Result<f64, InterpError> {
    Interpreter::new(structure)?.step(theta, signals, state, dt)
}
