use std::fmt;

/// Names of the measured signals a controller may read.
pub const SIGNAL_NAMES: [&str; 5] = ["error", "v_c", "i_l", "v_ref", "prev_duty"];

/// Default structural limits.
pub const DEFAULT_MAX_NODES: usize = 64;
pub const DEFAULT_MAX_DEPTH: usize = 12;

/// Default symmetric clamp for an integrator accumulator.
pub const DEFAULT_INTEGRATOR_LIMIT: f64 = 10.0;

/// One primitive of the closed library.
///
/// Parameterised primitives either carry a parameter index directly (`Param`,
/// `Gain`) or take their parameters as extra children (`Sat`, `FilteredDeriv`,
/// `AdaptiveGain`), so any sub-expression may drive them.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveKind {
    Const(f64),
    Param(usize),
    Signal(String),
    Add,
    Sub,
    Mul,
    SafeDiv,
    Neg,
    Abs,
    Sign,
    /// children: `[input, width]`; output `clamp(input / width, -1, 1)`.
    Sat,
    /// children: `[input]`; accumulator clamped to `±limit`.
    Integrator {
        limit: f64,
    },
    /// children: `[input, smoothing]` with smoothing in `[0, 1]`.
    FilteredDeriv,
    /// children: `[input]`; output `theta[index] * input`.
    Gain(usize),
    Min,
    Max,
    /// children: `[driver, rate, leak]`; `K' = rate*|driver| - leak*K`, `K >= 0`.
    AdaptiveGain {
        initial: f64,
    },
}

impl PrimitiveKind {
    pub fn arity(&self) -> usize {
        use PrimitiveKind::*;
        match self {
            Const(_) | Param(_) | Signal(_) => 0,
            Neg | Abs | Sign | Integrator { .. } | Gain(_) => 1,
            Add | Sub | Mul | SafeDiv | Sat | FilteredDeriv | Min | Max => 2,
            AdaptiveGain { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        use PrimitiveKind::*;
        match self {
            Const(_) => "Const",
            Param(_) => "Param",
            Signal(_) => "Signal",
            Add => "Add",
            Sub => "Sub",
            Mul => "Mul",
            SafeDiv => "SafeDiv",
            Neg => "Neg",
            Abs => "Abs",
            Sign => "Sign",
            Sat => "Sat",
            Integrator { .. } => "Integrator",
            FilteredDeriv => "FilteredDeriv",
            Gain(_) => "Gain",
            Min => "Min",
            Max => "Max",
            AdaptiveGain { .. } => "AdaptiveGain",
        }
    }

    pub fn is_stateful(&self) -> bool {
        matches!(
            self,
            PrimitiveKind::Integrator { .. }
                | PrimitiveKind::FilteredDeriv
                | PrimitiveKind::AdaptiveGain { .. }
        )
    }

    /// Parameter index carried by the node itself, if any.
    pub fn param_index(&self) -> Option<usize> {
        match self {
            PrimitiveKind::Param(i) | PrimitiveKind::Gain(i) => Some(*i),
            _ => None,
        }
    }

    pub(crate) fn set_param_index(&mut self, idx: usize) {
        match self {
            PrimitiveKind::Param(i) | PrimitiveKind::Gain(i) => *i = idx,
            _ => {}
        }
    }
}

/// Every primitive name, in catalog order.
pub const PRIMITIVE_NAMES: [&str; 17] = [
    "Const",
    "Param",
    "Signal",
    "Add",
    "Sub",
    "Mul",
    "SafeDiv",
    "Neg",
    "Abs",
    "Sign",
    "Sat",
    "Integrator",
    "FilteredDeriv",
    "Gain",
    "Min",
    "Max",
    "AdaptiveGain",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveNode {
    pub kind: PrimitiveKind,
    pub children: Vec<usize>,
}

impl PrimitiveNode {
    pub fn new(kind: PrimitiveKind, children: Vec<usize>) -> Self {
        Self { kind, children }
    }

    pub fn leaf(kind: PrimitiveKind) -> Self {
        Self {
            kind,
            children: Vec::new(),
        }
    }
}

/// A control law as an expression DAG. Nodes reference children by position.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerStructure {
    pub name: String,
    pub nodes: Vec<PrimitiveNode>,
    pub output: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureLimits {
    pub max_nodes: usize,
    pub max_depth: usize,
}

impl Default for StructureLimits {
    fn default() -> Self {
        Self {
            max_nodes: DEFAULT_MAX_NODES,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    OutputOutOfRange {
        output: usize,
        len: usize,
    },
    ChildOutOfRange {
        node: usize,
        child: usize,
    },
    ArityMismatch {
        node: usize,
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    UnknownSignal {
        node: usize,
        name: String,
    },
    UnknownPrimitive {
        node: usize,
        name: String,
    },
    MissingField {
        node: usize,
        field: &'static str,
    },
    DuplicateId {
        id: usize,
    },
    Cycle {
        node: usize,
    },
    ParamIndexGap {
        missing: usize,
    },
    NonFiniteConst {
        node: usize,
    },
    BadIntegratorLimit {
        node: usize,
    },
    TooManyNodes {
        count: usize,
        max: usize,
    },
    TooDeep {
        depth: usize,
        max: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "structure has no nodes"),
            Violation::OutputOutOfRange { output, len } => {
                write!(f, "output node {output} out of range (node count {len})")
            }
            Violation::ChildOutOfRange { node, child } => {
                write!(f, "node {node}: child {child} does not exist")
            }
            Violation::ArityMismatch {
                node,
                kind,
                expected,
                got,
            } => write!(
                f,
                "node {node}: arity mismatch for {kind} (expected {expected} children, got {got})"
            ),
            Violation::UnknownSignal { node, name } => write!(
                f,
                "node {node}: unknown signal '{name}' (allowed: {})",
                SIGNAL_NAMES.join(", ")
            ),
            Violation::UnknownPrimitive { node, name } => write!(
                f,
                "node {node}: unknown primitive '{name}' (allowed: {})",
                PRIMITIVE_NAMES.join(", ")
            ),
            Violation::MissingField { node, field } => {
                write!(f, "node {node}: missing field '{field}'")
            }
            Violation::DuplicateId { id } => write!(f, "duplicate node id {id}"),
            Violation::Cycle { node } => write!(f, "node {node}: cycle detected"),
            Violation::ParamIndexGap { missing } => {
                write!(
                    f,
                    "parameter indices not contiguous: index {missing} unused"
                )
            }
            Violation::NonFiniteConst { node } => write!(f, "node {node}: non-finite constant"),
            Violation::BadIntegratorLimit { node } => {
                write!(
                    f,
                    "node {node}: integrator limit must be positive and finite"
                )
            }
            Violation::TooManyNodes { count, max } => {
                write!(f, "too many nodes ({count} > {max})")
            }
            Violation::TooDeep { depth, max } => write!(f, "structure too deep ({depth} > {max})"),
        }
    }
}

/// Joins violations into one re-promptable line per violation.
pub fn describe_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("- {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ControllerStructure {
    pub fn new(name: impl Into<String>, nodes: Vec<PrimitiveNode>, output: usize) -> Self {
        Self {
            name: name.into(),
            nodes,
            output,
        }
    }

    /// Validates against the default limits.
    pub fn validate_default(&self) -> Result<(), Vec<Violation>> {
        self.validate(StructureLimits::default())
    }

    /// Collects every structural violation. Never panics.
    pub fn validate(&self, limits: StructureLimits) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        if n == 0 {
            return Err(vec![Violation::Empty]);
        }
        if self.output >= n {
            out.push(Violation::OutputOutOfRange {
                output: self.output,
                len: n,
            });
        }
        if n > limits.max_nodes {
            out.push(Violation::TooManyNodes {
                count: n,
                max: limits.max_nodes,
            });
        }
        let mut links_ok = true;
        for (i, node) in self.nodes.iter().enumerate() {
            let expected = node.kind.arity();
            if node.children.len() != expected {
                out.push(Violation::ArityMismatch {
                    node: i,
                    kind: node.kind.name(),
                    expected,
                    got: node.children.len(),
                });
            }
            for &c in &node.children {
                if c >= n {
                    links_ok = false;
                    out.push(Violation::ChildOutOfRange { node: i, child: c });
                }
            }
            match &node.kind {
                PrimitiveKind::Signal(name) if !SIGNAL_NAMES.contains(&name.as_str()) => {
                    out.push(Violation::UnknownSignal {
                        node: i,
                        name: name.clone(),
                    });
                }
                PrimitiveKind::Const(v) if !v.is_finite() => {
                    out.push(Violation::NonFiniteConst { node: i });
                }
                PrimitiveKind::AdaptiveGain { initial } if !initial.is_finite() => {
                    out.push(Violation::NonFiniteConst { node: i });
                }
                PrimitiveKind::Integrator { limit } if !(limit.is_finite() && *limit > 0.0) => {
                    out.push(Violation::BadIntegratorLimit { node: i });
                }
                _ => {}
            }
        }
        if links_ok {
            match self.topo_order() {
                Ok(_) => {
                    if self.output < n {
                        let depth = self.depth_from(self.output);
                        if depth > limits.max_depth {
                            out.push(Violation::TooDeep {
                                depth,
                                max: limits.max_depth,
                            });
                        }
                    }
                }
                Err(node) => out.push(Violation::Cycle { node }),
            }
        }
        if let Err(missing) = self.param_dimension_checked() {
            out.push(Violation::ParamIndexGap { missing });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Number of distinct parameter indices. Indices must be exactly `0..d`.
    pub fn param_dimension(&self) -> Result<usize, Vec<Violation>> {
        self.param_dimension_checked()
            .map_err(|missing| vec![Violation::ParamIndexGap { missing }])
    }

    fn param_dimension_checked(&self) -> Result<usize, usize> {
        let mut seen: Vec<bool> = Vec::new();
        for node in &self.nodes {
            if let Some(i) = node.kind.param_index() {
                if i >= seen.len() {
                    // guard against absurd indices from untrusted documents
                    if i > 4 * self.nodes.len() + 64 {
                        return Err(self.nodes.len());
                    }
                    seen.resize(i + 1, false);
                }
                seen[i] = true;
            }
        }
        match seen.iter().position(|s| !s) {
            Some(missing) => Err(missing),
            None => Ok(seen.len()),
        }
    }

    /// Children-first evaluation order over all nodes, or the node where a
    /// cycle was found. Assumes child links are in range.
    pub fn topo_order(&self) -> Result<Vec<usize>, usize> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.nodes.len();
        let mut mark = vec![0u8; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if mark[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            mark[root] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&child) = self.nodes[node].children.get(*next) {
                    *next += 1;
                    match mark[child] {
                        0 => {
                            mark[child] = 1;
                            stack.push((child, 0));
                        }
                        1 => return Err(child),
                        _ => {}
                    }
                } else {
                    mark[node] = 2;
                    order.push(node);
                    stack.pop();
                }
            }
        }
        Ok(order)
    }

    /// Longest path (in nodes) from `node` down to a leaf. Requires acyclicity.
    pub fn depth_from(&self, node: usize) -> usize {
        let order = self.topo_order().unwrap_or_default();
        let mut depth = vec![1usize; self.nodes.len()];
        for &i in &order {
            let d = self.nodes[i]
                .children
                .iter()
                .map(|&c| depth[c])
                .max()
                .unwrap_or(0);
            depth[i] = d + 1;
        }
        depth.get(node).copied().unwrap_or(0)
    }

    pub fn contains_kind(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n.kind.name() == name)
    }

    pub fn count_kind(&self, name: &str) -> usize {
        self.nodes.iter().filter(|n| n.kind.name() == name).count()
    }

    /// Nodes reachable from the output.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.output];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                continue;
            }
            seen[i] = true;
            stack.extend(self.nodes[i].children.iter().copied());
        }
        seen
    }
}
