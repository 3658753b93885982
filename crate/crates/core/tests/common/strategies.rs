use proptest::prelude::*;

use ctrlsynth::controller::structure::{DEFAULT_MAX_DEPTH, SIGNAL_NAMES};
use ctrlsynth::controller::{ControllerStructure, PrimitiveKind, PrimitiveNode, Signals};
use ctrlsynth::evaluator::{MetricsReport, PerformanceSpec};

/// One generation step: which primitive, which earlier nodes it reads, and
/// the scalars a leaf or a stateful node needs.
#[derive(Debug, Clone)]
pub struct NodeRecipe {
    pub kind: u8,
    pub picks: [u32; 3],
    pub value: f64,
    pub reuse_param: bool,
}

fn recipe() -> impl Strategy<Value = NodeRecipe> {
    (0u8..20, any::<[u32; 3]>(), -100.0f64..100.0, any::<bool>()).prop_map(
        |(kind, picks, value, reuse_param)| NodeRecipe {
            kind,
            picks,
            value,
            reuse_param,
        },
    )
}

/// Builds a valid DAG from recipes: children always point at earlier nodes
/// whose depth leaves room under the limit, and parameter indices are
/// handed out contiguously.
pub fn build(recipes: &[NodeRecipe]) -> ControllerStructure {
    build_with(recipes, false)
}

/// As [`build`]; with `stateless` the stateful primitives become `Add`.
pub fn build_with(recipes: &[NodeRecipe], stateless: bool) -> ControllerStructure {
    let mut nodes: Vec<PrimitiveNode> = Vec::new();
    let mut depth: Vec<usize> = Vec::new();
    let mut params = 0usize;
    for r in recipes {
        let shallow: Vec<usize> = (0..nodes.len())
            .filter(|&i| depth[i] < DEFAULT_MAX_DEPTH)
            .collect();
        let pick = |k: usize| shallow[r.picks[k] as usize % shallow.len()];
        let mut param = |reuse: bool| {
            if reuse && params > 0 {
                r.picks[2] as usize % params
            } else {
                params += 1;
                params - 1
            }
        };
        let kind = match r.kind {
            _ if shallow.is_empty() => r.kind % 3,
            11 | 12 | 16 if stateless => 3,
            k => k,
        };
        let (kind, children) = match kind {
            0 => (PrimitiveKind::Const(r.value), vec![]),
            1 => (PrimitiveKind::Param(param(r.reuse_param)), vec![]),
            2 => (
                PrimitiveKind::Signal(
                    SIGNAL_NAMES[r.picks[0] as usize % SIGNAL_NAMES.len()].into(),
                ),
                vec![],
            ),
            3 => (PrimitiveKind::Add, vec![pick(0), pick(1)]),
            4 => (PrimitiveKind::Sub, vec![pick(0), pick(1)]),
            5 => (PrimitiveKind::Mul, vec![pick(0), pick(1)]),
            6 => (PrimitiveKind::SafeDiv, vec![pick(0), pick(1)]),
            7 => (PrimitiveKind::Neg, vec![pick(0)]),
            8 => (PrimitiveKind::Abs, vec![pick(0)]),
            9 => (PrimitiveKind::Sign, vec![pick(0)]),
            10 => (PrimitiveKind::Sat, vec![pick(0), pick(1)]),
            11 => (
                PrimitiveKind::Integrator {
                    limit: r.value.abs() + 0.5,
                },
                vec![pick(0)],
            ),
            12 => (PrimitiveKind::FilteredDeriv, vec![pick(0), pick(1)]),
            13 => (PrimitiveKind::Gain(param(r.reuse_param)), vec![pick(0)]),
            14 => (PrimitiveKind::Min, vec![pick(0), pick(1)]),
            15 => (PrimitiveKind::Max, vec![pick(0), pick(1)]),
            16 => (
                PrimitiveKind::AdaptiveGain {
                    initial: r.value.abs(),
                },
                vec![pick(0), pick(1), pick(2)],
            ),
            17 => (PrimitiveKind::Const(0.5), vec![]),
            _ => (PrimitiveKind::Signal("error".into()), vec![]),
        };
        let d = children.iter().map(|&c| depth[c]).max().unwrap_or(0) + 1;
        depth.push(d);
        nodes.push(PrimitiveNode::new(kind, children));
    }
    let output = nodes.len() - 1;
    ControllerStructure::new("generated", nodes, output)
}

/// Random valid structure with 1 to 48 nodes.
pub fn structure() -> impl Strategy<Value = ControllerStructure> {
    prop::collection::vec(recipe(), 1..48).prop_map(|r| build(&r))
}

fn with_theta(
    s: impl Strategy<Value = ControllerStructure>,
) -> impl Strategy<Value = (ControllerStructure, Vec<f64>)> {
    s.prop_flat_map(|s| {
        let dim = s.param_dimension().expect("generated structures are valid");
        (Just(s), prop::collection::vec(-10.0f64..10.0, dim))
    })
}

/// Structure plus a parameter vector of the right length.
pub fn structure_with_theta() -> impl Strategy<Value = (ControllerStructure, Vec<f64>)> {
    with_theta(structure())
}

/// As [`structure_with_theta`] without stateful primitives.
pub fn stateless_structure_with_theta() -> impl Strategy<Value = (ControllerStructure, Vec<f64>)> {
    with_theta(prop::collection::vec(recipe(), 1..48).prop_map(|r| build_with(&r, true)))
}

pub fn signals() -> impl Strategy<Value = Signals> {
    (
        -60.0f64..60.0,
        0.0f64..200.0,
        0.0f64..20.0,
        50.0f64..150.0,
        0.0f64..1.0,
    )
        .prop_map(|(error, v_c, i_l, v_ref, prev_duty)| Signals {
            error,
            v_c,
            i_l,
            v_ref,
            prev_duty,
        })
}

pub fn metrics() -> impl Strategy<Value = MetricsReport> {
    (
        (0.0f64..30.0, 0.0f64..10.0, 0.0f64..1.0, 0.0f64..50.0),
        (0.0f64..5.0, 0.0f64..400.0),
        prop::collection::vec(0.0f64..0.5, 0..3),
        any::<bool>(),
        prop::bool::weighted(0.1),
    )
        .prop_map(
            |(
                (overshoot_pct, sse_pct, settling_time_s, iae_volt_s),
                (itae, chattering_tv),
                recovery_time_s,
                settling_slow,
                diverged,
            )| {
                if diverged {
                    return MetricsReport::diverged();
                }
                MetricsReport {
                    overshoot_pct,
                    sse_volts: sse_pct,
                    sse_pct,
                    settling_time_s,
                    iae_volt_s,
                    itae,
                    chattering_tv,
                    recovery_time_s,
                    settling_slow,
                    diverged: false,
                }
            },
        )
}

pub fn spec() -> impl Strategy<Value = PerformanceSpec> {
    (0.5f64..20.0, 0.5f64..5.0, 0.5f64..5.0, 0.1f64..50.0).prop_map(
        |(max_overshoot_pct, max_sse_pct, settling_band_pct, chattering_threshold)| {
            PerformanceSpec {
                max_overshoot_pct,
                max_sse_pct,
                settling_band_pct,
                chattering_threshold,
            }
        },
    )
}
