//! Deterministic rule table mapping feedback flags to structural edits.
//!
//! | flag                  | production                                              |
//! |-----------------------|---------------------------------------------------------|
//! | `diverged`            | revert to the best design so far with widened bounds    |
//! | `chattering_detected` | `Sign` → `Sat` boundary layer with an adaptive gain; without a `Sign`, halve gain ceilings |
//! | `overshoot_exceeded`  | subtract a filtered-derivative damping path on `v_c`; if present, halve gain ceilings |
//! | `sse_exceeded`        | add an integral path on `error`; if present, double gain ceilings |
//! | `settling_slow`       | add a feed-forward duty bias near `1 - v_in/v_ref`; if present, narrow it there |
//!
//! Flags are handled one at a time in the order above. After `patience`
//! iterations without a new best, an untried canonical template is proposed
//! instead.

use crate::controller::edit::Builder;
use crate::controller::params::{defaults, param_roles, ParamRole};
use crate::controller::structure::{describe_violations, DEFAULT_INTEGRATOR_LIMIT};
use crate::controller::templates::{ADAPTIVE_GAIN_START, SMC_SWITCH_GAIN};
use crate::controller::{
    template, Bound, ControllerStructure, ParamSpace, PrimitiveKind, PrimitiveNode, TemplateName,
};
use crate::evaluator::SpecFlag;

use super::{
    Action, DesignRecord, Proposal, ProposalSource, Proposer, ProposerError, ProposerState,
};

/// Handling order when several flags are raised.
pub const FLAG_PRIORITY: [SpecFlag; 5] = [
    SpecFlag::Diverged,
    SpecFlag::ChatteringDetected,
    SpecFlag::OvershootExceeded,
    SpecFlag::SseExceeded,
    SpecFlag::SettlingSlow,
];

/// Order in which untried templates are explored.
pub const EXPLORATION_ORDER: [TemplateName; 5] = [
    TemplateName::AdaptiveSmc,
    TemplateName::Pid,
    TemplateName::Pi,
    TemplateName::Smc,
    TemplateName::ConstDuty,
];

/// Gain bound of a newly added integral path, duty per volt-second.
pub const INTEGRAL_GAIN: Bound = Bound::new(0.0, 1.0);
/// Gain bound of a newly added damping path, duty per volt-per-second.
pub const DAMPING_GAIN: Bound = Bound::new(0.0, 1e-3);
/// Half-width of the feed-forward bias bound around the nominal duty.
pub const BIAS_HALF_WIDTH: f64 = 0.1;

#[derive(Debug, Default, Clone, Copy)]
pub struct RuleProposer;

impl Proposer for RuleProposer {
    fn propose(&mut self, state: &ProposerState) -> Result<Proposal, ProposerError> {
        Ok(Proposal {
            action: propose_rules(state)?,
            source: ProposalSource::Rules,
            requests: 0,
        })
    }
}

/// Rule-based proposal; total over any non-empty history.
pub fn propose_rules(state: &ProposerState) -> Result<Action, ProposerError> {
    let current = state.current().ok_or(ProposerError::EmptyHistory)?;
    if current.feedback.specs_met {
        return Ok(Action::Terminate {
            reason: "specs met".into(),
        });
    }
    if state.patience > 0 && state.non_improving_streak() >= state.patience {
        return Ok(explore(state));
    }
    let flag = FLAG_PRIORITY.into_iter().find(|f| current.feedback.has(*f));
    let action = match flag {
        Some(SpecFlag::Diverged) => revert_widened(state),
        Some(SpecFlag::ChatteringDetected) => boundary_layer(current),
        Some(SpecFlag::OvershootExceeded) => damping(current),
        Some(SpecFlag::SseExceeded) => integral(current),
        Some(SpecFlag::SettlingSlow) => feedforward(current, state.plant.nominal_duty()),
        None => explore(state),
    };
    Ok(checked(action))
}

/// Falls back to termination if an edit would break structural limits.
fn checked(action: Action) -> Action {
    match action.structure() {
        Some((s, _)) => match s.validate_default() {
            Ok(()) => action,
            Err(v) => Action::Terminate {
                reason: format!(
                    "rule edit rejected by validator: {}",
                    describe_violations(&v)
                ),
            },
        },
        None => action,
    }
}

fn modify(structure: ControllerStructure, space: ParamSpace, rationale: &str) -> Action {
    Action::ModifyStructure {
        structure,
        space,
        rationale: rationale.into(),
    }
}

fn map_gain_bounds(rec: &DesignRecord, f: impl Fn(Bound) -> Bound) -> ParamSpace {
    let roles = param_roles(&rec.structure);
    let bounds = rec
        .space
        .bounds()
        .iter()
        .zip(roles)
        .map(|(b, role)| if role == ParamRole::Gain { f(*b) } else { *b })
        .collect();
    ParamSpace::new(bounds).expect("rescaled bounds stay ordered")
}

fn halve_gains(rec: &DesignRecord) -> ParamSpace {
    map_gain_bounds(rec, |b| Bound::new(b.lower, b.lower + 0.5 * b.range()))
}

fn revert_widened(state: &ProposerState) -> Action {
    let best = state
        .history
        .iter()
        .filter(|r| !r.feedback.has(SpecFlag::Diverged))
        .reduce(|a, r| {
            if r.feedback.index_j < a.feedback.index_j {
                r
            } else {
                a
            }
        })
        .or_else(|| state.best())
        .expect("history is non-empty");
    let bounds = best
        .space
        .bounds()
        .iter()
        .map(|b| {
            let pad = 0.5 * b.range().max(1e-3);
            let lower = if b.lower >= 0.0 {
                (b.lower - pad).max(0.0)
            } else {
                b.lower - pad
            };
            Bound::new(lower, b.upper + pad)
        })
        .collect();
    modify(
        best.structure.clone(),
        ParamSpace::new(bounds).expect("widened bounds stay ordered"),
        "divergence: revert to the best stable design and widen its search bounds",
    )
}

fn boundary_layer(rec: &DesignRecord) -> Action {
    let s = &rec.structure;
    let signs: Vec<usize> = (0..s.nodes.len())
        .filter(|&i| matches!(s.nodes[i].kind, PrimitiveKind::Sign))
        .collect();
    if signs.is_empty() {
        return modify(
            s.clone(),
            halve_gains(rec),
            "chattering without a switching term: halve gain ceilings",
        );
    }
    let mut b = Builder::from_structure(s, &rec.space);
    let mut output = s.output;
    for sign in signs {
        let x = s.nodes[sign].children[0];
        let width = b.param(defaults::SAT_WIDTH);
        *b.node_mut(sign) = PrimitiveNode::new(PrimitiveKind::Sat, vec![x, width]);
        let gain_consumer = (0..s.nodes.len()).find(|&i| {
            matches!(s.nodes[i].kind, PrimitiveKind::Gain(_)) && s.nodes[i].children == [sign]
        });
        let initial = gain_consumer
            .and_then(|g| match s.nodes[g].kind {
                PrimitiveKind::Gain(p) => rec.theta.as_slice().get(p).copied(),
                _ => None,
            })
            .filter(|k| k.is_finite() && *k > 0.0)
            .unwrap_or(ADAPTIVE_GAIN_START)
            .min(SMC_SWITCH_GAIN.upper);
        let rate = b.param(defaults::ADAPT_RATE);
        let leak = b.param(defaults::ADAPT_LEAK);
        let k = b.push(PrimitiveKind::AdaptiveGain { initial }, vec![x, rate, leak]);
        match gain_consumer {
            Some(g) => {
                *b.node_mut(g) = PrimitiveNode::new(PrimitiveKind::Mul, vec![k, sign]);
            }
            None => {
                // Route every other consumer of the Sat through the adaptive gain.
                let scaled = b.push(PrimitiveKind::Mul, vec![k, sign]);
                if output == sign {
                    output = scaled;
                }
                for i in 0..s.nodes.len() {
                    let node = b.node_mut(i);
                    for c in node.children.iter_mut() {
                        if *c == sign {
                            *c = scaled;
                        }
                    }
                }
            }
        }
    }
    let (structure, space) = b.finish(&format!("{}+boundary-layer", s.name), output);
    modify(
        structure,
        space,
        "chattering: replace sign switching with a saturation boundary layer and an adaptive switching gain",
    )
}

fn damping(rec: &DesignRecord) -> Action {
    let s = &rec.structure;
    if s.contains_kind("FilteredDeriv") {
        return modify(
            s.clone(),
            halve_gains(rec),
            "overshoot with damping present: halve gain ceilings",
        );
    }
    let mut b = Builder::from_structure(s, &rec.space);
    let v = b.signal("v_c");
    let alpha = b.param(defaults::FILTER_SMOOTHING);
    let fd = b.push(PrimitiveKind::FilteredDeriv, vec![v, alpha]);
    let kd = b.gain(fd, DAMPING_GAIN);
    let out = b.push(PrimitiveKind::Sub, vec![s.output, kd]);
    let (structure, space) = b.finish(&format!("{}+damping", s.name), out);
    modify(
        structure,
        space,
        "overshoot: subtract a filtered-derivative damping path on the output voltage",
    )
}

fn integral(rec: &DesignRecord) -> Action {
    let s = &rec.structure;
    if s.contains_kind("Integrator") {
        return modify(
            s.clone(),
            map_gain_bounds(rec, |b| {
                Bound::new(b.lower, b.lower + 2.0 * b.range().max(1e-3))
            }),
            "steady-state error with integral action present: double gain ceilings",
        );
    }
    let mut b = Builder::from_structure(s, &rec.space);
    let e = b.signal("error");
    let int = b.push(
        PrimitiveKind::Integrator {
            limit: DEFAULT_INTEGRATOR_LIMIT,
        },
        vec![e],
    );
    let ki = b.gain(int, INTEGRAL_GAIN);
    let out = b.push(PrimitiveKind::Add, vec![s.output, ki]);
    let (structure, space) = b.finish(&format!("{}+integral", s.name), out);
    modify(
        structure,
        space,
        "steady-state error: add an integral path on the voltage error",
    )
}

fn feedforward(rec: &DesignRecord, nominal: f64) -> Action {
    let s = &rec.structure;
    let target = Bound::new(
        (nominal - BIAS_HALF_WIDTH).max(defaults::DUTY_BIAS.lower),
        (nominal + BIAS_HALF_WIDTH).min(defaults::DUTY_BIAS.upper),
    );
    let roles = param_roles(s);
    if roles.contains(&ParamRole::Bias) {
        let bounds = rec
            .space
            .bounds()
            .iter()
            .zip(&roles)
            .map(|(b, role)| if *role == ParamRole::Bias { target } else { *b })
            .collect();
        return modify(
            s.clone(),
            ParamSpace::new(bounds).expect("bias bound is ordered"),
            "slow settling: narrow the duty bias around the nominal duty",
        );
    }
    let mut b = Builder::from_structure(s, &rec.space);
    let bias = b.param(target);
    let out = b.push(PrimitiveKind::Add, vec![s.output, bias]);
    let (structure, space) = b.finish(&format!("{}+feedforward", s.name), out);
    modify(
        structure,
        space,
        "slow settling: add a feed-forward duty bias near the nominal duty",
    )
}

fn same_shape(a: &ControllerStructure, b: &ControllerStructure) -> bool {
    a.nodes == b.nodes && a.output == b.output
}

fn explore(state: &ProposerState) -> Action {
    let untried = EXPLORATION_ORDER.into_iter().find(|&name| {
        let (t, _) = template(name);
        !state.history.iter().any(|r| same_shape(&r.structure, &t))
    });
    match untried {
        Some(name) => {
            let (structure, space) = template(name);
            Action::NewStructure {
                structure,
                space,
                rationale: format!("stagnation: explore the untried {name} template"),
            }
        }
        None => Action::Terminate {
            reason: "stagnation with every template tried".into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ParamVector;
    use crate::evaluator::{MetricsReport, PerformanceFeedback, PerformanceSpec};
    use crate::plant::PlantParams;
    use std::collections::BTreeSet;

    fn record(name: TemplateName, theta: Vec<f64>, flags: &[SpecFlag], j: f64) -> DesignRecord {
        let (structure, space) = template(name);
        let spec_flags: BTreeSet<SpecFlag> = flags.iter().copied().collect();
        DesignRecord {
            structure,
            space,
            theta: ParamVector::new(theta).unwrap(),
            feedback: PerformanceFeedback {
                metrics: MetricsReport::default(),
                index_j: j,
                specs_met: !spec_flags.iter().any(|f| f.blocks_specs()),
                spec_flags,
                iteration: 0,
            },
        }
    }

    fn state(records: Vec<DesignRecord>) -> ProposerState {
        let mut st = ProposerState::new(PerformanceSpec::default(), PlantParams::reference());
        for r in records {
            st.push(r);
        }
        st
    }

    fn edited(a: &Action) -> &ControllerStructure {
        a.structure().expect("structural action").0
    }

    #[test]
    fn specs_met_terminates() {
        let st = state(vec![record(TemplateName::ConstDuty, vec![0.5], &[], 1.0)]);
        assert_eq!(
            propose_rules(&st).unwrap(),
            Action::Terminate {
                reason: "specs met".into()
            }
        );
    }

    #[test]
    fn sse_adds_integral_on_error() {
        let st = state(vec![record(
            TemplateName::ConstDuty,
            vec![0.4],
            &[SpecFlag::SseExceeded],
            50.0,
        )]);
        let a = propose_rules(&st).unwrap();
        assert_eq!(a.kind(), "modify_structure");
        let s = edited(&a);
        assert_eq!(s.count_kind("Integrator"), 1);
        let int = s
            .nodes
            .iter()
            .find(|n| n.kind.name() == "Integrator")
            .unwrap();
        assert_eq!(
            s.nodes[int.children[0]].kind,
            PrimitiveKind::Signal("error".into())
        );
    }

    #[test]
    fn chattering_on_sign_gives_sat_and_adaptive_gain() {
        let st = state(vec![record(
            TemplateName::Smc,
            vec![2.0, 0.3, 0.2],
            &[SpecFlag::ChatteringDetected, SpecFlag::SseExceeded],
            150.0,
        )]);
        let a = propose_rules(&st).unwrap();
        let s = edited(&a);
        assert!(!s.contains_kind("Sign"));
        assert_eq!(s.count_kind("Sat"), 1);
        assert_eq!(s.count_kind("AdaptiveGain"), 1);
        let initial = s
            .nodes
            .iter()
            .find_map(|n| match n.kind {
                PrimitiveKind::AdaptiveGain { initial } => Some(initial),
                _ => None,
            })
            .unwrap();
        assert_eq!(initial, 0.3);
        let mut reset = s.clone();
        for n in &mut reset.nodes {
            if let PrimitiveKind::AdaptiveGain { initial } = &mut n.kind {
                *initial = ADAPTIVE_GAIN_START;
            }
        }
        assert!(same_shape(&reset, &template(TemplateName::AdaptiveSmc).0));
    }

    #[test]
    fn overshoot_adds_damping_then_halves() {
        let st = state(vec![record(
            TemplateName::Pi,
            vec![0.01, 0.1],
            &[SpecFlag::OvershootExceeded],
            80.0,
        )]);
        let a = propose_rules(&st).unwrap();
        assert_eq!(edited(&a).count_kind("FilteredDeriv"), 1);

        let st = state(vec![record(
            TemplateName::Pid,
            vec![0.01, 0.1, 0.5, 0.0],
            &[SpecFlag::OvershootExceeded],
            80.0,
        )]);
        let a = propose_rules(&st).unwrap();
        let (_, space) = a.structure().unwrap();
        assert_eq!(space.bounds()[0], Bound::new(0.0, 50.0));
    }

    #[test]
    fn settling_adds_bias_near_nominal() {
        let rec = record(
            TemplateName::Pi,
            vec![0.01, 0.1],
            &[SpecFlag::SettlingSlow],
            5.0,
        );
        let a = feedforward(&rec, 0.5);
        let (s, space) = a.structure().unwrap();
        assert_eq!(s.param_dimension().unwrap(), 3);
        assert!(space.bounds().contains(&Bound::new(0.4, 0.6)));
    }

    #[test]
    fn divergence_reverts_to_best_stable_design() {
        let st = state(vec![
            record(
                TemplateName::Smc,
                vec![2.0, 0.3, 0.2],
                &[SpecFlag::SseExceeded],
                150.0,
            ),
            record(
                TemplateName::Pi,
                vec![50.0, 50.0],
                &[SpecFlag::Diverged],
                1e6,
            ),
        ]);
        let a = propose_rules(&st).unwrap();
        let (s, space) = a.structure().unwrap();
        assert!(same_shape(s, &template(TemplateName::Smc).0));
        assert!(space.bounds()[1].upper > SMC_SWITCH_GAIN.upper);
    }

    #[test]
    fn stagnation_explores_untried_template() {
        let mut recs = vec![record(
            TemplateName::Smc,
            vec![2.0, 0.3, 0.2],
            &[SpecFlag::SseExceeded],
            10.0,
        )];
        for _ in 0..3 {
            recs.push(record(
                TemplateName::Smc,
                vec![2.0, 0.3, 0.2],
                &[SpecFlag::SseExceeded],
                11.0,
            ));
        }
        let a = propose_rules(&state(recs)).unwrap();
        assert_eq!(a.kind(), "new_structure");
        assert!(same_shape(
            edited(&a),
            &template(TemplateName::AdaptiveSmc).0
        ));
    }

    #[test]
    fn every_flag_has_a_production() {
        for flag in SpecFlag::ALL {
            let st = state(vec![record(
                TemplateName::Smc,
                vec![2.0, 0.3, 0.2],
                &[flag, SpecFlag::SseExceeded],
                10.0,
            )]);
            let a = propose_rules(&st).unwrap();
            assert_ne!(a.kind(), "terminate", "{flag}");
        }
    }

    #[test]
    fn rules_are_deterministic() {
        let st = state(vec![record(
            TemplateName::Smc,
            vec![2.0, 0.3, 0.2],
            &[SpecFlag::ChatteringDetected],
            150.0,
        )]);
        assert_eq!(propose_rules(&st).unwrap(), propose_rules(&st).unwrap());
    }
}
