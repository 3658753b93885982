//! The outer design loop: propose, tune, evaluate, feed back.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::edit::canonicalize;
use crate::controller::{
    template_by_name, ControllerStructure, Interpreter, ParamSpace, ParamVector, StructureDoc,
};
use crate::evaluator::{
    compute_metrics, make_feedback, performance_index, MetricsReport, PerformanceFeedback,
    PerformanceSpec, WeightSet,
};
use crate::plant::{simulate_compiled, Scenario, SimConfig, Trajectory};
use crate::proposer::{
    Action, DesignRecord, LlmConfig, LlmProposer, PromptLibrary, ProposalSource, Proposer,
    ProposerError, ProposerState, RuleProposer, DEFAULT_PROPOSER_PATIENCE,
};
use crate::pso::{derive_seed, optimize_from, PsoConfig, PsoResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid {field}: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Proposer(#[from] ProposerError),
}

fn config_err(field: &str, reason: impl Into<String>) -> OrchestratorError {
    OrchestratorError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposerMode {
    Rules,
    Llm,
    LlmFallback,
}

impl ProposerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProposerMode::Rules => "rules",
            ProposerMode::Llm => "llm",
            ProposerMode::LlmFallback => "llm-fallback",
        }
    }
}

impl FromStr for ProposerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rules" => Ok(ProposerMode::Rules),
            "llm" => Ok(ProposerMode::Llm),
            "llm-fallback" => Ok(ProposerMode::LlmFallback),
            other => Err(format!(
                "unknown mode '{other}' (expected rules, llm or llm-fallback)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Maximum number of evaluated structures, the initial template included.
    pub k_max: usize,
    pub stagnation_patience: usize,
    /// Relative improvement of the best J that counts as progress.
    pub stagnation_threshold: f64,
    pub seed: u64,
    pub mode: ProposerMode,
    /// Non-improving iterations before the rule proposer explores a new template.
    pub proposer_patience: usize,
    /// Start one particle at the previous optimum when dimensions match.
    pub warm_start: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            stagnation_patience: 3,
            stagnation_threshold: 0.01,
            seed: 42,
            mode: ProposerMode::Rules,
            proposer_patience: DEFAULT_PROPOSER_PATIENCE,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    pub scenario: Scenario,
    pub spec: PerformanceSpec,
    pub weights: WeightSet,
    pub initial_template: String,
    pub template_dir: Option<PathBuf>,
    pub sim: SimConfig,
    pub pso: PsoConfig,
    pub session: SessionConfig,
    pub llm: LlmConfig,
}

impl DesignProblem {
    /// The load-step case study with default settings.
    pub fn reference(initial_template: &str) -> Self {
        let scenario = Scenario::reference_load_steps();
        Self {
            sim: SimConfig::for_plant(&scenario.plant),
            scenario,
            spec: PerformanceSpec::default(),
            weights: WeightSet::default(),
            initial_template: initial_template.into(),
            template_dir: None,
            pso: PsoConfig::default(),
            session: SessionConfig::default(),
            llm: LlmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let sim = |e: crate::plant::SimError| match e {
            crate::plant::SimError::Config { field, reason } => config_err(field, reason),
            other => config_err("scenario", other.to_string()),
        };
        self.scenario.validate().map_err(sim)?;
        self.sim.validate().map_err(sim)?;
        self.spec.validate().map_err(|e| config_err("spec", e))?;
        self.weights
            .validate()
            .map_err(|e| config_err("weights", e))?;
        self.pso
            .validate()
            .map_err(|e| config_err("pso", e.to_string()))?;
        template_by_name(&self.initial_template)
            .map_err(|e| config_err("initial_template", e.to_string()))?;
        if self.session.k_max < 1 {
            return Err(config_err("k_max", "must be at least 1"));
        }
        if !(self.session.stagnation_threshold.is_finite()
            && self.session.stagnation_threshold >= 0.0)
        {
            return Err(config_err("stagnation_threshold", "must be non-negative"));
        }
        if let Some(dir) = &self.template_dir {
            if !dir.is_dir() {
                return Err(config_err(
                    "template_dir",
                    format!("{} is not a directory", dir.display()),
                ));
            }
        }
        if self.session.mode != ProposerMode::Rules {
            self.llm.validate().map_err(|e| config_err("llm", e))?;
        }
        Ok(())
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.scenario.load_events.iter().map(|e| e.time).collect()
    }

    pub fn prompt_library(&self) -> Result<PromptLibrary, OrchestratorError> {
        match &self.template_dir {
            Some(dir) => {
                PromptLibrary::load_dir(dir).map_err(|e| config_err("template_dir", e.to_string()))
            }
            None => Ok(PromptLibrary::builtin()),
        }
    }
}

/// Result of tuning and scoring one structure.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub theta: ParamVector,
    pub pso: PsoResult,
    pub feedback: PerformanceFeedback,
    /// `None` when the tuned controller diverges.
    pub trajectory: Option<Trajectory>,
}

fn score(
    interp: &mut Interpreter,
    structure: &ControllerStructure,
    theta: &[f64],
    problem: &DesignProblem,
    events: &[f64],
) -> (MetricsReport, f64, Option<Trajectory>) {
    let v_ref = problem.scenario.plant.v_ref;
    match simulate_compiled(interp, structure, theta, &problem.scenario, &problem.sim) {
        Ok(traj) => match compute_metrics(&traj, v_ref, events, &problem.spec) {
            Ok(m) => {
                let j = performance_index(&m, &problem.weights, &problem.spec);
                (m, j, Some(traj))
            }
            Err(_) => (MetricsReport::diverged(), problem.weights.j_div, None),
        },
        Err(_) => (MetricsReport::diverged(), problem.weights.j_div, None),
    }
}

/// Scores `structure` at fixed parameters `theta` without optimization.
pub fn score_fixed(
    structure: &ControllerStructure,
    theta: &[f64],
    problem: &DesignProblem,
) -> Result<(PerformanceFeedback, Option<Trajectory>), OrchestratorError> {
    problem.validate()?;
    let mut interp =
        Interpreter::new(structure).map_err(|e| config_err("structure", e.to_string()))?;
    if theta.len() != interp.param_dimension() {
        return Err(config_err(
            "theta",
            format!(
                "expected d_θ={}, got {}",
                interp.param_dimension(),
                theta.len()
            ),
        ));
    }
    let (metrics, j, traj) = score(
        &mut interp,
        structure,
        theta,
        problem,
        &problem.event_times(),
    );
    Ok((make_feedback(metrics, j, &problem.spec, 0), traj))
}

/// PSO-tunes `structure` over `space`, then scores it at the optimum.
pub fn evaluate_candidate(
    structure: &ControllerStructure,
    space: &ParamSpace,
    problem: &DesignProblem,
    seed: u64,
    start: Option<&[f64]>,
    iteration: usize,
) -> Result<Candidate, OrchestratorError> {
    let proto = Interpreter::new(structure).map_err(|e| config_err("structure", e.to_string()))?;
    if proto.param_dimension() != space.dimension() {
        return Err(config_err(
            "structure",
            format!(
                "expected d_θ={}, got {}",
                proto.param_dimension(),
                space.dimension()
            ),
        ));
    }
    let events = problem.event_times();
    let fitness = |theta: &[f64]| -> f64 {
        let mut interp = proto.clone();
        score(&mut interp, structure, theta, problem, &events).1
    };
    let cfg = PsoConfig {
        seed,
        failure_penalty: problem.weights.j_div,
        ..problem.pso
    };
    let pso = optimize_from(&fitness, space, &cfg, start)
        .map_err(|e| config_err("pso", e.to_string()))?;
    let mut interp = proto.clone();
    let (metrics, j, trajectory) = score(
        &mut interp,
        structure,
        pso.best_theta.as_slice(),
        problem,
        &events,
    );
    let feedback = make_feedback(metrics, j, &problem.spec, iteration);
    Ok(Candidate {
        theta: pso.best_theta.clone(),
        pso,
        feedback,
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    SpecsMet,
    KMax,
    Stagnation,
    /// The proposer returned a terminate action.
    ProposerStop,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::SpecsMet => "specs_met",
            TerminationReason::KMax => "k_max",
            TerminationReason::Stagnation => "stagnation",
            TerminationReason::ProposerStop => "proposer_stop",
        }
    }
}

/// Termination test after iteration `k` with J history `js` (one entry per
/// evaluated iteration). Precedence: specs met, budget, stagnation.
pub fn check_termination(
    js: &[f64],
    specs_met: bool,
    k: usize,
    cfg: &SessionConfig,
) -> Option<TerminationReason> {
    if specs_met {
        return Some(TerminationReason::SpecsMet);
    }
    if k + 1 >= cfg.k_max {
        return Some(TerminationReason::KMax);
    }
    let p = cfg.stagnation_patience;
    if p > 0 && js.len() > p {
        let split = js.len() - p;
        let before = js[..split].iter().copied().fold(f64::INFINITY, f64::min);
        let recent = js[split..].iter().copied().fold(f64::INFINITY, f64::min);
        let rel = (before - recent) / before.abs().max(f64::MIN_POSITIVE);
        if rel < cfg.stagnation_threshold {
            return Some(TerminationReason::Stagnation);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    /// `initial`, `new_structure` or `modify_structure`.
    pub kind: String,
    pub note: String,
    pub source: Option<ProposalSource>,
    pub requests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoSummary {
    pub seed: u64,
    pub evaluations: usize,
    pub best_fitness: f64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub action: ActionRecord,
    pub structure: StructureDoc,
    pub space: ParamSpace,
    pub theta: ParamVector,
    pub pso: PsoSummary,
    pub feedback: PerformanceFeedback,
    pub best_j_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestDesign {
    pub k: usize,
    pub structure: StructureDoc,
    pub theta: ParamVector,
    pub index_j: f64,
}

/// The persisted session log. Wall-clock timings are kept out of it so two
/// runs with the same inputs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSession {
    pub schema_version: u32,
    pub initial_template: String,
    pub mode: ProposerMode,
    pub seed: u64,
    pub spec: PerformanceSpec,
    pub v_ref: f64,
    pub iterations: Vec<IterationRecord>,
    pub best: BestDesign,
    pub termination_reason: TerminationReason,
    pub termination_note: String,
}

impl DesignSession {
    pub fn final_record(&self) -> &IterationRecord {
        self.iterations
            .last()
            .expect("a session has at least one iteration")
    }

    pub fn best_record(&self) -> &IterationRecord {
        &self.iterations[self.best.k]
    }

    pub fn specs_met(&self) -> bool {
        self.termination_reason == TerminationReason::SpecsMet
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session always serializes")
    }
}

/// Wall-clock seconds spent in each phase of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimings {
    pub k: usize,
    pub propose_s: f64,
    pub optimize_s: f64,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub session: DesignSession,
    pub timings: Vec<PhaseTimings>,
    /// Closed-loop run of the best design.
    pub best_trajectory: Option<Trajectory>,
    /// Every iteration's run, when requested.
    pub trajectories: Vec<(usize, Option<Trajectory>)>,
}

/// Runs a session with the proposer selected by `problem.session.mode`.
pub fn run_session(
    problem: &DesignProblem,
    keep_trajectories: bool,
) -> Result<SessionOutcome, OrchestratorError> {
    problem.validate()?;
    match problem.session.mode {
        ProposerMode::Rules => run_session_with(problem, &mut RuleProposer, keep_trajectories),
        mode => {
            let mut p = LlmProposer::http(
                problem.llm.clone(),
                problem.prompt_library()?,
                mode == ProposerMode::LlmFallback,
            );
            run_session_with(problem, &mut p, keep_trajectories)
        }
    }
}

pub fn run_session_with(
    problem: &DesignProblem,
    proposer: &mut dyn Proposer,
    keep_trajectories: bool,
) -> Result<SessionOutcome, OrchestratorError> {
    problem.validate()?;
    let cfg = &problem.session;
    let mut state = ProposerState::new(problem.spec, problem.scenario.plant);
    state.patience = cfg.proposer_patience;

    let (s0, sp0) = template_by_name(&problem.initial_template)
        .map_err(|e| config_err("initial_template", e.to_string()))?;
    let mut structure = s0;
    let mut space = sp0;
    let mut action = ActionRecord {
        kind: "initial".into(),
        note: format!("initial template {}", problem.initial_template),
        source: None,
        requests: 0,
    };
    let mut propose_s = 0.0;

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut timings = Vec::new();
    let mut trajectories = Vec::new();
    let mut best_k = 0;
    let mut best_traj: Option<Trajectory> = None;
    let mut js = Vec::new();
    let (reason, note) = loop {
        let k = iterations.len();
        let seed = derive_seed(cfg.seed, k as u64);
        let start = if cfg.warm_start {
            state.current().map(|r| r.theta.as_slice().to_vec())
        } else {
            None
        };
        let t0 = Instant::now();
        let cand = evaluate_candidate(&structure, &space, problem, seed, start.as_deref(), k)?;
        timings.push(PhaseTimings {
            k,
            propose_s,
            optimize_s: t0.elapsed().as_secs_f64(),
        });
        let j = cand.feedback.index_j;
        js.push(j);
        if k == 0 || j < iterations[best_k].feedback.index_j {
            best_k = k;
            best_traj = cand.trajectory.clone();
        }
        if keep_trajectories {
            trajectories.push((k, cand.trajectory.clone()));
        }
        iterations.push(IterationRecord {
            k,
            action: action.clone(),
            structure: StructureDoc::from(&structure),
            space: space.clone(),
            theta: cand.theta.clone(),
            pso: PsoSummary {
                seed,
                evaluations: cand.pso.evaluations,
                best_fitness: cand.pso.best_fitness,
                history: cand.pso.history.clone(),
            },
            feedback: cand.feedback.clone(),
            best_j_so_far: js.iter().copied().fold(f64::INFINITY, f64::min),
        });
        let specs_met = cand.feedback.specs_met;
        state.push(DesignRecord {
            structure: structure.clone(),
            space: space.clone(),
            theta: cand.theta,
            feedback: cand.feedback,
        });

        if let Some(r) = check_termination(&js, specs_met, k, cfg) {
            break (r, String::new());
        }

        let t1 = Instant::now();
        let proposal = proposer.propose(&state)?;
        propose_s = t1.elapsed().as_secs_f64();
        let kind = proposal.action.kind().to_string();
        match proposal.action {
            Action::Terminate { reason } => break (TerminationReason::ProposerStop, reason),
            Action::NewStructure {
                structure: s,
                space: sp,
                rationale,
            }
            | Action::ModifyStructure {
                structure: s,
                space: sp,
                rationale,
            } => {
                let (s, sp) = canonicalize(&s, &sp);
                action = ActionRecord {
                    kind,
                    note: rationale,
                    source: Some(proposal.source),
                    requests: proposal.requests,
                };
                structure = s;
                space = sp;
            }
        }
    };

    let best = &iterations[best_k];
    let session = DesignSession {
        schema_version: SCHEMA_VERSION,
        initial_template: problem.initial_template.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
        spec: problem.spec,
        v_ref: problem.scenario.plant.v_ref,
        best: BestDesign {
            k: best_k,
            structure: best.structure.clone(),
            theta: best.theta.clone(),
            index_j: best.feedback.index_j,
        },
        iterations,
        termination_reason: reason,
        termination_note: note,
    };
    Ok(SessionOutcome {
        session,
        timings,
        best_trajectory: best_traj,
        trajectories,
    })
}
