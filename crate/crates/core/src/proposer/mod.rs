//! Upper-level structure proposers: a deterministic rule table and a
//! language-model client driven by a prompt-template library.

pub mod llm;
pub mod prompts;
pub mod rules;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerStructure, ParamSpace, ParamVector};
use crate::evaluator::{PerformanceFeedback, PerformanceSpec};
use crate::plant::PlantParams;

pub use llm::{complete, parse_action, LlmConfig, LlmError, LlmProposer};
pub use prompts::{PromptError, PromptLibrary, PromptTemplate};
pub use rules::RuleProposer;

/// Default count of non-improving iterations before exploring a new template.
pub const DEFAULT_PROPOSER_PATIENCE: usize = 3;

/// One evaluated design point.
#[derive(Debug, Clone)]
pub struct DesignRecord {
    pub structure: ControllerStructure,
    pub space: ParamSpace,
    pub theta: ParamVector,
    pub feedback: PerformanceFeedback,
}

/// Everything a proposer sees when choosing the next action.
#[derive(Debug, Clone)]
pub struct ProposerState {
    pub iteration: usize,
    pub spec: PerformanceSpec,
    pub plant: PlantParams,
    pub history: Vec<DesignRecord>,
    pub patience: usize,
}

impl ProposerState {
    pub fn new(spec: PerformanceSpec, plant: PlantParams) -> Self {
        Self {
            iteration: 0,
            spec,
            plant,
            history: Vec::new(),
            patience: DEFAULT_PROPOSER_PATIENCE,
        }
    }

    pub fn push(&mut self, record: DesignRecord) {
        self.history.push(record);
        self.iteration = self.history.len();
    }

    pub fn current(&self) -> Option<&DesignRecord> {
        self.history.last()
    }

    /// Lowest-J record; the earliest wins ties.
    pub fn best(&self) -> Option<&DesignRecord> {
        self.history.iter().reduce(|best, r| {
            if r.feedback.index_j < best.feedback.index_j {
                r
            } else {
                best
            }
        })
    }

    /// Number of trailing records that did not beat every record before them.
    pub fn non_improving_streak(&self) -> usize {
        let mut streak = 0;
        for k in (1..self.history.len()).rev() {
            let before = self.history[..k]
                .iter()
                .map(|r| r.feedback.index_j)
                .fold(f64::INFINITY, f64::min);
            if self.history[k].feedback.index_j < before {
                break;
            }
            streak += 1;
        }
        streak
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    NewStructure {
        structure: ControllerStructure,
        space: ParamSpace,
        rationale: String,
    },
    ModifyStructure {
        structure: ControllerStructure,
        space: ParamSpace,
        rationale: String,
    },
    Terminate {
        reason: String,
    },
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::NewStructure { .. } => "new_structure",
            Action::ModifyStructure { .. } => "modify_structure",
            Action::Terminate { .. } => "terminate",
        }
    }

    pub fn structure(&self) -> Option<(&ControllerStructure, &ParamSpace)> {
        match self {
            Action::NewStructure {
                structure, space, ..
            }
            | Action::ModifyStructure {
                structure, space, ..
            } => Some((structure, space)),
            Action::Terminate { .. } => None,
        }
    }

    pub fn note(&self) -> &str {
        match self {
            Action::NewStructure { rationale, .. } | Action::ModifyStructure { rationale, .. } => {
                rationale
            }
            Action::Terminate { reason } => reason,
        }
    }
}

/// Where an action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    Rules,
    Llm,
    /// Rules, after the language model failed to produce a usable reply.
    LlmFallback,
}

impl ProposalSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ProposalSource::Rules => "rules",
            ProposalSource::Llm => "llm",
            ProposalSource::LlmFallback => "llm_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub action: Action,
    pub source: ProposalSource,
    /// Requests sent to the model for this proposal.
    pub requests: usize,
}

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("proposer state has no evaluated design")]
    EmptyHistory,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

pub trait Proposer {
    fn propose(&mut self, state: &ProposerState) -> Result<Proposal, ProposerError>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{template, TemplateName};
    use crate::evaluator::MetricsReport;

    fn record(j: f64) -> DesignRecord {
        let (structure, space) = template(TemplateName::ConstDuty);
        DesignRecord {
            structure,
            space,
            theta: ParamVector::new(vec![0.5]).unwrap(),
            feedback: PerformanceFeedback {
                metrics: MetricsReport::default(),
                index_j: j,
                spec_flags: Default::default(),
                specs_met: false,
                iteration: 0,
            },
        }
    }

    #[test]
    fn streak_counts_trailing_non_improvements() {
        let mut st = ProposerState::new(PerformanceSpec::default(), PlantParams::reference());
        for j in [10.0, 8.0, 9.0, 8.0, 8.5] {
            st.push(record(j));
        }
        assert_eq!(st.non_improving_streak(), 3);
        assert_eq!(st.best().unwrap().feedback.index_j, 8.0);
        st.push(record(7.0));
        assert_eq!(st.non_improving_streak(), 0);
    }
}
