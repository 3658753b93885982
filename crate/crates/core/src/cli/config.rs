//! TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluator::{PerformanceSpec, WeightSet};
use crate::orchestrator::{DesignProblem, SessionConfig};
use crate::plant::{LoadEvent, PlantParams, Scenario, SimConfig};
use crate::proposer::LlmConfig;
use crate::pso::PsoConfig;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub t_end: f64,
    #[serde(default)]
    pub load_events: Vec<LoadEvent>,
    /// `[i_l, v_c]` at t = 0.
    #[serde(default)]
    pub initial_state: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write one trajectory CSV per iteration.
    pub save_trajectories: bool,
    /// Print one line per iteration to standard error.
    pub verbose: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            save_trajectories: false,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_template")]
    pub initial_template: String,
    /// Prompt templates; the built-in library when absent.
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    pub plant: PlantParams,
    pub scenario: ScenarioSection,
    /// Derived from the switching frequency when absent.
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub spec: PerformanceSpec,
    #[serde(default)]
    pub weights: WeightSet,
    #[serde(default)]
    pub pso: PsoConfig,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_template() -> String {
    "SMC".into()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(dir) = &cfg.template_dir {
            if dir.is_relative() {
                cfg.template_dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            plant: self.plant,
            load_events: self.scenario.load_events.clone(),
            t_end: self.scenario.t_end,
            initial_state: self.scenario.initial_state,
        }
    }

    pub fn sim(&self) -> SimConfig {
        self.sim
            .unwrap_or_else(|| SimConfig::for_plant(&self.plant))
    }

    pub fn problem(&self) -> DesignProblem {
        DesignProblem {
            scenario: self.scenario(),
            spec: self.spec,
            weights: self.weights,
            initial_template: self.initial_template.clone(),
            template_dir: self.template_dir.clone(),
            sim: self.sim(),
            pso: self.pso,
            session: self.session.clone(),
            llm: self.llm.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[plant]
v_in = 50.0
l = 1e-3
c = 1100e-6
r_load_nominal = 50.0
f_sw = 20000.0
v_ref = 100.0

[scenario]
t_end = 0.1
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let p = cfg.problem();
        assert_eq!(p.initial_template, "SMC");
        assert_eq!(p.pso, PsoConfig::default());
        assert_eq!(p.sim.control_dt, 5e-5);
        p.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse(&format!("{MINIMAL}\n[session]\nkmax = 3\n")).unwrap_err();
        assert!(err.to_string().contains("kmax"), "{err}");
    }

    #[test]
    fn negative_inductance_names_field() {
        let cfg = RunConfig::parse(&MINIMAL.replace("l = 1e-3", "l = -1e-3")).unwrap();
        let err = cfg.problem().validate().unwrap_err();
        assert!(err.to_string().contains("invalid plant.l"), "{err}");
    }
}
