//! Experiment and simulation run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use intentfix_core::sim::{validation_grid, AssistMode, Cell, FixtureConfig, OperatorConfig, SimConfig, Task};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    /// The six task/assistance cells with intent adjustment on.
    Validation,
    /// The same six cells with fixtures at their fixed settings.
    ValidationPlain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Preset(GridPreset),
    Cells(Vec<Cell>),
}

impl Grid {
    pub fn cells(&self) -> Vec<Cell> {
        let preset = |adjusted| {
            validation_grid(adjusted)
                .iter()
                .map(|&(task, mode)| Cell { task, mode })
                .collect()
        };
        match self {
            Grid::Preset(GridPreset::Validation) => preset(true),
            Grid::Preset(GridPreset::ValidationPlain) => preset(false),
            Grid::Cells(c) => c.clone(),
        }
    }
}

fn default_task() -> Task {
    Task::Grasping
}

fn default_mode() -> AssistMode {
    AssistMode::NONE
}

fn default_trials() -> u32 {
    3
}

fn default_timeout() -> f64 {
    SimConfig::default().timeout
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default = "default_mode")]
    pub mode: AssistMode,
    /// Experiment grid; when absent the single `task`/`mode` cell is run.
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub fixture: FixtureConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default = "default_trials")]
    pub n_trials: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Output directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Model JSON; the built-in synthetic model when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Scene JSON for `simulate`; a seeded random layout when absent.
    #[serde(default)]
    pub scene: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: default_task(),
            mode: default_mode(),
            grid: None,
            fixture: FixtureConfig::default(),
            operator: OperatorConfig::default(),
            n_trials: default_trials(),
            seed: 0,
            timeout: default_timeout(),
            out: None,
            model: None,
            scene: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = crate::formats::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.grid.as_ref().map_or_else(
            || {
                vec![Cell {
                    task: self.task,
                    mode: self.mode,
                }]
            },
            Grid::cells,
        )
    }

    pub fn sim_config(&self, task: Task, mode: AssistMode) -> SimConfig {
        SimConfig {
            task,
            mode,
            fixture: self.fixture,
            timeout: self.timeout,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            bail!("at `n_trials`: must be at least 1");
        }
        if self.cells().is_empty() {
            bail!("at `grid`: no cells");
        }
        for c in self.cells() {
            self.sim_config(c.task, c.mode).validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::from_json_str;

    #[test]
    fn unknown_fields_report_their_path() {
        let err = from_json_str::<RunConfig>(r#"{"fixture": {"sigmaa": [0.4, 0.4, 0.4]}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fixture.sigmaa") || msg.contains("fixture"), "{msg}");
        assert!(from_json_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn presets_and_explicit_cells() {
        let cfg: RunConfig = from_json_str(r#"{"grid": "validation", "n_trials": 3}"#).unwrap();
        assert_eq!(cfg.cells().len(), 6);
        assert!(cfg
            .cells()
            .iter()
            .filter(|c| c.mode != AssistMode::NONE)
            .all(|c| c.mode.intent_adjusted));
        let cfg: RunConfig = from_json_str(
            r#"{"grid": [{"task": "cutting", "mode": {"assistance": "guidance_force", "intent_adjusted": true}}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.cells().len(), 1);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_values() {
        let cfg: RunConfig = from_json_str(r#"{"n_trials": 0}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = from_json_str(r#"{"fixture": {"boundary_set": 9}}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = from_json_str(r#"{"fixture": {"boundary_set": {"S": 3, "H": 5, "theta": 30}}}"#).unwrap();
        cfg.validate().unwrap();
    }
}
