//! Run configuration loaded from TOML, with dotted-key overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assignment::{
    marginal_health_chains, AssignmentConfig, AssignmentModel, AssignmentRewards, AssignmentTables, TaskDynamics,
};
use crate::chain::TransitionMatrix;
use crate::degradation::{DegradationTable, HealthMap, WearScaling};
use crate::error::{Error, Result};
use crate::maintenance::{
    MaintenanceConfig, MaintenanceEffect, MaintenanceModel, MaintenanceRewards, MaintenanceTables,
};
use crate::mdp::DEFAULT_MAX_ITERATIONS;
use crate::simulator::{CouplingRules, Intervention, SimState, Stepping, TaskMap, TrajectoryConfig};

const CASE_STUDY: &str = include_str!("../config/case_study.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub discount: f64,
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub epoch_seconds: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub dims: Dims,
    pub maintenance: MaintenanceSection,
    pub assignment: AssignmentSection,
    pub degradation: DegradationSection,
    #[serde(default)]
    pub coupling: CouplingRules,
    #[serde(default)]
    pub trajectory: Vec<TrajectorySpec>,
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub machines: usize,
    pub tasks: usize,
    pub operating_conditions: u8,
    pub health_levels: u8,
    pub task_levels: u8,
    pub task_codes: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceSection {
    pub rewards: MaintenanceRewards,
    #[serde(default)]
    pub effect: MaintenanceEffect,
    pub chains: MaintenanceChains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceChains {
    pub condition: TransitionMatrix,
    pub task: TransitionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentSection {
    pub rewards: AssignmentRewards,
    pub condition_weights: Vec<f64>,
    pub task_map: TaskMap,
    #[serde(default = "default_true")]
    pub served_tasks_complete: bool,
    pub chains: AssignmentChains,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentChains {
    pub task: TransitionMatrix,
    pub status: TransitionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSection {
    pub health_thresholds: Vec<f64>,
    pub reference_wear_mm: f64,
    pub rounding: u32,
    /// Per-condition probabilities for new tools; ignored when `table_csv` is set.
    #[serde(default)]
    pub new_tool: Vec<f64>,
    #[serde(default)]
    pub old_tool: Vec<f64>,
    /// Degradation table CSV; relative paths resolve against the working
    /// directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub name: String,
    pub epochs: usize,
    pub initial: SimState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interventions: Vec<Intervention>,
    /// Sample successors with this seed instead of following the most
    /// likely one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TrajectorySpec {
    pub fn to_config(&self, seed_override: Option<u64>) -> TrajectoryConfig {
        TrajectoryConfig {
            initial: self.initial.clone(),
            epochs: self.epochs,
            interventions: self.interventions.clone(),
            stepping: match seed_override.or(self.seed) {
                Some(seed) => Stepping::Sampled { seed },
                None => Stepping::MaxLikelihood,
            },
        }
    }
}

impl RunConfig {
    pub fn case_study() -> Self {
        Self::from_toml(CASE_STUDY).expect("bundled configuration is valid")
    }

    pub fn case_study_text() -> &'static str {
        CASE_STUDY
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, applies `key.path=value` overrides, and validates.
    /// Values are read as TOML and fall back to plain strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for spec in overrides {
            apply_override(&mut table, spec)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::Config(format!(
                "discount must lie in (0, 1), got {}",
                self.discount
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        self.maintenance_config().validate()?;
        // Without tasks only the maintenance model can be built.
        if self.dims.tasks > 0 {
            self.assignment_config().validate()?;
        }
        self.maintenance.effect.validate()?;
        let map = self.health_map()?;
        map.validate_levels(self.dims.health_levels)?;
        if !(self.degradation.reference_wear_mm > 0.0) {
            return Err(Error::Config("reference_wear_mm must be positive".into()));
        }
        if self.degradation.table_csv.is_none() {
            let m = usize::from(self.dims.operating_conditions);
            for (name, col) in [
                ("new_tool", &self.degradation.new_tool),
                ("old_tool", &self.degradation.old_tool),
            ] {
                if col.len() != m {
                    return Err(Error::Length {
                        field: format!("degradation.{name}"),
                        expected: m,
                        actual: col.len(),
                    });
                }
            }
        }
        self.maintenance.chains.condition.expect_size(
            "maintenance.chains.condition",
            usize::from(self.dims.operating_conditions),
        )?;
        self.maintenance
            .chains
            .task
            .expect_size("maintenance.chains.task", usize::from(self.dims.task_levels))?;
        let codes = &self.assignment.task_map.0;
        if codes.len() != usize::from(self.dims.task_levels) {
            return Err(Error::Length {
                field: "assignment.task_map".into(),
                expected: usize::from(self.dims.task_levels),
                actual: codes.len(),
            });
        }
        if let Some(&c) = codes.iter().find(|&&c| c > self.dims.task_codes) {
            return Err(Error::alphabet(
                "assignment.task_map",
                i64::from(c),
                0,
                i64::from(self.dims.task_codes),
            ));
        }
        if self.assignment.condition_weights.len() != usize::from(self.dims.operating_conditions) {
            return Err(Error::Length {
                field: "assignment.condition_weights".into(),
                expected: usize::from(self.dims.operating_conditions),
                actual: self.assignment.condition_weights.len(),
            });
        }
        if self.coupling.unavailable_intensity == 0 {
            return Err(Error::Config(
                "coupling.unavailable_intensity must be at least 1".into(),
            ));
        }
        let mut names: Vec<&str> = self.trajectory.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate trajectory name {:?}", w[0])));
        }
        Ok(())
    }

    pub fn maintenance_config(&self) -> MaintenanceConfig {
        MaintenanceConfig {
            machines: self.dims.machines,
            tasks: self.dims.tasks,
            conditions: self.dims.operating_conditions,
            health_levels: self.dims.health_levels,
            task_levels: self.dims.task_levels,
            rewards: self.maintenance.rewards,
            epoch_seconds: self.epoch_seconds,
        }
    }

    pub fn assignment_config(&self) -> AssignmentConfig {
        AssignmentConfig {
            machines: self.dims.machines,
            tasks: self.dims.tasks,
            health_levels: self.dims.health_levels,
            task_codes: self.dims.task_codes,
            rewards: self.assignment.rewards,
        }
    }

    pub fn health_map(&self) -> Result<HealthMap> {
        HealthMap::new(self.degradation.health_thresholds.clone())
    }

    pub fn wear_scaling(&self) -> WearScaling {
        WearScaling {
            epoch_seconds: self.epoch_seconds,
            reference_wear_mm: self.degradation.reference_wear_mm,
        }
    }

    /// The table from `table_csv` if set, otherwise the inline columns.
    pub fn degradation_table(&self) -> Result<DegradationTable> {
        let table = match &self.degradation.table_csv {
            Some(path) => {
                let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
                DegradationTable::read_csv(file)?
            }
            None => DegradationTable::from_columns(&self.degradation.new_tool, &self.degradation.old_tool)?,
        };
        table.require_complete(self.dims.operating_conditions)?;
        Ok(table)
    }

    pub fn task_dynamics(&self) -> TaskDynamics {
        if self.assignment.served_tasks_complete {
            TaskDynamics::CompleteWhenServed {
                unavailable_intensity: self.coupling.unavailable_intensity,
            }
        } else {
            TaskDynamics::Exogenous
        }
    }

    pub fn maintenance_model_with(&self, table: DegradationTable) -> Result<MaintenanceModel> {
        MaintenanceModel::new(
            self.maintenance_config(),
            MaintenanceTables {
                condition_chain: self.maintenance.chains.condition.clone(),
                degradation: table,
                effect: self.maintenance.effect,
                task_chain: self.maintenance.chains.task.clone(),
            },
        )
    }

    pub fn assignment_model_with(&self, table: &DegradationTable) -> Result<AssignmentModel> {
        let health_chains = marginal_health_chains(
            table,
            &self.maintenance.effect,
            &self.assignment.condition_weights,
            self.dims.health_levels,
        )?;
        AssignmentModel::new(
            self.assignment_config(),
            AssignmentTables {
                health_chains,
                task_chain: self.assignment.chains.task.clone(),
                status_chain: self.assignment.chains.status.clone(),
                task_dynamics: self.task_dynamics(),
            },
        )
    }

    pub fn maintenance_model(&self) -> Result<MaintenanceModel> {
        self.maintenance_model_with(self.degradation_table()?)
    }

    pub fn assignment_model(&self) -> Result<AssignmentModel> {
        self.assignment_model_with(&self.degradation_table()?)
    }

    pub fn trajectory(&self, name: &str) -> Result<&TrajectorySpec> {
        self.trajectory
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("no trajectory named {name:?}")))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let unknown = || Error::Config(format!("override key {key:?} does not name a setting"));
    let (first, rest) = parts.split_first().expect("split yields at least one part");
    // Unknown keys are inserted here and rejected by deserialization.
    let mut node = table.entry(first.to_string()).or_insert(toml::Value::Boolean(false));
    for part in rest {
        node = match node {
            toml::Value::Table(t) => t.entry(part.to_string()).or_insert(toml::Value::Boolean(false)),
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                a.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *node = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_parses() {
        let c = RunConfig::case_study();
        assert_eq!(c.dims.machines, 2);
        assert_eq!(c.trajectory.len(), 2);
        assert_eq!(c.trajectory[1].interventions[0].at_epoch, 4);
        assert_eq!(c.degradation_table().unwrap(), DegradationTable::case_study());
        assert_eq!(
            c.task_dynamics(),
            TaskDynamics::CompleteWhenServed {
                unavailable_intensity: 3
            }
        );
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::from_toml_with_overrides(
            RunConfig::case_study_text(),
            &[
                "discount=0.9".into(),
                "dims.task_levels=3".into(),
                "maintenance.chains.task=[[1.0,0.0,0.0],[0.2,0.8,0.0],[0.2,0.0,0.8]]".into(),
                "assignment.task_map=[0,1,2]".into(),
                "trajectory.0.epochs=3".into(),
                "out_dir=elsewhere".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.discount, 0.9);
        assert_eq!(c.dims.task_levels, 3);
        assert_eq!(c.trajectory[0].epochs, 3);
        assert_eq!(c.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn rejects_bad_input() {
        let text = RunConfig::case_study_text();
        for bad in [
            "discount=1.0",
            "dims.bogus=1",
            "nope=3",
            "assignment.rewards.eta1=9",
            "dims.task_levels=3",
            "discount",
        ] {
            assert!(
                RunConfig::from_toml_with_overrides(text, &[bad.to_string()]).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn roundtrips_through_toml() {
        let c = RunConfig::case_study();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}
