use std::path::Path;

use serde::{Deserialize, Serialize};
use tsvar_core::solver::{parse_basis, SolveOptions};
use tsvar_core::{Execution, Horizon, Lagrangian, Problem, ScaleSpec, TimeScale, Trajectory};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: u32,
    pub timescale: ScaleSpec,
    pub order: usize,
    pub initial_conditions: Vec<f64>,
    pub lagrangian: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Horizon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_maximality: Option<BatteryConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub basis: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative bound on the E-L residual, scaled by `1 + max|L⟨x⟩|`.
    pub el_residual: f64,
    pub admissibility: f64,
    pub max_iter: usize,
    pub collocation_points: Option<usize>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            el_residual: 1e-8,
            admissibility: 1e-9,
            max_iter: 200,
            collocation_points: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    /// Include `x* + ε·η` for the built-in variations.
    #[serde(default = "yes")]
    pub default_family: bool,
    /// Extra competitors, as expressions in `t`.
    #[serde(default)]
    pub competitors: Vec<String>,
}

fn yes() -> bool {
    true
}

/// Everything a command needs, validated.
pub struct Loaded {
    pub config: ProblemConfig,
    pub problem: Problem,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: ProblemConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        if config.initial_conditions.len() != config.order {
            return Err(CliError::Config(format!(
                "order {} needs {} initial conditions, got {}",
                config.order,
                config.order,
                config.initial_conditions.len()
            )));
        }
        if let Some(solver) = &config.solver {
            parse_basis(&solver.basis).map_err(|e| CliError::Config(format!("basis: {e}")))?;
        }
        if let Some(c) = &config.candidate {
            Trajectory::parse(c).map_err(|e| CliError::Config(format!("candidate: {e}")))?;
        }
        if let Some(b) = &config.weak_maximality {
            parse_basis(&b.competitors).map_err(|e| CliError::Config(format!("competitors: {e}")))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Loaded, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)?.into_loaded()
    }

    pub fn into_loaded(self) -> Result<Loaded, CliError> {
        let problem = self.problem()?;
        Ok(Loaded {
            config: self,
            problem,
        })
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let cfg = |e: tsvar_core::Error| CliError::Config(e.to_string());
        let scale = TimeScale::from_spec(&self.timescale).map_err(cfg)?;
        let lagrangian = Lagrangian::parse(&self.lagrangian, self.order)
            .map_err(|e| CliError::Config(format!("lagrangian: {e}")))?;
        let horizon = match self.horizon {
            Some(h) => Horizon::new(h.t_max_index, h.grid_stride).map_err(cfg)?,
            None => Horizon::default_for(&scale),
        };
        Problem::with_horizon(scale, self.initial_conditions.clone(), lagrangian, horizon).map_err(cfg)
    }

    pub fn candidate(&self) -> Result<Trajectory, CliError> {
        let src = self
            .candidate
            .as_deref()
            .ok_or_else(|| CliError::Usage("this command needs a \"candidate\" in the config".into()))?;
        Trajectory::parse(src).map_err(|e| CliError::Config(format!("candidate: {e}")))
    }

    pub fn tolerances(&self) -> Tolerances {
        self.solver
            .as_ref()
            .map(|s| s.tolerances.clone())
            .unwrap_or_default()
    }

    pub fn seed(&self) -> u64 {
        self.solver.as_ref().map_or(0, |s| s.seed)
    }

    pub fn solve_options(&self) -> SolveOptions {
        let tol = self.tolerances();
        SolveOptions {
            collocation_points: tol.collocation_points,
            t_grid: None,
            seed: self.seed(),
            max_iter: tol.max_iter,
            restarts: SolveOptions::default().restarts,
            exec: Execution::Parallel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = include_str!("../configs/example1.json");

    #[test]
    fn bundled_config_parses() {
        let c = ProblemConfig::from_json(EX1).unwrap();
        assert_eq!(c.order, 2);
        assert!(c.problem().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = EX1.replacen("\"order\"", "\"ordre\": 2, \"order\"", 1);
        assert!(matches!(ProblemConfig::from_json(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn schema_version_is_checked() {
        let bad = EX1.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
        assert!(matches!(ProblemConfig::from_json(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn lengths_must_agree() {
        let bad = EX1.replacen("[0, 1]", "[0]", 1);
        assert!(matches!(ProblemConfig::from_json(&bad), Err(CliError::Config(_))));
    }
}
