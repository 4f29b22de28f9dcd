//! Run configuration: a single TOML file with nested sections. Unknown keys
//! are rejected so a typo cannot silently fall back to a default.

use serde::{Deserialize, Serialize};

use crate::classify::FamilyMode;
use crate::error::{Error, Result};
use crate::planner::{CostRule, NominalRule};
use crate::problem::{
    make_dynamic_separation, make_quadratic_coupling, make_static_separation, TwoAgentProblem,
};
use crate::search::SearchSettings;

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_RHO: f64 = 1.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub search: SearchSettings,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// One of "static_separation", "quadratic_coupling", "dynamic_separation".
    pub name: String,
    /// Horizon T; required for dynamic_separation, fixed for the others.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default = "default_family_mode")]
    pub mode: FamilyMode,
    #[serde(default)]
    pub include_empty: bool,
}

fn default_family_mode() -> FamilyMode {
    FamilyMode::Contiguous
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            mode: FamilyMode::Contiguous,
            include_empty: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// "cardinality" or explicit per-set weights via `cost_weights`.
    #[serde(default = "default_cost_rule")]
    pub cost_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_weights: Option<Vec<f64>>,
    /// "uniform" or explicit weights via `nominal_weights`.
    #[serde(default = "default_nominal_rule")]
    pub nominal_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_weights: Option<Vec<f64>>,
    #[serde(default = "default_planner_tol")]
    pub tolerance: f64,
}

fn default_cost_rule() -> String {
    "cardinality".to_string()
}

fn default_nominal_rule() -> String {
    "uniform".to_string()
}

fn default_planner_tol() -> f64 {
    1e-12
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            cost_rule: default_cost_rule(),
            cost_weights: None,
            nominal_rule: default_nominal_rule(),
            nominal_weights: None,
            tolerance: default_planner_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".to_string(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Validates every module-level precondition before any compute starts.
    pub fn validate(&self) -> Result<()> {
        self.build_problem()?;
        self.search.validate()?;
        let horizon = self.effective_horizon()?;
        if self.family.mode == FamilyMode::PowerSet && horizon > 16 {
            return Err(Error::Capacity { horizon });
        }
        self.cost_rule()?;
        self.nominal_rule()?;
        self.validate_planner_vectors(horizon)?;
        if !(self.planner.tolerance.is_finite() && self.planner.tolerance > 0.0) {
            return Err(Error::Config("planner.tolerance must be positive".into()));
        }
        if self.output.directory.is_empty() {
            return Err(Error::Config("output.directory must not be empty".into()));
        }
        Ok(())
    }

    /// Custom planner vectors are given per enumerated family set; their
    /// shape is checkable from (mode, horizon) alone.
    fn validate_planner_vectors(&self, horizon: usize) -> Result<()> {
        let base = match self.family.mode {
            FamilyMode::Contiguous => horizon * (horizon + 1) / 2,
            FamilyMode::PowerSet => (1usize << horizon) - 1,
        };
        let family_size = base + usize::from(self.family.include_empty);
        if let Some(w) = &self.planner.cost_weights {
            if w.len() != family_size {
                return Err(Error::Config(format!(
                    "cost_weights has {} entries but the family has {family_size} sets",
                    w.len()
                )));
            }
            if w.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
                return Err(Error::Config("cost_weights must be positive".into()));
            }
        }
        if let Some(q) = &self.planner.nominal_weights {
            if q.len() != family_size {
                return Err(Error::Config(format!(
                    "nominal_weights has {} entries but the family has {family_size} sets",
                    q.len()
                )));
            }
            let sum: f64 = q.iter().sum();
            if q.iter().any(|&x| !(x.is_finite() && x >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "nominal_weights must lie on the simplex (sum = {sum})"
                )));
            }
        }
        Ok(())
    }

    pub fn effective_horizon(&self) -> Result<usize> {
        match self.problem.name.as_str() {
            "static_separation" => fixed_horizon(&self.problem, 1),
            "quadratic_coupling" => fixed_horizon(&self.problem, 3),
            "dynamic_separation" => self.problem.horizon.ok_or_else(|| {
                Error::Config("dynamic_separation requires problem.horizon".into())
            }),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }

    pub fn build_problem(&self) -> Result<TwoAgentProblem> {
        let tau = self.problem.tau.unwrap_or(DEFAULT_TAU);
        let gamma = self.problem.gamma.unwrap_or(DEFAULT_GAMMA);
        let rho = self.problem.rho.unwrap_or(DEFAULT_RHO);
        match self.problem.name.as_str() {
            "static_separation" => {
                fixed_horizon(&self.problem, 1)?;
                make_static_separation(tau, gamma, rho)
            }
            "quadratic_coupling" => {
                fixed_horizon(&self.problem, 3)?;
                if self.problem.tau.is_some()
                    || self.problem.gamma.is_some()
                    || self.problem.rho.is_some()
                {
                    return Err(Error::Config(
                        "quadratic_coupling takes no tau/gamma/rho parameters".into(),
                    ));
                }
                Ok(make_quadratic_coupling())
            }
            "dynamic_separation" => {
                let horizon = self.effective_horizon()?;
                make_dynamic_separation(horizon, tau, gamma, rho)
            }
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }

    pub fn cost_rule(&self) -> Result<CostRule> {
        match (self.planner.cost_rule.as_str(), &self.planner.cost_weights) {
            ("cardinality", None) => Ok(CostRule::Cardinality),
            ("custom", Some(w)) => Ok(CostRule::Custom(w.clone())),
            ("custom", None) => Err(Error::Config(
                "cost_rule = \"custom\" requires cost_weights".into(),
            )),
            ("cardinality", Some(_)) => Err(Error::Config(
                "cost_weights given but cost_rule is \"cardinality\"".into(),
            )),
            (other, _) => Err(Error::Config(format!("unknown cost_rule `{other}`"))),
        }
    }

    pub fn nominal_rule(&self) -> Result<NominalRule> {
        match (
            self.planner.nominal_rule.as_str(),
            &self.planner.nominal_weights,
        ) {
            ("uniform", None) => Ok(NominalRule::Uniform),
            ("custom", Some(w)) => Ok(NominalRule::Custom(w.clone())),
            ("custom", None) => Err(Error::Config(
                "nominal_rule = \"custom\" requires nominal_weights".into(),
            )),
            ("uniform", Some(_)) => Err(Error::Config(
                "nominal_weights given but nominal_rule is \"uniform\"".into(),
            )),
            (other, _) => Err(Error::Config(format!("unknown nominal_rule `{other}`"))),
        }
    }
}

fn fixed_horizon(p: &ProblemConfig, expected: usize) -> Result<usize> {
    match p.horizon {
        None => Ok(expected),
        Some(h) if h == expected => Ok(expected),
        Some(h) => Err(Error::Config(format!(
            "problem `{}` has fixed horizon {expected}, got {h}",
            p.name
        ))),
    }
}
