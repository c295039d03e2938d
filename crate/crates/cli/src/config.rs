//! Run configuration: one declarative document, with command-line flags
//! layered on top. The resolved configuration is echoed into every report
//! and can be fed back through `--config` to replay the run.

use std::path::{Path, PathBuf};

use aidecide_core::model::{DatasetSchema, GenericLoss};
use aidecide_core::nuisance::NuisanceConfig;
use aidecide_core::oracle::SimConfig;
use aidecide_core::policy::{AxisSpec, Direction, PolicyKind};
use aidecide_core::preference::Comparison;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Declared schema; inferred from the `x_` columns when `None`.
    pub schema: Option<DatasetSchema>,
    pub nuisance: NuisanceConfig,
    /// False positive losses to evaluate.
    pub l01: Vec<f64>,
    /// Optional losses for correct decisions.
    pub generic: Option<GenericLoss>,
    pub alpha: f64,
    pub grid: GridSpec,
    pub comparisons: Vec<Comparison>,
    /// Declared subgroups to analyse; all declared ones when empty.
    pub subgroups: Vec<String>,
    pub subgroup_fit: SubgroupFitMode,
    pub policy: PolicyConfig,
    pub ratio: RatioConfig,
    pub simulate: SimulateConfig,
    pub oracle: OracleConfig,
    pub output: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            schema: None,
            nuisance: NuisanceConfig::default(),
            l01: vec![1.0],
            generic: None,
            alpha: 0.05,
            grid: GridSpec::default(),
            comparisons: vec![Comparison::HumanVsHumanAi, Comparison::AiVsHuman, Comparison::AiVsHumanAi],
            subgroups: Vec::new(),
            subgroup_fit: SubgroupFitMode::Reuse,
            policy: PolicyConfig::default(),
            ratio: RatioConfig::default(),
            simulate: SimulateConfig::default(),
            oracle: OracleConfig::default(),
            output: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: 0.01, hi: 100.0, points: 400 }
    }
}

impl GridSpec {
    pub fn describe(&self) -> String {
        format!("{} log-spaced in [{},{}]", self.points, self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupFitMode {
    /// Reuse the full-sample nuisance predictions.
    Reuse,
    /// Refit the nuisance models inside each subgroup.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kinds: Vec<PolicyKind>,
    pub directions: Vec<Direction>,
    /// Lattice axes; all three scores over the schema's ranges when `None`.
    pub axes: Option<Vec<AxisSpec>>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { kinds: vec![PolicyKind::Provision], directions: vec![Direction::Increasing], axes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioConfig {
    /// Percentile resamples for the ratio-metric bounds; 0 disables.
    pub resamples: usize,
}

impl Default for RatioConfig {
    fn default() -> Self {
        RatioConfig { resamples: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: SimConfig,
    /// Where to write the sampled cases; next to the report when `None`.
    pub data_out: Option<PathBuf>,
    pub population_out: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { dgp: SimConfig::default(), data_out: None, population_out: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub populations: usize,
    pub max_strata: usize,
    /// Check a single population file instead of random ones.
    pub population: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { populations: 500, max_strata: 8, population: None }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the file ends in `.json` (such as a report's
    /// echoed config).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::config(e.to_string()))?;
            // A whole report is accepted too; its config block is used.
            let cfg = value.get("config").cloned().unwrap_or(value);
            serde_json::from_value(cfg).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
    }

    /// Checks ranges and derives every sub-seed from the master seed.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(CliError::config(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if self.l01.is_empty() {
            return Err(CliError::config("at least one l01 value is required"));
        }
        if let Some(l) = self.l01.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(CliError::config(format!("l01 values must be positive, got {l}")));
        }
        let g = &self.grid;
        if !(g.lo > 0.0 && g.hi > g.lo && g.hi.is_finite() && g.points >= 2) {
            return Err(CliError::config(format!("invalid grid {}", g.describe())));
        }
        if self.oracle.max_strata == 0 {
            return Err(CliError::config("oracle.max_strata must be positive"));
        }
        self.nuisance.seed = self.seed;
        self.simulate.dgp.seed = self.seed;
        Ok(self)
    }
}

pub fn parse_direction(s: &str) -> Result<Direction, CliError> {
    match s {
        "increasing" => Ok(Direction::Increasing),
        "decreasing" => Ok(Direction::Decreasing),
        other => Err(CliError::config(format!("unknown direction `{other}`"))),
    }
}

pub fn parse_kind(s: &str) -> Result<PolicyKind, CliError> {
    match s {
        "provision" => Ok(PolicyKind::Provision),
        "follow" => Ok(PolicyKind::Follow),
        other => Err(CliError::config(format!("unknown policy kind `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("alpah = 0.1").is_err());
        assert!(toml::from_str::<RunConfig>("[grid]\nstep = 3").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
            l01 = [0.5, 2.0]
            seed = 9
            comparisons = ["ai_vs_human"]
            [nuisance]
            propensity = { mode = "estimated" }
            model = { kind = "stratified_frequency" }
            smoothing = 0.0
            folds = 2
            clip_eta = 0.05
            seed = 0
            [schema]
            covariates = [{ name = "sex", levels = ["f", "m"] }]
            subgroups = [{ name = "women", predicate = { is = { covariate = "sex", level = "f" } } }]
            [policy]
            kinds = ["follow"]
            directions = ["decreasing"]
            [simulate.dgp]
            kind = "ai_harmful"
            n = 100
            "#,
        )
        .unwrap();
        let cfg = cfg.resolve().unwrap();
        assert_eq!(cfg.l01, vec![0.5, 2.0]);
        assert_eq!(cfg.nuisance.seed, 9);
        assert_eq!(cfg.simulate.dgp.n, 100);
        assert_eq!(cfg.policy.kinds, vec![PolicyKind::Follow]);
        assert_eq!(cfg.schema.unwrap().subgroups.len(), 1);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for cfg in [
            RunConfig { alpha: 0.5, ..Default::default() },
            RunConfig { l01: vec![], ..Default::default() },
            RunConfig { l01: vec![-1.0], ..Default::default() },
            RunConfig { grid: GridSpec { lo: 1.0, hi: 0.5, points: 10 }, ..Default::default() },
        ] {
            assert_eq!(cfg.resolve().unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig { l01: vec![0.25], seed: 4, ..Default::default() }.resolve().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
