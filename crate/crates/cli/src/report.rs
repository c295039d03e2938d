//! JSON report layout. Every result block carries the configuration slice
//! that produced it.

use std::collections::BTreeMap;

use aidecide_core::bounds::{BoundFlag, RatioMetric, System};
use aidecide_core::estimate::Metric;
use aidecide_core::model::{AgreementTable, DatasetSummary};
use aidecide_core::nuisance::{NuisanceConfig, NuisanceDiagnostics};
use aidecide_core::oracle::DgpKind;
use aidecide_core::policy::{AxisSpec, Direction, PolicyKind};
use aidecide_core::preference::{Comparison, GridPoint, Run};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SubgroupFitMode};

pub const TOOL: &str = "aidecide";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSummary>,
    pub results: Vec<Block>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<NuisanceDiagnostics>,
    /// Wall-clock milliseconds per phase; only present when requested, so
    /// that reports are otherwise reproducible byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Report {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            dataset: None,
            results: Vec::new(),
            diagnostics: None,
            timings: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Configuration that a block depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub nuisance: NuisanceConfig,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subgroup_fit: Option<SubgroupFitMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case")]
pub enum Block {
    Agreement(AgreementBlock),
    Estimate(EstimateBlock),
    ArmFnp(ArmFnpBlock),
    Bounds(BoundsBlock),
    SystemRisk(SystemRiskBlock),
    RatioBound(RatioBlock),
    Preference(PreferenceBlock),
    Policy(PolicyBlock),
    Simulation(SimulationBlock),
    OracleCheck(OracleCheckBlock),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementBlock {
    pub control: AgreementTable,
    pub treated: AgreementTable,
    pub difference: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateBlock {
    pub metric: Metric,
    pub l01: Option<f64>,
    pub beta_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub subgroup: Option<String>,
    pub config: Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFnpBlock {
    pub z: u8,
    pub estimate: f64,
    pub se: f64,
    pub config: Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsBlock {
    pub comparison: Comparison,
    pub z: u8,
    pub l01: f64,
    #[serde(rename = "L")]
    pub lower: f64,
    #[serde(rename = "U")]
    pub upper: f64,
    #[serde(rename = "se_L")]
    pub se_lower: f64,
    #[serde(rename = "se_U")]
    pub se_upper: f64,
    pub im_low: f64,
    pub im_high: f64,
    pub width: f64,
    pub width_formula: f64,
    pub flags: Vec<BoundFlag>,
    pub subgroup: Option<String>,
    pub config: Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRiskBlock {
    pub system: System,
    pub l01: f64,
    pub lo: f64,
    pub hi: f64,
    pub config: Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBlock {
    pub metric: RatioMetric,
    pub system: System,
    pub lo: f64,
    pub hi: f64,
    pub flags: Vec<BoundFlag>,
    pub resampled: Option<(f64, f64)>,
    pub resamples: usize,
    pub config: Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceBlock {
    pub comparison: Comparison,
    pub alpha: f64,
    pub grid: String,
    pub runs: Vec<Run>,
    pub points: Vec<GridPoint>,
    pub subgroup: Option<String>,
    pub config: Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBlock {
    pub kind: PolicyKind,
    pub direction: Direction,
    pub l01: f64,
    pub axes: Vec<AxisSpec>,
    pub selected_cells: Vec<Vec<i32>>,
    pub value: f64,
    pub se: f64,
    /// Counts in lattice order (first axis varying slowest).
    pub cell_counts: Vec<usize>,
    /// Cells without records; they only carry monotonicity constraints.
    pub empty_cells: Vec<Vec<i32>>,
    pub config: Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemTruth {
    pub l01: f64,
    pub human: f64,
    pub human_ai: f64,
    pub ai: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationBlock {
    pub kind: DgpKind,
    pub n: usize,
    pub n_strata: usize,
    pub data_out: String,
    pub population_out: Option<String>,
    /// Exact system risks of the population.
    pub truth: Vec<SystemTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckBlock {
    pub populations: usize,
    pub seed: u64,
    pub max_strata: usize,
    pub losses: Vec<f64>,
    /// Largest gap between the identified risk difference and the truth.
    pub max_identity_error: f64,
    /// Largest gap between a closed-form bound and the optimization oracle.
    pub max_sharpness_gap: f64,
    /// Largest gap between the bound width and its closed-form width.
    pub max_width_error: f64,
    /// Number of (population, target) pairs whose truth fell outside the bounds.
    pub validity_failures: usize,
    pub checks: usize,
    pub passed: bool,
}
