//! Doubly robust estimates of risk differences between the human-alone
//! (`Z = 0`) and human-with-AI (`Z = 1`) systems.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{if_released, influence_human_unit, Frame, Slice, Unit};
use crate::math;
use crate::model::{Dataset, LossSpec, Predicate};
use crate::nuisance::{fit_nuisance, NuisanceConfig, NuisanceFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Risk,
    FnpDiff,
    FppDiff,
    MisclassDiff,
    GenericLoss,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Risk => "risk",
            Metric::FnpDiff => "fnp_diff",
            Metric::FppDiff => "fpp_diff",
            Metric::MisclassDiff => "misclass_diff",
            Metric::GenericLoss => "generic_loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskDiffEstimate {
    pub metric: Metric,
    pub l01: f64,
    pub beta_hat: f64,
    /// Asymptotic variance of `√n·β̂`.
    pub variance_hat: f64,
    pub n: usize,
    /// Centered per-unit influence contributions.
    pub influence: Vec<f64>,
}

impl RiskDiffEstimate {
    pub fn se(&self) -> f64 {
        math::sqrt(self.variance_hat / self.n as f64)
    }

    /// Two-sided Wald interval at level `1 − alpha`.
    pub fn ci(&self, alpha: f64) -> (f64, f64) {
        let half = math::normal_quantile(1.0 - alpha / 2.0) * self.se();
        (self.beta_hat - half, self.beta_hat + half)
    }
}

/// Per-unit contributions of `β̂(l01) = base + l01·slope`, kept so that any
/// loss can be evaluated without revisiting the data.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePath {
    pub n: usize,
    pub base_mean: f64,
    pub slope_mean: f64,
    /// Weighted variance of base, covariance, variance of slope.
    pub cov: (f64, f64, f64),
}

impl AffinePath {
    pub fn from_contributions(frame: &Frame, base: &[f64], slope: &[f64]) -> Self {
        let (base_mean, _) = frame.moments(base);
        let (slope_mean, _) = frame.moments(slope);
        AffinePath { n: frame.n(), base_mean, slope_mean, cov: frame.covariances(base, slope) }
    }

    pub fn estimate(&self, l01: f64) -> f64 {
        self.base_mean + l01 * self.slope_mean
    }

    pub fn variance(&self, l01: f64) -> f64 {
        let (vb, c, vs) = self.cov;
        (vb + 2.0 * l01 * c + l01 * l01 * vs).max(0.0)
    }

    pub fn se(&self, l01: f64) -> f64 {
        math::sqrt(self.variance(l01) / self.n as f64)
    }
}

fn check_arms(frame: &Frame) -> Result<()> {
    for z in 0..2u8 {
        if !frame.units().iter().any(|u| u.z == z && u.weight > 0.0) {
            return Err(Error::EmptyArm(z));
        }
    }
    Ok(())
}

/// Influence value `φ̂_z` of one record for the arm-`z` risk term.
pub fn influence_human(ds: &Dataset, fit: &NuisanceFit, record: usize, z: u8, loss: &LossSpec) -> Result<f64> {
    let r = ds.records().get(record).ok_or_else(|| crate::error::invalid("record out of range"))?;
    let nu = *fit.values().get(record).ok_or_else(|| crate::error::invalid("record not covered by the fit"))?;
    let u = Unit { z: r.z, d: r.d, a: r.a, y: r.y, stratum: ds.stratum_of(record), scores: r.scores, nu, weight: 1.0 };
    Ok(influence_human_unit(&u, z, loss.l01))
}

/// Differences `φ(Y=1,D=0) ` and `φ(Y=0,D=0)` between the arms.
fn cell_differences(u: &Unit) -> (f64, f64) {
    let p10 = if_released(u, 1, 1, Slice::All) - if_released(u, 0, 1, Slice::All);
    let p00 = if_released(u, 1, 0, Slice::All) - if_released(u, 0, 0, Slice::All);
    (p10, p00)
}

fn from_contributions(frame: &Frame, metric: Metric, l01: f64, values: Vec<f64>) -> RiskDiffEstimate {
    let (beta_hat, variance_hat) = frame.moments(&values);
    let influence = values.into_iter().map(|v| v - beta_hat).collect();
    RiskDiffEstimate { metric, l01, beta_hat, variance_hat, n: frame.n(), influence }
}

/// Difference under the loss `(l00, l01, l10 = 1, l11)`:
/// `(1 − l11)·Δp10 + (l00 − l01)·Δp00`.
pub fn generic_on_frame(frame: &Frame, l00: f64, l01: f64, l11: f64, metric: Metric) -> Result<RiskDiffEstimate> {
    check_arms(frame)?;
    let (c10, c00) = (1.0 - l11, l00 - l01);
    let values = frame
        .units()
        .iter()
        .map(|u| {
            let (p10, p00) = cell_differences(u);
            c10 * p10 + c00 * p00
        })
        .collect();
    Ok(from_contributions(frame, metric, l01, values))
}

pub fn risk_difference_on_frame(frame: &Frame, loss: &LossSpec) -> Result<RiskDiffEstimate> {
    match loss.generic {
        None => generic_on_frame(frame, 0.0, loss.l01, 0.0, Metric::Risk),
        Some(g) => generic_on_frame(frame, g.l00, loss.l01, g.l11, Metric::GenericLoss),
    }
}

pub fn risk_path_on_frame(frame: &Frame) -> Result<AffinePath> {
    check_arms(frame)?;
    let (base, slope): (Vec<f64>, Vec<f64>) = frame.units().iter().map(|u| {
        let (p10, p00) = cell_differences(u);
        (p10, -p00)
    }).unzip();
    Ok(AffinePath::from_contributions(frame, &base, &slope))
}

pub fn metric_on_frame(frame: &Frame, metric: Metric) -> Result<RiskDiffEstimate> {
    match metric {
        Metric::Risk | Metric::FnpDiff => generic_on_frame(frame, 0.0, 0.0, 0.0, metric),
        Metric::MisclassDiff => generic_on_frame(frame, 0.0, 1.0, 0.0, metric),
        // Δp01 = −Δp00, since P(Y(0) = 0) does not depend on the arm.
        Metric::FppDiff => generic_on_frame(frame, -1.0, 0.0, 1.0, metric),
        Metric::GenericLoss => Err(crate::error::invalid("generic loss needs explicit weights")),
    }
}

pub fn estimate_risk_difference(ds: &Dataset, fit: &NuisanceFit, loss: &LossSpec) -> Result<RiskDiffEstimate> {
    risk_difference_on_frame(&Frame::from_sample(ds, fit)?, loss)
}

pub fn estimate_risk_path(ds: &Dataset, fit: &NuisanceFit) -> Result<AffinePath> {
    risk_path_on_frame(&Frame::from_sample(ds, fit)?)
}

pub fn estimate_metric_difference(ds: &Dataset, fit: &NuisanceFit, metric: Metric) -> Result<RiskDiffEstimate> {
    metric_on_frame(&Frame::from_sample(ds, fit)?, metric)
}

pub fn estimate_generic_loss_difference(
    ds: &Dataset,
    fit: &NuisanceFit,
    l00: f64,
    l01: f64,
    l11: f64,
) -> Result<RiskDiffEstimate> {
    LossSpec::generic(l00, l01, l11)?;
    generic_on_frame(&Frame::from_sample(ds, fit)?, l00, l01, l11, Metric::GenericLoss)
}

/// Identified false negative proportion `P(Y(0) = 1, D(z) = 0)` of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmFnp {
    pub z: u8,
    pub estimate: f64,
    pub se: f64,
}

pub fn fnp_per_arm(ds: &Dataset, fit: &NuisanceFit) -> Result<[ArmFnp; 2]> {
    let frame = Frame::from_sample(ds, fit)?;
    check_arms(&frame)?;
    let arm = |z: u8| {
        let values: Vec<f64> = frame.units().iter().map(|u| if_released(u, z, 1, Slice::All)).collect();
        let (m, v) = frame.moments(&values);
        ArmFnp { z, estimate: m, se: math::sqrt(v / frame.n() as f64) }
    };
    Ok([arm(0), arm(1)])
}

/// How a subgroup obtains its nuisance predictions.
#[derive(Debug, Clone, Copy)]
pub enum SubgroupFit<'a> {
    /// Refit within the subgroup.
    Refit(&'a NuisanceConfig),
    /// Reuse the full-sample predictions of the matching records.
    Reuse(&'a NuisanceFit),
}

/// Restricts the data to `predicate` and runs `estimator` on the subset.
pub fn subgroup_analysis<T>(
    ds: &Dataset,
    name: &str,
    predicate: &Predicate,
    how: SubgroupFit<'_>,
    estimator: impl FnOnce(&Dataset, &NuisanceFit) -> Result<T>,
) -> Result<T> {
    predicate.check(ds.schema())?;
    let keep: Vec<usize> =
        (0..ds.len()).filter(|&i| predicate.matches(ds.schema(), &ds.records()[i])).collect();
    if keep.is_empty() {
        return Err(Error::EmptySubgroup(String::from(name)));
    }
    let sub = ds.filter(predicate)?;
    let fit = match how {
        SubgroupFit::Refit(cfg) => fit_nuisance(&sub, cfg)?,
        SubgroupFit::Reuse(full) => {
            if full.len() != ds.len() {
                return Err(crate::error::invalid("nuisance fit does not match the dataset"));
            }
            NuisanceFit::from_values(keep.iter().map(|&i| full.values()[i]).collect())
        }
    };
    estimator(&sub, &fit)
}
