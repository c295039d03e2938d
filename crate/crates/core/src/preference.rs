//! Which decision system to prefer, as a function of the false positive
//! loss `l01`, by inverting one-sided tests over a grid of losses.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bounds::bound_path_on_frame;
use crate::error::{invalid, Error, Result};
use crate::estimate::risk_path_on_frame;
use crate::frame::Frame;
use crate::math;
use crate::model::Dataset;
use crate::nuisance::NuisanceFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    #[serde(rename = "human_vs_humanAI")]
    HumanVsHumanAi,
    AiVsHuman,
    #[serde(rename = "ai_vs_humanAI")]
    AiVsHumanAi,
}

impl Comparison {
    pub fn name(self) -> &'static str {
        match self {
            Comparison::HumanVsHumanAi => "human_vs_humanAI",
            Comparison::AiVsHuman => "ai_vs_human",
            Comparison::AiVsHumanAi => "ai_vs_humanAI",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "human_vs_humanAI" => Ok(Comparison::HumanVsHumanAi),
            "ai_vs_human" => Ok(Comparison::AiVsHuman),
            "ai_vs_humanAI" => Ok(Comparison::AiVsHumanAi),
            other => Err(invalid(alloc::format!("unknown comparison `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    PreferHuman,
    PreferHumanAi,
    PreferAi,
    Ambiguous,
}

impl Preference {
    pub fn name(self) -> &'static str {
        match self {
            Preference::PreferHuman => "prefer_human",
            Preference::PreferHumanAi => "prefer_human_ai",
            Preference::PreferAi => "prefer_ai",
            Preference::Ambiguous => "ambiguous",
        }
    }
}

/// A maximal stretch of consecutive grid points sharing one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub label: Preference,
    pub l01_min: f64,
    pub l01_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub l01: f64,
    pub label: Preference,
    /// Test statistics: `β̂/se` for the point-identified comparison, else
    /// `(L̂/se_L, Û/se_U)`.
    pub stat_lower: f64,
    pub stat_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRegion {
    pub comparison: Comparison,
    pub alpha: f64,
    pub points: Vec<GridPoint>,
    pub runs: Vec<Run>,
}

impl PreferenceRegion {
    pub fn labels(&self) -> impl Iterator<Item = Preference> + '_ {
        self.points.iter().map(|p| p.label)
    }
}

/// 400 log-spaced losses over `[0.01, 100]`.
pub fn default_grid() -> Vec<f64> {
    math::log_grid(0.01, 100.0, 400)
}

fn ratio(est: f64, se: f64) -> f64 {
    if se > 0.0 {
        est / se
    } else if est == 0.0 {
        0.0
    } else {
        est.signum() * f64::INFINITY
    }
}

fn check_grid(grid: &[f64], alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid(alloc::format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(invalid("loss grid must be nonempty with positive finite values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("loss grid must be strictly increasing"));
    }
    Ok(())
}

pub fn invert_on_frame(frame: &Frame, comparison: Comparison, grid: &[f64], alpha: f64) -> Result<PreferenceRegion> {
    check_grid(grid, alpha)?;
    let crit = math::normal_quantile(1.0 - alpha);
    let mut points = Vec::with_capacity(grid.len());
    match comparison {
        Comparison::HumanVsHumanAi => {
            let path = risk_path_on_frame(frame)?;
            for &l in grid {
                let t = ratio(path.estimate(l), path.se(l));
                // β = R_Human+AI − R_Human.
                let label = if t > crit {
                    Preference::PreferHuman
                } else if t < -crit {
                    Preference::PreferHumanAi
                } else {
                    Preference::Ambiguous
                };
                points.push(GridPoint { l01: l, label, stat_lower: t, stat_upper: t });
            }
        }
        Comparison::AiVsHuman | Comparison::AiVsHumanAi => {
            let z = if comparison == Comparison::AiVsHuman { 0 } else { 1 };
            let human_side = if z == 0 { Preference::PreferHuman } else { Preference::PreferHumanAi };
            let path = bound_path_on_frame(frame, z)?;
            for &l in grid {
                let t_l = ratio(path.lower.estimate(l), path.lower.se(l));
                let t_u = ratio(path.upper.estimate(l), path.upper.se(l));
                let label = match (t_l > crit, t_u < -crit) {
                    (true, true) => return Err(Error::ContradictoryRejection { l01: l }),
                    (true, false) => human_side,
                    (false, true) => Preference::PreferAi,
                    (false, false) => Preference::Ambiguous,
                };
                points.push(GridPoint { l01: l, label, stat_lower: t_l, stat_upper: t_u });
            }
        }
    }
    let runs = runs(&points);
    Ok(PreferenceRegion { comparison, alpha, points, runs })
}

fn runs(points: &[GridPoint]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for p in points {
        match out.last_mut() {
            Some(r) if r.label == p.label => r.l01_max = p.l01,
            _ => out.push(Run { label: p.label, l01_min: p.l01, l01_max: p.l01 }),
        }
    }
    out
}

pub fn invert_preference(
    ds: &Dataset,
    fit: &NuisanceFit,
    comparison: Comparison,
    grid: &[f64],
    alpha: f64,
) -> Result<PreferenceRegion> {
    invert_on_frame(&Frame::from_sample(ds, fit)?, comparison, grid, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::estimate_ai_vs_human_bounds;
    use crate::estimate::estimate_risk_difference;
    use crate::model::{CaseRecord, CovariateSpec, DatasetSchema, LossSpec};
    use crate::nuisance::{fit_nuisance, NuisanceConfig};
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|i| {
                let s = rng.random_range(0..2u16);
                let z = rng.random_bool(0.5) as u8;
                let a = rng.random_bool(0.4) as u8;
                let d = rng.random_bool(0.2 + 0.3 * (a * z) as f64) as u8;
                let y = rng.random_bool(0.25) as u8;
                CaseRecord { id: i.to_string(), z, d, a, y, covariates: vec![s], scores: [None; 3] }
            })
            .collect();
        let schema = DatasetSchema::new(vec![CovariateSpec::integer("s", 0, 1)]).unwrap();
        Dataset::from_records(schema, recs).unwrap()
    }

    #[test]
    fn grid_defaults_and_validation() {
        let g = default_grid();
        assert_eq!(g.len(), 400);
        assert_eq!((g[0], g[399]), (0.01, 100.0));
        let ds = dataset(200, 1);
        let fit = fit_nuisance(&ds, &NuisanceConfig::default()).unwrap();
        let c = Comparison::AiVsHuman;
        assert!(invert_preference(&ds, &fit, c, &[1.0, 1.0], 0.05).is_err());
        assert!(invert_preference(&ds, &fit, c, &[0.0, 1.0], 0.05).is_err());
        assert!(invert_preference(&ds, &fit, c, &[1.0], 0.5).is_err());
    }

    #[test]
    fn zero_statistics_are_ambiguous() {
        let recs: Vec<CaseRecord> = (0..20)
            .map(|i| CaseRecord { id: i.to_string(), z: (i % 2) as u8, d: 0, a: 0, y: 0, covariates: vec![0], scores: [None; 3] })
            .collect();
        let schema = DatasetSchema::new(vec![CovariateSpec::integer("s", 0, 0)]).unwrap();
        let ds = Dataset::from_records(schema, recs).unwrap();
        let fit = fit_nuisance(&ds, &NuisanceConfig::saturated(0.5)).unwrap();
        for c in [Comparison::HumanVsHumanAi, Comparison::AiVsHuman, Comparison::AiVsHumanAi] {
            let r = invert_preference(&ds, &fit, c, &default_grid(), 0.05).unwrap();
            assert!(r.labels().all(|l| l == Preference::Ambiguous));
            assert_eq!(r.runs.len(), 1);
        }
    }

    #[test]
    fn statistics_match_direct_estimates() {
        let ds = dataset(3000, 2);
        let fit = fit_nuisance(&ds, &NuisanceConfig::default()).unwrap();
        let grid = [0.05, 0.7, 3.0, 40.0];
        let point = invert_preference(&ds, &fit, Comparison::HumanVsHumanAi, &grid, 0.05).unwrap();
        let part = invert_preference(&ds, &fit, Comparison::AiVsHumanAi, &grid, 0.05).unwrap();
        for (i, &l) in grid.iter().enumerate() {
            let loss = LossSpec::new(l).unwrap();
            let e = estimate_risk_difference(&ds, &fit, &loss).unwrap();
            assert!((point.points[i].stat_lower - e.beta_hat / e.se()).abs() < 1e-10 * (1.0 + l));
            let b = estimate_ai_vs_human_bounds(&ds, &fit, 1, &loss).unwrap();
            assert!((part.points[i].stat_lower - b.lower_raw / b.se_lower()).abs() < 1e-10 * (1.0 + l));
            assert!((part.points[i].stat_upper - b.upper_raw / b.se_upper()).abs() < 1e-10 * (1.0 + l));
        }
    }

    #[test]
    fn runs_cover_the_grid() {
        let ds = dataset(5000, 3);
        let fit = fit_nuisance(&ds, &NuisanceConfig::default()).unwrap();
        let r = invert_preference(&ds, &fit, Comparison::AiVsHuman, &default_grid(), 0.05).unwrap();
        assert_eq!(r.runs.first().unwrap().l01_min, 0.01);
        assert_eq!(r.runs.last().unwrap().l01_max, 100.0);
        for w in r.runs.windows(2) {
            assert_ne!(w[0].label, w[1].label);
            assert!(w[0].l01_max < w[1].l01_min);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn refinement_keeps_shared_labels(seed in 0u64..200) {
            let ds = dataset(1500, seed);
            let fit = fit_nuisance(&ds, &NuisanceConfig { seed, ..Default::default() }).unwrap();
            let coarse = math::log_grid(0.01, 100.0, 51);
            let fine = math::log_grid(0.01, 100.0, 101);
            for c in [Comparison::HumanVsHumanAi, Comparison::AiVsHuman, Comparison::AiVsHumanAi] {
                let a = invert_preference(&ds, &fit, c, &coarse, 0.05).unwrap();
                let b = invert_preference(&ds, &fit, c, &fine, 0.05).unwrap();
                for (i, p) in a.points.iter().enumerate() {
                    let q = &b.points[2 * i];
                    prop_assert!((p.l01 - q.l01).abs() < 1e-12 * p.l01);
                    prop_assert_eq!(p.label, q.label);
                }
            }
        }
    }
}
