//! Ground truth for testing: finite populations with full potential
//! outcomes, a random population generator, a sampler that applies the
//! trial's observation rule, exact functionals, and a linear-programming
//! bound oracle that does not use any closed-form bound.

mod lp;
mod truth;

pub use lp::{lp_bounds, observables, LinearTarget, ObservableTable};
pub use truth::{
    confusion, follow_policy_truth, provision_policy_truth, rule_risk, system_risk, theta_true, xi_true,
};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frame::{Frame, Unit};
use crate::model::{CaseRecord, CovariateSpec, Dataset, DatasetSchema, ScoreRanges};
use crate::nuisance::NuisanceValues;

/// Index into a stratum's joint table over `(A, D(0), D(1), Y(0))`.
#[inline]
pub fn joint_index(a: u8, d0: u8, d1: u8, y0: u8) -> usize {
    (a as usize) << 3 | (d0 as usize) << 2 | (d1 as usize) << 1 | y0 as usize
}

/// Inverse of [`joint_index`]: `(a, d0, d1, y0)`.
#[inline]
pub fn joint_cell(i: usize) -> (u8, u8, u8, u8) {
    ((i >> 3 & 1) as u8, (i >> 2 & 1) as u8, (i >> 1 & 1) as u8, (i & 1) as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleStratum {
    pub mass: f64,
    /// `P(Z = 1 | X = x)`.
    pub propensity: f64,
    /// Joint distribution of `(A, D(0), D(1), Y(0))` given the stratum,
    /// indexed by [`joint_index`].
    pub joint: [f64; 16],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<[i32; 3]>,
}

impl OracleStratum {
    pub fn p(&self, a: u8, d0: u8, d1: u8, y0: u8) -> f64 {
        self.joint[joint_index(a, d0, d1, y0)]
    }

    /// `P(D(z) = d, Y(0) = y, A = a | x)`.
    pub fn marginal(&self, z: u8, a: u8, d: u8, y: u8) -> f64 {
        (0..2u8)
            .map(|other| if z == 0 { self.p(a, d, other, y) } else { self.p(a, other, d, y) })
            .sum()
    }

    pub fn p_a(&self, a: u8) -> f64 {
        (0..16).filter(|&i| joint_cell(i).0 == a).map(|i| self.joint[i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePopulation {
    pub strata: Vec<OracleStratum>,
}

pub const MASS_TOLERANCE: f64 = 1e-12;

impl OraclePopulation {
    pub fn new(strata: Vec<OracleStratum>, eta: f64) -> Result<Self> {
        let pop = OraclePopulation { strata };
        pop.check(eta)?;
        Ok(pop)
    }

    pub fn check(&self, eta: f64) -> Result<()> {
        if self.strata.is_empty() {
            return Err(invalid("population has no strata"));
        }
        let total: f64 = self.strata.iter().map(|s| s.mass).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("stratum masses sum to {total}")));
        }
        for (k, s) in self.strata.iter().enumerate() {
            let sum: f64 = s.joint.iter().sum();
            if s.mass < 0.0 || s.joint.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > MASS_TOLERANCE {
                return Err(invalid(format!("stratum {k} is not a proper distribution")));
            }
            if !(s.propensity >= eta && s.propensity <= 1.0 - eta) {
                return Err(invalid(format!("stratum {k} propensity {} outside [{eta}, {}]", s.propensity, 1.0 - eta)));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> DatasetSchema {
        let levels: Vec<String> = (0..self.strata.len()).map(|k| format!("s{k}")).collect();
        DatasetSchema::new(vec![CovariateSpec { name: "stratum".to_string(), levels }]).expect("valid schema")
    }

    /// Exact nuisance values of one stratum.
    pub fn nuisance(&self, k: usize) -> NuisanceValues {
        let s = &self.strata[k];
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.5 };
        let mut nu = NuisanceValues {
            e1: s.propensity,
            m_d: [0.0; 2],
            m_y: [0.0; 2],
            m_da: [[0.0; 2]; 2],
            m_ya: [[0.0; 2]; 2],
            m_a: s.p_a(1),
            m_a_arm: [s.p_a(1); 2],
        };
        for z in 0..2u8 {
            let zi = z as usize;
            let cell = |a: Option<u8>, d: u8, y: u8| -> f64 {
                match a {
                    Some(a) => s.marginal(z, a, d, y),
                    None => s.marginal(z, 0, d, y) + s.marginal(z, 1, d, y),
                }
            };
            let d1 = cell(None, 1, 0) + cell(None, 1, 1);
            let y1d0 = cell(None, 0, 1);
            nu.m_d[zi] = d1;
            nu.m_y[zi] = ratio(y1d0, 1.0 - d1);
            for a in 0..2u8 {
                let pa = s.p_a(a);
                let d1a = cell(Some(a), 1, 0) + cell(Some(a), 1, 1);
                let d0a = cell(Some(a), 0, 0) + cell(Some(a), 0, 1);
                nu.m_da[zi][a as usize] = ratio(d1a, pa);
                nu.m_ya[zi][a as usize] = ratio(cell(Some(a), 0, 1), d0a);
            }
        }
        nu
    }

    /// Every observable atom `(stratum, z, a, d, y)` weighted by its
    /// probability, with exact nuisance values. Estimators evaluated on this
    /// frame return population functionals.
    pub fn frame(&self) -> Frame {
        let mut units = Vec::new();
        for (k, s) in self.strata.iter().enumerate() {
            let nu = self.nuisance(k);
            for z in 0..2u8 {
                let pz = if z == 1 { s.propensity } else { 1.0 - s.propensity };
                for a in 0..2u8 {
                    for d in 0..2u8 {
                        for y in 0..2u8 {
                            // Outcomes of flagged cases are never read; they sit at y = 0.
                            let p = if d == 1 {
                                if y == 1 {
                                    continue;
                                }
                                s.marginal(z, a, 1, 0) + s.marginal(z, a, 1, 1)
                            } else {
                                s.marginal(z, a, 0, y)
                            };
                            let weight = s.mass * pz * p;
                            if weight > 0.0 {
                                units.push(Unit { z, d, a, y, stratum: k, scores: scores_of(s), nu, weight });
                            }
                        }
                    }
                }
            }
        }
        Frame::from_units(units, (0..self.strata.len()).map(|k| vec![k as u16]).collect(), 1)
    }
}

fn scores_of(s: &OracleStratum) -> [Option<i32>; 3] {
    match s.scores {
        Some(v) => [Some(v[0]), Some(v[1]), Some(v[2])],
        None => [None; 3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// Unrestricted joint over `(A, D(0), D(1), Y(0))`.
    Random,
    /// Showing the AI changes nothing: `D(1) = D(0)`.
    Null,
    /// The AI flags everyone the human flags plus some true negatives;
    /// humans ignore it.
    AiHarmful,
    /// The AI flags everyone the human flags plus some true positives;
    /// humans with the AI follow it.
    AiHelpful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub kind: DgpKind,
    pub n_strata: usize,
    /// Dirichlet concentration for stratum masses and joint tables.
    pub concentration: f64,
    /// Fixed propensity; drawn from `[0.3, 0.7]` per stratum when absent.
    pub propensity: Option<f64>,
    /// Attach distinct default-lattice score cells to the strata.
    pub with_scores: bool,
    pub n: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { kind: DgpKind::Random, n_strata: 4, concentration: 1.0, propensity: Some(0.5), with_scores: false, n: 5000, seed: 0 }
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            let mut p: Vec<f64> = draws.iter().map(|g| g / total).collect();
            // Put the rounding residue on the largest cell so the sum is 1.
            let residue = 1.0 - p.iter().sum::<f64>();
            let imax = (0..k).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap_or(0);
            p[imax] += residue;
            return p;
        }
    }
}

fn stratum_joint(rng: &mut ChaCha8Rng, kind: DgpKind, alpha: f64) -> [f64; 16] {
    let mut joint = [0.0; 16];
    match kind {
        DgpKind::Random => joint.copy_from_slice(&dirichlet(rng, alpha, 16)),
        DgpKind::Null => {
            let base = dirichlet(rng, alpha, 8);
            for (i, p) in base.into_iter().enumerate() {
                let (a, d, y) = ((i >> 2 & 1) as u8, (i >> 1 & 1) as u8, (i & 1) as u8);
                joint[joint_index(a, d, d, y)] = p;
            }
        }
        DgpKind::AiHarmful | DgpKind::AiHelpful => {
            let base = dirichlet(rng, alpha, 4);
            let extra: f64 = rng.random_range(0.2..0.6);
            for (i, p) in base.into_iter().enumerate() {
                let (d0, y0) = ((i >> 1 & 1) as u8, (i & 1) as u8);
                let target_y = if kind == DgpKind::AiHarmful { 0 } else { 1 };
                let p_flag = if d0 == 1 { 1.0 } else if y0 == target_y { extra } else { 0.0 };
                for a in 0..2u8 {
                    let pa = if a == 1 { p_flag } else { 1.0 - p_flag };
                    let d1 = if kind == DgpKind::AiHarmful { d0 } else { a };
                    joint[joint_index(a, d0, d1, y0)] += p * pa;
                }
            }
        }
    }
    joint
}

/// Draws a random population.
pub fn random_population(cfg: &SimConfig) -> Result<OraclePopulation> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    random_population_with(&mut rng, cfg)
}

pub fn random_population_with(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> Result<OraclePopulation> {
    if cfg.n_strata == 0 || !(cfg.concentration > 0.0) {
        return Err(invalid("simulation needs at least one stratum and a positive concentration"));
    }
    let ranges = ScoreRanges::default();
    let lattice_size: usize = (0..3).map(|k| (ranges.get(k).1 - ranges.get(k).0 + 1) as usize).product();
    if cfg.with_scores && cfg.n_strata > lattice_size {
        return Err(invalid(format!("at most {lattice_size} strata can carry distinct score cells")));
    }
    let masses = dirichlet(rng, cfg.concentration.max(1.0), cfg.n_strata);
    let mut strata = Vec::with_capacity(cfg.n_strata);
    for (k, mass) in masses.into_iter().enumerate() {
        let propensity = match cfg.propensity {
            Some(p) => p,
            None => rng.random_range(0.3..0.7),
        };
        let joint = stratum_joint(rng, cfg.kind, cfg.concentration);
        let scores = cfg.with_scores.then(|| score_cell(&ranges, k));
        strata.push(OracleStratum { mass, propensity, joint, scores });
    }
    OraclePopulation::new(strata, 0.0)
}

/// The `k`-th cell of the default lattice, first axis varying fastest.
fn score_cell(ranges: &ScoreRanges, mut k: usize) -> [i32; 3] {
    let mut out = [0; 3];
    for (axis, o) in out.iter_mut().enumerate() {
        let (lo, hi) = ranges.get(axis);
        let span = (hi - lo + 1) as usize;
        *o = lo + (k % span) as i32;
        k /= span;
    }
    out
}

/// Draws `n` cases. The recorded outcome is `Y(0)` for released cases and
/// an independent fair coin for flagged ones, whose outcome is uninformative.
pub fn sample_dataset(pop: &OraclePopulation, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cumulative: Vec<f64> = pop
        .strata
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.mass;
            Some(*acc)
        })
        .collect();
    let pick = |u: f64, cum: &[f64]| cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let k = pick(rng.random::<f64>(), &cumulative);
        let s = &pop.strata[k];
        let z = rng.random_bool(s.propensity) as u8;
        let cum: Vec<f64> = s
            .joint
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let (a, d0, d1, y0) = joint_cell(pick(rng.random::<f64>(), &cum));
        let d = if z == 1 { d1 } else { d0 };
        let noise = rng.random_bool(0.5) as u8;
        let y = if d == 0 { y0 } else { noise };
        records.push(CaseRecord {
            id: (i + 1).to_string(),
            z,
            d,
            a,
            y,
            covariates: vec![k as u16],
            scores: scores_of(s),
        });
    }
    match Dataset::from_records(pop.schema(), records) {
        Err(Error::EmptyArm(z)) => Err(invalid(format!("sample of {n} has no cases in arm {z}"))),
        other => other,
    }
}
