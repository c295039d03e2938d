//! Sharp bounds for comparisons that involve the AI-alone system, whose
//! risk depends on outcomes that are never observed for flagged cases.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::AffinePath;
use crate::frame::{if_flagged, if_released, if_released_given, CellProbs, Frame, Slice, Unit};
use crate::math;
use crate::model::{Dataset, LossSpec};
use crate::nuisance::NuisanceFit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalBound {
    pub lo: f64,
    pub hi: f64,
}

impl IntervalBound {
    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lo - tol && value <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

const COHERENCE_TOL: f64 = 1e-9;

fn check_coherent(p: &CellProbs) -> Result<()> {
    let bad = |msg: &str| Err(Error::IncoherentInput(format!("{msg}: {p:?}")));
    let in_unit = |v: f64| (-COHERENCE_TOL..=1.0 + COHERENCE_TOL).contains(&v);
    if !(in_unit(p.e1) && p.p_a.iter().all(|&v| in_unit(v))) || ((p.p_a[0] + p.p_a[1]) - 1.0).abs() > COHERENCE_TOL {
        return bad("recommendation probabilities");
    }
    for z in 0..2 {
        for a in 0..2 {
            let cells = [p.y1d0[z][a], p.y0d0[z][a], p.d1[z][a]];
            if !cells.iter().all(|&v| in_unit(v)) || cells.iter().sum::<f64>() > p.p_a[a] + COHERENCE_TOL {
                return bad("cell probabilities");
            }
        }
    }
    Ok(())
}

fn max2(v: [[f64; 2]; 2], a: usize) -> f64 {
    v[0][a].max(v[1][a])
}

/// Bounds on `P(Y(0) = 1, D = 1, A = a)` with the arms mixed by `P(Z = 1)`.
pub fn theta_bounds(probs: &CellProbs, a: u8) -> Result<IntervalBound> {
    check_coherent(probs)?;
    let ai = a as usize;
    let mixed = probs.e1 * probs.y1d0[1][ai] + (1.0 - probs.e1) * probs.y1d0[0][ai];
    let lo = max2(probs.y1d0, ai) - mixed;
    let hi = probs.p_a[ai] - mixed - max2(probs.y0d0, ai);
    Ok(clamped(lo, hi, 0.0, probs.p_a[ai]))
}

/// Bounds on `P(Y(0) = 1, D(z) = 1, A = a)`.
pub fn xi_bounds(probs: &CellProbs, a: u8, z: u8) -> Result<IntervalBound> {
    check_coherent(probs)?;
    Ok(xi_unchecked(probs, a as usize, z as usize))
}

fn xi_unchecked(p: &CellProbs, a: usize, z: usize) -> IntervalBound {
    let lo = max2(p.y1d0, a) - p.y1d0[z][a];
    let hi = p.p_a[a] - p.y1d0[z][a] - max2(p.y0d0, a);
    clamped(lo, hi, 0.0, p.d1[z][a])
}

fn clamped(lo: f64, hi: f64, min: f64, max: f64) -> IntervalBound {
    IntervalBound { lo: lo.clamp(min, max.max(min)), hi: hi.clamp(min, max.max(min)) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFlag {
    /// The lower estimate exceeds the upper by more than twice the larger SE.
    Crossing,
    /// An endpoint was moved back into the feasible range.
    Clamped,
    DegenerateDenominator,
}

/// Estimated bounds on `R_AI − R_Human` (`z = 0`) or `R_AI − R_Human+AI` (`z = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub z: u8,
    pub l01: f64,
    pub lower: f64,
    pub upper: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    pub n: usize,
    /// Estimates before clamping to `[−(1 + l01), 1 + l01]`.
    pub lower_raw: f64,
    pub upper_raw: f64,
    /// Plug-in value of the width formula.
    pub width_formula: f64,
    pub flags: Vec<BoundFlag>,
}

impl BoundEstimate {
    pub fn se_lower(&self) -> f64 {
        math::sqrt(self.v_lower / self.n as f64)
    }

    pub fn se_upper(&self) -> f64 {
        math::sqrt(self.v_upper / self.n as f64)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Interval covering the partially identified difference with
    /// probability at least `1 − alpha`.
    pub fn im_interval(&self, alpha: f64) -> (f64, f64) {
        let q = math::normal_quantile(1.0 - alpha);
        (self.lower - q * self.se_lower(), self.upper + q * self.se_upper())
    }
}

/// Lower and upper bound contributions for every `l01`, both affine.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundPath {
    pub z: u8,
    pub lower: AffinePath,
    pub upper: AffinePath,
    /// `E{P(A=0|X) − max_z' P(Y=1,D=0,A=0|z',X) − max_z' P(Y=0,D=0,A=0|z',X)}`.
    pub width_factor: f64,
}

impl BoundPath {
    pub fn at(&self, l01: f64) -> BoundEstimate {
        let (lower_raw, upper_raw) = (self.lower.estimate(l01), self.upper.estimate(l01));
        let (v_lower, v_upper) = (self.lower.variance(l01), self.upper.variance(l01));
        let n = self.lower.n;
        let mut flags = Vec::new();
        let se = math::sqrt(v_lower.max(v_upper) / n as f64);
        if lower_raw > upper_raw + 2.0 * se {
            flags.push(BoundFlag::Crossing);
        }
        let limit = 1.0 + l01;
        let (lower, upper) = (lower_raw.clamp(-limit, limit), upper_raw.clamp(-limit, limit));
        if lower != lower_raw || upper != upper_raw {
            flags.push(BoundFlag::Clamped);
        }
        BoundEstimate {
            z: self.z,
            l01,
            lower,
            upper,
            v_lower,
            v_upper,
            n,
            lower_raw,
            upper_raw,
            width_formula: (1.0 + l01) * self.width_factor,
            flags,
        }
    }
}

/// Whether arm `1 − z` attains the max of `P(Y=y, D=0 | A=0, Z=·, X)`.
fn other_arm_wins(u: &Unit, z: u8, y: u8) -> bool {
    let cell = |arm: usize| {
        let (m_d, m_y) = (u.nu.m_da[arm][0], u.nu.m_ya[arm][0]);
        (1.0 - m_d) * if y == 1 { m_y } else { 1.0 - m_y }
    };
    cell(1 - z as usize) >= cell(z as usize)
}

/// Nuisance classifiers `(ĝ_L, ĝ_U)` for one unit.
pub fn classifiers(u: &Unit, z: u8) -> (bool, bool) {
    (other_arm_wins(u, z, 1), other_arm_wins(u, z, 0))
}

/// Per-unit lower and upper contributions split into `(base, slope)` in `l01`.
fn bound_contributions(u: &Unit, z: u8) -> ([f64; 2], [f64; 2]) {
    let other = 1 - z;
    let (g_l, g_u) = classifiers(u, z);
    let y1 = if_released(u, z, 1, Slice::A(0));
    let y0 = if_released(u, z, 0, Slice::A(0));
    let released_a1 = if_released_given(u, z, 1);
    let flagged_a0 = if_flagged(u, z, Slice::A(0));
    let p = y1 - if_released(u, z, 1, Slice::All);
    let g_lower = if g_l { if_released(u, other, 1, Slice::A(0)) - y1 } else { 0.0 };
    let g_upper = if g_u { if_released(u, other, 0, Slice::A(0)) - y0 } else { 0.0 };
    let lower = [p + g_lower, p + released_a1 - flagged_a0 + g_lower];
    let upper = [p + flagged_a0 - g_upper, p + released_a1 - g_upper];
    (lower, upper)
}

fn check_arms(frame: &Frame) -> Result<()> {
    for z in 0..2u8 {
        if !frame.units().iter().any(|u| u.z == z && u.weight > 0.0) {
            return Err(Error::EmptyArm(z));
        }
    }
    Ok(())
}

pub fn bound_path_on_frame(frame: &Frame, z: u8) -> Result<BoundPath> {
    check_arms(frame)?;
    let n = frame.units().len();
    let (mut lb, mut ls, mut ub, mut us) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (i, u) in frame.units().iter().enumerate() {
        let (l, up) = bound_contributions(u, z);
        (lb[i], ls[i], ub[i], us[i]) = (l[0], l[1], up[0], up[1]);
    }
    let width_factor = frame.mean(|u| {
        let c = CellProbs::from_nuisance(&u.nu);
        c.p_a[0] - max2(c.y1d0, 0) - max2(c.y0d0, 0)
    });
    Ok(BoundPath {
        z,
        lower: AffinePath::from_contributions(frame, &lb, &ls),
        upper: AffinePath::from_contributions(frame, &ub, &us),
        width_factor,
    })
}

pub fn estimate_ai_vs_human_bounds(ds: &Dataset, fit: &NuisanceFit, z: u8, loss: &LossSpec) -> Result<BoundEstimate> {
    Ok(bound_path_on_frame(&Frame::from_sample(ds, fit)?, z)?.at(loss.l01))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Human,
    HumanAi,
    Ai,
}

impl System {
    pub fn arm(self) -> Option<usize> {
        match self {
            System::Human => Some(0),
            System::HumanAi => Some(1),
            System::Ai => None,
        }
    }
}

/// Marginal identified and bounded pieces of the confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Margins {
    /// `P(Y=1, D=0 | Z=z)`, `P(Y=0, D=0 | Z=z)`, `P(D=1 | Z=z)`.
    p10: [f64; 2],
    p00: [f64; 2],
    d1: [f64; 2],
    /// Bounds on `p11(D(z)) = ξ_0z + ξ_1z`.
    p11_lo: [f64; 2],
    p11_hi: [f64; 2],
    /// Bounds on `P(Y(0)=1, A=0)` and `P(Y(0)=0, A=1)`.
    ai_p10_lo: f64,
    ai_p10_hi: f64,
    ai_p01_lo: f64,
    ai_p01_hi: f64,
    p_a1: f64,
}

impl Margins {
    fn p01_lo(&self, z: usize) -> f64 {
        self.d1[z] - self.p11_hi[z]
    }

    fn p01_hi(&self, z: usize) -> f64 {
        self.d1[z] - self.p11_lo[z]
    }
}

fn margins(frame: &Frame) -> Margins {
    let mut m = Margins {
        p10: [0.0; 2],
        p00: [0.0; 2],
        d1: [0.0; 2],
        p11_lo: [0.0; 2],
        p11_hi: [0.0; 2],
        ai_p10_lo: 0.0,
        ai_p10_hi: 0.0,
        ai_p01_lo: 0.0,
        ai_p01_hi: 0.0,
        p_a1: 0.0,
    };
    for u in frame.units() {
        let c = CellProbs::from_nuisance(&u.nu);
        let w = u.weight;
        for z in 0..2 {
            for a in 0..2 {
                m.p10[z] += w * c.y1d0[z][a];
                m.p00[z] += w * c.y0d0[z][a];
                m.d1[z] += w * c.d1[z][a];
                let xi = xi_unchecked(&c, a, z);
                m.p11_lo[z] += w * xi.lo;
                m.p11_hi[z] += w * xi.hi;
            }
        }
        m.ai_p10_lo += w * max2(c.y1d0, 0);
        m.ai_p10_hi += w * (c.p_a[0] - max2(c.y0d0, 0));
        m.ai_p01_lo += w * max2(c.y0d0, 1);
        m.ai_p01_hi += w * (c.p_a[1] - max2(c.y1d0, 1));
        m.p_a1 += w * c.p_a[1];
    }
    m
}

pub fn per_system_on_frame(frame: &Frame, system: System, loss: &LossSpec) -> Result<IntervalBound> {
    check_arms(frame)?;
    let l = loss.l01;
    let m = margins(frame);
    Ok(match system.arm() {
        Some(z) => IntervalBound { lo: m.p10[z] + l * m.p01_lo(z), hi: m.p10[z] + l * m.p01_hi(z) },
        None => IntervalBound { lo: m.ai_p10_lo + l * m.ai_p01_lo, hi: m.ai_p10_hi + l * m.ai_p01_hi },
    })
}

pub fn per_system_risk_bounds(ds: &Dataset, fit: &NuisanceFit, system: System, loss: &LossSpec) -> Result<IntervalBound> {
    per_system_on_frame(&Frame::from_sample(ds, fit)?, system, loss)
}

/// Bounds on the risk of the rule that flags a case with probability
/// `rule(a, x)`, where `x` holds the covariate level indices.
pub fn generic_rule_on_frame(frame: &Frame, rule: &dyn Fn(u8, &[u16]) -> f64, loss: &LossSpec) -> Result<IntervalBound> {
    let l = loss.l01;
    let mut cache: Vec<Option<[f64; 2]>> = vec![None; frame.n_strata()];
    let (mut lo, mut hi) = (0.0, 0.0);
    for u in frame.units() {
        let f = match cache[u.stratum] {
            Some(f) => f,
            None => {
                let key = frame.key(u.stratum);
                let f = [rule(0, key), rule(1, key)];
                for (a, &v) in f.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::RuleRangeError { a: a as u8, value: v });
                    }
                }
                cache[u.stratum] = Some(f);
                f
            }
        };
        let c = CellProbs::from_nuisance(&u.nu);
        for a in 0..2 {
            let coef = 1.0 - (1.0 + l) * f[a];
            // Joint P(Y(0)=1, A=a | x) lies between these two values.
            let q_lo = max2(c.y1d0, a);
            let q_hi = c.p_a[a] - max2(c.y0d0, a);
            let base = l * f[a] * c.p_a[a];
            let (at_lo, at_hi) = if coef >= 0.0 { (q_lo, q_hi) } else { (q_hi, q_lo) };
            lo += u.weight * (base + coef * at_lo);
            hi += u.weight * (base + coef * at_hi);
        }
    }
    Ok(IntervalBound { lo, hi })
}

pub fn generic_rule_risk_bounds(
    ds: &Dataset,
    fit: &NuisanceFit,
    rule: &dyn Fn(u8, &[u16]) -> f64,
    loss: &LossSpec,
) -> Result<IntervalBound> {
    generic_rule_on_frame(&Frame::from_sample(ds, fit)?, rule, loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMetric {
    Fnr,
    Fpr,
    Fdr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBound {
    pub lo: f64,
    pub hi: f64,
    pub flags: Vec<BoundFlag>,
    /// Percentile resampling interval `(lower of lo, upper of hi)`, when requested.
    pub resampled: Option<(f64, f64)>,
}

const DENOMINATOR_EPS: f64 = 1e-12;

fn ratio_from_margins(m: &Margins, metric: RatioMetric, system: System) -> RatioBound {
    let (num_lo, den_lo, num_hi, den_hi) = match (system.arm(), metric) {
        (Some(z), RatioMetric::Fnr) => (m.p10[z], m.p10[z] + m.p11_hi[z], m.p10[z], m.p10[z] + m.p11_lo[z]),
        (Some(z), RatioMetric::Fpr) => {
            (m.p01_lo(z), m.p00[z] + m.p01_hi(z), m.p01_hi(z), m.p00[z] + m.p01_lo(z))
        }
        (Some(z), RatioMetric::Fdr) => (m.p01_lo(z), m.d1[z], m.p01_hi(z), m.d1[z]),
        (None, RatioMetric::Fnr) => {
            let pos = |z: usize, hi: bool| m.p10[z] + if hi { m.p11_hi[z] } else { m.p11_lo[z] };
            (m.ai_p10_lo, pos(0, true).max(pos(1, true)), m.ai_p10_hi, pos(0, false).min(pos(1, false)))
        }
        (None, RatioMetric::Fpr) => {
            let neg = |z: usize, hi: bool| m.p00[z] + if hi { m.p01_hi(z) } else { m.p01_lo(z) };
            (m.ai_p01_lo, neg(0, true).max(neg(1, true)), m.ai_p01_hi, neg(0, false).min(neg(1, false)))
        }
        (None, RatioMetric::Fdr) => (m.ai_p01_lo, m.p_a1, m.ai_p01_hi, m.p_a1),
    };
    let mut flags = Vec::new();
    let lo = if den_lo > DENOMINATOR_EPS {
        (num_lo / den_lo).clamp(0.0, 1.0)
    } else {
        flags.push(BoundFlag::DegenerateDenominator);
        0.0
    };
    let hi = if den_hi > DENOMINATOR_EPS {
        (num_hi / den_hi).clamp(0.0, 1.0)
    } else {
        if flags.is_empty() {
            flags.push(BoundFlag::DegenerateDenominator);
        }
        1.0
    };
    RatioBound { lo: lo.min(hi), hi, flags, resampled: None }
}

pub fn alt_metric_on_frame(frame: &Frame, metric: RatioMetric, system: System) -> RatioBound {
    ratio_from_margins(&margins(frame), metric, system)
}

/// Settings for percentile resampling of the ratio bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resampling {
    pub resamples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for Resampling {
    fn default() -> Self {
        Resampling { resamples: 1000, alpha: 0.05, seed: 0 }
    }
}

pub fn alt_metric_bounds(
    ds: &Dataset,
    fit: &NuisanceFit,
    metric: RatioMetric,
    system: System,
    resampling: Option<Resampling>,
) -> Result<RatioBound> {
    let frame = Frame::from_sample(ds, fit)?;
    let mut out = alt_metric_on_frame(&frame, metric, system);
    if let Some(r) = resampling {
        out.resampled = Some(resample_ratio(&frame, metric, system, r));
    }
    Ok(out)
}

/// Percentile interval from resampling units with replacement; the
/// nuisance predictions are reused, not refit.
fn resample_ratio(frame: &Frame, metric: RatioMetric, system: System, r: Resampling) -> (f64, f64) {
    let n = frame.units().len();
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let (mut los, mut his) = (Vec::with_capacity(r.resamples), Vec::with_capacity(r.resamples));
    let mut counts = vec![0u32; n];
    for _ in 0..r.resamples {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let units: Vec<Unit> = frame
            .units()
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c > 0)
            .map(|(u, &c)| Unit { weight: c as f64 / n as f64, ..u.clone() })
            .collect();
        let keys = (0..frame.n_strata()).map(|s| frame.key(s).to_vec()).collect();
        let b = alt_metric_on_frame(&Frame::from_units(units, keys, n), metric, system);
        los.push(b.lo);
        his.push(b.hi);
    }
    los.sort_by(f64::total_cmp);
    his.sort_by(f64::total_cmp);
    (quantile(&los, r.alpha / 2.0), quantile(&his, 1.0 - r.alpha / 2.0))
}

/// Empirical quantile of sorted values (lower order statistic).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = libm::floor(p * (sorted.len() - 1) as f64) as usize;
    sorted[idx.min(sorted.len() - 1)]
}
