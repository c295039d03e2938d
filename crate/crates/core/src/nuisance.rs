//! Cross-fitted nuisance components: propensity `e(x)`, decision and outcome
//! models with and without conditioning on the recommendation, and the
//! recommendation model `P(A = 1 | X)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PropensityMode {
    /// Same assignment probability for every case.
    Known { value: f64 },
    /// Assignment probability per stratum label (see [`Dataset::stratum_label`]).
    KnownTable { values: BTreeMap<String, f64> },
    /// Estimated with the configured model, then clipped.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    StratifiedFrequency,
    /// Main-effects logistic regression with a ridge penalty on all coefficients.
    Logistic { ridge: f64, max_iter: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceConfig {
    pub propensity: PropensityMode,
    pub model: ModelKind,
    /// Pseudo-count added to each outcome class of a frequency estimate.
    pub smoothing: f64,
    /// Number of cross-fitting folds; `1` fits on the full sample.
    pub folds: usize,
    pub clip_eta: f64,
    pub seed: u64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            propensity: PropensityMode::Known { value: 0.5 },
            model: ModelKind::StratifiedFrequency,
            smoothing: 0.5,
            folds: 5,
            clip_eta: 0.01,
            seed: 0,
        }
    }
}

impl NuisanceConfig {
    /// Full-sample, unsmoothed frequencies with a known propensity.
    pub fn saturated(propensity: f64) -> Self {
        NuisanceConfig {
            propensity: PropensityMode::Known { value: propensity },
            smoothing: 0.0,
            folds: 1,
            ..Default::default()
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if !(self.clip_eta > 0.0 && self.clip_eta < 0.5) {
            return Err(invalid(format!("clip_eta must lie in (0, 0.5), got {}", self.clip_eta)));
        }
        if self.folds == 0 || self.folds > n {
            return Err(invalid(format!("folds must lie in [1, n = {n}], got {}", self.folds)));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(invalid("smoothing must be a nonnegative real"));
        }
        let check_p = |p: f64| {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("known propensity {p} must lie in (0, 1)")))
            }
        };
        match &self.propensity {
            PropensityMode::Known { value } => check_p(*value)?,
            PropensityMode::KnownTable { values } => values.values().try_for_each(|&p| check_p(p))?,
            PropensityMode::Estimated => {}
        }
        if let ModelKind::Logistic { ridge, max_iter } = self.model {
            if !(ridge > 0.0 && ridge.is_finite()) || max_iter == 0 {
                return Err(invalid("logistic model needs ridge > 0 and max_iter > 0"));
            }
        }
        Ok(())
    }
}

/// Out-of-fold nuisance predictions attached to one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceValues {
    /// `P(Z = 1 | X)` (clipped when estimated).
    pub e1: f64,
    /// `m^D(z, x) = P(D = 1 | Z = z, X = x)`.
    pub m_d: [f64; 2],
    /// `m^Y(z, x) = P(Y = 1 | D = 0, Z = z, X = x)`.
    pub m_y: [f64; 2],
    /// `m^D(z, x, a)`, indexed `[z][a]`.
    pub m_da: [[f64; 2]; 2],
    /// `m^Y(z, x, a)`, indexed `[z][a]`.
    pub m_ya: [[f64; 2]; 2],
    /// `P(A = 1 | X)` from both arms pooled.
    pub m_a: f64,
    /// `P(A = 1 | Z = z, X)`.
    pub m_a_arm: [f64; 2],
}

impl NuisanceValues {
    /// Propensity of the given arm, `e(z, x)`.
    #[inline]
    pub fn e(&self, z: u8) -> f64 {
        if z == 1 {
            self.e1
        } else {
            1.0 - self.e1
        }
    }

    /// `P(A = a | X)` from the pooled model.
    #[inline]
    pub fn p_a(&self, a: u8) -> f64 {
        if a == 1 {
            self.m_a
        } else {
            1.0 - self.m_a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceKind {
    E,
    MD,
    MY,
    MDa,
    MYa,
    MA,
}

impl NuisanceKind {
    fn name(self) -> &'static str {
        match self {
            NuisanceKind::E => "e",
            NuisanceKind::MD => "mD",
            NuisanceKind::MY => "mY",
            NuisanceKind::MDa => "mDa",
            NuisanceKind::MYa => "mYa",
            NuisanceKind::MA => "mA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCount {
    pub stratum: String,
    pub n: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceDiagnostics {
    pub folds: usize,
    pub fold_sizes: Vec<usize>,
    pub cell_counts: Vec<StratumCount>,
    /// Records whose estimated propensity was clipped.
    pub clipped: usize,
    /// Predictions that fell back to a coarser model because their cell was empty.
    pub fallbacks: usize,
    /// Strata whose arm-specific `P(A = 1 | Z = z, X)` differ by more than 3 SE.
    pub recommendation_imbalance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    folds: Vec<usize>,
    values: Vec<NuisanceValues>,
    diagnostics: NuisanceDiagnostics,
}

impl NuisanceFit {
    /// Wraps externally computed predictions (one per record).
    pub fn from_values(values: Vec<NuisanceValues>) -> Self {
        let n = values.len();
        NuisanceFit {
            folds: vec![0; n],
            values,
            diagnostics: NuisanceDiagnostics {
                folds: 1,
                fold_sizes: vec![n],
                cell_counts: Vec::new(),
                clipped: 0,
                fallbacks: 0,
                recommendation_imbalance: Vec::new(),
            },
        }
    }

    pub fn values(&self) -> &[NuisanceValues] {
        &self.values
    }

    pub fn fold_of(&self, record: usize) -> usize {
        self.folds[record]
    }

    pub fn diagnostics(&self) -> &NuisanceDiagnostics {
        &self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Out-of-fold probability of the requested kind for one record.
pub fn predict(fit: &NuisanceFit, kind: NuisanceKind, record: usize, z: u8, a: Option<u8>) -> Result<f64> {
    let v = fit.values.get(record).ok_or_else(|| invalid(format!("record {record} out of range")))?;
    let (zi, need_a) = (z as usize & 1, matches!(kind, NuisanceKind::MDa | NuisanceKind::MYa));
    let ai = match (need_a, a) {
        (true, None) => return Err(Error::MissingScoreContext(kind.name())),
        (_, Some(a)) => a as usize & 1,
        (false, None) => 0,
    };
    Ok(match kind {
        NuisanceKind::E => v.e(z),
        NuisanceKind::MD => v.m_d[zi],
        NuisanceKind::MY => v.m_y[zi],
        NuisanceKind::MDa => v.m_da[zi][ai],
        NuisanceKind::MYa => v.m_ya[zi][ai],
        NuisanceKind::MA => v.m_a,
    })
}

/// Fold index of a record id under `seed`.
pub fn fold_for(seed: u64, id: &str, folds: usize) -> usize {
    if folds <= 1 {
        return 0;
    }
    (math::seeded_hash(seed, id.as_bytes()) % folds as u64) as usize
}

pub fn fit_nuisance(ds: &Dataset, cfg: &NuisanceConfig) -> Result<NuisanceFit> {
    let n = ds.len();
    cfg.check(n)?;
    let k = cfg.folds;
    let folds: Vec<usize> = ds.records().iter().map(|r| fold_for(cfg.seed, &r.id, k)).collect();
    let mut fold_sizes = vec![0usize; k];
    for &f in &folds {
        fold_sizes[f] += 1;
    }

    let mut values = vec![None; n];
    let mut fallbacks = 0usize;
    let mut clipped = 0usize;
    for fold in 0..k {
        let held: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
        if held.is_empty() {
            continue;
        }
        let train: Vec<usize> = if k == 1 { (0..n).collect() } else { (0..n).filter(|&i| folds[i] != fold).collect() };
        let predictions = match cfg.model {
            ModelKind::StratifiedFrequency => frequency::predict_fold(ds, cfg, &train, &held, &mut fallbacks)?,
            ModelKind::Logistic { ridge, max_iter } => {
                logistic::predict_fold(ds, &train, &held, ridge, max_iter, &mut fallbacks)?
            }
        };
        for (&i, mut v) in held.iter().zip(predictions) {
            v.e1 = match &cfg.propensity {
                PropensityMode::Known { value } => *value,
                PropensityMode::KnownTable { values } => {
                    let label = ds.stratum_label(ds.stratum_of(i));
                    *values.get(&label).ok_or_else(|| invalid(format!("no known propensity for stratum `{label}`")))?
                }
                PropensityMode::Estimated => {
                    let c = v.e1.clamp(cfg.clip_eta, 1.0 - cfg.clip_eta);
                    if c != v.e1 {
                        clipped += 1;
                    }
                    c
                }
            };
            values[i] = Some(v);
        }
    }

    let diagnostics = NuisanceDiagnostics {
        folds: k,
        fold_sizes,
        cell_counts: cell_counts(ds),
        clipped,
        fallbacks,
        recommendation_imbalance: recommendation_imbalance(ds),
    };
    Ok(NuisanceFit { folds, values: values.into_iter().map(|v| v.expect("every fold predicted")).collect(), diagnostics })
}

fn cell_counts(ds: &Dataset) -> Vec<StratumCount> {
    let mut n = vec![[0usize; 2]; ds.n_strata()];
    for (i, r) in ds.records().iter().enumerate() {
        n[ds.stratum_of(i)][r.z as usize] += 1;
    }
    n.into_iter().enumerate().map(|(s, n)| StratumCount { stratum: ds.stratum_label(s), n }).collect()
}

fn recommendation_imbalance(ds: &Dataset) -> Vec<String> {
    let mut counts = vec![[[0usize; 2]; 2]; ds.n_strata()];
    for (i, r) in ds.records().iter().enumerate() {
        counts[ds.stratum_of(i)][r.z as usize][r.a as usize] += 1;
    }
    let mut flagged = Vec::new();
    for (s, c) in counts.iter().enumerate() {
        let n0 = (c[0][0] + c[0][1]) as f64;
        let n1 = (c[1][0] + c[1][1]) as f64;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let p0 = c[0][1] as f64 / n0;
        let p1 = c[1][1] as f64 / n1;
        let pooled = (c[0][1] + c[1][1]) as f64 / (n0 + n1);
        let se = math::sqrt(pooled * (1.0 - pooled) * (1.0 / n0 + 1.0 / n1));
        let diff = (p1 - p0).abs();
        if (se > 0.0 && diff > 3.0 * se) || (se == 0.0 && diff > 0.0) {
            flagged.push(ds.stratum_label(s));
        }
    }
    flagged
}

/// Binary-outcome tallies for one conditioning cell.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n: f64,
    pos: f64,
}

impl Tally {
    fn add(&mut self, positive: bool) {
        self.n += 1.0;
        if positive {
            self.pos += 1.0;
        }
    }

    fn rate(&self, smoothing: f64) -> Option<f64> {
        let den = self.n + 2.0 * smoothing;
        if den > 0.0 {
            Some((self.pos + smoothing) / den)
        } else {
            None
        }
    }
}

mod frequency {
    use super::*;

    #[derive(Clone, Copy, Default)]
    struct ArmTallies {
        z_total: Tally,
        d: Tally,
        y: Tally,
        d_a: [Tally; 2],
        y_a: [Tally; 2],
        a: Tally,
    }

    #[derive(Clone, Copy, Default)]
    struct StratumTallies {
        z: Tally,
        a: Tally,
        arm: [ArmTallies; 2],
    }

    pub(super) fn predict_fold(
        ds: &Dataset,
        cfg: &NuisanceConfig,
        train: &[usize],
        held: &[usize],
        fallbacks: &mut usize,
    ) -> Result<Vec<NuisanceValues>> {
        let s = cfg.smoothing;
        let mut strata = vec![StratumTallies::default(); ds.n_strata()];
        let mut arm_level = [ArmTallies::default(); 2];
        for &i in train {
            let r = &ds.records()[i];
            let st = &mut strata[ds.stratum_of(i)];
            st.z.add(r.z == 1);
            st.a.add(r.a == 1);
            for t in [&mut st.arm[r.z as usize], &mut arm_level[r.z as usize]] {
                t.z_total.add(true);
                t.d.add(r.d == 1);
                t.d_a[r.a as usize].add(r.d == 1);
                t.a.add(r.a == 1);
                if r.d == 0 {
                    t.y.add(r.y == 1);
                    t.y_a[r.a as usize].add(r.y == 1);
                }
            }
        }

        let mut out = Vec::with_capacity(held.len());
        let mut memo: BTreeMap<usize, NuisanceValues> = BTreeMap::new();
        for &i in held {
            let stratum = ds.stratum_of(i);
            if let Some(v) = memo.get(&stratum) {
                out.push(*v);
                continue;
            }
            let st = &strata[stratum];
            let mut fell_back = false;
            let mut or_else = |primary: Option<f64>, fallback: f64| -> f64 {
                primary.unwrap_or_else(|| {
                    fell_back = true;
                    fallback
                })
            };
            let mut v = NuisanceValues {
                e1: 0.5,
                m_d: [0.0; 2],
                m_y: [0.0; 2],
                m_da: [[0.0; 2]; 2],
                m_ya: [[0.0; 2]; 2],
                m_a: 0.5,
                m_a_arm: [0.5; 2],
            };
            for z in 0..2 {
                let cell = &st.arm[z];
                if cell.z_total.n == 0.0 && s == 0.0 {
                    return Err(Error::EmptyCell { stratum: ds.stratum_label(stratum), arm: z as u8 });
                }
                let arm_y = arm_level[z].y.rate(0.0).unwrap_or(0.5);
                let m_d = or_else(cell.d.rate(s), arm_level[z].d.rate(0.0).unwrap_or(0.5));
                let m_y = or_else(cell.y.rate(s), arm_y);
                v.m_d[z] = m_d;
                v.m_y[z] = m_y;
                for a in 0..2 {
                    v.m_da[z][a] = or_else(cell.d_a[a].rate(s), m_d);
                    v.m_ya[z][a] = or_else(cell.y_a[a].rate(s), m_y);
                }
                v.m_a_arm[z] = or_else(cell.a.rate(s), 0.5);
            }
            v.e1 = or_else(st.z.rate(s), 0.5);
            v.m_a = or_else(st.a.rate(s), 0.5);
            if fell_back {
                *fallbacks += held.iter().filter(|&&j| ds.stratum_of(j) == stratum).count();
            }
            memo.insert(stratum, v);
            out.push(v);
        }
        Ok(out)
    }
}

mod logistic {
    use super::*;

    /// Intercept plus one-hot main effects (first level dropped).
    fn features(ds: &Dataset, i: usize) -> Vec<f64> {
        let r = &ds.records()[i];
        let mut x = vec![1.0];
        for (spec, &lvl) in ds.schema().covariates.iter().zip(&r.covariates) {
            for l in 1..spec.levels.len() {
                x.push(if lvl as usize == l { 1.0 } else { 0.0 });
            }
        }
        x
    }

    fn sigmoid(t: f64) -> f64 {
        if t >= 0.0 {
            1.0 / (1.0 + libm::exp(-t))
        } else {
            let e = libm::exp(t);
            e / (1.0 + e)
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Solves `h · x = g` for symmetric positive definite `h` (row-major).
    fn cholesky_solve(h: &[f64], g: &[f64], p: usize) -> Option<Vec<f64>> {
        let mut l = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let mut sum = h[i * p + j];
                for k in 0..j {
                    sum -= l[i * p + k] * l[j * p + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return None;
                    }
                    l[i * p + i] = math::sqrt(sum);
                } else {
                    l[i * p + j] = sum / l[j * p + j];
                }
            }
        }
        let mut y = vec![0.0; p];
        for i in 0..p {
            let s: f64 = (0..i).map(|k| l[i * p + k] * y[k]).sum();
            y[i] = (g[i] - s) / l[i * p + i];
        }
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|k| l[k * p + i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i * p + i];
        }
        Some(x)
    }

    /// Penalized mean log-likelihood maximizer; `None` when `rows` is empty.
    pub(super) fn fit(xs: &[Vec<f64>], ys: &[bool], ridge: f64, max_iter: usize) -> Result<Option<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(None);
        }
        let p = xs[0].len();
        let m = xs.len() as f64;
        let objective = |beta: &[f64]| -> f64 {
            let ll: f64 = xs
                .iter()
                .zip(ys)
                .map(|(x, &y)| {
                    let t = dot(x, beta);
                    // log(1 + e^t) computed stably
                    let softplus = if t > 0.0 { t + libm::log1p(libm::exp(-t)) } else { libm::log1p(libm::exp(t)) };
                    if y {
                        t - softplus
                    } else {
                        -softplus
                    }
                })
                .sum();
            ll / m - 0.5 * ridge * dot(beta, beta)
        };
        let mut beta = vec![0.0; p];
        let mut grad_norm = f64::INFINITY;
        for _ in 0..max_iter {
            let mut g = vec![0.0; p];
            let mut h = vec![0.0; p * p];
            for (x, &y) in xs.iter().zip(ys) {
                let mu = sigmoid(dot(x, &beta));
                let w = mu * (1.0 - mu);
                let resid = if y { 1.0 } else { 0.0 } - mu;
                for i in 0..p {
                    g[i] += resid * x[i] / m;
                    for j in 0..=i {
                        h[i * p + j] += w * x[i] * x[j] / m;
                    }
                }
            }
            for i in 0..p {
                g[i] -= ridge * beta[i];
                h[i * p + i] += ridge;
                for j in 0..i {
                    h[j * p + i] = h[i * p + j];
                }
            }
            grad_norm = math::sqrt(dot(&g, &g));
            if grad_norm <= 1e-8 {
                return Ok(Some(beta));
            }
            let step = cholesky_solve(&h, &g, p).ok_or(Error::NonConvergence { iterations: 0, gradient_norm: grad_norm })?;
            let base = objective(&beta);
            let mut scale = 1.0;
            loop {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                if objective(&trial) >= base - 1e-15 || scale < 1e-10 {
                    beta = trial;
                    break;
                }
                scale *= 0.5;
            }
        }
        Err(Error::NonConvergence { iterations: max_iter, gradient_norm: grad_norm })
    }

    pub(super) fn predict_fold(
        ds: &Dataset,
        train: &[usize],
        held: &[usize],
        ridge: f64,
        max_iter: usize,
        fallbacks: &mut usize,
    ) -> Result<Vec<NuisanceValues>> {
        let recs = ds.records();
        let feats: Vec<Vec<f64>> = (0..ds.len()).map(|i| features(ds, i)).collect();
        let fit_on = |filter: &dyn Fn(usize) -> bool, target: &dyn Fn(usize) -> bool| -> Result<Option<Vec<f64>>> {
            let rows: Vec<usize> = train.iter().copied().filter(|&i| filter(i)).collect();
            let xs: Vec<Vec<f64>> = rows.iter().map(|&i| feats[i].clone()).collect();
            let ys: Vec<bool> = rows.iter().map(|&i| target(i)).collect();
            fit(&xs, &ys, ridge, max_iter)
        };
        let e = fit_on(&|_| true, &|i| recs[i].z == 1)?;
        let m_a = fit_on(&|_| true, &|i| recs[i].a == 1)?;
        let mut m_d = [None, None];
        let mut m_y = [None, None];
        let mut m_a_arm = [None, None];
        let mut m_da = [[None, None], [None, None]];
        let mut m_ya = [[None, None], [None, None]];
        for z in 0..2u8 {
            let zi = z as usize;
            m_d[zi] = fit_on(&|i| recs[i].z == z, &|i| recs[i].d == 1)?;
            m_y[zi] = fit_on(&|i| recs[i].z == z && recs[i].d == 0, &|i| recs[i].y == 1)?;
            m_a_arm[zi] = fit_on(&|i| recs[i].z == z, &|i| recs[i].a == 1)?;
            for a in 0..2u8 {
                m_da[zi][a as usize] = fit_on(&|i| recs[i].z == z && recs[i].a == a, &|i| recs[i].d == 1)?;
                m_ya[zi][a as usize] =
                    fit_on(&|i| recs[i].z == z && recs[i].a == a && recs[i].d == 0, &|i| recs[i].y == 1)?;
            }
        }
        let mut out = Vec::with_capacity(held.len());
        for &i in held {
            let x = &feats[i];
            let mut fell_back = false;
            let mut eval = |beta: &Option<Vec<f64>>, fallback: f64| match beta {
                Some(b) => sigmoid(dot(x, b)),
                None => {
                    fell_back = true;
                    fallback
                }
            };
            let mut v = NuisanceValues {
                e1: eval(&e, 0.5),
                m_d: [0.0; 2],
                m_y: [0.0; 2],
                m_da: [[0.0; 2]; 2],
                m_ya: [[0.0; 2]; 2],
                m_a: eval(&m_a, 0.5),
                m_a_arm: [0.5; 2],
            };
            for z in 0..2 {
                v.m_d[z] = eval(&m_d[z], 0.5);
                v.m_y[z] = eval(&m_y[z], 0.5);
                v.m_a_arm[z] = eval(&m_a_arm[z], v.m_a);
                for a in 0..2 {
                    v.m_da[z][a] = eval(&m_da[z][a], v.m_d[z]);
                    v.m_ya[z][a] = eval(&m_ya[z][a], v.m_y[z]);
                }
            }
            if fell_back {
                *fallbacks += 1;
            }
            out.push(v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CaseRecord, CovariateSpec, DatasetSchema};
    use alloc::string::ToString;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: usize, z: u8, d: u8, a: u8, y: u8, x: u16) -> CaseRecord {
        CaseRecord { id: id.to_string(), z, d, a, y, covariates: vec![x], scores: [None; 3] }
    }

    fn one_cov(levels: usize) -> DatasetSchema {
        DatasetSchema::new(vec![CovariateSpec::integer("s", 0, levels as i64 - 1)]).unwrap()
    }

    fn random_dataset(n: usize, seed: u64) -> (Dataset, Vec<[f64; 4]>) {
        // per stratum: P(Z=1), P(A=1), P(D=1|z,a) base, P(Y=1|...) base
        let truth = vec![[0.5, 0.3, 0.2, 0.4], [0.3, 0.6, 0.5, 0.2], [0.7, 0.5, 0.35, 0.6], [0.5, 0.2, 0.1, 0.3]];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|i| {
                let s = rng.random_range(0..4usize);
                let t = truth[s];
                let z = rng.random_bool(t[0]) as u8;
                let a = rng.random_bool(t[1]) as u8;
                let pd = (t[2] + 0.1 * z as f64 + 0.2 * a as f64).min(0.95);
                let d = rng.random_bool(pd) as u8;
                let y = rng.random_bool(t[3]) as u8;
                rec(i, z, d, a, y, s as u16)
            })
            .collect();
        (Dataset::from_records(one_cov(4), recs).unwrap(), truth)
    }

    #[test]
    fn known_propensity_is_returned_verbatim() {
        let (ds, _) = random_dataset(400, 1);
        let fit = fit_nuisance(&ds, &NuisanceConfig::default()).unwrap();
        for i in 0..ds.len() {
            assert_eq!(predict(&fit, NuisanceKind::E, i, 1, None).unwrap(), 0.5);
            assert_eq!(predict(&fit, NuisanceKind::E, i, 0, None).unwrap(), 0.5);
        }
    }

    #[test]
    fn saturated_frequency_examples() {
        // Y = 1 exactly when D = 0 in arm 1.
        let recs = vec![rec(1, 1, 0, 0, 1, 0), rec(2, 1, 1, 0, 0, 0), rec(3, 1, 1, 1, 0, 0), rec(4, 1, 1, 1, 0, 0), rec(5, 0, 0, 0, 1, 0)];
        let ds = Dataset::from_records(one_cov(1), recs).unwrap();
        let fit = fit_nuisance(&ds, &NuisanceConfig::saturated(0.5)).unwrap();
        assert_eq!(predict(&fit, NuisanceKind::MY, 0, 1, None).unwrap(), 1.0);
        assert_eq!(predict(&fit, NuisanceKind::MD, 0, 1, None).unwrap(), 0.75);
        assert_eq!(predict(&fit, NuisanceKind::MDa, 0, 1, Some(1)).unwrap(), 1.0);
        assert_eq!(predict(&fit, NuisanceKind::MDa, 0, 1, None), Err(Error::MissingScoreContext("mDa")));
    }

    #[test]
    fn estimated_propensity_is_clipped() {
        // 999 treated and 1 control record in one stratum: raw estimate 0.999.
        let recs: Vec<CaseRecord> = (0..1000).map(|i| rec(i, (i != 0) as u8, 0, 0, 0, 0)).collect();
        let ds = Dataset::from_records(one_cov(1), recs).unwrap();
        let cfg = NuisanceConfig { propensity: PropensityMode::Estimated, smoothing: 0.0, folds: 1, ..Default::default() };
        let fit = fit_nuisance(&ds, &cfg).unwrap();
        assert_eq!(predict(&fit, NuisanceKind::E, 5, 1, None).unwrap(), 0.99);
        assert_eq!(fit.diagnostics().clipped, 1000);
    }

    #[test]
    fn empty_cell_without_smoothing_is_an_error() {
        let recs = vec![rec(1, 0, 0, 0, 0, 0), rec(2, 1, 0, 0, 0, 0), rec(3, 0, 0, 0, 1, 1)];
        let ds = Dataset::from_records(one_cov(2), recs).unwrap();
        let err = fit_nuisance(&ds, &NuisanceConfig::saturated(0.5)).unwrap_err();
        assert!(matches!(err, Error::EmptyCell { arm: 1, .. }));
        let cfg = NuisanceConfig { folds: 1, ..Default::default() };
        assert!(fit_nuisance(&ds, &cfg).is_ok());
    }

    #[test]
    fn config_validation() {
        let (ds, _) = random_dataset(10, 2);
        let bad = |cfg: NuisanceConfig| fit_nuisance(&ds, &cfg).is_err();
        assert!(bad(NuisanceConfig { clip_eta: 0.5, ..Default::default() }));
        assert!(bad(NuisanceConfig { folds: 11, ..Default::default() }));
        assert!(bad(NuisanceConfig { propensity: PropensityMode::Known { value: 1.0 }, ..Default::default() }));
    }

    #[test]
    fn frequency_predictions_converge_to_truth() {
        let (ds, truth) = random_dataset(100_000, 3);
        let cfg = NuisanceConfig { propensity: PropensityMode::Estimated, ..Default::default() };
        let fit = fit_nuisance(&ds, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for (i, v) in fit.values().iter().enumerate() {
            let t = truth[ds.stratum_of(i)];
            worst = worst.max((v.e1 - t[0]).abs()).max((v.m_a - t[1]).abs());
            for z in 0..2 {
                worst = worst.max((v.m_y[z] - t[3]).abs());
                for a in 0..2 {
                    let pd = (t[2] + 0.1 * z as f64 + 0.2 * a as f64).min(0.95);
                    worst = worst.max((v.m_da[z][a] - pd).abs()).max((v.m_ya[z][a] - t[3]).abs());
                }
                let pd = t[2] + 0.1 * z as f64 + 0.2 * t[1];
                worst = worst.max((v.m_d[z] - pd).abs());
            }
        }
        // Smallest training cells hold about 1200 records (SE near 0.014).
        assert!(worst < 0.06, "max abs error {worst}");
    }

    #[test]
    fn total_probability_holds_for_unsmoothed_fits() {
        let (ds, _) = random_dataset(3000, 4);
        let cfg = NuisanceConfig { smoothing: 0.0, ..Default::default() };
        let fit = fit_nuisance(&ds, &cfg).unwrap();
        for (i, v) in fit.values().iter().enumerate() {
            // Empirical P(A=1 | Z=z, X) in the fitting folds.
            let fold = fit.fold_of(i);
            let s = ds.stratum_of(i);
            for z in 0..2u8 {
                let pool: Vec<&CaseRecord> = ds
                    .records()
                    .iter()
                    .enumerate()
                    .filter(|&(j, r)| fit.fold_of(j) != fold && ds.stratum_of(j) == s && r.z == z)
                    .map(|(_, r)| r)
                    .collect();
                let w = pool.iter().filter(|r| r.a == 1).count() as f64 / pool.len() as f64;
                let mixed = w * v.m_da[z as usize][1] + (1.0 - w) * v.m_da[z as usize][0];
                assert!((mixed - v.m_d[z as usize]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn predictions_ignore_record_order() {
        let (ds, _) = random_dataset(800, 5);
        let cfg = NuisanceConfig { seed: 11, ..Default::default() };
        let fit = fit_nuisance(&ds, &cfg).unwrap();
        let mut recs = ds.records().to_vec();
        recs.reverse();
        let rev = Dataset::from_records(ds.schema().clone(), recs).unwrap();
        let fit_rev = fit_nuisance(&rev, &cfg).unwrap();
        let n = ds.len();
        for i in 0..n {
            assert_eq!(fit.values()[i], fit_rev.values()[n - 1 - i]);
        }
    }

    #[test]
    fn out_of_fold_discipline() {
        let (ds, _) = random_dataset(600, 6);
        let cfg = NuisanceConfig { seed: 3, ..Default::default() };
        let fit = fit_nuisance(&ds, &cfg).unwrap();
        let target = 0;
        let own = fit.fold_of(target);
        // Flipping the outcome of a same-fold record leaves the target untouched;
        // flipping one in another fold of the same stratum changes it.
        let same = (1..ds.len()).find(|&j| fit.fold_of(j) == own && ds.stratum_of(j) == ds.stratum_of(target)).unwrap();
        let other = (1..ds.len())
            .find(|&j| fit.fold_of(j) != own && ds.stratum_of(j) == ds.stratum_of(target) && ds.records()[j].d == 0)
            .unwrap();
        let flip = |j: usize| {
            let mut recs = ds.records().to_vec();
            recs[j].y ^= 1;
            recs[j].d ^= 1;
            fit_nuisance(&Dataset::from_records(ds.schema().clone(), recs).unwrap(), &cfg).unwrap()
        };
        assert_eq!(flip(same).values()[target], fit.values()[target]);
        assert_ne!(flip(other).values()[target], fit.values()[target]);
    }

    #[test]
    fn logistic_recovers_saturated_rates_on_one_hot_design() {
        let (ds, _) = random_dataset(4000, 7);
        let freq = fit_nuisance(&ds, &NuisanceConfig { smoothing: 0.0, folds: 1, ..Default::default() }).unwrap();
        let cfg = NuisanceConfig { model: ModelKind::Logistic { ridge: 1e-9, max_iter: 100 }, smoothing: 0.0, folds: 1, ..Default::default() };
        let logit = fit_nuisance(&ds, &cfg).unwrap();
        // One covariate, one-hot coded: the logistic fit is saturated for m^D and m^Y.
        for (f, l) in freq.values().iter().zip(logit.values()) {
            for z in 0..2 {
                assert!((f.m_d[z] - l.m_d[z]).abs() < 1e-5);
                assert!((f.m_y[z] - l.m_y[z]).abs() < 1e-5);
            }
            assert!((f.m_a - l.m_a).abs() < 1e-5);
        }
    }

    #[test]
    fn logistic_reports_non_convergence() {
        let xs = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let err = logistic::fit(&xs, &[false, true], 1e-12, 2).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }
}
