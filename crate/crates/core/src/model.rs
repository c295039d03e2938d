//! Trial records, schema validation, loss specification and confusion-matrix
//! arithmetic shared by every estimator.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math;

pub const COVARIATE_PREFIX: &str = "x_";
pub const SCORE_COLUMNS: [&str; 3] = ["score_fta", "score_nca", "score_nvca"];
const BINARY_COLUMNS: [&str; 4] = ["z", "d", "a", "y"];

/// A categorical covariate, or a bounded integer one expanded to its levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub levels: Vec<String>,
}

impl CovariateSpec {
    pub fn categorical<S: Into<String>>(name: S, levels: impl IntoIterator<Item = S>) -> Self {
        CovariateSpec { name: name.into(), levels: levels.into_iter().map(Into::into).collect() }
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        CovariateSpec { name: name.into(), levels: (lo..=hi).map(|v| v.to_string()).collect() }
    }

    pub fn column(&self) -> String {
        format!("{COVARIATE_PREFIX}{}", self.name)
    }

    fn level_index(&self, value: &str) -> Option<u16> {
        self.levels.iter().position(|l| l == value).map(|i| i as u16)
    }
}

/// Predicate over covariates used to define subgroups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    All,
    Is { covariate: String, level: String },
    In { covariate: String, levels: Vec<String> },
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    pub fn is(covariate: impl Into<String>, level: impl Into<String>) -> Self {
        Predicate::Is { covariate: covariate.into(), level: level.into() }
    }

    pub fn check(&self, schema: &DatasetSchema) -> Result<()> {
        let check_level = |cov: &str, level: &str| -> Result<()> {
            let spec = schema
                .covariate(cov)
                .ok_or_else(|| invalid(format!("predicate references undeclared covariate `{cov}`")))?;
            if spec.level_index(level).is_none() {
                return Err(invalid(format!("predicate references undeclared level `{level}` of `{cov}`")));
            }
            Ok(())
        };
        match self {
            Predicate::All => Ok(()),
            Predicate::Is { covariate, level } => check_level(covariate, level),
            Predicate::In { covariate, levels } => levels.iter().try_for_each(|l| check_level(covariate, l)),
            Predicate::Not(p) => p.check(schema),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().try_for_each(|p| p.check(schema)),
        }
    }

    pub fn matches(&self, schema: &DatasetSchema, record: &CaseRecord) -> bool {
        let level_of = |cov: &str| -> Option<&str> {
            let idx = schema.covariates.iter().position(|c| c.name == cov)?;
            let spec = &schema.covariates[idx];
            Some(spec.levels[record.covariates[idx] as usize].as_str())
        };
        match self {
            Predicate::All => true,
            Predicate::Is { covariate, level } => level_of(covariate) == Some(level.as_str()),
            Predicate::In { covariate, levels } => {
                level_of(covariate).is_some_and(|l| levels.iter().any(|x| x == l))
            }
            Predicate::Not(p) => !p.matches(schema, record),
            Predicate::And(ps) => ps.iter().all(|p| p.matches(schema, record)),
            Predicate::Or(ps) => ps.iter().any(|p| p.matches(schema, record)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub name: String,
    pub predicate: Predicate,
}

/// Inclusive ranges for the three risk scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRanges {
    pub fta: (i32, i32),
    pub nca: (i32, i32),
    pub nvca: (i32, i32),
}

impl Default for ScoreRanges {
    fn default() -> Self {
        ScoreRanges { fta: (1, 6), nca: (1, 6), nvca: (0, 1) }
    }
}

impl ScoreRanges {
    pub fn get(&self, axis: usize) -> (i32, i32) {
        [self.fta, self.nca, self.nvca][axis]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub subgroups: Vec<SubgroupSpec>,
    #[serde(default)]
    pub score_ranges: ScoreRanges,
}

impl DatasetSchema {
    pub fn new(covariates: Vec<CovariateSpec>) -> Result<Self> {
        let schema = DatasetSchema { covariates, ..Default::default() };
        schema.check()?;
        Ok(schema)
    }

    pub fn with_subgroup(mut self, name: impl Into<String>, predicate: Predicate) -> Result<Self> {
        self.subgroups.push(SubgroupSpec { name: name.into(), predicate });
        self.check()?;
        Ok(self)
    }

    pub fn covariate(&self, name: &str) -> Option<&CovariateSpec> {
        self.covariates.iter().find(|c| c.name == name)
    }

    pub fn subgroup(&self, name: &str) -> Option<&SubgroupSpec> {
        self.subgroups.iter().find(|s| s.name == name)
    }

    /// Level sets nonempty and unique; subgroup predicates reference declared
    /// covariates only.
    pub fn check(&self) -> Result<()> {
        for (i, c) in self.covariates.iter().enumerate() {
            if c.levels.is_empty() {
                return Err(invalid(format!("covariate `{}` has no levels", c.name)));
            }
            if c.levels.len() > u16::MAX as usize {
                return Err(invalid(format!("covariate `{}` has too many levels", c.name)));
            }
            if self.covariates[..i].iter().any(|o| o.name == c.name) {
                return Err(invalid(format!("covariate `{}` declared twice", c.name)));
            }
            let mut sorted: Vec<&String> = c.levels.iter().collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid(format!("covariate `{}` repeats a level", c.name)));
            }
        }
        for s in &self.subgroups {
            s.predicate.check(self)?;
        }
        for axis in 0..3 {
            let (lo, hi) = self.score_ranges.get(axis);
            if lo > hi {
                return Err(invalid(format!("score range for `{}` is empty", SCORE_COLUMNS[axis])));
            }
        }
        Ok(())
    }

    /// Declares every `x_` column of `raw` as categorical with its observed
    /// levels (sorted).
    pub fn infer(raw: &RawTable) -> Result<Self> {
        let mut covariates = Vec::new();
        for (j, col) in raw.header.iter().enumerate() {
            if let Some(name) = col.strip_prefix(COVARIATE_PREFIX) {
                let mut levels: Vec<String> = raw.rows.iter().filter_map(|r| r.get(j)).map(|v| v.trim().to_string()).collect();
                levels.sort();
                levels.dedup();
                levels.retain(|l| !l.is_empty());
                covariates.push(CovariateSpec { name: name.to_string(), levels });
            }
        }
        DatasetSchema::new(covariates)
    }
}

/// One trial case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub z: u8,
    pub d: u8,
    pub a: u8,
    pub y: u8,
    /// Level index per schema covariate.
    pub covariates: Vec<u16>,
    /// `[fta, nca, nvca]`, each present only if its column exists.
    pub scores: [Option<i32>; 3],
}

/// Header plus string cells, as read from a delimited file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub n_arm: [usize; 2],
    /// Share of records with `y = 1`, overall.
    pub prevalence: f64,
    /// Share of `y = 1` among `d = 0` records, per arm.
    pub prevalence_released: [f64; 2],
    pub n_strata: usize,
}

/// Validated, immutable analysis substrate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: DatasetSchema,
    records: Vec<CaseRecord>,
    strata: Vec<Vec<u16>>,
    stratum_of: Vec<usize>,
}

fn parse_binary(row: usize, column: &str, raw: &str) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::NonBinaryValue { row, column: column.to_string(), value: other.to_string() }),
    }
}

/// Validates a raw table against `schema` and returns the dataset.
///
/// Rows are numbered from 1 (data rows, header excluded) in errors. Columns
/// other than `id`, `z`, `d`, `a`, `y`, declared `x_` covariates and the score
/// columns are rejected.
pub fn validate_dataset(raw: &RawTable, schema: &DatasetSchema) -> Result<Dataset> {
    schema.check()?;
    let find = |name: &str| raw.header.iter().position(|h| h.trim() == name);
    let mut binary_idx = [0usize; 4];
    for (k, col) in BINARY_COLUMNS.iter().enumerate() {
        binary_idx[k] = find(col).ok_or_else(|| Error::MissingColumn(col.to_string()))?;
    }
    let mut cov_idx = Vec::with_capacity(schema.covariates.len());
    for c in &schema.covariates {
        let col = c.column();
        cov_idx.push(find(&col).ok_or(Error::MissingColumn(col))?);
    }
    let score_idx: Vec<Option<usize>> = SCORE_COLUMNS.iter().map(|c| find(c)).collect();
    let id_idx = find("id");
    for h in &raw.header {
        let h = h.trim();
        let known = h == "id"
            || BINARY_COLUMNS.contains(&h)
            || SCORE_COLUMNS.contains(&h)
            || schema.covariates.iter().any(|c| c.column() == h);
        if !known {
            return Err(invalid(format!("unknown column `{h}`")));
        }
    }

    let width = raw.header.len();
    let mut records = Vec::with_capacity(raw.rows.len());
    for (i, cells) in raw.rows.iter().enumerate() {
        let row = i + 1;
        if cells.len() != width {
            return Err(Error::RaggedRow { row, expected: width, found: cells.len() });
        }
        let bin = |k: usize| parse_binary(row, BINARY_COLUMNS[k], &cells[binary_idx[k]]);
        let (z, d, a, y) = (bin(0)?, bin(1)?, bin(2)?, bin(3)?);
        let mut covariates = Vec::with_capacity(cov_idx.len());
        for (spec, &j) in schema.covariates.iter().zip(&cov_idx) {
            let value = cells[j].trim();
            let level = spec.level_index(value).ok_or_else(|| Error::UnknownLevel {
                row,
                column: spec.column(),
                value: value.to_string(),
            })?;
            covariates.push(level);
        }
        let mut scores = [None; 3];
        for axis in 0..3 {
            if let Some(j) = score_idx[axis] {
                let value = cells[j].trim();
                let (lo, hi) = schema.score_ranges.get(axis);
                let parsed = value.parse::<i32>().ok().filter(|v| (lo..=hi).contains(v));
                scores[axis] = Some(parsed.ok_or_else(|| Error::ScoreOutOfRange {
                    row,
                    column: SCORE_COLUMNS[axis].to_string(),
                    value: value.to_string(),
                })?);
            }
        }
        let id = match id_idx {
            Some(j) => cells[j].trim().to_string(),
            None => row.to_string(),
        };
        records.push(CaseRecord { id, z, d, a, y, covariates, scores });
    }
    Dataset::from_records(schema.clone(), records)
}

impl Dataset {
    /// Builds a dataset from already-typed records, re-checking invariants.
    pub fn from_records(schema: DatasetSchema, records: Vec<CaseRecord>) -> Result<Self> {
        schema.check()?;
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            for (name, v) in [("z", r.z), ("d", r.d), ("a", r.a), ("y", r.y)] {
                if v > 1 {
                    return Err(Error::NonBinaryValue { row, column: name.to_string(), value: v.to_string() });
                }
            }
            if r.covariates.len() != schema.covariates.len() {
                return Err(invalid(format!("record {row} has {} covariates, schema declares {}", r.covariates.len(), schema.covariates.len())));
            }
            for (spec, &lvl) in schema.covariates.iter().zip(&r.covariates) {
                if lvl as usize >= spec.levels.len() {
                    return Err(Error::UnknownLevel { row, column: spec.column(), value: lvl.to_string() });
                }
            }
            for axis in 0..3 {
                if let Some(v) = r.scores[axis] {
                    let (lo, hi) = schema.score_ranges.get(axis);
                    if !(lo..=hi).contains(&v) {
                        return Err(Error::ScoreOutOfRange { row, column: SCORE_COLUMNS[axis].to_string(), value: v.to_string() });
                    }
                }
            }
        }
        for arm in 0..2u8 {
            if !records.iter().any(|r| r.z == arm) {
                return Err(Error::EmptyArm(arm));
            }
        }
        let mut index: BTreeMap<Vec<u16>, usize> = BTreeMap::new();
        for r in &records {
            let next = index.len();
            index.entry(r.covariates.clone()).or_insert(next);
        }
        // Strata are numbered in sorted key order so numbering is independent of row order.
        let strata: Vec<Vec<u16>> = index.keys().cloned().collect();
        for (i, key) in strata.iter().enumerate() {
            *index.get_mut(key).unwrap() = i;
        }
        let stratum_of = records.iter().map(|r| index[&r.covariates]).collect();
        Ok(Dataset { schema, records, strata, stratum_of })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn records(&self) -> &[CaseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn stratum_of(&self, record: usize) -> usize {
        self.stratum_of[record]
    }

    pub fn stratum_key(&self, stratum: usize) -> &[u16] {
        &self.strata[stratum]
    }

    /// `name=level` pairs joined by `|`; `all` for the covariate-free schema.
    pub fn stratum_label(&self, stratum: usize) -> String {
        if self.schema.covariates.is_empty() {
            return "all".to_string();
        }
        let parts: Vec<String> = self
            .schema
            .covariates
            .iter()
            .zip(&self.strata[stratum])
            .map(|(c, &l)| format!("{}={}", c.name, c.levels[l as usize]))
            .collect();
        parts.join("|")
    }

    pub fn summary(&self) -> DatasetSummary {
        let n = self.records.len();
        let mut n_arm = [0usize; 2];
        let mut released = [0usize; 2];
        let mut released_pos = [0usize; 2];
        let mut pos = 0usize;
        for r in &self.records {
            let z = r.z as usize;
            n_arm[z] += 1;
            pos += r.y as usize;
            if r.d == 0 {
                released[z] += 1;
                released_pos[z] += r.y as usize;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
        DatasetSummary {
            n,
            n_arm,
            prevalence: ratio(pos, n),
            prevalence_released: [ratio(released_pos[0], released[0]), ratio(released_pos[1], released[1])],
            n_strata: self.strata.len(),
        }
    }

    /// Records matching `predicate`, as a new dataset under the same schema.
    pub fn filter(&self, predicate: &Predicate) -> Result<Dataset> {
        let kept: Vec<CaseRecord> = self.records.iter().filter(|r| predicate.matches(&self.schema, r)).cloned().collect();
        Dataset::from_records(self.schema.clone(), kept)
    }
}

/// Losses relative to a false negative (whose loss is fixed at 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub l01: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generic: Option<GenericLoss>,
}

/// Losses for correct decisions; only meaningful alongside `l10 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenericLoss {
    pub l00: f64,
    pub l11: f64,
}

impl LossSpec {
    pub fn new(l01: f64) -> Result<Self> {
        if !(l01.is_finite() && l01 >= 0.0) {
            return Err(invalid(format!("l01 must be a nonnegative real, got {l01}")));
        }
        Ok(LossSpec { l01, generic: None })
    }

    pub fn generic(l00: f64, l01: f64, l11: f64) -> Result<Self> {
        let mut loss = LossSpec::new(l01)?;
        for (name, v) in [("l00", l00), ("l11", l11)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be a nonnegative real, got {v}")));
            }
        }
        loss.generic = Some(GenericLoss { l00, l11 });
        Ok(loss)
    }

    pub fn l10(&self) -> f64 {
        1.0
    }
}

/// Joint proportions of (Y(0), decision): `p[y][d]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl ConfusionMatrix {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        let cm = ConfusionMatrix { p00, p01, p10, p11 };
        if [p00, p01, p10, p11].iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::IncoherentInput(format!("negative or non-finite confusion entry in {cm:?}")));
        }
        let total = p00 + p01 + p10 + p11;
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::IncoherentInput(format!("confusion entries sum to {total}")));
        }
        Ok(cm)
    }

    pub fn fnr(&self) -> f64 {
        self.p10 / (self.p10 + self.p11)
    }

    pub fn fpr(&self) -> f64 {
        self.p01 / (self.p00 + self.p01)
    }

    pub fn fdr(&self) -> f64 {
        self.p01 / (self.p01 + self.p11)
    }
}

/// `p10 + l01·p01`, or the full four-cell weighting for generic losses.
pub fn classification_risk(cm: &ConfusionMatrix, loss: &LossSpec) -> f64 {
    match loss.generic {
        None => cm.p10 + loss.l01 * cm.p01,
        Some(g) => loss.l10() * cm.p10 + loss.l01 * cm.p01 + g.l11 * cm.p11 + g.l00 * cm.p00,
    }
}

/// Decision-vs-recommendation table within one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub arm: u8,
    /// `counts[d][a]`.
    pub counts: [[usize; 2]; 2],
    pub proportions: [[f64; 2]; 2],
    pub n: usize,
    pub agreement: f64,
}

pub fn agreement_table(ds: &Dataset, arm: u8) -> Result<AgreementTable> {
    let mut counts = [[0usize; 2]; 2];
    for r in ds.records().iter().filter(|r| r.z == arm) {
        counts[r.d as usize][r.a as usize] += 1;
    }
    let n: usize = counts.iter().flatten().sum();
    if n == 0 {
        return Err(Error::EmptyArm(arm));
    }
    let nf = n as f64;
    let proportions = counts.map(|row| row.map(|c| c as f64 / nf));
    let agreement = (counts[0][0] + counts[1][1]) as f64 / nf;
    Ok(AgreementTable { arm, counts, proportions, n, agreement })
}

/// Change in agreement when the recommendation is shown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementComparison {
    pub control: AgreementTable,
    pub treated: AgreementTable,
    /// Treated minus control agreement rate.
    pub difference: f64,
    /// Difference-in-means standard error.
    pub se: f64,
}

pub fn agreement_difference(ds: &Dataset) -> Result<AgreementComparison> {
    let control = agreement_table(ds, 0)?;
    let treated = agreement_table(ds, 1)?;
    let var = |t: &AgreementTable| t.agreement * (1.0 - t.agreement) / t.n as f64;
    Ok(AgreementComparison {
        control,
        treated,
        difference: treated.agreement - control.agreement,
        se: math::sqrt(var(&control) + var(&treated)),
    })
}
