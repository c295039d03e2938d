//! Weighted evaluation frame shared by the estimators.
//!
//! A frame is a list of units, each carrying an observation, its nuisance
//! predictions and a weight. A sample frame gives every record weight `1/n`;
//! a population frame enumerates every observable atom of a known
//! distribution with its probability, so the same estimator code returns the
//! exact population functional.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::model::Dataset;
use crate::nuisance::{NuisanceFit, NuisanceValues};

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub z: u8,
    pub d: u8,
    pub a: u8,
    pub y: u8,
    pub stratum: usize,
    pub scores: [Option<i32>; 3],
    pub nu: NuisanceValues,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    units: Vec<Unit>,
    keys: Vec<Vec<u16>>,
    n: usize,
}

impl Frame {
    pub fn from_sample(ds: &Dataset, fit: &NuisanceFit) -> Result<Self> {
        if fit.len() != ds.len() {
            return Err(invalid("nuisance fit does not match the dataset"));
        }
        let w = 1.0 / ds.len() as f64;
        let units = ds
            .records()
            .iter()
            .zip(fit.values())
            .enumerate()
            .map(|(i, (r, nu))| Unit {
                z: r.z,
                d: r.d,
                a: r.a,
                y: r.y,
                stratum: ds.stratum_of(i),
                scores: r.scores,
                nu: *nu,
                weight: w,
            })
            .collect();
        let keys = (0..ds.n_strata()).map(|s| ds.stratum_key(s).to_vec()).collect();
        Ok(Frame { units, keys, n: ds.len() })
    }

    /// Frame over explicit units; `n` is the sample size used for standard errors.
    pub fn from_units(units: Vec<Unit>, keys: Vec<Vec<u16>>, n: usize) -> Self {
        Frame { units, keys, n }
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn key(&self, stratum: usize) -> &[u16] {
        &self.keys[stratum]
    }

    pub fn n_strata(&self) -> usize {
        self.keys.len()
    }

    pub fn mean(&self, f: impl Fn(&Unit) -> f64) -> f64 {
        self.units.iter().map(|u| u.weight * f(u)).sum()
    }

    /// Weighted mean and weighted mean square deviation of per-unit values.
    pub fn moments(&self, values: &[f64]) -> (f64, f64) {
        let m: f64 = self.units.iter().zip(values).map(|(u, v)| u.weight * v).sum();
        let v: f64 = self.units.iter().zip(values).map(|(u, v)| u.weight * (v - m) * (v - m)).sum();
        (m, v)
    }

    /// Weighted (co)variances of two per-unit value lists: `(var a, cov, var b)`.
    pub fn covariances(&self, a: &[f64], b: &[f64]) -> (f64, f64, f64) {
        let (ma, _) = self.moments(a);
        let (mb, _) = self.moments(b);
        let mut out = (0.0, 0.0, 0.0);
        for ((u, x), y) in self.units.iter().zip(a).zip(b) {
            let (dx, dy) = (x - ma, y - mb);
            out.0 += u.weight * dx * dx;
            out.1 += u.weight * dx * dy;
            out.2 += u.weight * dy * dy;
        }
        out
    }
}

/// Conditioning used by a cell probability: all records, or only `A = a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slice {
    All,
    A(u8),
}

fn models(u: &Unit, z: u8, slice: Slice) -> (f64, f64, f64) {
    let zi = z as usize;
    match slice {
        Slice::All => (1.0, u.nu.m_d[zi], u.nu.m_y[zi]),
        Slice::A(a) => (if u.a == a { 1.0 } else { 0.0 }, u.nu.m_da[zi][a as usize], u.nu.m_ya[zi][a as usize]),
    }
}

/// Influence value for `P(Y = y, D = 0 [, A = a] | Z = z)`.
pub fn if_released(u: &Unit, z: u8, y: u8, slice: Slice) -> f64 {
    let (ind, m_d, m_y) = models(u, z, slice);
    if ind == 0.0 {
        return 0.0;
    }
    let w = if u.z == z { 1.0 / u.nu.e(z) } else { 0.0 };
    let (d, yy) = (u.d as f64, u.y as f64);
    if y == 1 {
        (1.0 - m_d) * m_y + w * (1.0 - d) * (yy - m_y) - m_y * w * (d - m_d)
    } else {
        (1.0 - m_d) * (1.0 - m_y) - w * (1.0 - d) * (yy - m_y) - (1.0 - m_y) * w * (d - m_d)
    }
}

/// Influence value for `P(D = 1 [, A = a] | Z = z)`.
pub fn if_flagged(u: &Unit, z: u8, slice: Slice) -> f64 {
    let (ind, m_d, _) = models(u, z, slice);
    if ind == 0.0 {
        return 0.0;
    }
    let w = if u.z == z { 1.0 / u.nu.e(z) } else { 0.0 };
    m_d + w * (u.d as f64 - m_d)
}

/// Influence value for `P(D = 0, A = a | Z = z)`.
pub fn if_released_given(u: &Unit, z: u8, a: u8) -> f64 {
    if u.a != a {
        return 0.0;
    }
    1.0 - if_flagged(u, z, Slice::A(a))
}

/// Uncentered influence value of the arm-`z` risk term
/// `P(Y=1, D=0 | Z=z) − l01·P(Y=0, D=0 | Z=z)`.
pub fn influence_human_unit(u: &Unit, z: u8, l01: f64) -> f64 {
    if_released(u, z, 1, Slice::All) - l01 * if_released(u, z, 0, Slice::All)
}

/// Plug-in observable probabilities conditional on one unit's covariates,
/// built from its nuisance predictions. Indexed `[z][a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbs {
    pub y1d0: [[f64; 2]; 2],
    pub y0d0: [[f64; 2]; 2],
    pub d1: [[f64; 2]; 2],
    pub p_a: [f64; 2],
    /// `P(Z = 1)` used to form marginals over the arms.
    pub e1: f64,
}

impl CellProbs {
    pub fn from_nuisance(nu: &NuisanceValues) -> Self {
        let mut c = CellProbs { y1d0: [[0.0; 2]; 2], y0d0: [[0.0; 2]; 2], d1: [[0.0; 2]; 2], p_a: [nu.p_a(0), nu.p_a(1)], e1: nu.e1 };
        for z in 0..2 {
            for a in 0..2 {
                let (m_d, m_y) = (nu.m_da[z][a], nu.m_ya[z][a]);
                c.y1d0[z][a] = c.p_a[a] * (1.0 - m_d) * m_y;
                c.y0d0[z][a] = c.p_a[a] * (1.0 - m_d) * (1.0 - m_y);
                c.d1[z][a] = c.p_a[a] * m_d;
            }
        }
        c
    }

    pub fn weighted_sum<'a>(items: impl IntoIterator<Item = (f64, &'a CellProbs)>) -> CellProbs {
        let mut out = CellProbs { y1d0: [[0.0; 2]; 2], y0d0: [[0.0; 2]; 2], d1: [[0.0; 2]; 2], p_a: [0.0; 2], e1: 0.0 };
        for (w, c) in items {
            for z in 0..2 {
                for a in 0..2 {
                    out.y1d0[z][a] += w * c.y1d0[z][a];
                    out.y0d0[z][a] += w * c.y0d0[z][a];
                    out.d1[z][a] += w * c.d1[z][a];
                }
            }
            for a in 0..2 {
                out.p_a[a] += w * c.p_a[a];
            }
            out.e1 += w * c.e1;
        }
        out
    }
}
