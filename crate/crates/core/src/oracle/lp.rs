//! Bounds by direct optimization over the unidentified quantities.
//!
//! Within stratum `x` and recommendation `a`, the observables pin down
//! everything except `t_az = P(Y(0) = 1 | D(z) = 1, A = a, X = x)` for
//! `z = 0, 1`, each in `[0, 1]` and tied by the arm-invariance of
//! `P(Y(0) = 1, A = a | X = x)`:
//!
//! `y1d0[0][a] + d1[0][a]·t_a0 = y1d0[1][a] + d1[1][a]·t_a1`.
//!
//! The feasible set is a segment of the unit square, so a linear target
//! attains its extremes at the segment's end points. Targets are separable
//! across `(x, a)`.

use alloc::format;
use alloc::vec::Vec;

use crate::bounds::{IntervalBound, System};
use crate::error::{Error, Result};
use crate::frame::CellProbs;

use super::OraclePopulation;

/// Observable probabilities of each stratum, conditional on the stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTable {
    pub strata: Vec<(f64, CellProbs)>,
}

/// Observables computed straight from the population's joint tables.
pub fn observables(pop: &OraclePopulation) -> ObservableTable {
    let strata = pop
        .strata
        .iter()
        .map(|s| {
            let mut c = CellProbs {
                y1d0: [[0.0; 2]; 2],
                y0d0: [[0.0; 2]; 2],
                d1: [[0.0; 2]; 2],
                p_a: [s.p_a(0), s.p_a(1)],
                e1: s.propensity,
            };
            for z in 0..2u8 {
                for a in 0..2u8 {
                    let (zi, ai) = (z as usize, a as usize);
                    c.y1d0[zi][ai] = s.marginal(z, a, 0, 1);
                    c.y0d0[zi][ai] = s.marginal(z, a, 0, 0);
                    c.d1[zi][ai] = s.marginal(z, a, 1, 0) + s.marginal(z, a, 1, 1);
                }
            }
            (s.mass, c)
        })
        .collect();
    ObservableTable { strata }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinearTarget {
    /// `P(Y(0) = 1, D = 1, A = a)`.
    Theta { a: u8 },
    /// `P(Y(0) = 1, D(z) = 1, A = a)`.
    Xi { a: u8, z: u8 },
    /// Risk of one system at the given false positive loss.
    SystemRisk { system: System, l01: f64 },
    /// `R_AI − R_Human` (`z = 0`) or `R_AI − R_Human+AI` (`z = 1`).
    AiMinusHuman { z: u8, l01: f64 },
    /// Risk of a stochastic rule, given as `[f(0, x), f(1, x)]` per stratum.
    Rule { f: Vec<[f64; 2]>, l01: f64 },
}

/// `(constant, coefficient on t_a0, coefficient on t_a1)` of the target's
/// contribution from one `(stratum, a)` block.
fn block(target: &LinearTarget, k: usize, c: &CellProbs, a: usize) -> (f64, f64, f64) {
    // P(Y(0)=1, A=a | x) written through arm 0.
    let q = (c.y1d0[0][a], c.d1[0][a], 0.0);
    let human = |z: usize, l: f64| {
        let mut out = (c.y1d0[z][a] + l * c.d1[z][a], 0.0, 0.0);
        if z == 0 {
            out.1 = -l * c.d1[0][a];
        } else {
            out.2 = -l * c.d1[1][a];
        }
        out
    };
    let ai = |l: f64| if a == 0 { q } else { (l * (c.p_a[1] - q.0), -l * q.1, 0.0) };
    match target {
        LinearTarget::Theta { a: ta } if *ta as usize == a => (0.0, (1.0 - c.e1) * c.d1[0][a], c.e1 * c.d1[1][a]),
        LinearTarget::Xi { a: ta, z } if *ta as usize == a => {
            if *z == 0 {
                (0.0, c.d1[0][a], 0.0)
            } else {
                (0.0, 0.0, c.d1[1][a])
            }
        }
        LinearTarget::Theta { .. } | LinearTarget::Xi { .. } => (0.0, 0.0, 0.0),
        LinearTarget::SystemRisk { system, l01 } => match system.arm() {
            Some(z) => human(z, *l01),
            None => ai(*l01),
        },
        LinearTarget::AiMinusHuman { z, l01 } => {
            let (x, h) = (ai(*l01), human(*z as usize, *l01));
            (x.0 - h.0, x.1 - h.1, x.2 - h.2)
        }
        LinearTarget::Rule { f, l01 } => {
            let fa = f[k][a];
            let coef = 1.0 - (1.0 + l01) * fa;
            (l01 * fa * c.p_a[a] + coef * q.0, coef * q.1, 0.0)
        }
    }
}

const BOX_TOL: f64 = 1e-9;

/// End points of the feasible set of `(t_a0, t_a1)`.
fn feasible_points(c: &CellProbs, a: usize) -> Result<Vec<(f64, f64)>> {
    let (c0, c1) = (c.d1[0][a], c.d1[1][a]);
    let r = c.y1d0[1][a] - c.y1d0[0][a];
    let in_box = |t: f64| (-BOX_TOL..=1.0 + BOX_TOL).contains(&t);
    let mut pts = Vec::new();
    if c0 == 0.0 && c1 == 0.0 {
        if r.abs() <= BOX_TOL {
            pts.extend([(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
        }
    } else {
        // c0·t0 − c1·t1 = r
        for t0 in [0.0, 1.0] {
            if c1 > 0.0 {
                let t1 = (c0 * t0 - r) / c1;
                if in_box(t1) {
                    pts.push((t0, t1.clamp(0.0, 1.0)));
                }
            }
        }
        for t1 in [0.0, 1.0] {
            if c0 > 0.0 {
                let t0 = (r + c1 * t1) / c0;
                if in_box(t0) {
                    pts.push((t0.clamp(0.0, 1.0), t1));
                }
            }
        }
        if c1 == 0.0 && c0 > 0.0 {
            let t0 = r / c0;
            if in_box(t0) {
                pts.extend([(t0.clamp(0.0, 1.0), 0.0), (t0.clamp(0.0, 1.0), 1.0)]);
            }
        }
        if c0 == 0.0 && c1 > 0.0 {
            let t1 = -r / c1;
            if in_box(t1) {
                pts.extend([(0.0, t1.clamp(0.0, 1.0)), (1.0, t1.clamp(0.0, 1.0))]);
            }
        }
    }
    if pts.is_empty() {
        return Err(Error::InfeasibleObservables(format!("no joint distribution matches the observables for a = {a}: {c:?}")));
    }
    Ok(pts)
}

/// Exact range of a linear target over all joint distributions consistent
/// with the observables.
pub fn lp_bounds(obs: &ObservableTable, target: &LinearTarget) -> Result<IntervalBound> {
    let (mut lo, mut hi) = (0.0, 0.0);
    for (k, (mass, c)) in obs.strata.iter().enumerate() {
        for a in 0..2 {
            let (constant, k0, k1) = block(target, k, c, a);
            let pts = feasible_points(c, a)?;
            let values = pts.iter().map(|(t0, t1)| constant + k0 * t0 + k1 * t1);
            let (mn, mx) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), v| (mn.min(v), mx.max(v)));
            lo += mass * mn;
            hi += mass * mx;
        }
    }
    Ok(IntervalBound { lo, hi })
}
