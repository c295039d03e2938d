//! Exact functionals of an oracle population, computed from the full joint
//! distribution including the outcomes that are never observed.

use crate::bounds::System;
use crate::model::{classification_risk, ConfusionMatrix, LossSpec};

use super::{joint_cell, OraclePopulation, OracleStratum};

fn decision(system: System, a: u8, d0: u8, d1: u8) -> u8 {
    match system {
        System::Human => d0,
        System::HumanAi => d1,
        System::Ai => a,
    }
}

fn stratum_confusion(s: &OracleStratum, system: System) -> [[f64; 2]; 2] {
    let mut p = [[0.0; 2]; 2];
    for (i, &q) in s.joint.iter().enumerate() {
        let (a, d0, d1, y0) = joint_cell(i);
        p[y0 as usize][decision(system, a, d0, d1) as usize] += q;
    }
    p
}

/// Joint proportions of `(Y(0), decision)` for a system.
pub fn confusion(pop: &OraclePopulation, system: System) -> ConfusionMatrix {
    let mut p = [[0.0; 2]; 2];
    for s in &pop.strata {
        let c = stratum_confusion(s, system);
        for y in 0..2 {
            for d in 0..2 {
                p[y][d] += s.mass * c[y][d];
            }
        }
    }
    ConfusionMatrix { p00: p[0][0], p01: p[0][1], p10: p[1][0], p11: p[1][1] }
}

pub fn system_risk(pop: &OraclePopulation, system: System, loss: &LossSpec) -> f64 {
    classification_risk(&confusion(pop, system), loss)
}

fn stratum_risk(s: &OracleStratum, system: System, loss: &LossSpec) -> f64 {
    let c = stratum_confusion(s, system);
    let cm = ConfusionMatrix { p00: c[0][0], p01: c[0][1], p10: c[1][0], p11: c[1][1] };
    classification_risk(&cm, loss)
}

/// Risk of the rule flagging with probability `rule(a, x)`; `x` is `[k]`
/// for stratum `k`.
pub fn rule_risk(pop: &OraclePopulation, rule: &dyn Fn(u8, &[u16]) -> f64, loss: &LossSpec) -> f64 {
    let mut total = 0.0;
    for (k, s) in pop.strata.iter().enumerate() {
        let key = [k as u16];
        for (i, &q) in s.joint.iter().enumerate() {
            let (a, _, _, y0) = joint_cell(i);
            let f = rule(a, &key);
            let loss_here = if y0 == 1 { 1.0 - f } else { loss.l01 * f };
            total += s.mass * q * loss_here;
        }
    }
    total
}

/// `P(Y(0) = 1, D = 1, A = a)` with `D = D(Z)`.
pub fn theta_true(pop: &OraclePopulation, a: u8) -> f64 {
    pop.strata
        .iter()
        .map(|s| s.mass * (s.propensity * s.marginal(1, a, 1, 1) + (1.0 - s.propensity) * s.marginal(0, a, 1, 1)))
        .sum()
}

/// `P(Y(0) = 1, D(z) = 1, A = a)`.
pub fn xi_true(pop: &OraclePopulation, a: u8, z: u8) -> f64 {
    pop.strata.iter().map(|s| s.mass * s.marginal(z, a, 1, 1)).sum()
}

/// Change in risk from showing the AI in the selected strata only.
pub fn provision_policy_truth(pop: &OraclePopulation, selected: &dyn Fn(usize) -> bool, loss: &LossSpec) -> f64 {
    policy_truth(pop, selected, loss, System::HumanAi)
}

/// Change in risk, relative to the human-alone system, from following the
/// AI in the selected strata only.
pub fn follow_policy_truth(pop: &OraclePopulation, selected: &dyn Fn(usize) -> bool, loss: &LossSpec) -> f64 {
    policy_truth(pop, selected, loss, System::Ai)
}

fn policy_truth(pop: &OraclePopulation, selected: &dyn Fn(usize) -> bool, loss: &LossSpec, system: System) -> f64 {
    pop.strata
        .iter()
        .enumerate()
        .filter(|(k, _)| selected(*k))
        .map(|(_, s)| s.mass * (stratum_risk(s, system, loss) - stratum_risk(s, System::Human, loss)))
        .sum()
}
