//! Sweeps over oracle populations comparing the closed-form estimators and
//! bounds, evaluated at the population level, with the exact truth and the
//! optimization oracle.

use aidecide_core::bounds::{
    bound_path_on_frame, generic_rule_on_frame, per_system_on_frame, theta_bounds, xi_bounds, IntervalBound, System,
};
use aidecide_core::error::Result;
use aidecide_core::estimate::risk_difference_on_frame;
use aidecide_core::math;
use aidecide_core::model::LossSpec;
use aidecide_core::oracle::{
    lp_bounds, observables, random_population, rule_risk, system_risk, theta_true, xi_true, DgpKind, LinearTarget,
    OraclePopulation, SimConfig,
};

use crate::report::OracleCheckBlock;

pub const IDENTITY_TOL: f64 = 1e-12;
pub const SHARPNESS_TOL: f64 = 1e-8;
pub const WIDTH_TOL: f64 = 1e-10;
/// Slack on truth-in-bounds checks, for rounding only.
const VALIDITY_TOL: f64 = 1e-12;

pub const DEFAULT_LOSSES: [f64; 5] = [0.01, 0.25, 1.0, 4.0, 100.0];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepStats {
    pub max_identity_error: f64,
    pub max_sharpness_gap: f64,
    pub max_width_error: f64,
    pub validity_failures: usize,
    pub checks: usize,
    pub populations: usize,
}

impl SweepStats {
    pub fn passed(&self) -> bool {
        self.max_identity_error <= IDENTITY_TOL
            && self.max_sharpness_gap <= SHARPNESS_TOL
            && self.max_width_error <= WIDTH_TOL
            && self.validity_failures == 0
    }

    fn sharp(&mut self, closed: IntervalBound, lp: IntervalBound, scale: f64) {
        let gap = (closed.lo - lp.lo).abs().max((closed.hi - lp.hi).abs()) / scale;
        self.max_sharpness_gap = self.max_sharpness_gap.max(gap);
    }

    fn valid(&mut self, b: IntervalBound, truth: f64) {
        self.checks += 1;
        if !b.contains(truth, VALIDITY_TOL) {
            self.validity_failures += 1;
        }
    }
}

/// The `i`-th population of a sweep: between 1 and `max_strata` strata,
/// unrestricted joints, propensities drawn per stratum.
pub fn sweep_population(seed: u64, i: usize, max_strata: usize) -> Result<OraclePopulation> {
    let cfg = SimConfig {
        kind: DgpKind::Random,
        n_strata: 1 + i % max_strata,
        concentration: [0.3, 1.0, 3.0][i % 3],
        propensity: None,
        with_scores: false,
        n: 0,
        seed: math::mix64(seed ^ math::mix64(i as u64)),
    };
    random_population(&cfg)
}

/// A fixed stochastic rule used for the generic-rule checks.
pub fn sweep_rule(k: usize) -> [f64; 2] {
    [(k % 3) as f64 / 2.0, 1.0 - 0.7 * (k % 2) as f64]
}

/// Runs every check on one population. Sharpness gaps are scaled by
/// `1 + l01`, the range of the loss.
pub fn check_population(pop: &OraclePopulation, losses: &[f64], stats: &mut SweepStats) -> Result<()> {
    let obs = observables(pop);
    let frame = pop.frame();
    let f: Vec<[f64; 2]> = (0..pop.strata.len()).map(sweep_rule).collect();
    let rule = |a: u8, key: &[u16]| f[key[0] as usize][a as usize];
    stats.populations += 1;

    for a in 0..2u8 {
        let (mut lo, mut hi) = (0.0, 0.0);
        for (m, c) in &obs.strata {
            let b = theta_bounds(c, a)?;
            lo += m * b.lo;
            hi += m * b.hi;
        }
        let closed = IntervalBound { lo, hi };
        stats.sharp(closed, lp_bounds(&obs, &LinearTarget::Theta { a })?, 1.0);
        stats.valid(closed, theta_true(pop, a));
        for z in 0..2u8 {
            let (mut lo, mut hi) = (0.0, 0.0);
            for (m, c) in &obs.strata {
                let b = xi_bounds(c, a, z)?;
                lo += m * b.lo;
                hi += m * b.hi;
            }
            let closed = IntervalBound { lo, hi };
            stats.sharp(closed, lp_bounds(&obs, &LinearTarget::Xi { a, z })?, 1.0);
            stats.valid(closed, xi_true(pop, a, z));
        }
    }

    let paths = [bound_path_on_frame(&frame, 0)?, bound_path_on_frame(&frame, 1)?];
    for &l in losses {
        let loss = LossSpec::new(l)?;
        let scale = 1.0 + l;
        let risk = |s: System| system_risk(pop, s, &loss);

        let est = risk_difference_on_frame(&frame, &loss)?;
        let identity = (est.beta_hat - (risk(System::HumanAi) - risk(System::Human))).abs();
        stats.max_identity_error = stats.max_identity_error.max(identity);

        for (z, path) in paths.iter().enumerate() {
            let b = path.at(l);
            let closed = IntervalBound { lo: b.lower_raw, hi: b.upper_raw };
            let lp = lp_bounds(&obs, &LinearTarget::AiMinusHuman { z: z as u8, l01: l })?;
            stats.sharp(closed, lp, scale);
            let human = if z == 0 { System::Human } else { System::HumanAi };
            stats.valid(closed, risk(System::Ai) - risk(human));
            stats.max_width_error = stats.max_width_error.max((b.width() - b.width_formula).abs());
        }

        for system in [System::Human, System::HumanAi, System::Ai] {
            let closed = per_system_on_frame(&frame, system, &loss)?;
            stats.sharp(closed, lp_bounds(&obs, &LinearTarget::SystemRisk { system, l01: l })?, scale);
            stats.valid(closed, risk(system));
        }

        let closed = generic_rule_on_frame(&frame, &rule, &loss)?;
        stats.sharp(closed, lp_bounds(&obs, &LinearTarget::Rule { f: f.clone(), l01: l })?, scale);
        stats.valid(closed, rule_risk(pop, &rule, &loss));
    }
    Ok(())
}

pub fn sweep(seed: u64, populations: usize, max_strata: usize, losses: &[f64]) -> Result<SweepStats> {
    let mut stats = SweepStats::default();
    for i in 0..populations {
        check_population(&sweep_population(seed, i, max_strata)?, losses, &mut stats)?;
    }
    Ok(stats)
}

pub fn to_block(stats: &SweepStats, seed: u64, max_strata: usize, losses: &[f64]) -> OracleCheckBlock {
    OracleCheckBlock {
        populations: stats.populations,
        seed,
        max_strata,
        losses: losses.to_vec(),
        max_identity_error: stats.max_identity_error,
        max_sharpness_gap: stats.max_sharpness_gap,
        max_width_error: stats.max_width_error,
        validity_failures: stats.validity_failures,
        checks: stats.checks,
        passed: stats.passed(),
    }
}
