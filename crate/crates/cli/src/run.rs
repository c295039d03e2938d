//! Orchestration of the subcommands into reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aidecide_core::bounds::{alt_metric_on_frame, bound_path_on_frame, per_system_on_frame, RatioMetric, Resampling, System};
use aidecide_core::estimate::{
    fnp_per_arm, generic_on_frame, metric_on_frame, risk_difference_on_frame, subgroup_analysis, Metric,
    RiskDiffEstimate, SubgroupFit,
};
use aidecide_core::frame::Frame;
use aidecide_core::math;
use aidecide_core::model::{agreement_difference, validate_dataset, Dataset, DatasetSchema, LossSpec};
use aidecide_core::nuisance::{fit_nuisance, NuisanceFit};
use aidecide_core::oracle::{random_population, sample_dataset, system_risk, OraclePopulation};
use aidecide_core::policy::{default_axes, lattice_on_frame, learn_on_frame};
use aidecide_core::preference::{invert_on_frame, Comparison};

use crate::config::{RunConfig, SubgroupFitMode};
use crate::csvio;
use crate::error::{Attribute, CliError};
use crate::oracle_check;
use crate::report::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evaluate,
    Bounds,
    Prefer,
    LearnPolicy,
    Simulate,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evaluate => "evaluate",
            Command::Bounds => "bounds",
            Command::Prefer => "prefer",
            Command::LearnPolicy => "learn-policy",
            Command::Simulate => "simulate",
            Command::OracleCheck => "oracle-check",
        }
    }
}

struct Clock {
    enabled: bool,
    start: Instant,
    laps: BTreeMap<String, f64>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock { enabled, start: Instant::now(), laps: BTreeMap::new() }
    }

    fn lap(&mut self, name: &str) {
        if self.enabled {
            let now = Instant::now();
            self.laps.insert(name.to_string(), (now - self.start).as_secs_f64() * 1e3);
            self.start = now;
        }
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.laps)
    }
}

/// A validated dataset with its full-sample nuisance fit.
struct Analysis {
    ds: Dataset,
    fit: NuisanceFit,
    frame: Frame,
}

pub fn load_dataset(path: &Path, schema: Option<&DatasetSchema>) -> Result<Dataset, CliError> {
    let raw = csvio::read_raw(path)?;
    let schema = match schema {
        Some(s) => s.clone(),
        None => DatasetSchema::infer(&raw).within("core_model")?,
    };
    validate_dataset(&raw, &schema).within("core_model")
}

fn analysis(cfg: &mut RunConfig, clock: &mut Clock) -> Result<Analysis, CliError> {
    let input = cfg.input.clone().ok_or_else(|| CliError::config("an input file is required (--input)"))?;
    let ds = load_dataset(&input, cfg.schema.as_ref())?;
    // Echo the schema actually used so that the report replays exactly.
    cfg.schema = Some(ds.schema().clone());
    clock.lap("load");
    let fit = fit_nuisance(&ds, &cfg.nuisance).within("nuisance")?;
    let frame = Frame::from_sample(&ds, &fit).within("nuisance")?;
    clock.lap("nuisance");
    Ok(Analysis { ds, fit, frame })
}

fn slice(cfg: &RunConfig, subgroup: bool) -> Slice {
    Slice { nuisance: cfg.nuisance.clone(), alpha: cfg.alpha, subgroup_fit: subgroup.then_some(cfg.subgroup_fit) }
}

fn subgroup_names(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<String>, CliError> {
    let declared: Vec<String> = ds.schema().subgroups.iter().map(|s| s.name.clone()).collect();
    if cfg.subgroups.is_empty() {
        return Ok(declared);
    }
    for name in &cfg.subgroups {
        if !declared.contains(name) {
            return Err(CliError::config(format!("subgroup `{name}` is not declared in the schema")));
        }
    }
    Ok(cfg.subgroups.clone())
}

/// Runs `f` on the frame of a declared subgroup.
fn on_subgroup<T>(
    cfg: &RunConfig,
    an: &Analysis,
    name: &str,
    f: impl FnOnce(&Frame) -> aidecide_core::error::Result<T>,
) -> Result<T, CliError> {
    let spec = an.ds.schema().subgroup(name).expect("checked subgroup");
    let how = match cfg.subgroup_fit {
        SubgroupFitMode::Reuse => SubgroupFit::Reuse(&an.fit),
        SubgroupFitMode::Refit => SubgroupFit::Refit(&cfg.nuisance),
    };
    subgroup_analysis(&an.ds, name, &spec.predicate, how, |ds, fit| f(&Frame::from_sample(ds, fit)?))
        .within("point_estimator")
}

fn estimate_block(e: &RiskDiffEstimate, l01: Option<f64>, subgroup: Option<&str>, cfg: &RunConfig) -> Block {
    let (ci_low, ci_high) = e.ci(cfg.alpha);
    Block::Estimate(EstimateBlock {
        metric: e.metric,
        l01,
        beta_hat: e.beta_hat,
        se: e.se(),
        ci_low,
        ci_high,
        n: e.n,
        subgroup: subgroup.map(str::to_string),
        config: slice(cfg, subgroup.is_some()),
    })
}

fn evaluate(cfg: &RunConfig, an: &Analysis, out: &mut Vec<Block>) -> Result<(), CliError> {
    let ag = agreement_difference(&an.ds).within("core_model")?;
    out.push(Block::Agreement(AgreementBlock {
        control: ag.control,
        treated: ag.treated,
        difference: ag.difference,
        se: ag.se,
    }));
    for &l in &cfg.l01 {
        let loss = LossSpec::new(l).within("core_model")?;
        let e = risk_difference_on_frame(&an.frame, &loss).within("point_estimator")?;
        out.push(estimate_block(&e, Some(l), None, cfg));
        if let Some(g) = cfg.generic {
            let e = generic_on_frame(&an.frame, g.l00, l, g.l11, Metric::GenericLoss).within("point_estimator")?;
            out.push(estimate_block(&e, Some(l), None, cfg));
        }
    }
    for (metric, l01) in [(Metric::FnpDiff, None), (Metric::FppDiff, None), (Metric::MisclassDiff, Some(1.0))] {
        let e = metric_on_frame(&an.frame, metric).within("point_estimator")?;
        out.push(estimate_block(&e, l01, None, cfg));
    }
    for arm in fnp_per_arm(&an.ds, &an.fit).within("point_estimator")? {
        out.push(Block::ArmFnp(ArmFnpBlock { z: arm.z, estimate: arm.estimate, se: arm.se, config: slice(cfg, false) }));
    }
    for name in subgroup_names(cfg, &an.ds)? {
        for &l in &cfg.l01 {
            let loss = LossSpec::new(l).within("core_model")?;
            let e = on_subgroup(cfg, an, &name, |f| risk_difference_on_frame(f, &loss))?;
            out.push(estimate_block(&e, Some(l), Some(&name), cfg));
        }
        let e = on_subgroup(cfg, an, &name, |f| metric_on_frame(f, Metric::MisclassDiff))?;
        out.push(estimate_block(&e, Some(1.0), Some(&name), cfg));
    }
    Ok(())
}

fn bound_blocks(cfg: &RunConfig, frame: &Frame, subgroup: Option<&str>, out: &mut Vec<Block>) -> Result<(), CliError> {
    for z in 0..2u8 {
        let path = bound_path_on_frame(frame, z).within("bounds")?;
        let comparison = if z == 0 { Comparison::AiVsHuman } else { Comparison::AiVsHumanAi };
        for &l in &cfg.l01 {
            let b = path.at(l);
            let (im_low, im_high) = b.im_interval(cfg.alpha);
            out.push(Block::Bounds(BoundsBlock {
                comparison,
                z,
                l01: l,
                lower: b.lower,
                upper: b.upper,
                se_lower: b.se_lower(),
                se_upper: b.se_upper(),
                im_low,
                im_high,
                width: b.width(),
                width_formula: b.width_formula,
                flags: b.flags.clone(),
                subgroup: subgroup.map(str::to_string),
                config: slice(cfg, subgroup.is_some()),
            }));
        }
    }
    Ok(())
}

fn bounds(cfg: &RunConfig, an: &Analysis, out: &mut Vec<Block>) -> Result<(), CliError> {
    bound_blocks(cfg, &an.frame, None, out)?;
    for &l in &cfg.l01 {
        let loss = LossSpec::new(l).within("core_model")?;
        for system in [System::Human, System::HumanAi, System::Ai] {
            let b = per_system_on_frame(&an.frame, system, &loss).within("bounds")?;
            out.push(Block::SystemRisk(SystemRiskBlock { system, l01: l, lo: b.lo, hi: b.hi, config: slice(cfg, false) }));
        }
    }
    for metric in [RatioMetric::Fnr, RatioMetric::Fpr, RatioMetric::Fdr] {
        for system in [System::Human, System::HumanAi, System::Ai] {
            let b = if cfg.ratio.resamples > 0 {
                let r = Resampling { resamples: cfg.ratio.resamples, alpha: cfg.alpha, seed: cfg.seed };
                aidecide_core::bounds::alt_metric_bounds(&an.ds, &an.fit, metric, system, Some(r)).within("bounds")?
            } else {
                alt_metric_on_frame(&an.frame, metric, system)
            };
            out.push(Block::RatioBound(RatioBlock {
                metric,
                system,
                lo: b.lo,
                hi: b.hi,
                flags: b.flags,
                resampled: b.resampled,
                resamples: cfg.ratio.resamples,
                config: slice(cfg, false),
            }));
        }
    }
    for name in subgroup_names(cfg, &an.ds)? {
        let frame = on_subgroup(cfg, an, &name, |f| Ok(f.clone()))?;
        bound_blocks(cfg, &frame, Some(&name), out)?;
    }
    Ok(())
}

fn prefer_block(cfg: &RunConfig, frame: &Frame, c: Comparison, subgroup: Option<&str>) -> Result<Block, CliError> {
    let grid = math::log_grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.points);
    let region = invert_on_frame(frame, c, &grid, cfg.alpha).within("preference_analysis")?;
    Ok(Block::Preference(PreferenceBlock {
        comparison: c,
        alpha: cfg.alpha,
        grid: cfg.grid.describe(),
        runs: region.runs,
        points: region.points,
        subgroup: subgroup.map(str::to_string),
        config: slice(cfg, subgroup.is_some()),
    }))
}

fn prefer(cfg: &RunConfig, an: &Analysis, out: &mut Vec<Block>) -> Result<(), CliError> {
    for &c in &cfg.comparisons {
        out.push(prefer_block(cfg, &an.frame, c, None)?);
    }
    for name in subgroup_names(cfg, &an.ds)? {
        let frame = on_subgroup(cfg, an, &name, |f| Ok(f.clone()))?;
        for &c in &cfg.comparisons {
            out.push(prefer_block(cfg, &frame, c, Some(&name))?);
        }
    }
    Ok(())
}

fn learn_policy(cfg: &RunConfig, an: &Analysis, out: &mut Vec<Block>) -> Result<(), CliError> {
    let axes = match &cfg.policy.axes {
        Some(a) => a.clone(),
        None => default_axes(&an.ds.schema().score_ranges),
    };
    let lattice = lattice_on_frame(&an.frame, &axes).within("policy_learning")?;
    for &kind in &cfg.policy.kinds {
        for &direction in &cfg.policy.directions {
            for &l in &cfg.l01 {
                let loss = LossSpec::new(l).within("core_model")?;
                let p = learn_on_frame(&an.frame, &lattice, kind, &loss, direction).within("policy_learning")?;
                out.push(Block::Policy(PolicyBlock {
                    kind,
                    direction,
                    l01: l,
                    axes: axes.clone(),
                    selected_cells: p.selected_cells,
                    value: p.value,
                    se: p.se,
                    cell_counts: p.cell_counts,
                    empty_cells: p.empty_cells,
                    config: slice(cfg, false),
                }));
            }
        }
    }
    Ok(())
}

fn sibling(out: Option<&PathBuf>, suffix: &str) -> Option<PathBuf> {
    out.map(|p| {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
        p.with_file_name(format!("{stem}{suffix}"))
    })
}

fn simulate(cfg: &mut RunConfig, out: &mut Vec<Block>) -> Result<(), CliError> {
    let data_out = match cfg.simulate.data_out.clone().or_else(|| sibling(cfg.output.as_ref(), ".cases.csv")) {
        Some(p) => p,
        None => return Err(CliError::config("simulate needs simulate.data_out or --out")),
    };
    let pop_out = cfg.simulate.population_out.clone().or_else(|| sibling(cfg.output.as_ref(), ".population.json"));
    cfg.simulate.data_out = Some(data_out.clone());
    cfg.simulate.population_out = pop_out.clone();

    let sim = &cfg.simulate.dgp;
    let pop = random_population(sim).within("sim_oracle")?;
    let ds = sample_dataset(&pop, sim.n, sim.seed).within("sim_oracle")?;
    csvio::write_dataset(&data_out, &ds)?;
    if let Some(p) = &pop_out {
        let text = serde_json::to_string_pretty(&pop).expect("population serializes") + "\n";
        std::fs::write(p, text).map_err(|e| CliError::io(p, e))?;
    }
    let mut truth = Vec::new();
    for &l in &cfg.l01 {
        let loss = LossSpec::new(l).within("core_model")?;
        truth.push(SystemTruth {
            l01: l,
            human: system_risk(&pop, System::Human, &loss),
            human_ai: system_risk(&pop, System::HumanAi, &loss),
            ai: system_risk(&pop, System::Ai, &loss),
        });
    }
    out.push(Block::Simulation(SimulationBlock {
        kind: sim.kind,
        n: sim.n,
        n_strata: pop.strata.len(),
        data_out: data_out.display().to_string(),
        population_out: pop_out.map(|p| p.display().to_string()),
        truth,
    }));
    Ok(())
}

fn oracle(cfg: &RunConfig, out: &mut Vec<Block>) -> Result<(), CliError> {
    let losses = oracle_check::DEFAULT_LOSSES;
    let stats = match &cfg.oracle.population {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let pop: OraclePopulation = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
            pop.check(0.0).within("sim_oracle")?;
            let mut stats = oracle_check::SweepStats::default();
            oracle_check::check_population(&pop, &losses, &mut stats).within("sim_oracle")?;
            stats
        }
        None => oracle_check::sweep(cfg.seed, cfg.oracle.populations, cfg.oracle.max_strata, &losses)
            .within("sim_oracle")?,
    };
    out.push(Block::OracleCheck(oracle_check::to_block(&stats, cfg.seed, cfg.oracle.max_strata, &losses)));
    Ok(())
}

/// Runs one command. The report is a pure function of the input bytes and
/// the configuration, apart from the optional timings.
pub fn run(command: Command, cfg: RunConfig, timings: bool) -> Result<Report, CliError> {
    let mut cfg = cfg.resolve()?;
    let mut clock = Clock::new(timings);
    let mut results = Vec::new();
    let mut dataset = None;
    let mut diagnostics = None;
    match command {
        Command::Simulate => simulate(&mut cfg, &mut results)?,
        Command::OracleCheck => oracle(&cfg, &mut results)?,
        _ => {
            let an = analysis(&mut cfg, &mut clock)?;
            dataset = Some(an.ds.summary());
            diagnostics = Some(an.fit.diagnostics().clone());
            match command {
                Command::Evaluate => evaluate(&cfg, &an, &mut results)?,
                Command::Bounds => bounds(&cfg, &an, &mut results)?,
                Command::Prefer => prefer(&cfg, &an, &mut results)?,
                Command::LearnPolicy => learn_policy(&cfg, &an, &mut results)?,
                Command::Simulate | Command::OracleCheck => unreachable!(),
            }
        }
    }
    clock.lap(command.name());
    let mut report = Report::new(command.name(), cfg);
    report.dataset = dataset;
    report.results = results;
    report.diagnostics = diagnostics;
    report.timings = clock.finish();
    Ok(report)
}
