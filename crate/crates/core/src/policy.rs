//! Monotone policies over the discrete risk-score lattice: in which score
//! cells to show the AI recommendation, and in which cells a human should
//! follow it.
//!
//! Minimizing a sum of cell weights over monotone cell sets is a
//! minimum-weight closure problem, solved exactly with a max-flow/min-cut.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bounds::classifiers;
use crate::error::{invalid, Error, Result};
use crate::frame::{if_flagged, if_released, if_released_given, Frame, Slice, Unit};
use crate::math;
use crate::model::{Dataset, LossSpec, ScoreRanges, SCORE_COLUMNS};
use crate::nuisance::NuisanceFit;

/// One lattice axis: a score column and its inclusive integer range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSpec {
    /// Index into [`SCORE_COLUMNS`].
    pub score: usize,
    pub lo: i32,
    pub hi: i32,
}

impl AxisSpec {
    pub fn name(&self) -> &'static str {
        SCORE_COLUMNS[self.score].trim_start_matches("score_")
    }
}

pub fn default_axes(ranges: &ScoreRanges) -> Vec<AxisSpec> {
    (0..3).map(|score| {
        let (lo, hi) = ranges.get(score);
        AxisSpec { score, lo, hi }
    }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLattice {
    axes: Vec<AxisSpec>,
    cells: Vec<Vec<i32>>,
    index: BTreeMap<Vec<i32>, usize>,
    counts: Vec<usize>,
    /// Lattice cell of each frame unit.
    unit_cells: Vec<usize>,
}

impl ScoreLattice {
    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn cells(&self) -> &[Vec<i32>] {
        &self.cells
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_index(&self, cell: &[i32]) -> Result<usize> {
        self.index.get(cell).copied().ok_or_else(|| Error::UnknownCell(cell.to_vec()))
    }

    /// Componentwise `a ≤ b`.
    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.cells[a].iter().zip(&self.cells[b]).all(|(x, y)| x <= y)
    }

    /// Pairs `(a, b)` where `b` covers `a`: one axis larger by one step.
    pub fn covers(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            for k in 0..c.len() {
                let mut up = c.clone();
                up[k] += 1;
                if let Some(&j) = self.index.get(&up) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn is_monotone(&self, selected: &[bool], direction: Direction) -> bool {
        monotone_under(&self.covers(), selected, direction)
    }
}

/// Checks a selection against covering pairs; by transitivity this covers
/// every comparable pair.
pub fn monotone_under(covers: &[(usize, usize)], selected: &[bool], direction: Direction) -> bool {
    covers.iter().all(|&(lo, hi)| match direction {
        Direction::Increasing => !selected[lo] || selected[hi],
        Direction::Decreasing => !selected[hi] || selected[lo],
    })
}

pub fn lattice_on_frame(frame: &Frame, axes: &[AxisSpec]) -> Result<ScoreLattice> {
    lattice_from_scores(axes, frame.units().iter().map(|u| u.scores))
}

pub fn build_lattice(ds: &Dataset, axes: &[AxisSpec]) -> Result<ScoreLattice> {
    lattice_from_scores(axes, ds.records().iter().map(|r| r.scores))
}

fn lattice_from_scores(axes: &[AxisSpec], scores: impl Iterator<Item = [Option<i32>; 3]>) -> Result<ScoreLattice> {
    if axes.is_empty() {
        return Err(invalid("policy lattice needs at least one axis"));
    }
    for ax in axes {
        if ax.score >= SCORE_COLUMNS.len() || ax.lo > ax.hi {
            return Err(invalid(format!("bad lattice axis {ax:?}")));
        }
    }
    let mut cells: Vec<Vec<i32>> = vec![Vec::new()];
    for ax in axes {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                (ax.lo..=ax.hi).map(move |v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    let index: BTreeMap<Vec<i32>, usize> = cells.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    let mut counts = vec![0usize; cells.len()];
    let mut unit_cells = Vec::new();
    for (i, sc) in scores.enumerate() {
        let mut cell = Vec::with_capacity(axes.len());
        for ax in axes {
            cell.push(sc[ax.score].ok_or(Error::MissingScores(i + 1))?);
        }
        let k = *index.get(&cell).ok_or(Error::UnknownCell(cell))?;
        counts[k] += 1;
        unit_cells.push(k);
    }
    Ok(ScoreLattice { axes: axes.to_vec(), cells, index, counts, unit_cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Show the AI recommendation; objective is the change in risk.
    Provision,
    /// Follow the AI recommendation; objective is the worst-case excess risk
    /// relative to the human-alone system.
    Follow,
}

/// Per-unit objective contribution.
pub fn unit_contribution(u: &Unit, kind: PolicyKind, l01: f64) -> f64 {
    match kind {
        PolicyKind::Provision => {
            let p10 = if_released(u, 1, 1, Slice::All) - if_released(u, 0, 1, Slice::All);
            let p00 = if_released(u, 1, 0, Slice::All) - if_released(u, 0, 0, Slice::All);
            p10 - l01 * p00
        }
        PolicyKind::Follow => {
            let (_, g_u) = classifiers(u, 0);
            let y1 = if_released(u, 0, 1, Slice::A(0));
            let y0 = if_released(u, 0, 0, Slice::A(0));
            let p = y1 - if_released(u, 0, 1, Slice::All);
            let g = if g_u { if_released(u, 1, 0, Slice::A(0)) - y0 } else { 0.0 };
            (1.0 + l01) * p + l01 * if_released_given(u, 0, 1) + if_flagged(u, 0, Slice::A(0)) - (1.0 + l01) * g
        }
    }
}

/// Cell weights (sums of weighted unit contributions) and per-unit contributions.
pub fn cell_weights(frame: &Frame, lattice: &ScoreLattice, kind: PolicyKind, l01: f64) -> (Vec<f64>, Vec<f64>) {
    let contrib: Vec<f64> = frame.units().iter().map(|u| unit_contribution(u, kind, l01)).collect();
    let mut w = vec![0.0; lattice.len()];
    for ((u, c), &k) in frame.units().iter().zip(&contrib).zip(&lattice.unit_cells) {
        w[k] += u.weight * c;
    }
    (w, contrib)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonePolicy {
    pub kind: PolicyKind,
    pub direction: Direction,
    pub l01: f64,
    pub selected_cells: Vec<Vec<i32>>,
    pub value: f64,
    pub se: f64,
    /// Weight of every lattice cell, in lattice order.
    pub weights: Vec<f64>,
    /// Mean contribution per cell (0 for empty cells).
    pub cell_means: Vec<f64>,
    pub cell_counts: Vec<usize>,
    /// Cells with no records; they only carry monotonicity constraints.
    pub empty_cells: Vec<Vec<i32>>,
}

/// Inclusion-minimal monotone set minimizing the total weight.
pub fn min_weight_monotone_set(lattice: &ScoreLattice, weights: &[f64], direction: Direction) -> Vec<bool> {
    let m = lattice.len();
    let (source, sink) = (m, m + 1);
    let mut g = FlowGraph::new(m + 2);
    let scale = weights.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    if scale == 0.0 {
        return vec![false; m];
    }
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let w = w / scale;
        // Selecting a negative-weight cell earns |w|; a positive one costs w.
        if w < 0.0 {
            g.add_edge(source, i, -w);
        } else if w > 0.0 {
            g.add_edge(i, sink, w);
        }
        total += w.abs();
    }
    let infinite = 2.0 * total + 1.0;
    for (lo, hi) in lattice.covers() {
        match direction {
            Direction::Increasing => g.add_edge(lo, hi, infinite),
            Direction::Decreasing => g.add_edge(hi, lo, infinite),
        }
    }
    g.max_flow(source, sink);
    let reach = g.reachable(source);
    (0..m).map(|i| reach[i]).collect()
}

struct FlowGraph {
    to: Vec<usize>,
    cap: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

const FLOW_EPS: f64 = 1e-13;

impl FlowGraph {
    fn new(n: usize) -> Self {
        FlowGraph { to: Vec::new(), cap: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: f64) {
        self.adj[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.adj[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0.0);
    }

    /// Edmonds-Karp augmenting paths.
    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        loop {
            let mut prev = vec![usize::MAX; self.adj.len()];
            let mut queue = VecDeque::from([s]);
            let mut seen = vec![false; self.adj.len()];
            seen[s] = true;
            while let Some(v) = queue.pop_front() {
                for &e in &self.adj[v] {
                    let w = self.to[e];
                    if !seen[w] && self.cap[e] > FLOW_EPS {
                        seen[w] = true;
                        prev[w] = e;
                        queue.push_back(w);
                    }
                }
            }
            if !seen[t] {
                return flow;
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            flow += push;
        }
    }

    fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            for &e in &self.adj[v] {
                let w = self.to[e];
                if !seen[w] && self.cap[e] > FLOW_EPS {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }
}

/// Sum of selected weights, accumulated in lattice order.
pub fn selection_value(weights: &[f64], selected: &[bool]) -> f64 {
    weights.iter().zip(selected).filter(|(_, &s)| s).map(|(w, _)| *w).sum()
}

fn value_and_se(frame: &Frame, lattice: &ScoreLattice, contrib: &[f64], selected: &[bool]) -> (f64, f64) {
    let masked: Vec<f64> =
        contrib.iter().zip(&lattice.unit_cells).map(|(c, &k)| if selected[k] { *c } else { 0.0 }).collect();
    let (mean, var) = frame.moments(&masked);
    (mean, math::sqrt(var / frame.n() as f64))
}

pub fn learn_on_frame(
    frame: &Frame,
    lattice: &ScoreLattice,
    kind: PolicyKind,
    loss: &LossSpec,
    direction: Direction,
) -> Result<MonotonePolicy> {
    for z in 0..2u8 {
        if !frame.units().iter().any(|u| u.z == z && u.weight > 0.0) {
            return Err(Error::EmptyArm(z));
        }
    }
    let (weights, contrib) = cell_weights(frame, lattice, kind, loss.l01);
    let selected = min_weight_monotone_set(lattice, &weights, direction);
    Ok(assemble(frame, lattice, kind, direction, loss.l01, weights, &contrib, &selected))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    frame: &Frame,
    lattice: &ScoreLattice,
    kind: PolicyKind,
    direction: Direction,
    l01: f64,
    weights: Vec<f64>,
    contrib: &[f64],
    selected: &[bool],
) -> MonotonePolicy {
    let mut sums = vec![0.0; lattice.len()];
    for (c, &k) in contrib.iter().zip(&lattice.unit_cells) {
        sums[k] += c;
    }
    let cell_means = sums.iter().zip(&lattice.counts).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    let (_, se) = value_and_se(frame, lattice, contrib, selected);
    MonotonePolicy {
        kind,
        direction,
        l01,
        selected_cells: lattice.cells.iter().zip(selected).filter(|(_, &s)| s).map(|(c, _)| c.clone()).collect(),
        value: selection_value(&weights, selected),
        se,
        weights,
        cell_means,
        cell_counts: lattice.counts.clone(),
        empty_cells: lattice.cells.iter().zip(&lattice.counts).filter(|(_, &n)| n == 0).map(|(c, _)| c.clone()).collect(),
    }
}

pub fn learn_provision_policy(
    ds: &Dataset,
    fit: &NuisanceFit,
    axes: &[AxisSpec],
    loss: &LossSpec,
    direction: Direction,
) -> Result<MonotonePolicy> {
    let frame = Frame::from_sample(ds, fit)?;
    let lattice = lattice_on_frame(&frame, axes)?;
    learn_on_frame(&frame, &lattice, PolicyKind::Provision, loss, direction)
}

pub fn learn_follow_policy(
    ds: &Dataset,
    fit: &NuisanceFit,
    axes: &[AxisSpec],
    loss: &LossSpec,
    direction: Direction,
) -> Result<MonotonePolicy> {
    let frame = Frame::from_sample(ds, fit)?;
    let lattice = lattice_on_frame(&frame, axes)?;
    learn_on_frame(&frame, &lattice, PolicyKind::Follow, loss, direction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub value: f64,
    pub se: f64,
}

/// Objective of an arbitrary cell set (monotone or not).
pub fn evaluate_on_frame(
    frame: &Frame,
    lattice: &ScoreLattice,
    cells: &[Vec<i32>],
    kind: PolicyKind,
    loss: &LossSpec,
) -> Result<PolicyValue> {
    let mut selected = vec![false; lattice.len()];
    for c in cells {
        selected[lattice.cell_index(c)?] = true;
    }
    let (weights, contrib) = cell_weights(frame, lattice, kind, loss.l01);
    let (_, se) = value_and_se(frame, lattice, &contrib, &selected);
    Ok(PolicyValue { value: selection_value(&weights, &selected), se })
}

pub fn evaluate_policy_value(
    ds: &Dataset,
    fit: &NuisanceFit,
    axes: &[AxisSpec],
    cells: &[Vec<i32>],
    kind: PolicyKind,
    loss: &LossSpec,
) -> Result<PolicyValue> {
    let frame = Frame::from_sample(ds, fit)?;
    let lattice = lattice_on_frame(&frame, axes)?;
    evaluate_on_frame(&frame, &lattice, cells, kind, loss)
}

/// Text grid of a policy: one block per value of the third axis, rows by
/// the second axis, columns by the first; `#` selected, `.` not, `-` empty.
pub fn render(policy: &MonotonePolicy, lattice: &ScoreLattice) -> String {
    let mut out = String::new();
    let axes = lattice.axes();
    let selected: Vec<bool> = lattice.cells().iter().map(|c| policy.selected_cells.contains(c)).collect();
    let (fixed, rows, cols) = match axes.len() {
        1 => (None, None, &axes[0]),
        2 => (None, Some(&axes[1]), &axes[0]),
        _ => (Some(&axes[2]), Some(&axes[1]), &axes[0]),
    };
    let blocks: Vec<Option<i32>> = match fixed {
        Some(ax) => (ax.lo..=ax.hi).map(Some).collect(),
        None => vec![None],
    };
    for b in blocks {
        if let (Some(v), Some(ax)) = (b, fixed) {
            out.push_str(&format!("{} = {}\n", ax.name(), v));
        }
        let row_values: Vec<Option<i32>> = match rows {
            Some(ax) => (ax.lo..=ax.hi).rev().map(Some).collect(),
            None => vec![None],
        };
        for r in row_values {
            if let (Some(v), Some(ax)) = (r, rows) {
                out.push_str(&format!("{:>5} {:>2} |", ax.name(), v));
            }
            for c in cols.lo..=cols.hi {
                let mut key = vec![c];
                key.extend(r);
                key.extend(b);
                let k = lattice.index[&key];
                let mark = if lattice.counts[k] == 0 { '-' } else if selected[k] { '#' } else { '.' };
                out.push(' ');
                out.push(mark);
            }
            out.push('\n');
        }
        out.push_str(&format!("{:>9}", cols.name()));
        for c in cols.lo..=cols.hi {
            out.push_str(&format!(" {c}"));
        }
        out.push('\n');
    }
    out
}
