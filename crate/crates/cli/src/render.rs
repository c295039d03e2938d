//! Plain-text views of a report. Everything here reads report blocks only.

use std::fmt::Write;

use aidecide_core::preference::Preference;

use crate::report::{Block, PolicyBlock, PreferenceBlock, Report};

const BAR_WIDTH: usize = 80;

fn symbol(p: Preference) -> char {
    match p {
        Preference::PreferHuman => 'H',
        Preference::PreferHumanAi => 'C',
        Preference::PreferAi => 'A',
        Preference::Ambiguous => '.',
    }
}

/// One character per grid point (subsampled to at most 80 columns).
fn preference_bar(b: &PreferenceBlock) -> String {
    let mut s = String::new();
    let who = b.subgroup.as_deref().map(|g| format!(" [{g}]")).unwrap_or_default();
    let _ = writeln!(s, "{}{} (alpha {}), grid {}", b.comparison.name(), who, b.alpha, b.grid);
    let n = b.points.len();
    let cols = n.min(BAR_WIDTH);
    let bar: String = (0..cols).map(|c| symbol(b.points[c * n / cols].label)).collect();
    let (lo, hi) = (b.points.first().map_or(0.0, |p| p.l01), b.points.last().map_or(0.0, |p| p.l01));
    let _ = writeln!(s, "  l01 {lo:<8} |{bar}| {hi}");
    for r in &b.runs {
        let _ = writeln!(s, "  {:<16} {:.4} .. {:.4}", r.label.name(), r.l01_min, r.l01_max);
    }
    s
}

/// Grid of selected cells; `#` selected, `.` not, `-` no records.
fn policy_grid(b: &PolicyBlock) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:?} policy, {:?}, l01 = {}: value {:.5} (se {:.5})",
        b.kind, b.direction, b.l01, b.value, b.se
    );
    let axes = &b.axes;
    let mark = |cell: &[i32]| {
        if b.selected_cells.iter().any(|c| c == cell) {
            '#'
        } else if b.empty_cells.iter().any(|c| c == cell) {
            '-'
        } else {
            '.'
        }
    };
    let range = |k: usize| axes.get(k).map(|a| (a.lo..=a.hi).collect::<Vec<_>>()).unwrap_or_else(|| vec![0]);
    let (outer, rows, cols) = (range(2), range(1), range(0));
    for &v in &outer {
        if let Some(ax) = axes.get(2) {
            let _ = writeln!(s, "  {} = {v}", ax.name());
        }
        let row_name = axes.get(1).map_or("", |a| a.name());
        let col_name = axes.first().map_or("", |a| a.name());
        let _ = writeln!(s, "  {row_name:>6} \\ {col_name}");
        for &r in rows.iter().rev() {
            let line: String = cols
                .iter()
                .map(|&c| {
                    let mut cell = vec![c];
                    if axes.len() > 1 {
                        cell.push(r);
                    }
                    if axes.len() > 2 {
                        cell.push(v);
                    }
                    mark(&cell)
                })
                .collect();
            let _ = writeln!(s, "  {r:>6}   {line}");
        }
    }
    s
}

pub fn render(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} {}", report.tool, report.version, report.command);
    if let Some(d) = &report.dataset {
        let _ = writeln!(s, "n = {} (control {}, treated {}), strata {}", d.n, d.n_arm[0], d.n_arm[1], d.n_strata);
    }
    for block in &report.results {
        match block {
            Block::Agreement(a) => {
                let _ = writeln!(s, "\nagreement      d=0,a=0  d=0,a=1  d=1,a=0  d=1,a=1  rate");
                for t in [&a.control, &a.treated] {
                    let p = t.proportions;
                    let _ = writeln!(
                        s,
                        "  arm z={}     {:.3}    {:.3}    {:.3}    {:.3}    {:.3}",
                        t.arm, p[0][0], p[0][1], p[1][0], p[1][1], t.agreement
                    );
                }
                let _ = writeln!(s, "  difference {:.4} (se {:.4})", a.difference, a.se);
            }
            Block::Estimate(e) => {
                let l = e.l01.map(|l| format!(" l01={l}")).unwrap_or_default();
                let g = e.subgroup.as_deref().map(|g| format!(" [{g}]")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{}{l}{g}: {:.5} (se {:.5}) CI [{:.5}, {:.5}]",
                    e.metric.name(),
                    e.beta_hat,
                    e.se,
                    e.ci_low,
                    e.ci_high
                );
            }
            Block::ArmFnp(f) => {
                let _ = writeln!(s, "fnp z={}: {:.5} (se {:.5})", f.z, f.estimate, f.se);
            }
            Block::Bounds(b) => {
                let g = b.subgroup.as_deref().map(|g| format!(" [{g}]")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{} l01={}{g}: [{:.5}, {:.5}] IM [{:.5}, {:.5}] width {:.5}{}",
                    b.comparison.name(),
                    b.l01,
                    b.lower,
                    b.upper,
                    b.im_low,
                    b.im_high,
                    b.width,
                    if b.flags.is_empty() { String::new() } else { format!(" {:?}", b.flags) }
                );
            }
            Block::SystemRisk(r) => {
                let _ = writeln!(s, "risk {:?} l01={}: [{:.5}, {:.5}]", r.system, r.l01, r.lo, r.hi);
            }
            Block::RatioBound(r) => {
                let _ = writeln!(s, "{:?} {:?}: [{:.4}, {:.4}]", r.metric, r.system, r.lo, r.hi);
            }
            Block::Preference(p) => {
                s.push('\n');
                s.push_str(&preference_bar(p));
            }
            Block::Policy(p) => {
                s.push('\n');
                s.push_str(&policy_grid(p));
            }
            Block::Simulation(m) => {
                let _ = writeln!(s, "simulated {} cases from {} strata ({:?}) -> {}", m.n, m.n_strata, m.kind, m.data_out);
            }
            Block::OracleCheck(o) => {
                let _ = writeln!(
                    s,
                    "oracle check over {} populations: identity {:.1e}, sharpness {:.1e}, width {:.1e}, {} of {} validity failures: {}",
                    o.populations,
                    o.max_identity_error,
                    o.max_sharpness_gap,
                    o.max_width_error,
                    o.validity_failures,
                    o.checks,
                    if o.passed { "pass" } else { "FAIL" }
                );
            }
        }
    }
    s
}
