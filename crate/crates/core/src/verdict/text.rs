use std::fmt::Write;

use super::AnalysisReport;

/// Compact decimal: ten places, trailing zeros trimmed, no negative zero.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn fmt_point(p: &[f64]) -> String {
    format!("({})", p.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(", "))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), fmt_num)
}

pub(super) fn render(r: &AnalysisReport) -> String {
    let mut s = String::new();
    if let Some(name) = &r.problem {
        let _ = writeln!(s, "problem: {name}");
    }
    let _ = writeln!(s, "verdict: {}", r.verdict.as_str());
    let _ = writeln!(s, "c_m = {}", fmt_num(r.c_m));
    let _ = writeln!(s, "u_min = {}  u_max = {}", fmt_opt(r.u_min), fmt_opt(r.u_max));
    if let Some(c) = r.classification {
        let _ = writeln!(s, "classification: {}", c.as_str());
    }
    let vals: Vec<String> = r.critical_values.iter().map(|&v| fmt_num(v)).collect();
    let _ = writeln!(s, "critical values: {{{}}}", vals.join(", "));
    let _ = writeln!(
        s,
        "critical points: {} distinct from {} converged of {} starts",
        r.stats.distinct_points, r.stats.converged, r.stats.starts
    );
    let _ = writeln!(s, "morse: {}", if r.is_morse { "yes" } else { "no" });
    for c in &r.continuum {
        let _ = writeln!(
            s,
            "  continuum suspected at value {} ({} chained points, spacing {:.1e}..{:.1e})",
            fmt_num(c.value),
            c.chain.len(),
            c.min_pairwise_distance,
            c.max_pairwise_distance
        );
    }
    let _ = writeln!(s, "constraint qualifications: {} failures at {} points", r.cq.failures, r.cq.points_checked);
    if let (Some(x), Some(labels)) = (&r.x, &r.labels) {
        let _ = writeln!(s, "alternatives X ({}):", x.len());
        for (p, l) in x.iter().zip(labels) {
            let _ = writeln!(s, "  [{l}] {}", fmt_point(p));
        }
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
