//! Verdicts on the set of alternatives.
//!
//! Writing `[u_min, u_max]` for the range of `g_m` on Y (a compact
//! interval when Y is compact and connected):
//!
//! | where c_m sits                         | verdict              |
//! |----------------------------------------|----------------------|
//! | outside `[u_min, u_max]`               | `INFEASIBLE`         |
//! | strictly inside, regular value         | `PARADOX_REGULAR`    |
//! | strictly inside, critical value        | `PARADOX_SUBOPTIMAL` |
//! | at `u_min` or `u_max`, Morse           | `SOLUTION_EXISTS`    |
//! | at `u_min` or `u_max`, not Morse       | `NECESSARY_ONLY`     |
//!
//! In the `SOLUTION_EXISTS` case X is finite and consists of critical
//! points at level c_m; it is enumerated from the catalog and equipped with
//! the max-label rule from [`scf`].

pub mod scf;
mod text;
pub use text::fmt_num;

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::{self, ContinuumEvidence, CriticalCatalog, CriticalConfig, LagrangianPoint};
use crate::manifold::ConstraintProblem;
use crate::tolerances::Tolerances;
pub use scf::{build_scf, scf_axiom_audit, AggregationRule, FiniteAlternatives, MaxLabelRule, ScfError};

/// Feasible points sampled for the constraint-qualification spot check.
pub const CQ_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerdictError {
    #[error("no critical points found")]
    NoCriticalPoints,
    #[error("the objective constraint has no level c_m")]
    MissingLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    BelowRange,
    AtMin,
    InteriorRegular,
    InteriorCritical,
    AtMax,
    AboveRange,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::BelowRange => "below_range",
            Classification::AtMin => "at_min",
            Classification::InteriorRegular => "interior_regular",
            Classification::InteriorCritical => "interior_critical",
            Classification::AtMax => "at_max",
            Classification::AboveRange => "above_range",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Infeasible,
    ParadoxRegular,
    ParadoxSuboptimal,
    NecessaryOnly,
    SolutionExists,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Infeasible => "INFEASIBLE",
            VerdictKind::ParadoxRegular => "PARADOX_REGULAR",
            VerdictKind::ParadoxSuboptimal => "PARADOX_SUBOPTIMAL",
            VerdictKind::NecessaryOnly => "NECESSARY_ONLY",
            VerdictKind::SolutionExists => "SOLUTION_EXISTS",
        }
    }

    pub fn is_paradox(self) -> bool {
        matches!(self, VerdictKind::ParadoxRegular | VerdictKind::ParadoxSuboptimal)
    }
}

/// Places c_m relative to the catalog's range and critical values.
pub fn classify_c(
    prob: &ConstraintProblem,
    catalog: &CriticalCatalog,
    tol: &Tolerances,
) -> Result<Classification, VerdictError> {
    let c = prob.objective().c.ok_or(VerdictError::MissingLevel)?;
    let (Some(u_min), Some(u_max)) = (catalog.u_min, catalog.u_max) else {
        return Err(VerdictError::NoCriticalPoints);
    };
    Ok(if Tolerances::relative_eq(c, u_max, tol.optimality) {
        Classification::AtMax
    } else if Tolerances::relative_eq(c, u_min, tol.optimality) {
        Classification::AtMin
    } else if c > u_max {
        Classification::AboveRange
    } else if c < u_min {
        Classification::BelowRange
    } else if catalog.is_critical_value(c, tol.value_cluster) {
        Classification::InteriorCritical
    } else {
        Classification::InteriorRegular
    })
}

/// Settings recorded in a report so a run can be reproduced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub input: Option<String>,
    pub seed: u64,
    pub starts: usize,
    pub tolerances: Option<Tolerances>,
    /// Command-line overrides, flag → value as given.
    pub overrides: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CqSummary {
    pub points_checked: usize,
    pub failures: usize,
    /// Smallest `σ_min / σ_max` seen.
    pub worst_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogStats {
    pub starts: usize,
    pub projected: usize,
    pub converged: usize,
    pub distinct_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub problem: Option<String>,
    pub verdict: VerdictKind,
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub c_m: f64,
    pub classification: Option<Classification>,
    pub critical_values: Vec<f64>,
    pub points: Vec<LagrangianPoint>,
    pub is_morse: bool,
    pub continuum: Vec<ContinuumEvidence>,
    pub cq: CqSummary,
    pub stats: CatalogStats,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<RunProvenance>,
}

impl AnalysisReport {
    /// The enumerated X, present only for `SOLUTION_EXISTS`.
    pub fn alternatives(&self) -> Option<FiniteAlternatives> {
        let points = self.x.clone()?;
        let labels = self.labels.clone()?;
        Some(FiniteAlternatives { points, labels })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        text::render(self)
    }
}

fn cq_spot_check(
    prob: &ConstraintProblem,
    catalog: &CriticalCatalog,
    cfg: &CriticalConfig,
    warnings: &mut Vec<String>,
) -> (CqSummary, Vec<DVector<f64>>) {
    let mut summary = CqSummary { points_checked: 0, failures: 0, worst_ratio: None };
    let record = |p: &[f64], summary: &mut CqSummary| {
        if let Ok(r) = prob.check_cq(p, &cfg.tol) {
            summary.points_checked += 1;
            let ratio = match (r.singular_values.first(), r.singular_values.last()) {
                (Some(&max), Some(&min)) if max > 0.0 => min / max,
                _ => 0.0,
            };
            summary.worst_ratio = Some(summary.worst_ratio.map_or(ratio, |w: f64| w.min(ratio)));
            if !r.full_rank {
                summary.failures += 1;
            }
        }
    };
    for lp in &catalog.points {
        record(&lp.p, &mut summary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de_0000_0001);
    let mut samples = Vec::with_capacity(CQ_SAMPLES);
    for _ in 0..CQ_SAMPLES * 10 {
        if samples.len() == CQ_SAMPLES {
            break;
        }
        let p0 = prob.sample_box(&mut rng);
        if let Ok(fp) = prob.project_to_y(p0.as_slice(), &cfg.tol) {
            record(fp.p.as_slice(), &mut summary);
            samples.push(fp.p);
        }
    }
    if summary.failures > 0 {
        warnings.push(format!(
            "constraint qualifications fail at {} of {} checked points",
            summary.failures, summary.points_checked
        ));
    }
    (summary, samples)
}

/// Number of single-linkage groups among `pts` at the given radius.
fn linkage_components(pts: &[DVector<f64>], radius: f64) -> usize {
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (&pts[i] - &pts[j]).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

const NOTE_ASSUMPTIONS: &str = "Y is assumed bounded (approximated by the sampling box) and connected (not checked); \
     when Y has several components, c_m only needs to be the maximum or minimum of g_m on one of them, \
     which this analysis does not test";
const NOTE_COVERAGE: &str =
    "critical points come from a multistart search; points or values missed by every start are absent";

fn infeasible_report(prob: &ConstraintProblem, c_m: f64, catalog: &CriticalCatalog, note: String) -> AnalysisReport {
    AnalysisReport {
        problem: prob.name().map(str::to_string),
        verdict: VerdictKind::Infeasible,
        u_min: catalog.u_min,
        u_max: catalog.u_max,
        c_m,
        classification: None,
        critical_values: catalog.values.clone(),
        points: catalog.points.clone(),
        is_morse: catalog.is_morse.unwrap_or(false),
        continuum: catalog.continuum.clone(),
        cq: CqSummary { points_checked: 0, failures: 0, worst_ratio: None },
        stats: CatalogStats {
            starts: catalog.starts_used,
            projected: catalog.projected,
            converged: catalog.converged,
            distinct_points: catalog.points.len(),
        },
        warnings: catalog.warnings.clone(),
        notes: vec![note],
        x: None,
        labels: None,
        provenance: None,
    }
}

/// Runs the full pipeline: critical points, Morse certification,
/// classification of c_m, and the verdict.
pub fn analyze(prob: &ConstraintProblem, cfg: &CriticalConfig) -> Result<AnalysisReport, VerdictError> {
    let c_m = prob.objective().c.ok_or(VerdictError::MissingLevel)?;
    let catalog = critical::solve_critical_points(prob, cfg);
    let catalog = critical::morse_certify(prob, catalog, cfg);
    if catalog.is_empty() {
        if catalog.projected == 0 {
            return Ok(infeasible_report(
                prob,
                c_m,
                &catalog,
                "Y unreachable in box: no start could be projected onto the constraint set".into(),
            ));
        }
        return Err(VerdictError::NoCriticalPoints);
    }
    let classification = classify_c(prob, &catalog, &cfg.tol)?;
    let is_morse = catalog.is_morse.unwrap_or(false);
    let verdict = match classification {
        Classification::BelowRange | Classification::AboveRange => VerdictKind::Infeasible,
        Classification::InteriorRegular => VerdictKind::ParadoxRegular,
        Classification::InteriorCritical => VerdictKind::ParadoxSuboptimal,
        Classification::AtMin | Classification::AtMax if is_morse => VerdictKind::SolutionExists,
        Classification::AtMin | Classification::AtMax => VerdictKind::NecessaryOnly,
    };

    let mut warnings = catalog.warnings.clone();
    let (cq, samples) = cq_spot_check(prob, &catalog, cfg, &mut warnings);
    let mut notes = vec![NOTE_ASSUMPTIONS.to_string(), NOTE_COVERAGE.to_string()];
    let (mut x, mut labels) = (None, None);

    match verdict {
        VerdictKind::Infeasible => notes.push(format!(
            "c_m = {c_m} lies outside g_m(Y) = [{}, {}], so X is empty",
            catalog.u_min.unwrap_or(f64::NAN),
            catalog.u_max.unwrap_or(f64::NAN)
        )),
        VerdictKind::ParadoxRegular => notes.push(
            "c_m is a regular value strictly inside the range of g_m|_Y: the objective constraint is not \
             optimal, so no social choice function exists on X"
                .into(),
        ),
        VerdictKind::ParadoxSuboptimal => {
            notes.push(
                "c_m is a critical value strictly inside the range of g_m|_Y: the objective constraint is not \
                 optimal, so no social choice function exists on X"
                    .into(),
            );
            let bounds = prob.bounds();
            let diag = bounds.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt();
            if linkage_components(&samples, 0.1 * diag) > 1 {
                warnings.push(
                    "sampled feasible points form several far-apart groups; if Y is disconnected, c_m may \
                     still be optimal on one of its pieces"
                        .into(),
                );
            }
        }
        VerdictKind::NecessaryOnly => notes.push(
            "c_m is optimal, so the necessary condition holds, but g_m|_Y is not certified Morse: optimality \
             alone does not guarantee a social choice function (e.g. a level set that is a circle admits none), \
             while nonexistence is only proven for generic objectives; no claim either way"
                .into(),
        ),
        VerdictKind::SolutionExists => {
            let pts: Vec<Vec<f64>> =
                catalog.points_at_value(c_m, cfg.tol.optimality).into_iter().map(|lp| lp.p.clone()).collect();
            let fx = FiniteAlternatives::new(pts).expect("an optimal level has catalog points");
            for p in &fx.points {
                if let Ok(Some(r)) = prob.full_residual(p) {
                    if r.amax() > 1e-8 {
                        warnings.push(format!(
                            "alternative {p:?} misses the constraints by {:.3e}; c_m differs from the optimum \
                             within the optimality band",
                            r.amax()
                        ));
                    }
                }
            }
            notes.push(
                "c_m is optimal and g_m|_Y is Morse, so X is finite; choosing the alternative with the highest \
                 label is a social choice function on X"
                    .into(),
            );
            x = Some(fx.points);
            labels = Some(fx.labels);
        }
    }

    Ok(AnalysisReport {
        problem: prob.name().map(str::to_string),
        verdict,
        u_min: catalog.u_min,
        u_max: catalog.u_max,
        c_m,
        classification: Some(classification),
        critical_values: catalog.values.clone(),
        points: catalog.points.clone(),
        is_morse,
        continuum: catalog.continuum.clone(),
        cq,
        stats: CatalogStats {
            starts: catalog.starts_used,
            projected: catalog.projected,
            converged: catalog.converged,
            distinct_points: catalog.points.len(),
        },
        warnings,
        notes,
        x,
        labels,
        provenance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(c: f64) -> ConstraintProblem {
        ConstraintProblem::new(&["x", "y", "z"], &[("x^2+y^2+z^2", 1.0)], "z", Some(c))
            .unwrap()
            .with_bounds(vec![(-2.0, 2.0); 3])
            .unwrap()
    }

    fn catalog_for(prob: &ConstraintProblem) -> CriticalCatalog {
        let cfg = CriticalConfig::new(64, 5);
        critical::morse_certify(prob, critical::solve_critical_points(prob, &cfg), &cfg)
    }

    #[test]
    fn classify_examples() {
        let tol = Tolerances::default();
        let p = sphere(0.0);
        let cat = catalog_for(&p);
        assert_eq!(classify_c(&p, &cat, &tol).unwrap(), Classification::InteriorRegular);
        let p = sphere(1.0);
        assert_eq!(classify_c(&p, &cat, &tol).unwrap(), Classification::AtMax);
        assert_eq!(classify_c(&sphere(-1.0), &cat, &tol).unwrap(), Classification::AtMin);
        assert_eq!(classify_c(&sphere(1.5), &cat, &tol).unwrap(), Classification::AboveRange);
        assert_eq!(classify_c(&sphere(-1.5), &cat, &tol).unwrap(), Classification::BelowRange);
        assert_eq!(classify_c(&sphere(1.0 + 1e-7), &cat, &tol).unwrap(), Classification::AtMax);
    }

    #[test]
    fn classify_needs_a_catalog_and_a_level() {
        let tol = Tolerances::default();
        let p = sphere(0.0);
        let mut cat = catalog_for(&p);
        cat.points.clear();
        cat.values.clear();
        cat.u_min = None;
        cat.u_max = None;
        assert_eq!(classify_c(&p, &cat, &tol), Err(VerdictError::NoCriticalPoints));
        let unset = p.clone().with_objective_level(None);
        assert_eq!(classify_c(&unset, &catalog_for(&p), &tol), Err(VerdictError::MissingLevel));
    }

    #[test]
    fn sphere_verdicts() {
        let cfg = CriticalConfig::new(64, 5);
        let r = analyze(&sphere(1.0), &cfg).unwrap();
        assert_eq!(r.verdict, VerdictKind::SolutionExists);
        let x = r.x.unwrap();
        assert_eq!(x.len(), 1);
        assert!((x[0][2] - 1.0).abs() < 1e-9);
        assert_eq!(r.labels.unwrap(), vec![1]);
        assert_eq!(analyze(&sphere(0.0), &cfg).unwrap().verdict, VerdictKind::ParadoxRegular);
        assert_eq!(analyze(&sphere(5.0), &cfg).unwrap().verdict, VerdictKind::Infeasible);
    }

    #[test]
    fn unreachable_y_is_infeasible() {
        let p = ConstraintProblem::new(&["x", "y", "z"], &[("x^2+y^2+z^2", -1.0)], "z", Some(0.0)).unwrap();
        let r = analyze(&p, &CriticalConfig::new(16, 1)).unwrap();
        assert_eq!(r.verdict, VerdictKind::Infeasible);
        assert!(r.notes[0].contains("unreachable"));
    }

    #[test]
    fn linkage_counts_groups() {
        let pts: Vec<DVector<f64>> = [0.0, 0.1, 0.2, 5.0, 5.1]
            .iter()
            .map(|&v| DVector::from_column_slice(&[v, 0.0]))
            .collect();
        assert_eq!(linkage_components(&pts, 0.5), 2);
        assert_eq!(linkage_components(&pts, 10.0), 1);
    }
}
