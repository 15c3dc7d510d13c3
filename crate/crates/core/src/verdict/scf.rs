//! The max-label choice rule on a finite set of alternatives.
//!
//! Label the alternatives `1..=|X|`; given a profile `(p_1, …, p_k)`, pick
//! the alternative among them with the highest label. The rule is
//! anonymous and unanimous, and continuous because X is discrete.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SNAP_DISTANCE: f64 = 1e-8;
pub const AUDIT_MAX_ALTERNATIVES: usize = 8;
pub const AUDIT_MAX_ARITY: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScfError {
    #[error("the set of alternatives is empty")]
    Empty,
    #[error("alternatives must all have {expected} coordinates")]
    Dimension { expected: usize },
    #[error("profile is empty")]
    EmptyProfile,
    #[error("choice {0:?} is not one of the labeled alternatives")]
    Unmatched(Vec<f64>),
    #[error("exhaustive audit limited to |X| <= {AUDIT_MAX_ALTERNATIVES} and k <= {AUDIT_MAX_ARITY} (got |X| = {size}, k = {k})")]
    AuditBounds { size: usize, k: usize },
}

/// An enumerated finite X with labels in lexicographic coordinate order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteAlternatives {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FiniteAlternatives {
    pub fn new(mut points: Vec<Vec<f64>>) -> Result<Self, ScfError> {
        let dim = points.first().ok_or(ScfError::Empty)?.len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(ScfError::Dimension { expected: dim });
        }
        points.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let labels = (1..=points.len()).collect();
        Ok(FiniteAlternatives { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the labeled point within `SNAP_DISTANCE` of `q`.
    pub fn locate(&self, q: &[f64]) -> Option<usize> {
        self.points.iter().position(|p| {
            p.len() == q.len() && p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= SNAP_DISTANCE
        })
    }
}

/// An aggregation rule `F : X^k → X`.
pub trait AggregationRule {
    fn aggregate(&self, profile: &[Vec<f64>]) -> Result<Vec<f64>, ScfError>;
}

#[derive(Clone, Debug)]
pub struct MaxLabelRule {
    alternatives: FiniteAlternatives,
}

impl MaxLabelRule {
    pub fn alternatives(&self) -> &FiniteAlternatives {
        &self.alternatives
    }

    /// Label of the chosen alternative.
    pub fn choose_label(&self, profile: &[Vec<f64>]) -> Result<usize, ScfError> {
        let mut best: Option<usize> = None;
        for q in profile {
            let i = self.alternatives.locate(q).ok_or_else(|| ScfError::Unmatched(q.clone()))?;
            best = Some(best.map_or(i, |b| b.max(i)));
        }
        best.map(|i| self.alternatives.labels[i]).ok_or(ScfError::EmptyProfile)
    }
}

impl AggregationRule for MaxLabelRule {
    fn aggregate(&self, profile: &[Vec<f64>]) -> Result<Vec<f64>, ScfError> {
        let label = self.choose_label(profile)?;
        Ok(self.alternatives.points[label - 1].clone())
    }
}

pub fn build_scf(fx: &FiniteAlternatives) -> Result<MaxLabelRule, ScfError> {
    if fx.is_empty() {
        return Err(ScfError::Empty);
    }
    Ok(MaxLabelRule { alternatives: fx.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArityAudit {
    pub k: usize,
    pub tuples: usize,
    pub permutation_checks: usize,
    pub anonymity_failures: usize,
    pub unanimity_checks: usize,
    pub unanimity_failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub alternatives: usize,
    pub per_arity: Vec<ArityAudit>,
    pub continuity: String,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.per_arity.iter().all(|a| a.anonymity_failures == 0 && a.unanimity_failures == 0)
    }
}

/// Exhaustive unanimity and anonymity check of `rule` for every `k ≤ k_max`.
pub fn audit_rule<R: AggregationRule + ?Sized>(
    fx: &FiniteAlternatives,
    rule: &R,
    k_max: usize,
) -> Result<AuditReport, ScfError> {
    if fx.is_empty() {
        return Err(ScfError::Empty);
    }
    if fx.len() > AUDIT_MAX_ALTERNATIVES || k_max > AUDIT_MAX_ARITY {
        return Err(ScfError::AuditBounds { size: fx.len(), k: k_max });
    }
    let mut per_arity = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut a = ArityAudit {
            k,
            tuples: 0,
            permutation_checks: 0,
            anonymity_failures: 0,
            unanimity_checks: 0,
            unanimity_failures: 0,
        };
        for p in &fx.points {
            a.unanimity_checks += 1;
            let profile = vec![p.clone(); k];
            if rule.aggregate(&profile).ok().as_ref() != Some(p) {
                a.unanimity_failures += 1;
            }
        }
        for tuple in (0..k).map(|_| 0..fx.len()).multi_cartesian_product() {
            a.tuples += 1;
            let profile: Vec<Vec<f64>> = tuple.iter().map(|&i| fx.points[i].clone()).collect();
            let reference = rule.aggregate(&profile).ok();
            for perm in (0..k).permutations(k) {
                a.permutation_checks += 1;
                let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| profile[i].clone()).collect();
                if reference.is_none() || rule.aggregate(&permuted).ok() != reference {
                    a.anonymity_failures += 1;
                }
            }
        }
        per_arity.push(a);
    }
    Ok(AuditReport {
        alternatives: fx.len(),
        per_arity,
        continuity: "trivially satisfied: X is finite and discrete".into(),
    })
}

pub fn scf_axiom_audit(fx: &FiniteAlternatives, k_max: usize) -> Result<AuditReport, ScfError> {
    audit_rule(fx, &build_scf(fx)?, k_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> FiniteAlternatives {
        FiniteAlternatives::new(vec![vec![2.0, 0.0], vec![0.0, 1.0], vec![1.0, 5.0]]).unwrap()
    }

    struct FirstArgument;
    impl AggregationRule for FirstArgument {
        fn aggregate(&self, profile: &[Vec<f64>]) -> Result<Vec<f64>, ScfError> {
            profile.first().cloned().ok_or(ScfError::EmptyProfile)
        }
    }

    #[test]
    fn labels_follow_lexicographic_order() {
        let fx = abc();
        assert_eq!(fx.points, vec![vec![0.0, 1.0], vec![1.0, 5.0], vec![2.0, 0.0]]);
        assert_eq!(fx.labels, vec![1, 2, 3]);
    }

    #[test]
    fn highest_label_wins() {
        let fx = abc();
        let (a, b, c) = (fx.points[0].clone(), fx.points[1].clone(), fx.points[2].clone());
        let f = build_scf(&fx).unwrap();
        assert_eq!(f.aggregate(&[a.clone(), c.clone(), b.clone()]).unwrap(), c);
        assert_eq!(f.aggregate(&[b.clone(), b.clone(), b.clone()]).unwrap(), b);
        assert_eq!(f.aggregate(&[c.clone(), a.clone()]).unwrap(), f.aggregate(&[a.clone(), c.clone()]).unwrap());
        // snapping within 1e-8
        assert_eq!(f.aggregate(&[vec![1.0 + 1e-10, 5.0]]).unwrap(), b);
        assert!(matches!(f.aggregate(&[vec![1.0 + 1e-6, 5.0]]), Err(ScfError::Unmatched(_))));
        assert!(matches!(f.aggregate(&[]), Err(ScfError::EmptyProfile)));
    }

    #[test]
    fn audit_counts_for_three_alternatives() {
        let r = scf_axiom_audit(&abc(), 3).unwrap();
        assert!(r.passed());
        let k3 = &r.per_arity[2];
        assert_eq!(k3.tuples, 27);
        assert_eq!(k3.permutation_checks, 27 * 6);
        assert_eq!(k3.unanimity_checks, 3);
    }

    #[test]
    fn singleton_passes() {
        let fx = FiniteAlternatives::new(vec![vec![0.0, 0.0, 1.0]]).unwrap();
        let r = scf_axiom_audit(&fx, 4).unwrap();
        assert!(r.passed());
        assert_eq!(r.per_arity[3].tuples, 1);
    }

    #[test]
    fn dictatorship_breaks_anonymity() {
        let fx = abc();
        let r = audit_rule(&fx, &FirstArgument, 2).unwrap();
        assert!(!r.passed());
        assert!(r.per_arity[1].anonymity_failures > 0);
        assert_eq!(r.per_arity[1].unanimity_failures, 0);
    }

    #[test]
    fn audit_bounds_are_enforced() {
        let fx = FiniteAlternatives::new((0..9).map(|i| vec![i as f64]).collect()).unwrap();
        assert!(matches!(scf_axiom_audit(&fx, 2), Err(ScfError::AuditBounds { .. })));
        assert!(matches!(scf_axiom_audit(&abc(), 5), Err(ScfError::AuditBounds { .. })));
        assert!(matches!(FiniteAlternatives::new(vec![]), Err(ScfError::Empty)));
    }
}
