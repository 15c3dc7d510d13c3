//! Linear perturbation of the objective and randomized Morse repair.
//!
//! Subtracting a small linear form `Σ a_i x_i` from `g_m` destroys
//! degenerate critical points for almost every coefficient vector `a`, so
//! drawing `a` uniformly from a small cube succeeds with probability one.
//! The perturbation is applied globally; only its restriction to Y matters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::{morse_certify, solve_critical_points, CriticalCatalog, CriticalConfig};
use crate::expr::{BinOp, Expression, Node};
use crate::manifold::{ConstraintProblem, Objective, Provenance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbError {
    #[error("perturbation has {got} coefficients, problem has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("max_tries must be at least 1")]
    NoTries,
    #[error("no Morse perturbation found in {} tries", .0.len())]
    Exhausted(Vec<TryDiagnostic>),
}

/// Coefficients of the subtracted linear term, with the bound they were drawn under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub a: Vec<f64>,
    pub epsilon: f64,
    pub seed: u64,
}

/// What one failed draw produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TryDiagnostic {
    pub attempt: usize,
    pub a: Vec<f64>,
    pub points: usize,
    pub degenerate: usize,
    pub continuum_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Repair {
    /// Perturbed problem with the objective level unset.
    pub problem: ConstraintProblem,
    /// Certified catalog of the perturbed objective; `is_morse == Some(true)`.
    pub catalog: CriticalCatalog,
    pub perturbation: Perturbation,
    pub tries: usize,
}

/// Replaces the objective by `g_m − Σ a_i x_i`, leaving `c_m` unset.
///
/// Zero coefficients are skipped, so the zero vector leaves the expression
/// tree untouched.
///
/// ```
/// use scfdesign::manifold::ConstraintProblem;
/// use scfdesign::perturb::linear_perturb;
///
/// let p = ConstraintProblem::new(&["x", "y", "z"], &[("x^2+y^2+z^2", 1.0)], "z^2", None).unwrap();
/// let q = linear_perturb(&p, &[0.01, 0.0, 0.0]).unwrap();
/// assert_eq!(q.objective().g.to_string(), "z^2 - 0.01*x");
/// ```
pub fn linear_perturb(prob: &ConstraintProblem, a: &[f64]) -> Result<ConstraintProblem, PerturbError> {
    if a.len() != prob.n() {
        return Err(PerturbError::LengthMismatch { expected: prob.n(), got: a.len() });
    }
    let mut root = prob.objective().g.root().clone();
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let op = if ai > 0.0 { BinOp::Sub } else { BinOp::Add };
        let term = Node::Binary(BinOp::Mul, Box::new(Node::Num(ai.abs())), Box::new(Node::Var(i)));
        root = Node::Binary(op, Box::new(root), Box::new(term));
    }
    let g = Expression::from_node(root, prob.variables().to_vec())
        .expect("variable indices come from the same problem");
    Ok(prob.clone().with_objective(Objective { g, c: None }))
}

/// Draws `a` uniformly from `[−ε, ε]ⁿ` until the perturbed objective is Morse.
///
/// Draws come from one ChaCha stream seeded with `seed`, so try `k` always
/// sees the same coefficients. Each try runs the full multistart and
/// certification with `cfg`.
pub fn morse_repair(
    prob: &ConstraintProblem,
    epsilon: f64,
    max_tries: usize,
    seed: u64,
    cfg: &CriticalConfig,
) -> Result<Repair, PerturbError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(PerturbError::InvalidEpsilon(epsilon));
    }
    if max_tries == 0 {
        return Err(PerturbError::NoTries);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for attempt in 1..=max_tries {
        let a: Vec<f64> = (0..prob.n()).map(|_| rng.gen_range(-epsilon..=epsilon)).collect();
        let perturbed = linear_perturb(prob, &a)?;
        let catalog = morse_certify(&perturbed, solve_critical_points(&perturbed, cfg), cfg);
        if catalog.is_morse == Some(true) {
            let provenance = Provenance {
                comment: format!("objective minus sum a_i*x_i, a uniform in [-epsilon, epsilon]^n, accepted on try {attempt}"),
                a: a.clone(),
                seed,
                epsilon,
            };
            return Ok(Repair {
                problem: perturbed.with_provenance(Some(provenance)),
                catalog,
                perturbation: Perturbation { a, epsilon, seed },
                tries: attempt,
            });
        }
        failures.push(TryDiagnostic {
            attempt,
            a,
            points: catalog.points.len(),
            degenerate: catalog.points.iter().filter(|lp| !lp.nondegenerate).count(),
            continuum_values: catalog.continuum.iter().map(|c| c.value).collect(),
        });
    }
    Err(PerturbError::Exhausted(failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(obj: &str) -> ConstraintProblem {
        ConstraintProblem::new(&["x", "y", "z"], &[("x^2+y^2+z^2", 1.0)], obj, Some(1.0))
            .unwrap()
            .with_bounds(vec![(-2.0, 2.0); 3])
            .unwrap()
    }

    #[test]
    fn composition_prints() {
        let q = linear_perturb(&sphere("z^2"), &[0.01, 0.0, 0.0]).unwrap();
        assert_eq!(q.objective().g.to_string(), "z^2 - 0.01*x");
        assert_eq!(q.objective().c, None);
        let torus = ConstraintProblem::new(&["x", "y", "z"], &[("(x^2+y^2+z^2+3)^2 - 16*(x^2+y^2)", 0.0)], "z", None).unwrap();
        let q = linear_perturb(&torus, &[0.0, 0.01, 0.0]).unwrap();
        assert_eq!(q.objective().g.to_string(), "z - 0.01*y");
        let q = linear_perturb(&torus, &[-0.5, 0.0, 0.0]).unwrap();
        assert_eq!(q.objective().g.to_string(), "z + 0.5*x");
    }

    #[test]
    fn zero_vector_is_identity() {
        let p = sphere("z^2");
        let q = linear_perturb(&p, &[0.0; 3]).unwrap();
        assert_eq!(q.objective().g, p.objective().g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = p.sample_box(&mut rng);
            assert_eq!(q.objective().g.evaluate(x.as_slice()), p.objective().g.evaluate(x.as_slice()));
        }
    }

    #[test]
    fn length_and_argument_errors() {
        let p = sphere("z^2");
        assert_eq!(
            linear_perturb(&p, &[0.1]).unwrap_err(),
            PerturbError::LengthMismatch { expected: 3, got: 1 }
        );
        let cfg = CriticalConfig::new(16, 1);
        assert!(matches!(morse_repair(&p, 0.0, 3, 1, &cfg), Err(PerturbError::InvalidEpsilon(_))));
        assert!(matches!(morse_repair(&p, 0.01, 0, 1, &cfg), Err(PerturbError::NoTries)));
    }

    #[test]
    fn sup_norm_bound() {
        let p = sphere("z^2");
        let eps = 0.01;
        let a = [0.01, -0.007, 0.003];
        let q = linear_perturb(&p, &a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = p.sample_box(&mut rng);
            let d = (q.objective().g.evaluate(x.as_slice()).unwrap() - p.objective().g.evaluate(x.as_slice()).unwrap()).abs();
            let bound = eps * x.iter().map(|v| v.abs()).sum::<f64>();
            assert!(d <= bound + 1e-15);
            assert!(bound <= eps * 3.0 * 2.0);
        }
    }

    /// Lagrange system for z² − 0.01x on the unit sphere:
    /// −0.01 = 2λx, 0 = 2λy, 2z = 2λz. Either z = 0, giving x = ±1 with
    /// value ∓0.01, or λ = 1, giving x = −0.005, z² = 1 − 0.000025.
    #[test]
    fn perturbed_equator_splits() {
        let q = linear_perturb(&sphere("z^2"), &[0.01, 0.0, 0.0]).unwrap();
        let cfg = CriticalConfig::new(512, 42);
        let cat = morse_certify(&q, solve_critical_points(&q, &cfg), &cfg);
        assert_eq!(cat.points.len(), 4, "{:?}", cat.points);
        assert_eq!(cat.is_morse, Some(true));
        let zc = (1.0f64 - 0.000025).sqrt();
        let want = [
            ([1.0, 0.0, 0.0], -0.01),
            ([-1.0, 0.0, 0.0], 0.01),
            ([-0.005, 0.0, -zc], 1.000025),
            ([-0.005, 0.0, zc], 1.000025),
        ];
        for (p, v) in want {
            let hit = cat.points.iter().find(|lp| lp.p.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-8));
            let lp = hit.unwrap_or_else(|| panic!("missing {p:?}"));
            assert!((lp.u - v).abs() < 1e-12);
            assert!(lp.nondegenerate);
        }
    }

    #[test]
    fn repair_is_deterministic_and_bounded() {
        let cfg = CriticalConfig::new(256, 42);
        let r1 = morse_repair(&sphere("z^2"), 0.01, 3, 7, &cfg).unwrap();
        let r2 = morse_repair(&sphere("z^2"), 0.01, 3, 7, &cfg).unwrap();
        assert_eq!(r1.perturbation, r2.perturbation);
        assert_eq!(r1.catalog.is_morse, Some(true));
        assert!(r1.perturbation.a.iter().all(|a| a.abs() <= 0.01));
        let prov = r1.problem.provenance().unwrap();
        assert_eq!(prov.a, r1.perturbation.a);
        assert_eq!(prov.seed, 7);
    }

    #[test]
    fn morse_objective_passes_first_try() {
        let cfg = CriticalConfig::new(128, 42);
        let r = morse_repair(&sphere("z"), 0.05, 3, 99, &cfg).unwrap();
        assert_eq!(r.tries, 1);
        assert_eq!(r.catalog.points.len(), 2);
    }
}
