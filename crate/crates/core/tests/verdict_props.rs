mod common;

use common::load;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scfdesign::expr::{BinOp, Node};
use scfdesign::manifold::Objective;
use scfdesign::verdict::{analyze, build_scf, scf_axiom_audit, FiniteAlternatives};
use scfdesign::{Classification, ConstraintProblem, CriticalConfig, Expression, VerdictKind};

const FIXTURES: [&str; 8] = [
    "sphere_z_max.json",
    "sphere_z_equator.json",
    "sphere_z_empty.json",
    "sphere_z2.json",
    "torus_z.json",
    "torus_x.json",
    "torus_x_c1.json",
    "torus_x_c2.json",
];

fn scaled(prob: &ConstraintProblem, kappa: f64) -> ConstraintProblem {
    let g = &prob.objective().g;
    let root = Node::Binary(BinOp::Mul, Box::new(Node::Num(kappa)), Box::new(g.root().clone()));
    let g = Expression::from_node(root, g.variables().to_vec()).unwrap();
    let c = prob.objective().c.map(|c| kappa * c);
    prob.clone().with_objective(Objective { g, c })
}

#[test]
fn verdicts_survive_positive_rescaling() {
    for name in FIXTURES {
        let prob = load(name);
        let cfg = CriticalConfig::for_problem(&prob);
        let base = analyze(&prob, &cfg).unwrap().verdict;
        for kappa in [0.25, 4.0] {
            let v = analyze(&scaled(&prob, kappa), &cfg).unwrap().verdict;
            assert_eq!(v, base, "{name} at kappa {kappa}");
        }
    }
}

#[test]
fn optimal_levels_flip_to_paradox_at_the_midpoint() {
    let mut flipped = 0;
    for name in FIXTURES {
        let prob = load(name);
        let cfg = CriticalConfig::for_problem(&prob);
        let r = analyze(&prob, &cfg).unwrap();
        if r.classification != Some(Classification::AtMax) {
            continue;
        }
        let mid = (r.u_min.unwrap() + r.u_max.unwrap()) / 2.0;
        let v = analyze(&prob.clone().with_objective_level(Some(mid)), &cfg).unwrap().verdict;
        assert!(v.is_paradox(), "{name}: {v:?}");
        flipped += 1;
    }
    assert_eq!(flipped, 4);
}

#[test]
fn solution_alternatives_satisfy_every_constraint() {
    for name in FIXTURES {
        let prob = load(name);
        let r = analyze(&prob, &CriticalConfig::for_problem(&prob)).unwrap();
        if r.verdict != VerdictKind::SolutionExists {
            assert!(r.x.is_none());
            continue;
        }
        let fx = r.alternatives().unwrap();
        assert!(!fx.is_empty());
        for p in &fx.points {
            let res = prob.full_residual(p).unwrap().unwrap();
            assert!(res.amax() <= 1e-8, "{name}: {p:?}");
        }
    }
}

#[test]
fn max_label_rule_passes_audit_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for size in 1..=5usize {
        for _ in 0..4 {
            let dim = rng.gen_range(1..4);
            let pts: Vec<Vec<f64>> =
                (0..size).map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
            let fx = FiniteAlternatives::new(pts).unwrap();
            let report = scf_axiom_audit(&fx, 3).unwrap();
            assert!(report.passed(), "{report:?}");
            assert_eq!(report.per_arity.len(), 3);
            let k3 = &report.per_arity[2];
            assert_eq!(k3.tuples, size.pow(3));
            let rule = build_scf(&fx).unwrap();
            for (p, &l) in fx.points.iter().zip(&fx.labels) {
                assert_eq!(rule.choose_label(&[p.clone(), p.clone()]).unwrap(), l);
            }
        }
    }
}

#[test]
fn reports_round_trip_through_json() {
    let prob = load("torus_x.json");
    let r = analyze(&prob, &CriticalConfig::for_problem(&prob)).unwrap();
    let back: scfdesign::AnalysisReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back.verdict, r.verdict);
    assert_eq!(back.x, r.x);
    assert_eq!(back.to_json(), r.to_json());
}
