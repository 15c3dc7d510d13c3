mod common;

use common::{load, sphere};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scfdesign::flow::{integrate, retraction, tangent_field, FlowConfig, Trajectory};
use scfdesign::{ConstraintProblem, Tolerances};

/// Checks every sampled invariant of a trajectory started inside the band.
fn check_invariants(prob: &ConstraintProblem, cfg: &FlowConfig, tr: &Trajectory) {
    let tol = Tolerances::default();
    let (lo, hi) = cfg.band;
    let above = tr.samples[0].gm > cfg.u;
    for s in &tr.samples {
        assert!(s.gm >= lo - 1e-6 && s.gm <= hi + 1e-6);
        assert!(if above { s.gm > cfg.u - 1e-8 } else { s.gm < cfg.u + 1e-8 });
        assert!(s.residual <= 1e-8);
        let v = tangent_field(prob, &s.p, &tol).unwrap();
        let g = prob.objective().g.gradient(&s.p).unwrap();
        assert!(g.dot(&v) >= -1e-12);
    }
    for w in tr.samples.windows(2) {
        if above {
            assert!(w[1].gm <= w[0].gm + 1e-9);
        } else {
            assert!(w[1].gm >= w[0].gm - 1e-9);
        }
    }
}

#[test]
fn sphere_trajectories_keep_their_invariants() {
    let prob = sphere("z", None);
    let tol = Tolerances::default();
    let cfg = FlowConfig::new(0.0, (-0.8, 0.8)).unwrap().with_t_max(20.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tried = 0;
    while tried < 10 {
        let p = prob.project_to_y(prob.sample_box(&mut rng).as_slice(), &tol).unwrap().p;
        if p[2].abs() > 0.8 {
            continue;
        }
        tried += 1;
        let tr = integrate(&prob, &cfg, p.as_slice(), &tol).unwrap();
        check_invariants(&prob, &cfg, &tr);
        assert!(tr.converged, "{p}");
        assert!(tr.error.is_none());
    }
}

#[test]
fn torus_band_between_critical_values_retracts() {
    let prob = load("torus_x.json");
    let tol = Tolerances::default();
    let cfg = FlowConfig::new(2.0, (1.2, 2.8)).unwrap();
    for start in [[2.5, 0.0, 0.866_025_403_784_438_6], [1.5, 1.0, 0.5], [2.7, 0.4, 0.2]] {
        let p = prob.project_to_y(&start, &tol).unwrap().p;
        let gm = prob.objective().g.evaluate(p.as_slice()).unwrap();
        if !(1.2..=2.8).contains(&gm) {
            continue;
        }
        let tr = integrate(&prob, &cfg, p.as_slice(), &tol).unwrap();
        check_invariants(&prob, &cfg, &tr);
        assert!(tr.converged);
        let r = retraction(&prob, &cfg, p.as_slice(), &tol).unwrap();
        assert!((r.gm - 2.0).abs() < cfg.sub_band_halfwidth());
        assert!(prob.residual_norm(&r.point).unwrap() <= 1e-8);
    }
}

#[test]
fn trajectories_are_reproducible() {
    let prob = sphere("z", None);
    let tol = Tolerances::default();
    let cfg = FlowConfig::new(0.1, (-0.5, 0.7)).unwrap().with_t_max(3.0).unwrap();
    let p = [0.8, 0.0, 0.6];
    let p = prob.project_to_y(&p, &tol).unwrap().p;
    let a = integrate(&prob, &cfg, p.as_slice(), &tol).unwrap();
    let b = integrate(&prob, &cfg, p.as_slice(), &tol).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}
