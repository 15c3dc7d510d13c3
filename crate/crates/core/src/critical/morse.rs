//! Nondegeneracy of critical points and the Morse property.
//!
//! A critical point of `g_m|_Y` is nondegenerate exactly when the full
//! Hessian of the Lagrangian in `(λ, p)` (the bordered Hessian) is
//! nonsingular there. The determinant is reported, but the decision uses
//! the scale-free test `σ_min > tol · σ_max`.
//!
//! A degenerate point may sit on a continuum of critical points. The probe
//! in [`morse_certify`] walks from such a point along the null direction of
//! the bordered Hessian, re-solving the Lagrange system after each small
//! step. If it collects a chain of distinct critical points at the same
//! value, all pairwise closer than the continuum radius, the value cluster
//! is flagged. The probe can only lower confidence in the Morse property.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::newton::lagrangian_hessian;
use super::{refine_from, CriticalCatalog, CriticalConfig, LagrangianPoint};
use crate::expr::EvalError;
use crate::manifold::{singular_values, ConstraintProblem};
use crate::tolerances::Tolerances;

/// How many degenerate points per value cluster to probe.
const PROBES_PER_CLUSTER: usize = 3;

/// A chain of nearby critical points found at one critical value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumEvidence {
    pub value: f64,
    pub chain: Vec<Vec<f64>>,
    pub min_pairwise_distance: f64,
    pub max_pairwise_distance: f64,
}

/// Hessian of `L(λ, p)` in the variable order `(λ_1..λ_{m−1}, p_1..p_n)`:
///
/// ```text
/// [ 0     −J  ]
/// [ −Jᵀ   H_L ]
/// ```
pub fn bordered_hessian(prob: &ConstraintProblem, lp: &LagrangianPoint) -> Result<DMatrix<f64>, EvalError> {
    bordered_at(prob, &lp.p, &lp.lambda)
}

fn bordered_at(prob: &ConstraintProblem, p: &[f64], lambda: &[f64]) -> Result<DMatrix<f64>, EvalError> {
    let n = prob.n();
    let k = lambda.len();
    let j = prob.jacobian_y(p)?;
    let mut b = DMatrix::zeros(n + k, n + k);
    b.view_mut((0, k), (k, n)).copy_from(&(-&j));
    b.view_mut((k, 0), (n, k)).copy_from(&(-j.transpose()));
    b.view_mut((k, k), (n, n)).copy_from(&lagrangian_hessian(prob, p, lambda)?);
    Ok(b)
}

pub(super) fn certify_point(prob: &ConstraintProblem, lp: &mut LagrangianPoint, tol: &Tolerances) {
    match bordered_hessian(prob, lp) {
        Ok(b) => {
            let sv = singular_values(&b);
            let (max, min) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
            lp.sigma_ratio = if max > 0.0 { min / max } else { 0.0 };
            lp.nondegenerate = max > 0.0 && min > tol.degeneracy * max;
            lp.hessl_det = b.lu().determinant();
        }
        Err(_) => {
            lp.sigma_ratio = 0.0;
            lp.nondegenerate = false;
            lp.hessl_det = f64::NAN;
        }
    }
}

/// Unit p-component of the bordered Hessian's smallest singular vector.
fn null_direction(prob: &ConstraintProblem, p: &[f64], lambda: &[f64]) -> Option<DVector<f64>> {
    let k = lambda.len();
    let b = bordered_at(prob, p, lambda).ok()?;
    let svd = b.svd(false, true);
    let v_t = svd.v_t?;
    let idx = svd.singular_values.imin();
    let row = v_t.row(idx);
    let t = DVector::from_iterator(prob.n(), row.iter().skip(k).copied());
    let norm = t.norm();
    (norm > 1e-12).then(|| t / norm)
}

fn pairwise_extremes(chain: &[DVector<f64>]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for (i, a) in chain.iter().enumerate() {
        for b in &chain[i + 1..] {
            let d = (a - b).norm();
            min = min.min(d);
            max = max.max(d);
        }
    }
    (min, max)
}

fn probe_continuum(prob: &ConstraintProblem, lp: &LagrangianPoint, cfg: &CriticalConfig) -> Option<ContinuumEvidence> {
    let mut p = DVector::from_column_slice(&lp.p);
    let mut lambda = DVector::from_column_slice(&lp.lambda);
    let mut chain = vec![p.clone()];
    let mut heading: Option<DVector<f64>> = None;
    while chain.len() < cfg.continuum_points {
        let mut t = null_direction(prob, p.as_slice(), lambda.as_slice())?;
        if let Some(h) = &heading {
            if t.dot(h) < 0.0 {
                t = -t;
            }
        }
        let q0 = &p + &t * cfg.continuum_step;
        let (q, l, _) = refine_from(prob, q0.as_slice(), cfg).ok()??;
        let step = (&q - &p).norm();
        let u = prob.objective().g.evaluate(q.as_slice()).ok()?;
        if step <= cfg.tol.dedup
            || step >= cfg.continuum_radius
            || !Tolerances::relative_eq(u, lp.u, cfg.tol.value_cluster)
        {
            return None;
        }
        chain.push(q.clone());
        heading = Some(t);
        p = q;
        lambda = l;
    }
    let (min_d, max_d) = pairwise_extremes(&chain);
    if min_d <= cfg.tol.dedup || max_d >= cfg.continuum_radius {
        return None;
    }
    Some(ContinuumEvidence {
        value: lp.u,
        chain: chain.iter().map(|c| c.as_slice().to_vec()).collect(),
        min_pairwise_distance: min_d,
        max_pairwise_distance: max_d,
    })
}

/// Flags every point and decides whether `g_m|_Y` looks Morse.
///
/// `is_morse` holds when the catalog is nonempty, every point is
/// nondegenerate and no value cluster carries continuum evidence.
pub fn morse_certify(prob: &ConstraintProblem, mut catalog: CriticalCatalog, cfg: &CriticalConfig) -> CriticalCatalog {
    for lp in &mut catalog.points {
        certify_point(prob, lp, &cfg.tol);
    }
    let mut continuum = Vec::new();
    for &value in &catalog.values {
        let degenerate = catalog
            .points
            .iter()
            .filter(|lp| !lp.nondegenerate && Tolerances::relative_eq(lp.u, value, cfg.tol.value_cluster));
        if let Some(ev) = degenerate.take(PROBES_PER_CLUSTER).find_map(|lp| probe_continuum(prob, lp, cfg)) {
            continuum.push(ev);
        }
    }
    let all_nondegenerate = catalog.points.iter().all(|lp| lp.nondegenerate);
    catalog.is_morse = Some(!catalog.points.is_empty() && all_nondegenerate && continuum.is_empty());
    if !continuum.is_empty() {
        let vals: Vec<String> = continuum.iter().map(|c| format!("{:.6}", c.value)).collect();
        catalog.warnings.push(format!(
            "critical set looks like a continuum at value(s) {}; g_m|_Y is not Morse",
            vals.join(", ")
        ));
    }
    catalog.continuum = continuum;
    catalog
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_z() -> ConstraintProblem {
        ConstraintProblem::new(&["x", "y", "z"], &[("x^2+y^2+z^2", 1.0)], "z", None).unwrap()
    }

    /// Cofactor expansion, independent of LU.
    fn det_cofactor(m: &DMatrix<f64>) -> f64 {
        let n = m.nrows();
        if n == 1 {
            return m[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = m.clone().remove_row(0).remove_column(j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[(0, j)] * det_cofactor(&minor)
            })
            .sum()
    }

    fn point(p: [f64; 3], lambda: f64) -> LagrangianPoint {
        LagrangianPoint {
            p: p.to_vec(),
            lambda: vec![lambda],
            u: p[2],
            kkt_residual: 0.0,
            hessl_det: f64::NAN,
            sigma_ratio: f64::NAN,
            nondegenerate: false,
            hits: 1,
        }
    }

    #[test]
    fn north_pole_bordered_hessian() {
        let b = bordered_hessian(&sphere_z(), &point([0.0, 0.0, 1.0], 0.5)).unwrap();
        #[rustfmt::skip]
        let want = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 0.0, -2.0,
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 0.0,
            -2.0, 0.0, 0.0, -1.0,
        ]);
        assert_eq!(b, want);
        assert!((det_cofactor(&b) + 4.0).abs() < 1e-12);
        assert!((b.lu().determinant() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn south_pole_bordered_hessian() {
        let b = bordered_hessian(&sphere_z(), &point([0.0, 0.0, -1.0], -0.5)).unwrap();
        assert!((det_cofactor(&b) + 4.0).abs() < 1e-12);
        assert_eq!(b, b.transpose());
        assert!((b.lu().determinant() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn torus_z_circle_point_is_singular() {
        let torus_z = ConstraintProblem::new(
            &["x", "y", "z"],
            &[("(x^2+y^2+z^2+3)^2 - 16*(x^2+y^2)", 0.0)],
            "z",
            None,
        )
        .unwrap();
        // ∇g = (4x(s+3) − 32x, 4y(s+3) − 32y, 4z(s+3)) = (0, 0, 32) at (2,0,1)
        let mut lp = point([2.0, 0.0, 1.0], 1.0 / 32.0);
        let b = bordered_hessian(&torus_z, &lp).unwrap();
        assert!(b.lu().determinant().abs() < 1e-12);
        certify_point(&torus_z, &mut lp, &Tolerances::default());
        assert!(!lp.nondegenerate);
        let t = null_direction(&torus_z, &lp.p, &lp.lambda).unwrap();
        assert!((t[1].abs() - 1.0).abs() < 1e-9, "null direction should be tangent to the circle: {t}");
    }
}
