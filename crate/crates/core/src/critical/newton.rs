//! Damped Newton on the Lagrange stationarity system.
//!
//! Unknowns are `z = (p, λ)` and the residual is
//! `F(z) = (∇g_m(p) − Σ λ_i ∇g_i(p), g_i(p) − c_i)`. Its Jacobian is
//! `[[H_L, −Jᵀ], [J, 0]]` with `H_L = ∇²g_m − Σ λ_i ∇²g_i`.
//! Steps are computed with a truncated-SVD pseudo-inverse, so a singular
//! Jacobian (a non-isolated critical set) still yields the minimum-norm
//! Newton step instead of a blow-up.

use nalgebra::{DMatrix, DVector};

use crate::expr::EvalError;
use crate::manifold::ConstraintProblem;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const PINV_CUTOFF: f64 = 1e-10;

/// `(stationarity, feasibility)` concatenated, length `n + m − 1`.
pub fn kkt_residual(prob: &ConstraintProblem, p: &[f64], lambda: &[f64]) -> Result<DVector<f64>, EvalError> {
    let n = prob.n();
    let k = prob.constraints().len();
    assert_eq!(lambda.len(), k, "one multiplier per Y-constraint");
    let mut out = DVector::zeros(n + k);
    let mut stat = prob.objective().g.gradient(p)?;
    for (c, &l) in prob.constraints().iter().zip(lambda) {
        stat -= c.g.gradient(p)? * l;
    }
    out.rows_mut(0, n).copy_from(&stat);
    out.rows_mut(n, k).copy_from(&prob.residual(p)?);
    Ok(out)
}

/// Hessian of the Lagrangian in `p` only.
pub(crate) fn lagrangian_hessian(prob: &ConstraintProblem, p: &[f64], lambda: &[f64]) -> Result<DMatrix<f64>, EvalError> {
    let mut h = prob.objective().g.hessian(p)?;
    for (c, &l) in prob.constraints().iter().zip(lambda) {
        h -= c.g.hessian(p)? * l;
    }
    Ok(h)
}

fn newton_matrix(prob: &ConstraintProblem, p: &[f64], lambda: &[f64]) -> Result<DMatrix<f64>, EvalError> {
    let n = prob.n();
    let k = lambda.len();
    let j = prob.jacobian_y(p)?;
    let mut m = DMatrix::zeros(n + k, n + k);
    m.view_mut((0, 0), (n, n)).copy_from(&lagrangian_hessian(prob, p, lambda)?);
    m.view_mut((0, n), (n, k)).copy_from(&(-j.transpose()));
    m.view_mut((n, 0), (k, n)).copy_from(&j);
    Ok(m)
}

/// Minimum-norm least-squares solution of `a x = b`.
pub(crate) fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || !smax.is_finite() {
        return None;
    }
    svd.solve(b, PINV_CUTOFF * smax).ok()
}

/// Multipliers minimizing `‖∇g_m − Jᵀλ‖`.
pub fn least_squares_multipliers(prob: &ConstraintProblem, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    let jt = prob.jacobian_y(p)?.transpose();
    let grad = prob.objective().g.gradient(p)?;
    Ok(pinv_solve(&jt, &grad).unwrap_or_else(|| DVector::zeros(jt.ncols())))
}

#[derive(Clone, Debug)]
pub(crate) struct NewtonOutcome {
    pub p: DVector<f64>,
    pub lambda: DVector<f64>,
    pub residual_norm: f64,
    pub converged: bool,
}

pub(crate) fn damped_newton(
    prob: &ConstraintProblem,
    p0: DVector<f64>,
    lambda0: DVector<f64>,
    tol: f64,
    max_iterations: usize,
) -> Result<NewtonOutcome, EvalError> {
    let n = prob.n();
    let k = lambda0.len();
    let mut p = p0;
    let mut lambda = lambda0;
    let mut f = kkt_residual(prob, p.as_slice(), lambda.as_slice())?;
    let mut f2 = f.norm_squared();
    for _ in 0..max_iterations {
        if f2.sqrt() <= tol {
            break;
        }
        let jac = newton_matrix(prob, p.as_slice(), lambda.as_slice())?;
        let Some(d) = pinv_solve(&jac, &(-&f)) else { break };
        let dp = d.rows(0, n).into_owned();
        let dl = d.rows(n, k).into_owned();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let p_try = &p + &dp * alpha;
            let l_try = &lambda + &dl * alpha;
            if let Ok(f_try) = kkt_residual(prob, p_try.as_slice(), l_try.as_slice()) {
                let f2_try = f_try.norm_squared();
                if f2_try <= (1.0 - 2.0 * ARMIJO_C * alpha) * f2 {
                    accepted = Some((p_try, l_try, f_try, f2_try));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((p_new, l_new, f_new, f2_new)) = accepted else { break };
        p = p_new;
        lambda = l_new;
        f = f_new;
        f2 = f2_new;
    }
    let residual_norm = f2.sqrt();
    Ok(NewtonOutcome { p, lambda, residual_norm, converged: residual_norm <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_z() -> ConstraintProblem {
        ConstraintProblem::new(&["x", "y", "z"], &[("x^2+y^2+z^2", 1.0)], "z", None).unwrap()
    }

    #[test]
    fn kkt_residual_examples() {
        let r = kkt_residual(&sphere_z(), &[0.0, 0.0, 1.0], &[0.5]).unwrap();
        assert_eq!(r.as_slice(), &[0.0; 4]);
        let r = kkt_residual(&sphere_z(), &[0.0, 0.0, 1.0], &[0.0]).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        let torus_x = ConstraintProblem::new(
            &["x", "y", "z"],
            &[("(x^2+y^2+z^2+3)^2 - 16*(x^2+y^2)", 0.0)],
            "x",
            None,
        )
        .unwrap();
        let r = kkt_residual(&torus_x, &[3.0, 0.0, 0.0], &[1.0 / 48.0]).unwrap();
        assert!(r.norm() < 1e-15);
    }

    #[test]
    fn least_squares_multiplier_at_pole() {
        let l = least_squares_multipliers(&sphere_z(), &[0.0, 0.0, -1.0]).unwrap();
        assert!((l[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn newton_reaches_the_pole() {
        let p0 = DVector::from_column_slice(&[0.1, -0.2, 0.97]);
        let out = damped_newton(&sphere_z(), p0, DVector::from_element(1, 0.3), 1e-12, 100).unwrap();
        assert!(out.converged);
        assert!((out.p[2] - 1.0).abs() < 1e-12);
        assert!((out.lambda[0] - 0.5).abs() < 1e-12);
    }
}
