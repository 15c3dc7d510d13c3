use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by the whole pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Residual norm below which a point counts as lying on Y.
    pub feasibility: f64,
    /// Relative singular-value cutoff for the constraint Jacobian.
    pub rank: f64,
    /// Norm of the Lagrange system residual for accepting a critical point.
    pub kkt: f64,
    /// Relative band for deciding that c_m equals u_min or u_max.
    pub optimality: f64,
    /// Euclidean radius under which two critical points are the same.
    pub dedup: f64,
    /// Relative tolerance for merging critical values.
    pub value_cluster: f64,
    /// Relative singular-value cutoff for the bordered Hessian.
    pub degeneracy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-9,
            rank: 1e-8,
            kkt: 1e-10,
            optimality: 1e-6,
            dedup: 1e-6,
            value_cluster: 1e-6,
            degeneracy: 1e-8,
        }
    }
}

impl Tolerances {
    /// `|a - b| <= tol * (1 + |b|)`
    pub fn relative_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }
}
