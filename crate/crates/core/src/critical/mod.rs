//! Critical points of the objective restricted to Y.
//!
//! A point `p ∈ Y` is critical for `g_m|_Y` when `∇g_m(p)` is a linear
//! combination of the constraint gradients, i.e. when `(p, λ)` is a
//! stationary point of `L(λ, p) = g_m(p) − Σ λ_i (g_i(p) − c_i)`.
//!
//! [`solve_critical_points`] samples starts uniformly in the box from a
//! seeded stream, projects each onto Y, and runs damped Newton on `∇L = 0`.
//! Converged solutions are sorted by `(value, coordinates)` and then
//! deduplicated, so the catalog does not depend on thread scheduling.
//! Coverage is heuristic; the catalog records how many starts converged.

mod morse;
mod newton;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifold::{ConstraintProblem, ProjectionError};
use crate::tolerances::Tolerances;

pub use morse::{bordered_hessian, morse_certify, ContinuumEvidence};
pub use newton::{kkt_residual, least_squares_multipliers};

pub const DEFAULT_STARTS: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalConfig {
    pub n_starts: usize,
    pub seed: u64,
    pub tol: Tolerances,
    pub max_newton_iterations: usize,
    /// Step length of the continuum probe along a Hessian null direction.
    pub continuum_step: f64,
    /// Points a probe chain must collect to flag a continuum.
    pub continuum_points: usize,
    /// Every pair in a probe chain must be closer than this.
    pub continuum_radius: f64,
}

impl CriticalConfig {
    pub fn new(n_starts: usize, seed: u64) -> Self {
        CriticalConfig {
            n_starts,
            seed,
            tol: Tolerances::default(),
            max_newton_iterations: 100,
            continuum_step: 1e-3,
            continuum_points: 10,
            continuum_radius: 1e-2,
        }
    }

    /// Default start count with the problem's own seed.
    pub fn for_problem(prob: &ConstraintProblem) -> Self {
        Self::new(DEFAULT_STARTS, prob.seed())
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }
}

/// A critical point of `g_m|_Y` with its multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianPoint {
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `g_m(p)`
    pub u: f64,
    pub kkt_residual: f64,
    #[serde(rename = "hessL_det")]
    pub hessl_det: f64,
    /// `σ_min / σ_max` of the bordered Hessian.
    pub sigma_ratio: f64,
    pub nondegenerate: bool,
    /// Converged starts that landed on this point.
    pub hits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCatalog {
    pub points: Vec<LagrangianPoint>,
    /// Clustered critical values, ascending.
    pub values: Vec<f64>,
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub starts_used: usize,
    /// Starts that reached Y.
    pub projected: usize,
    /// Starts whose projection hit a rank-deficient Jacobian.
    pub rank_deficient: usize,
    pub converged: usize,
    /// Set by [`morse_certify`].
    pub is_morse: Option<bool>,
    pub continuum: Vec<ContinuumEvidence>,
    pub warnings: Vec<String>,
}

impl CriticalCatalog {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Catalog points whose value is within `tol·(1+|c|)` of `c`.
    pub fn points_at_value(&self, c: f64, tol: f64) -> Vec<&LagrangianPoint> {
        self.points.iter().filter(|lp| Tolerances::relative_eq(lp.u, c, tol)).collect()
    }

    /// True when `v` is within the clustering tolerance of a critical value.
    pub fn is_critical_value(&self, v: f64, tol: f64) -> bool {
        self.values.iter().any(|&c| Tolerances::relative_eq(v, c, tol))
    }
}

enum StartOutcome {
    Converged { p: DVector<f64>, lambda: DVector<f64>, residual: f64 },
    NewtonFailed,
    ProjectionFailed { rank_deficient: bool },
}

/// Draws the start points. The `k`-th start does not depend on `n_starts`.
pub fn start_points(prob: &ConstraintProblem, n_starts: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_starts).map(|_| prob.sample_box(&mut rng)).collect()
}

/// `(p, λ, residual norm)` of a converged Newton run.
pub(crate) type Refined = (DVector<f64>, DVector<f64>, f64);

/// Projects `p0` onto Y and polishes it into a critical point.
pub(crate) fn refine_from(
    prob: &ConstraintProblem,
    p0: &[f64],
    cfg: &CriticalConfig,
) -> Result<Option<Refined>, ProjectionError> {
    let fp = prob.project_to_y(p0, &cfg.tol)?;
    let lambda0 = least_squares_multipliers(prob, fp.p.as_slice())?;
    let out = newton::damped_newton(prob, fp.p, lambda0, cfg.tol.kkt, cfg.max_newton_iterations)?;
    if out.converged && out.p.iter().all(|v| v.is_finite()) {
        Ok(Some((out.p, out.lambda, out.residual_norm)))
    } else {
        Ok(None)
    }
}

fn run_start(prob: &ConstraintProblem, p0: &DVector<f64>, cfg: &CriticalConfig) -> StartOutcome {
    match refine_from(prob, p0.as_slice(), cfg) {
        Ok(Some((p, lambda, residual))) => StartOutcome::Converged { p, lambda, residual },
        Ok(None) | Err(ProjectionError::Eval(_)) => StartOutcome::NewtonFailed,
        Err(ProjectionError::RankDeficient { .. }) => StartOutcome::ProjectionFailed { rank_deficient: true },
        Err(ProjectionError::NotConverged { .. }) => StartOutcome::ProjectionFailed { rank_deficient: false },
    }
}

fn lex_cmp(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then_with(|| {
        a.1.iter()
            .zip(&b.1)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Merges sorted values whose gap to the cluster's first member is within
/// `tol·(1+|v|)`. Each cluster is reported by its mean.
pub(crate) fn cluster_values(sorted: &[f64], tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let first = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && Tolerances::relative_eq(sorted[j], first, tol) {
            j += 1;
        }
        out.push(sorted[i..j].iter().sum::<f64>() / (j - i) as f64);
        i = j;
    }
    out
}

/// Multistart search for the critical points of `g_m|_Y`.
///
/// Always returns a catalog; an empty one means no start converged.
pub fn solve_critical_points(prob: &ConstraintProblem, cfg: &CriticalConfig) -> CriticalCatalog {
    let starts = start_points(prob, cfg.n_starts, cfg.seed);
    let outcomes: Vec<StartOutcome> = starts.par_iter().map(|p0| run_start(prob, p0, cfg)).collect();

    let mut projected = 0;
    let mut rank_deficient = 0;
    let mut found = Vec::new();
    for o in outcomes {
        match o {
            StartOutcome::Converged { p, lambda, residual } => {
                projected += 1;
                found.push((p, lambda, residual));
            }
            StartOutcome::NewtonFailed => projected += 1,
            StartOutcome::ProjectionFailed { rank_deficient: rd } => rank_deficient += rd as usize,
        }
    }
    let converged = found.len();

    // keyed by (value, coordinates) for a schedule-independent order
    type Keyed = ((f64, Vec<f64>), DVector<f64>, f64);
    let mut keyed: Vec<Keyed> = found
        .into_iter()
        .filter_map(|(p, lambda, residual)| {
            let u = prob.objective().g.evaluate(p.as_slice()).ok()?;
            Some(((u, p.as_slice().to_vec()), lambda, residual))
        })
        .collect();
    keyed.sort_by(|a, b| lex_cmp(&a.0, &b.0));

    let mut points: Vec<LagrangianPoint> = Vec::new();
    for ((u, p), lambda, residual) in keyed {
        let pv = DVector::from_column_slice(&p);
        if let Some(existing) = points
            .iter_mut()
            .find(|lp| (DVector::from_column_slice(&lp.p) - &pv).norm() <= cfg.tol.dedup)
        {
            existing.hits += 1;
            continue;
        }
        points.push(LagrangianPoint {
            p,
            lambda: lambda.as_slice().to_vec(),
            u,
            kkt_residual: residual,
            hessl_det: f64::NAN,
            sigma_ratio: f64::NAN,
            nondegenerate: false,
            hits: 1,
        });
    }
    for lp in &mut points {
        morse::certify_point(prob, lp, &cfg.tol);
    }

    let mut sorted: Vec<f64> = points.iter().map(|lp| lp.u).collect();
    sorted.sort_by(f64::total_cmp);
    let values = cluster_values(&sorted, cfg.tol.value_cluster);

    let mut warnings = Vec::new();
    if cfg.n_starts > 0 && rank_deficient * 10 > cfg.n_starts * 9 {
        warnings.push(format!(
            "projection hit a rank-deficient Jacobian on {rank_deficient} of {} starts; \
             constraint qualifications may fail on Y",
            cfg.n_starts
        ));
    }
    if points.is_empty() {
        warnings.push("no critical points found".into());
    }

    CriticalCatalog {
        u_min: values.first().copied(),
        u_max: values.last().copied(),
        points,
        values,
        starts_used: cfg.n_starts,
        projected,
        rank_deficient,
        converged,
        is_morse: None,
        continuum: Vec::new(),
        warnings,
    }
}
