//! Equality-constrained problems and the feasible set Y.
//!
//! A [`ConstraintProblem`] holds `m - 1` constraints `g_i(p) = c_i` that
//! define Y, plus an objective constraint `g_m(p) = c_m`. The set of
//! alternatives is the intersection of all `m` level sets.
//!
//! Two hypotheses on Y are not checked here. Boundedness is approximated by
//! the sampling box. Connectedness is assumed: if Y has several pieces, c_m
//! must be the global optimum value of g_m restricted to one of those
//! pieces, which a sample-based tool cannot confirm.

pub mod file;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::expr::{EvalError, Expression, ParseError};
use crate::tolerances::Tolerances;
pub use file::{ConstraintSpec, ObjectiveSpec, ProblemFile, Provenance, DEFAULT_SEED};

pub const DEFAULT_BOX: (f64, f64) = (-10.0, 10.0);
pub const MAX_PROJECTION_ITERATIONS: usize = 50;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid JSON problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("in {location}: {source}")]
    Parse { location: String, source: ParseError },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("projection did not converge in {iterations} iterations (residual {residual_norm:.3e})")]
    NotConverged { residual_norm: f64, iterations: usize },
    #[error("constraint Jacobian is rank deficient along the projection path (residual {residual_norm:.3e})")]
    RankDeficient { residual_norm: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error("point is not on Y (residual {residual_norm:.3e})")]
    Infeasible { residual_norm: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub g: Expression,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub g: Expression,
    /// Unset for problems produced by perturbation until the caller picks a level.
    pub c: Option<f64>,
}

/// A point on Y together with the residual it was accepted at.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasiblePoint {
    pub p: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Singular values of the Y-constraint Jacobian, largest first.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub full_rank: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintProblem {
    name: Option<String>,
    variables: Vec<String>,
    constraints: Vec<Constraint>,
    objective: Objective,
    bounds: Vec<(f64, f64)>,
    seed: u64,
    provenance: Option<Provenance>,
}

/// Descending singular values of `m`.
pub(crate) fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `σ_min > tol · σ_max`, false for an all-zero matrix.
pub(crate) fn relative_rank_ok(sv: &[f64], tol: f64) -> bool {
    match (sv.first(), sv.last()) {
        (Some(&max), Some(&min)) => max > 0.0 && min > tol * max,
        _ => true,
    }
}

impl ConstraintProblem {
    /// Builds a problem from expression sources.
    ///
    /// ```
    /// use scfdesign::manifold::ConstraintProblem;
    /// let sphere = ConstraintProblem::new(
    ///     &["x", "y", "z"],
    ///     &[("x^2 + y^2 + z^2", 1.0)],
    ///     "z",
    ///     Some(1.0),
    /// ).unwrap();
    /// assert_eq!(sphere.n(), 3);
    /// assert_eq!(sphere.m(), 2);
    /// ```
    pub fn new<S: AsRef<str>>(
        variables: &[S],
        constraints: &[(&str, f64)],
        objective: &str,
        c_m: Option<f64>,
    ) -> Result<Self, ProblemError> {
        let file = ProblemFile {
            name: None,
            variables: variables.iter().map(|v| v.as_ref().to_string()).collect(),
            constraints: constraints
                .iter()
                .map(|(g, c)| ConstraintSpec { g: g.to_string(), c: *c })
                .collect(),
            objective: ObjectiveSpec { g: objective.to_string(), c: c_m },
            bounds: None,
            seed: DEFAULT_SEED,
            provenance: None,
        };
        Self::from_file(file)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ProblemError> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn from_file(file: ProblemFile) -> Result<Self, ProblemError> {
        let n = file.variables.len();
        crate::expr::validate_variables(&file.variables)
            .map_err(|source| ProblemError::Parse { location: "variables".into(), source })?;
        if file.constraints.is_empty() {
            return Err(ProblemError::Invalid(
                "at least one constraint defining Y is required besides the objective".into(),
            ));
        }
        let m = file.constraints.len() + 1;
        if m >= n {
            return Err(ProblemError::Invalid(format!(
                "the number of constraints m = {m} must be strictly smaller than the dimension n = {n}"
            )));
        }
        let mut constraints = Vec::with_capacity(m - 1);
        for (i, spec) in file.constraints.iter().enumerate() {
            let g = Expression::parse(&spec.g, &file.variables).map_err(|source| {
                ProblemError::Parse { location: format!("constraints[{i}].g"), source }
            })?;
            if !spec.c.is_finite() {
                return Err(ProblemError::Invalid(format!("constraints[{i}].c is not finite")));
            }
            constraints.push(Constraint { g, c: spec.c });
        }
        let g = Expression::parse(&file.objective.g, &file.variables)
            .map_err(|source| ProblemError::Parse { location: "objective.g".into(), source })?;
        if matches!(file.objective.c, Some(c) if !c.is_finite()) {
            return Err(ProblemError::Invalid("objective.c is not finite".into()));
        }
        let bounds = match file.bounds {
            None => vec![DEFAULT_BOX; n],
            Some(b) => {
                if b.len() != n {
                    return Err(ProblemError::Invalid(format!(
                        "box has {} intervals for {n} variables",
                        b.len()
                    )));
                }
                b.into_iter().map(|[lo, hi]| (lo, hi)).collect()
            }
        };
        check_bounds(&bounds)?;
        Ok(ConstraintProblem {
            name: file.name,
            variables: file.variables,
            constraints,
            objective: Objective { g, c: file.objective.c },
            bounds,
            seed: file.seed,
            provenance: file.provenance,
        })
    }

    pub fn to_file(&self) -> ProblemFile {
        ProblemFile {
            name: self.name.clone(),
            variables: self.variables.clone(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintSpec { g: c.g.to_string(), c: c.c })
                .collect(),
            objective: ObjectiveSpec { g: self.objective.g.to_string(), c: self.objective.c },
            bounds: Some(self.bounds.iter().map(|&(lo, hi)| [lo, hi]).collect()),
            seed: self.seed,
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("problem file serializes")
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self, ProblemError> {
        if bounds.len() != self.n() {
            return Err(ProblemError::Invalid(format!(
                "box has {} intervals for {} variables",
                bounds.len(),
                self.n()
            )));
        }
        check_bounds(&bounds)?;
        self.bounds = bounds;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_objective_level(mut self, c_m: Option<f64>) -> Self {
        self.objective.c = c_m;
        self
    }

    /// Replaces the objective function, keeping everything else.
    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_provenance(mut self, provenance: Option<Provenance>) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Ambient dimension.
    pub fn n(&self) -> usize {
        self.variables.len()
    }

    /// Total number of constraints, the objective included.
    pub fn m(&self) -> usize {
        self.constraints.len() + 1
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Uniform sample from the box.
    pub fn sample_box<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.bounds.iter().map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) }),
        )
    }

    /// `g_i(p) - c_i` for the constraints defining Y.
    pub fn residual(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        let mut r = DVector::zeros(self.constraints.len());
        for (i, c) in self.constraints.iter().enumerate() {
            r[i] = c.g.evaluate(p)? - c.c;
        }
        Ok(r)
    }

    pub fn residual_norm(&self, p: &[f64]) -> Result<f64, EvalError> {
        Ok(self.residual(p)?.norm())
    }

    /// Residual of all `m` constraints, objective last. Needs `c_m`.
    pub fn full_residual(&self, p: &[f64]) -> Result<Option<DVector<f64>>, EvalError> {
        let Some(c_m) = self.objective.c else { return Ok(None) };
        let r = self.residual(p)?;
        let gm = self.objective.g.evaluate(p)? - c_m;
        Ok(Some(r.push(gm)))
    }

    /// Rows are the gradients of the Y-constraints.
    pub fn jacobian_y(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut j = DMatrix::zeros(self.constraints.len(), self.n());
        for (i, c) in self.constraints.iter().enumerate() {
            j.set_row(i, &c.g.gradient(p)?.transpose());
        }
        Ok(j)
    }

    /// Constraint qualification at a (nearly) feasible point.
    pub fn check_cq(&self, p: &[f64], tol: &Tolerances) -> Result<RankReport, ManifoldError> {
        let residual_norm = self.residual_norm(p)?;
        if residual_norm > 1e-6 {
            return Err(ManifoldError::Infeasible { residual_norm });
        }
        let singular_values = singular_values(&self.jacobian_y(p)?);
        let full_rank = relative_rank_ok(&singular_values, tol.rank);
        Ok(RankReport { singular_values, full_rank })
    }

    /// Gauss–Newton projection `p ← p − Jᵀ(JJᵀ)⁻¹ r(p)` onto Y.
    pub fn project_to_y(&self, p0: &[f64], tol: &Tolerances) -> Result<FeasiblePoint, ProjectionError> {
        let mut p = DVector::from_column_slice(p0);
        let mut residual_norm = f64::INFINITY;
        for iterations in 0..=MAX_PROJECTION_ITERATIONS {
            let r = self.residual(p.as_slice())?;
            residual_norm = r.norm();
            if residual_norm <= tol.feasibility {
                return Ok(FeasiblePoint { p, residual_norm, iterations });
            }
            if iterations == MAX_PROJECTION_ITERATIONS {
                break;
            }
            let j = self.jacobian_y(p.as_slice())?;
            if !relative_rank_ok(&singular_values(&j), tol.rank) {
                return Err(ProjectionError::RankDeficient { residual_norm });
            }
            let jjt = &j * j.transpose();
            let Some(chol) = jjt.cholesky() else {
                return Err(ProjectionError::RankDeficient { residual_norm });
            };
            p -= j.transpose() * chol.solve(&r);
            if !p.iter().all(|v| v.is_finite()) {
                break;
            }
        }
        Err(ProjectionError::NotConverged { residual_norm, iterations: MAX_PROJECTION_ITERATIONS })
    }
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<(), ProblemError> {
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ProblemError::Invalid(format!("box interval {j} = [{lo}, {hi}] is empty or unbounded")));
        }
    }
    Ok(())
}
