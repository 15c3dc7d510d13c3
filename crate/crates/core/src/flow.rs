//! The modulated gradient flow that pulls a band of Y onto a level set.
//!
//! `V(p)` is the orthogonal projection of `∇g_m(p)` onto the tangent space
//! of Y, `V = (I − Jᵀ(JJᵀ)⁻¹J) ∇g_m`. It vanishes exactly at critical
//! points of `g_m|_Y`, and `∇g_m · V ≥ 0` everywhere. The field
//! `W(p) = (u − g_m(p)) V(p)` is zero on the level set `X_u`, descends
//! above it and ascends below it, so along any trajectory
//! `d/dt g_m = (u − g_m) ∇g_m · V` has the sign of `u − g_m` and `g_m`
//! moves monotonically toward `u` without crossing it.
//!
//! Integration is classical RK4 followed by a Gauss–Newton projection back
//! onto Y after every step. A step whose stages or projection fail is
//! retried with half the step size.

use nalgebra::DVector;
use thiserror::Error;

use crate::expr::EvalError;
use crate::manifold::{relative_rank_ok, singular_values, ConstraintProblem};
use crate::tolerances::Tolerances;

/// Residual accepted for a point handed to the flow.
const START_FEASIBILITY: f64 = 1e-6;
const MAX_HALVINGS: usize = 8;
/// |g_m − u| at which a trajectory counts as converged.
pub const CONVERGED_GAP: f64 = 1e-3;
const STOP_GAP: f64 = 1e-6;
const STOP_SPEED: f64 = 1e-8;
/// Slack on the band when checking a start.
const BAND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("point is not on Y (residual {residual_norm:.3e})")]
    Infeasible { residual_norm: f64 },
    #[error("constraint Jacobian is rank deficient at the point")]
    RankDeficient,
    #[error("g_m = {gm} lies outside the band [{lo}, {hi}]")]
    OutOfBand { gm: f64, lo: f64, hi: f64 },
    #[error("flow reached t = {t} with g_m = {gm}, outside the target sub-band")]
    HorizonReached { t: f64, gm: f64 },
    #[error("trajectory broke down at t = {t}: {reason}")]
    Breakdown { t: f64, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    /// Target level.
    pub u: f64,
    /// `(u₁, u₂)` with `u₁ < u < u₂`.
    pub band: (f64, f64),
    pub dt: f64,
    pub t_max: f64,
    /// Sub-band half-width relative to the band width.
    pub band_tol: f64,
}

impl FlowConfig {
    pub fn new(u: f64, band: (f64, f64)) -> Result<Self, FlowError> {
        FlowConfig { u, band, dt: 1e-2, t_max: 50.0, band_tol: 1e-6 }.validated()
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self, FlowError> {
        self.dt = dt;
        self.validated()
    }

    pub fn with_t_max(mut self, t_max: f64) -> Result<Self, FlowError> {
        self.t_max = t_max;
        self.validated()
    }

    pub fn with_band_tol(mut self, band_tol: f64) -> Result<Self, FlowError> {
        self.band_tol = band_tol;
        self.validated()
    }

    fn validated(self) -> Result<Self, FlowError> {
        let (lo, hi) = self.band;
        if !(lo < self.u && self.u < hi) {
            return Err(FlowError::InvalidConfig(format!("need u1 < u < u2, got {lo} < {} < {hi}", self.u)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FlowError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(FlowError::InvalidConfig("t_max must be positive".into()));
        }
        if !(self.band_tol > 0.0 && self.band_tol < 0.5) {
            return Err(FlowError::InvalidConfig("band_tol must lie in (0, 0.5)".into()));
        }
        Ok(self)
    }

    /// Half-width δ of the target sub-band `(u − δ, u + δ)`.
    pub fn sub_band_halfwidth(&self) -> f64 {
        self.band_tol * (self.band.1 - self.band.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    pub p: Vec<f64>,
    pub gm: f64,
    /// `‖W(p)‖`
    pub speed: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<FlowSample>,
    /// `|g_m(p_final) − u| ≤ 1e-3`
    pub converged: bool,
    /// Set when the trajectory was truncated by a numerical failure.
    pub error: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("trajectories start with the initial sample")
    }

    /// CSV with header `t,x1,...,xn,gm,speed,residual`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.p.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",gm,speed,residual\n");
        for s in &self.samples {
            let mut row = vec![format!("{:.16e}", s.t)];
            row.extend(s.p.iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{:.16e}", s.gm));
            row.push(format!("{:.16e}", s.speed));
            row.push(format!("{:.16e}", s.residual));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Result of the time-T flow map.
#[derive(Clone, Debug, PartialEq)]
pub struct Retraction {
    pub point: Vec<f64>,
    /// First sampled time at which the sub-band was entered.
    pub t: f64,
    pub gm: f64,
}

/// Tangential projection of `∇g_m`, without feasibility checks.
fn v_unchecked(prob: &ConstraintProblem, p: &[f64], tol: &Tolerances) -> Result<DVector<f64>, FlowError> {
    let j = prob.jacobian_y(p)?;
    if !relative_rank_ok(&singular_values(&j), tol.rank) {
        return Err(FlowError::RankDeficient);
    }
    let chol = (&j * j.transpose()).cholesky().ok_or(FlowError::RankDeficient)?;
    let mut v = prob.objective().g.gradient(p)?;
    // two passes keep V orthogonal to the rows of J to roundoff
    for _ in 0..2 {
        let mu = chol.solve(&(&j * &v));
        v -= j.transpose() * mu;
    }
    Ok(v)
}

fn w_unchecked(prob: &ConstraintProblem, p: &[f64], u: f64, tol: &Tolerances) -> Result<DVector<f64>, FlowError> {
    let gm = prob.objective().g.evaluate(p)?;
    Ok(v_unchecked(prob, p, tol)? * (u - gm))
}

fn require_feasible(prob: &ConstraintProblem, p: &[f64]) -> Result<(), FlowError> {
    let residual_norm = prob.residual_norm(p)?;
    if residual_norm > START_FEASIBILITY {
        return Err(FlowError::Infeasible { residual_norm });
    }
    Ok(())
}

/// `V(p)`: projection of `∇g_m(p)` onto the tangent space of Y at `p`.
pub fn tangent_field(prob: &ConstraintProblem, p: &[f64], tol: &Tolerances) -> Result<DVector<f64>, FlowError> {
    require_feasible(prob, p)?;
    v_unchecked(prob, p, tol)
}

/// `W(p) = (u − g_m(p)) V(p)`.
pub fn modulated_field(prob: &ConstraintProblem, p: &[f64], u: f64, tol: &Tolerances) -> Result<DVector<f64>, FlowError> {
    require_feasible(prob, p)?;
    w_unchecked(prob, p, u, tol)
}

fn rk4_step(
    prob: &ConstraintProblem,
    p: &DVector<f64>,
    h: f64,
    u: f64,
    tol: &Tolerances,
) -> Result<DVector<f64>, FlowError> {
    let w = |q: &DVector<f64>| w_unchecked(prob, q.as_slice(), u, tol);
    let k1 = w(p)?;
    let k2 = w(&(p + &k1 * (h / 2.0)))?;
    let k3 = w(&(p + &k2 * (h / 2.0)))?;
    let k4 = w(&(p + &k3 * h))?;
    let raw = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    prob.project_to_y(raw.as_slice(), tol)
        .map(|fp| fp.p)
        .map_err(|e| FlowError::Breakdown { t: f64::NAN, reason: e.to_string() })
}

fn sample(prob: &ConstraintProblem, t: f64, p: &DVector<f64>, u: f64, tol: &Tolerances) -> Result<FlowSample, FlowError> {
    let gm = prob.objective().g.evaluate(p.as_slice())?;
    let speed = w_unchecked(prob, p.as_slice(), u, tol)?.norm();
    let residual = prob.residual_norm(p.as_slice())?;
    Ok(FlowSample { t, p: p.as_slice().to_vec(), gm, speed, residual })
}

fn check_start(prob: &ConstraintProblem, cfg: &FlowConfig, p0: &[f64], tol: &Tolerances) -> Result<DVector<f64>, FlowError> {
    require_feasible(prob, p0)?;
    let p = prob
        .project_to_y(p0, tol)
        .map_err(|e| FlowError::Breakdown { t: 0.0, reason: e.to_string() })?
        .p;
    let gm = prob.objective().g.evaluate(p.as_slice())?;
    let (lo, hi) = cfg.band;
    if gm < lo - BAND_SLACK || gm > hi + BAND_SLACK {
        return Err(FlowError::OutOfBand { gm, lo, hi });
    }
    Ok(p)
}

/// Integrates from `p` until `stop(sample)` or `t_max`.
fn drive(
    prob: &ConstraintProblem,
    cfg: &FlowConfig,
    p: DVector<f64>,
    tol: &Tolerances,
    stop: impl Fn(&FlowSample) -> bool,
) -> Result<Trajectory, FlowError> {
    let mut p = p;
    let mut t = 0.0;
    let first = sample(prob, t, &p, cfg.u, tol)?;
    let mut done = stop(&first);
    let mut samples = vec![first];
    let mut error = None;
    while !done && t < cfg.t_max {
        let mut h = cfg.dt.min(cfg.t_max - t);
        let mut step = None;
        for _ in 0..=MAX_HALVINGS {
            match rk4_step(prob, &p, h, cfg.u, tol) {
                Ok(q) => {
                    step = Some(q);
                    break;
                }
                Err(e) => {
                    error = Some(e);
                    h /= 2.0;
                }
            }
        }
        let Some(q) = step else {
            let reason = error.map_or_else(String::new, |e| e.to_string());
            return Ok(Trajectory {
                converged: false,
                samples,
                error: Some(format!("step failed at t = {t}: {reason}")),
            });
        };
        error = None;
        t += h;
        p = q;
        let s = match sample(prob, t, &p, cfg.u, tol) {
            Ok(s) => s,
            Err(e) => {
                return Ok(Trajectory { converged: false, samples, error: Some(e.to_string()) });
            }
        };
        done = stop(&s);
        samples.push(s);
    }
    let converged = (samples.last().expect("nonempty").gm - cfg.u).abs() <= CONVERGED_GAP;
    Ok(Trajectory { samples, converged, error: None })
}

/// Follows `W` from `p0` (on Y, with `g_m(p0)` in the band).
///
/// Stops at `t_max`, or once `|g_m − u| ≤ 1e-6` and `‖W‖ ≤ 1e-8`.
pub fn integrate(prob: &ConstraintProblem, cfg: &FlowConfig, p0: &[f64], tol: &Tolerances) -> Result<Trajectory, FlowError> {
    let p = check_start(prob, cfg, p0, tol)?;
    let u = cfg.u;
    drive(prob, cfg, p, tol, |s| (s.gm - u).abs() <= STOP_GAP && s.speed <= STOP_SPEED)
}

/// `r(p) = φ(p, T)` with T the first time the flow enters `(u − δ, u + δ)`.
pub fn retraction(prob: &ConstraintProblem, cfg: &FlowConfig, p: &[f64], tol: &Tolerances) -> Result<Retraction, FlowError> {
    let start = check_start(prob, cfg, p, tol)?;
    let delta = cfg.sub_band_halfwidth();
    let u = cfg.u;
    let traj = drive(prob, cfg, start, tol, |s| (s.gm - u).abs() < delta)?;
    let last = traj.last();
    let (t, gm) = (last.t, last.gm);
    if (gm - u).abs() < delta {
        return Ok(Retraction { point: last.p.clone(), t, gm });
    }
    match traj.error {
        Some(reason) => Err(FlowError::Breakdown { t, reason }),
        None => Err(FlowError::HorizonReached { t, gm }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_z() -> ConstraintProblem {
        ConstraintProblem::new(&["x", "y", "z"], &[("x^2+y^2+z^2", 1.0)], "z", None).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    const S: f64 = 0.8660254037844386; // √0.75

    #[test]
    fn v_examples() {
        let tol = Tolerances::default();
        let v = tangent_field(&sphere_z(), &[0.0, S, 0.5], &tol).unwrap();
        assert!(close(v.as_slice(), &[0.0, -0.5 * S, 0.75], 1e-15), "{v}");
        let v = tangent_field(&sphere_z(), &[0.0, 0.0, 1.0], &tol).unwrap();
        assert!(close(v.as_slice(), &[0.0; 3], 1e-15));
        let v = tangent_field(&sphere_z(), &[1.0, 0.0, 0.0], &tol).unwrap();
        assert!(close(v.as_slice(), &[0.0, 0.0, 1.0], 1e-15));
    }

    #[test]
    fn v_is_tangent() {
        let tol = Tolerances::default();
        let prob = sphere_z();
        let p = [0.48, -0.6, 0.64];
        let v = tangent_field(&prob, &p, &tol).unwrap();
        let j = prob.jacobian_y(&p).unwrap();
        assert!((j * v).amax() < 1e-10);
    }

    #[test]
    fn w_examples() {
        let tol = Tolerances::default();
        let w = modulated_field(&sphere_z(), &[1.0, 0.0, 0.0], 0.0, &tol).unwrap();
        assert!(close(w.as_slice(), &[0.0; 3], 0.0));
        let w = modulated_field(&sphere_z(), &[0.0, S, 0.5], 0.0, &tol).unwrap();
        assert!(close(w.as_slice(), &[0.0, 0.25 * S, -0.375], 1e-15));
        let w = modulated_field(&sphere_z(), &[0.0, 0.0, 1.0], 0.0, &tol).unwrap();
        assert!(close(w.as_slice(), &[0.0; 3], 1e-15));
    }

    #[test]
    fn field_errors() {
        let tol = Tolerances::default();
        assert!(matches!(tangent_field(&sphere_z(), &[0.0, 0.0, 2.0], &tol), Err(FlowError::Infeasible { .. })));
        assert!(FlowConfig::new(0.0, (0.5, 1.0)).is_err());
        assert!(FlowConfig::new(0.0, (-1.0, 1.0)).unwrap().with_dt(0.0).is_err());
        let cfg = FlowConfig::new(0.0, (-0.4, 0.4)).unwrap();
        assert!(matches!(
            integrate(&sphere_z(), &cfg, &[0.0, S, 0.5], &tol),
            Err(FlowError::OutOfBand { .. })
        ));
    }

    #[test]
    fn start_on_level_set_is_stationary() {
        let tol = Tolerances::default();
        let cfg = FlowConfig::new(0.0, (-0.8, 0.8)).unwrap();
        let tr = integrate(&sphere_z(), &cfg, &[0.6, 0.8, 0.0], &tol).unwrap();
        assert!(tr.converged);
        for s in &tr.samples {
            assert!(close(&s.p, &[0.6, 0.8, 0.0], 1e-9));
        }
    }

    #[test]
    fn north_pole_never_leaves() {
        let tol = Tolerances::default();
        let cfg = FlowConfig::new(0.0, (-1.0, 1.0)).unwrap().with_t_max(1.0).unwrap();
        let tr = integrate(&sphere_z(), &cfg, &[0.0, 0.0, 1.0], &tol).unwrap();
        assert!(!tr.converged);
        assert!(tr.samples.iter().all(|s| close(&s.p, &[0.0, 0.0, 1.0], 1e-12)));
        let err = retraction(&sphere_z(), &cfg, &[0.0, 0.0, 1.0], &tol).unwrap_err();
        assert!(matches!(err, FlowError::HorizonReached { gm, .. } if gm == 1.0));
    }

    #[test]
    fn retraction_lands_in_sub_band() {
        let tol = Tolerances::default();
        let cfg = FlowConfig::new(0.0, (-0.8, 0.8)).unwrap();
        let r = retraction(&sphere_z(), &cfg, &[0.0, S, 0.5], &tol).unwrap();
        let delta = cfg.sub_band_halfwidth();
        assert!(r.point[2].abs() < delta);
        let rr: f64 = r.point.iter().map(|v| v * v).sum();
        assert!((rr - 1.0).abs() < 1e-9);
        let r0 = retraction(&sphere_z(), &cfg, &[0.6, 0.8, 0.0], &tol).unwrap();
        assert_eq!(r0.t, 0.0);
    }

    /// On the sphere with objective z and u = 0, `ż = −z(1 − z²)`, so
    /// `z²/(1 − z²) = (z₀²/(1 − z₀²)) e^{−2t}`.
    #[test]
    fn matches_closed_form() {
        let tol = Tolerances::default();
        let cfg = FlowConfig::new(0.0, (-0.8, 0.8)).unwrap().with_t_max(1.0).unwrap();
        let tr = integrate(&sphere_z(), &cfg, &[0.0, S, 0.5], &tol).unwrap();
        let q = (-2.0f64).exp() / 3.0;
        let exact = (q / (1.0 + q)).sqrt();
        let last = tr.last();
        assert!((last.t - 1.0).abs() < 1e-9);
        assert!((last.p[2] - exact).abs() < 1e-4, "{} vs {exact}", last.p[2]);
        assert!((exact - 0.20776).abs() < 1e-5);
        for w in tr.samples.windows(2) {
            assert!(w[1].gm <= w[0].gm + 1e-12 && w[1].gm >= 0.0);
            assert!(w[1].residual <= 1e-8);
            assert_eq!(w[1].p[0], 0.0);
        }
    }

    #[test]
    fn csv_header_and_precision() {
        let tol = Tolerances::default();
        let cfg = FlowConfig::new(0.0, (-0.8, 0.8)).unwrap().with_t_max(0.02).unwrap();
        let tr = integrate(&sphere_z(), &cfg, &[0.0, S, 0.5], &tol).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,x3,gm,speed,residual"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 7);
        assert_eq!(row[0], "0.0000000000000000e0");
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.5);
    }
}
