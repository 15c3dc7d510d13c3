//! The `scfdesign` command-line front end.
//!
//! [`RunConfig`] is the parsed command line and [`run`] executes it,
//! returning the exit status together with everything meant for standard
//! output and standard error, so the binary is a thin wrapper and the whole
//! pipeline can be driven from tests.
//!
//! Exit status: 0 success, 2 usage, parse, schema or I/O error, 3 infeasible
//! problem or empty catalog, 4 numerical failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::critical::{morse_certify, solve_critical_points, CriticalCatalog, CriticalConfig};
use crate::flow::{integrate, FlowConfig, FlowError};
use crate::manifold::{ConstraintProblem, ProblemFile};
use crate::perturb::{morse_repair, PerturbError, Perturbation};
use crate::verdict::{analyze, build_scf, fmt_num, AnalysisReport, RunProvenance, VerdictError, VerdictKind};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// A parsed flag value that remembers the text it was given as.
#[derive(Clone, Debug, PartialEq)]
pub struct Given<T> {
    pub raw: String,
    pub value: T,
}

impl<T: FromStr> FromStr for Given<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let value = s.parse::<T>().map_err(|e| e.to_string())?;
        Ok(Given { raw: s.to_string(), value })
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("{t:?} is not a number")))
        .collect()
}

/// Comma-separated coordinates, e.g. `0,0.5,0.75`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coords(pub Vec<f64>);

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(Coords)
    }
}

/// `A,B` with `A < B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band(pub f64, pub f64);

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match parse_list(s)?[..] {
            [a, b] if a < b => Ok(Band(a, b)),
            [_, _] => Err("band must satisfy A < B".into()),
            _ => Err("band must be two numbers A,B".into()),
        }
    }
}

/// Either `lo,hi` for every coordinate or `lo1,hi1;lo2,hi2;...`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSpec(pub Vec<(f64, f64)>);

impl FromStr for BoxSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(';')
            .map(|part| match parse_list(part)?[..] {
                [lo, hi] => Ok((lo, hi)),
                _ => Err(format!("box entry {part:?} must be lo,hi")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BoxSpec)
    }
}

impl BoxSpec {
    fn for_dim(&self, n: usize) -> Result<Vec<(f64, f64)>, String> {
        match self.0.len() {
            1 => Ok(vec![self.0[0]; n]),
            k if k == n => Ok(self.0.clone()),
            k => Err(format!("--box has {k} intervals, problem has {n} variables")),
        }
    }
}

/// Overrides shared by every subcommand.
#[derive(Args, Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Multistart count.
    #[arg(long, global = true, value_name = "N")]
    pub starts: Option<Given<usize>>,
    /// Seed for the start stream (defaults to the problem file's seed).
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<Given<u64>>,
    /// Feasibility tolerance on the constraint residual.
    #[arg(long = "tol-feas", global = true, value_name = "TOL")]
    pub tol_feas: Option<Given<f64>>,
    /// Residual tolerance for the Lagrange system.
    #[arg(long = "tol-kkt", global = true, value_name = "TOL")]
    pub tol_kkt: Option<Given<f64>>,
    /// Relative band for c_m = u_min or u_max.
    #[arg(long = "tol-opt", global = true, value_name = "TOL")]
    pub tol_opt: Option<Given<f64>>,
    /// Sampling box, `lo,hi` or `lo1,hi1;lo2,hi2;...`.
    #[arg(long = "box", global = true, value_name = "BOX", allow_hyphen_values = true)]
    pub bounds: Option<Given<BoxSpec>>,
}

impl Overrides {
    fn recorded(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<&str>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v.to_string());
            }
        };
        put("--starts", self.starts.as_ref().map(|g| g.raw.as_str()));
        put("--seed", self.seed.as_ref().map(|g| g.raw.as_str()));
        put("--tol-feas", self.tol_feas.as_ref().map(|g| g.raw.as_str()));
        put("--tol-kkt", self.tol_kkt.as_ref().map(|g| g.raw.as_str()));
        put("--tol-opt", self.tol_opt.as_ref().map(|g| g.raw.as_str()));
        put("--box", self.bounds.as_ref().map(|g| g.raw.as_str()));
        m
    }
}

#[derive(Subcommand, Clone, Debug, PartialEq)]
pub enum Command {
    /// Full pipeline and verdict on c_m.
    Analyze { input: PathBuf },
    /// Critical points of g_m on Y with Morse certification.
    Critical { input: PathBuf },
    /// Only the range [u_min, u_max] of g_m on Y.
    Range { input: PathBuf },
    /// Integrates the modulated gradient flow and writes a CSV trajectory.
    Flow {
        input: PathBuf,
        /// Target level.
        #[arg(long, allow_hyphen_values = true)]
        u: Given<f64>,
        /// Band A,B around the target.
        #[arg(long, allow_hyphen_values = true)]
        band: Given<Band>,
        /// Start point as comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        start: Given<Coords>,
        #[arg(long)]
        dt: Option<Given<f64>>,
        #[arg(long)]
        tmax: Option<Given<f64>>,
    },
    /// Random linear perturbation until g_m on Y is Morse.
    Perturb {
        input: PathBuf,
        #[arg(long, default_value = "0.01")]
        epsilon: Given<f64>,
        #[arg(long, default_value = "3")]
        tries: Given<usize>,
    },
    /// Applies the max-label rule of a SOLUTION_EXISTS report to a profile.
    Scf {
        /// Analysis report written by `analyze --json`.
        report: PathBuf,
        /// Profile of choices, `p1;p2;...`, each comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        choices: String,
    },
}

#[derive(Parser, Clone, Debug, PartialEq)]
#[command(name = "scfdesign", version, about = "Solvability of social choice over constrained sets of alternatives")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Structured (JSON) output instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Write the main artifact to PATH instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// What a run produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

type Step<T> = Result<T, Failure>;

struct Emitted {
    code: u8,
    main: String,
    /// Printed to stdout even when `main` goes to `--out`.
    side: String,
    stderr: String,
}

impl Emitted {
    fn main(code: u8, main: String) -> Self {
        Emitted { code, main, side: String::new(), stderr: String::new() }
    }
}

/// Executes one command.
pub fn run(cfg: &RunConfig) -> Outcome {
    let result = match &cfg.command {
        Command::Analyze { input } => cmd_analyze(cfg, input),
        Command::Critical { input } => cmd_critical(cfg, input),
        Command::Range { input } => cmd_range(cfg, input),
        Command::Flow { input, u, band, start, dt, tmax } => {
            cmd_flow(cfg, input, u, band, start, dt.as_ref(), tmax.as_ref())
        }
        Command::Perturb { input, epsilon, tries } => cmd_perturb(cfg, input, epsilon, tries),
        Command::Scf { report, choices } => cmd_scf(cfg, report, choices),
    };
    match result {
        Ok(e) => {
            let mut out = Outcome { code: e.code, stdout: e.side, stderr: e.stderr };
            match &cfg.out {
                Some(path) => {
                    if let Err(err) = fs::write(path, &e.main) {
                        out.code = EXIT_INPUT;
                        let _ = writeln!(out.stderr, "error: cannot write {}: {err}", path.display());
                    }
                }
                None => out.stdout.insert_str(0, &e.main),
            }
            out
        }
        Err(f) => Outcome { code: f.code, stdout: String::new(), stderr: format!("error: {}\n", f.message) },
    }
}

fn load_problem(cfg: &RunConfig, input: &Path) -> Step<ConstraintProblem> {
    let text = fs::read_to_string(input)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", input.display())))?;
    let prob = ConstraintProblem::from_json_str(&text)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", input.display())))?;
    match &cfg.overrides.bounds {
        Some(b) => {
            let bounds = b.value.for_dim(prob.n()).map_err(|e| Failure::new(EXIT_INPUT, e))?;
            prob.with_bounds(bounds).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))
        }
        None => Ok(prob),
    }
}

fn positive(name: &str, g: &Option<Given<f64>>) -> Step<Option<f64>> {
    match g {
        Some(g) if g.value > 0.0 && g.value.is_finite() => Ok(Some(g.value)),
        Some(g) => Err(Failure::new(EXIT_INPUT, format!("{name} must be positive, got {}", g.raw))),
        None => Ok(None),
    }
}

fn critical_config(cfg: &RunConfig, prob: &ConstraintProblem) -> Step<CriticalConfig> {
    let o = &cfg.overrides;
    let mut cc = CriticalConfig::for_problem(prob);
    if let Some(s) = &o.starts {
        if s.value == 0 {
            return Err(Failure::new(EXIT_INPUT, "--starts must be at least 1"));
        }
        cc.n_starts = s.value;
    }
    if let Some(s) = &o.seed {
        cc.seed = s.value;
    }
    if let Some(v) = positive("--tol-feas", &o.tol_feas)? {
        cc.tol.feasibility = v;
    }
    if let Some(v) = positive("--tol-kkt", &o.tol_kkt)? {
        cc.tol.kkt = v;
    }
    if let Some(v) = positive("--tol-opt", &o.tol_opt)? {
        cc.tol.optimality = v;
    }
    Ok(cc)
}

fn provenance(cfg: &RunConfig, input: &Path, cc: &CriticalConfig, extra: &[(&str, &str)]) -> RunProvenance {
    let mut overrides = cfg.overrides.recorded();
    for (k, v) in extra {
        overrides.insert(k.to_string(), v.to_string());
    }
    RunProvenance {
        input: Some(input.display().to_string()),
        seed: cc.seed,
        starts: cc.n_starts,
        tolerances: Some(cc.tol),
        overrides,
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn verdict_code(v: VerdictKind) -> u8 {
    if v == VerdictKind::Infeasible {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    }
}

fn verdict_failure(e: VerdictError) -> Failure {
    match e {
        VerdictError::MissingLevel => Failure::new(EXIT_INPUT, "objective has no level c; analyze needs one"),
        VerdictError::NoCriticalPoints => Failure::new(EXIT_INFEASIBLE, e.to_string()),
    }
}

fn render_report(cfg: &RunConfig, report: &AnalysisReport) -> String {
    if cfg.json {
        let mut s = report.to_json();
        s.push('\n');
        s
    } else {
        report.to_text()
    }
}

fn cmd_analyze(cfg: &RunConfig, input: &Path) -> Step<Emitted> {
    let prob = load_problem(cfg, input)?;
    let cc = critical_config(cfg, &prob)?;
    let mut report = analyze(&prob, &cc).map_err(verdict_failure)?;
    report.provenance = Some(provenance(cfg, input, &cc, &[]));
    Ok(Emitted::main(verdict_code(report.verdict), render_report(cfg, &report)))
}

fn certified_catalog(prob: &ConstraintProblem, cc: &CriticalConfig) -> CriticalCatalog {
    morse_certify(prob, solve_critical_points(prob, cc), cc)
}

#[derive(Serialize)]
struct CatalogDocument<'a> {
    #[serde(flatten)]
    catalog: &'a CriticalCatalog,
    provenance: RunProvenance,
}

fn catalog_text(cat: &CriticalCatalog) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} critical points ({} of {} starts converged)", cat.points.len(), cat.converged, cat.starts_used);
    for lp in &cat.points {
        let p: Vec<String> = lp.p.iter().map(|&v| fmt_num(v)).collect();
        let l: Vec<String> = lp.lambda.iter().map(|&v| fmt_num(v)).collect();
        let _ = writeln!(
            s,
            "  p = ({})  lambda = ({})  value = {}  det = {:.6e}  {}",
            p.join(", "),
            l.join(", "),
            fmt_num(lp.u),
            lp.hessl_det,
            if lp.nondegenerate { "nondegenerate" } else { "degenerate" }
        );
    }
    let vals: Vec<String> = cat.values.iter().map(|&v| fmt_num(v)).collect();
    let _ = writeln!(s, "critical values: {{{}}}", vals.join(", "));
    let _ = writeln!(s, "morse: {}", if cat.is_morse == Some(true) { "yes" } else { "no" });
    for w in &cat.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn cmd_critical(cfg: &RunConfig, input: &Path) -> Step<Emitted> {
    let prob = load_problem(cfg, input)?;
    let cc = critical_config(cfg, &prob)?;
    let cat = certified_catalog(&prob, &cc);
    let code = if cat.is_empty() { EXIT_INFEASIBLE } else { EXIT_OK };
    let main = if cfg.json {
        to_json(&CatalogDocument { catalog: &cat, provenance: provenance(cfg, input, &cc, &[]) })
    } else {
        catalog_text(&cat)
    };
    Ok(Emitted::main(code, main))
}

#[derive(Serialize)]
struct RangeDocument {
    u_min: f64,
    u_max: f64,
    provenance: RunProvenance,
}

fn cmd_range(cfg: &RunConfig, input: &Path) -> Step<Emitted> {
    let prob = load_problem(cfg, input)?;
    let cc = critical_config(cfg, &prob)?;
    let cat = solve_critical_points(&prob, &cc);
    let (Some(u_min), Some(u_max)) = (cat.u_min, cat.u_max) else {
        return Err(Failure::new(EXIT_INFEASIBLE, "no critical points found; the range is unknown"));
    };
    let main = if cfg.json {
        to_json(&RangeDocument { u_min, u_max, provenance: provenance(cfg, input, &cc, &[]) })
    } else {
        format!("u_min={} u_max={}\n", fmt_num(u_min), fmt_num(u_max))
    };
    Ok(Emitted::main(EXIT_OK, main))
}

fn flow_failure(e: FlowError) -> Failure {
    let code = match e {
        FlowError::InvalidConfig(_) | FlowError::OutOfBand { .. } => EXIT_INPUT,
        FlowError::Infeasible { .. } => EXIT_INFEASIBLE,
        _ => EXIT_NUMERICAL,
    };
    Failure::new(code, e.to_string())
}

fn cmd_flow(
    cfg: &RunConfig,
    input: &Path,
    u: &Given<f64>,
    band: &Given<Band>,
    start: &Given<Coords>,
    dt: Option<&Given<f64>>,
    tmax: Option<&Given<f64>>,
) -> Step<Emitted> {
    let prob = load_problem(cfg, input)?;
    let cc = critical_config(cfg, &prob)?;
    let Band(lo, hi) = band.value;
    let mut fc = FlowConfig::new(u.value, (lo, hi)).map_err(flow_failure)?;
    if let Some(dt) = dt {
        fc = fc.with_dt(dt.value).map_err(flow_failure)?;
    }
    if let Some(t) = tmax {
        fc = fc.with_t_max(t.value).map_err(flow_failure)?;
    }
    if start.value.0.len() != prob.n() {
        return Err(Failure::new(
            EXIT_INPUT,
            format!("--start has {} coordinates, problem has {}", start.value.0.len(), prob.n()),
        ));
    }
    let mut stderr = String::new();
    let p0 = prob
        .project_to_y(&start.value.0, &cc.tol)
        .map_err(|e| Failure::new(EXIT_INFEASIBLE, format!("cannot place the start on Y: {e}")))?;
    let moved = (&p0.p - nalgebra::DVector::from_column_slice(&start.value.0)).norm();
    if moved > 1e-12 {
        let _ = writeln!(stderr, "note: start projected onto Y (moved {moved:.3e})");
    }
    let traj = integrate(&prob, &fc, p0.p.as_slice(), &cc.tol).map_err(flow_failure)?;
    let mut code = EXIT_OK;
    if let Some(err) = &traj.error {
        code = EXIT_NUMERICAL;
        let _ = writeln!(stderr, "error: trajectory truncated: {err}");
    } else if !traj.converged {
        let last = traj.last();
        let _ = writeln!(stderr, "warning: not converged by t = {}: g_m = {}", fmt_num(last.t), fmt_num(last.gm));
    }
    Ok(Emitted { code, main: traj.to_csv(), side: String::new(), stderr })
}

#[derive(Serialize)]
struct PerturbDocument<'a> {
    problem: &'a ProblemFile,
    perturbation: &'a Perturbation,
    tries: usize,
    report: &'a AnalysisReport,
}

fn cmd_perturb(cfg: &RunConfig, input: &Path, epsilon: &Given<f64>, tries: &Given<usize>) -> Step<Emitted> {
    let prob = load_problem(cfg, input)?;
    let cc = critical_config(cfg, &prob)?;
    let repair = morse_repair(&prob, epsilon.value, tries.value, cc.seed, &cc).map_err(|e| match e {
        PerturbError::Exhausted(ref diag) => {
            let detail: Vec<String> = diag
                .iter()
                .map(|d| format!("try {}: {} points, {} degenerate", d.attempt, d.points, d.degenerate))
                .collect();
            Failure::new(EXIT_NUMERICAL, format!("{e} ({})", detail.join("; ")))
        }
        PerturbError::LengthMismatch { .. } => Failure::new(EXIT_NUMERICAL, e.to_string()),
        PerturbError::InvalidEpsilon(_) | PerturbError::NoTries => Failure::new(EXIT_INPUT, e.to_string()),
    })?;
    let u_max = repair
        .catalog
        .u_max
        .ok_or_else(|| Failure::new(EXIT_INFEASIBLE, "perturbed problem has no critical points"))?;
    let problem = repair.problem.clone().with_objective_level(Some(u_max));
    let mut report = analyze(&problem, &cc).map_err(verdict_failure)?;
    report.provenance =
        Some(provenance(cfg, input, &cc, &[("--epsilon", &epsilon.raw), ("--tries", &tries.raw)]));
    let file = problem.to_file();
    let code = verdict_code(report.verdict);
    if cfg.out.is_some() {
        return Ok(Emitted { code, main: to_json(&file), side: render_report(cfg, &report), stderr: String::new() });
    }
    let main = if cfg.json {
        to_json(&PerturbDocument { problem: &file, perturbation: &repair.perturbation, tries: repair.tries, report: &report })
    } else {
        let a: Vec<String> = repair.perturbation.a.iter().map(|&v| format!("{v:e}")).collect();
        format!(
            "perturbation a = ({}) accepted on try {}\nperturbed objective: {}\n{}\nperturbed problem file:\n{}",
            a.join(", "),
            repair.tries,
            problem.objective().g,
            report.to_text(),
            to_json(&file)
        )
    };
    Ok(Emitted::main(code, main))
}

#[derive(Serialize)]
struct ChoiceDocument {
    choices: Vec<Vec<f64>>,
    selected: Vec<f64>,
    label: usize,
}

fn cmd_scf(cfg: &RunConfig, report_path: &Path, choices: &str) -> Step<Emitted> {
    let text = fs::read_to_string(report_path)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", report_path.display())))?;
    let report: AnalysisReport = serde_json::from_str(&text)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{} is not an analysis report: {e}", report_path.display())))?;
    if report.verdict != VerdictKind::SolutionExists {
        return Err(Failure::new(
            EXIT_INPUT,
            format!("scf needs a SOLUTION_EXISTS report, this one says {}", report.verdict.as_str()),
        ));
    }
    let fx = report
        .alternatives()
        .ok_or_else(|| Failure::new(EXIT_INPUT, "report has no alternatives X"))?;
    let profile: Vec<Vec<f64>> = choices
        .split(';')
        .map(|c| parse_list(c).map_err(|e| Failure::new(EXIT_INPUT, format!("bad choice {c:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    let rule = build_scf(&fx).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let label = rule.choose_label(&profile).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let idx = fx.labels.iter().position(|&l| l == label).expect("label comes from fx");
    let selected = fx.points[idx].clone();
    let main = if cfg.json {
        to_json(&ChoiceDocument { choices: profile, selected, label })
    } else {
        let p: Vec<String> = selected.iter().map(|&v| fmt_num(v)).collect();
        format!("selected: ({}) [label {label}]\n", p.join(", "))
    };
    Ok(Emitted::main(EXIT_OK, main))
}
