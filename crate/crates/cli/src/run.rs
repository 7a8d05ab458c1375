//! The `solve`, `sweep`, `check` and `tabulate-kernel` verbs.
//!
//! Everything that can be validated is validated in [`Prepared::new`], before
//! any file is created. Output tables are rendered fully in memory and
//! written at the end.

use std::path::{Path, PathBuf};

use serde::Serialize;
use wplap::diagnostics::{self, DiagnosticsRecord};
use wplap::domain::{lumped_lq, DiffusionField, MeasureData, NodalField};
use wplap::kernel::{self, Kernel, RegularizationOrder};
use wplap::mesh::TriangleMesh;
use wplap::monotone::{NonlinearityPair, PiecewiseLinearMonotone};
use wplap::solver::{continuation_run, ContinuationStep, SolveReport};
use wplap::system::ProblemInstance;

use crate::config::{field_error, ConfigError, MeshSpec, ProblemSpec, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),

    #[error("solver failed: {0}")]
    Solve(wplap::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solve(_) => 3,
            Self::Io { .. } => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    NotConverged,
    DiagnosticsFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::NotConverged => 3,
            Self::DiagnosticsFailed => 4,
        }
    }

    fn of(steps: &[ContinuationStep], expected: usize) -> Self {
        if steps.len() < expected || steps.iter().any(|s| !s.report.converged) {
            Self::NotConverged
        } else if steps.iter().any(|s| !diagnostics_passed(&s.report)) {
            Self::DiagnosticsFailed
        } else {
            Self::Success
        }
    }
}

fn diagnostics_passed(r: &SolveReport) -> bool {
    r.diagnostics.as_ref().is_some_and(|d| d.passed)
}

/// Round-trip decimal representation; `nan` and `inf` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// A validated configuration with one problem instance per mesh, at the
/// first value of the schedule.
#[derive(Debug)]
pub struct Prepared {
    pub config: RunConfig,
    pub instances: Vec<ProblemInstance>,
}

fn build_pair(spec: &ProblemSpec) -> Result<NonlinearityPair, ConfigError> {
    let err = |e: wplap::Error| field_error("problem", e);
    match spec {
        ProblemSpec::Preset { preset, latent_heat } => NonlinearityPair::preset(*preset, *latent_heat).map_err(err),
        ProblemSpec::Custom { beta_hat, zeta_hat } => {
            let b = PiecewiseLinearMonotone::new(beta_hat.0.clone(), beta_hat.1.clone()).map_err(err)?;
            let z = PiecewiseLinearMonotone::new(zeta_hat.0.clone(), zeta_hat.1.clone()).map_err(err)?;
            NonlinearityPair::normalize(&b, &z).map_err(err)
        }
    }
}

fn build_meshes(spec: &MeshSpec) -> Result<Vec<TriangleMesh>, ConfigError> {
    match spec {
        MeshSpec::Structured { shape, refinements } => refinements
            .iter()
            .map(|&n| TriangleMesh::structured(*shape, n).map_err(|e| field_error("mesh.refinement", e)))
            .collect(),
        MeshSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let mesh = TriangleMesh::from_text(&text).map_err(|e| field_error("mesh.file", e))?;
            Ok(vec![mesh])
        }
    }
}

fn build_diffusion(config: &RunConfig, mesh: &TriangleMesh) -> Result<DiffusionField, ConfigError> {
    let spec = &config.diffusion;
    let tensors = (0..mesh.n_triangles())
        .map(|t| {
            let tri = mesh.triangles()[t];
            let c = tri.iter().fold([0.0, 0.0], |a, &i| {
                let p = mesh.nodes()[i];
                [a[0] + p[0] / 3.0, a[1] + p[1] / 3.0]
            });
            spec.regions
                .iter()
                .rev()
                .find(|r| c[0] >= r.min[0] && c[0] <= r.max[0] && c[1] >= r.min[1] && c[1] <= r.max[1])
                .map_or(spec.tensor, |r| r.tensor)
        })
        .collect();
    DiffusionField::per_triangle(tensors).map_err(|e| field_error("diffusion", e))
}

fn build_measure(config: &RunConfig, mesh: &TriangleMesh) -> Result<MeasureData, ConfigError> {
    let m = &config.measure;
    let (c, a) = (m.ac_constant, m.ac_sine);
    let mut f = if c != 0.0 || a != 0.0 {
        MeasureData::ac_from_fn(mesh, |p| {
            c + a * (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin()
        })
    } else {
        MeasureData::empty()
    };
    f.diracs = m.diracs.clone();
    f.lines = m.lines.clone();
    f.validate(mesh).map_err(|e| field_error("measure", e))?;
    Ok(f)
}

impl Prepared {
    pub fn new(config: RunConfig) -> Result<Self, ConfigError> {
        let order = RegularizationOrder::new(config.p).map_err(|e| field_error("problem.p", e))?;
        let pair = build_pair(&config.problem)?;
        let instances = build_meshes(&config.mesh)?
            .into_iter()
            .map(|mesh| {
                let diffusion = build_diffusion(&config, &mesh)?;
                let rhs = build_measure(&config, &mesh)?;
                let inst = ProblemInstance::new(
                    mesh,
                    diffusion,
                    rhs,
                    pair.clone(),
                    order,
                    config.eps_schedule[0],
                    config.tolerances,
                )
                .map_err(|e| field_error("problem.eps", e))?;
                for &eps in &config.eps_schedule[1..] {
                    inst.with_eps(eps).map_err(|e| field_error("problem.eps", e))?;
                }
                Ok(inst)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(Self { config, instances })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::new(RunConfig::from_file(path)?)
    }

    fn continuation(&self, inst: &ProblemInstance) -> Result<Vec<ContinuationStep>, RunError> {
        let c = &self.config;
        continuation_run(inst, &c.eps_schedule, &c.solver, &c.diagnostics, c.abort_on_failure).map_err(RunError::Solve)
    }
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub const SOLUTION_HEADER: [&str; 5] = ["x", "y", "u", "v", "b"];
pub const DIAGNOSTICS_HEADER: [&str; 6] = ["eps", "check", "lhs", "rhs", "slack", "passed"];

/// Node table `x,y,u,v,b`.
pub fn solution_csv(inst: &ProblemInstance, step: &ContinuationStep) -> Result<String, RunError> {
    let u = inst.recover_u(&step.state).map_err(RunError::Solve)?;
    let v = inst.recover_v(&u);
    let b = inst.recover_b(&v);
    let rows: Vec<Vec<String>> = inst
        .mesh()
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| vec![fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(u[i]), fmt_f64(v[i]), fmt_f64(b[i])])
        .collect();
    Ok(csv_string(&SOLUTION_HEADER, &rows))
}

/// One row per check; entropy residuals are informational and carry no
/// bound or verdict.
pub fn diagnostics_rows(rec: &DiagnosticsRecord) -> Vec<Vec<String>> {
    let eps = fmt_f64(rec.eps);
    let row = |name: String, lhs: f64, rhs: Option<f64>, slack: Option<f64>, passed: Option<bool>| {
        vec![
            eps.clone(),
            name,
            fmt_f64(lhs),
            rhs.map(fmt_f64).unwrap_or_default(),
            slack.map(fmt_f64).unwrap_or_default(),
            passed.map(|b| b.to_string()).unwrap_or_default(),
        ]
    };
    let bound = |name: String, c: &diagnostics::BoundCheck| row(name, c.lhs, Some(c.rhs), Some(c.slack), Some(c.passed));
    let mut rows = vec![
        bound("chi_energy".into(), &rec.chi_check),
        bound("weighted_plap".into(), &rec.weighted_plap_check),
    ];
    for s in &rec.sobolev {
        rows.push(bound(format!("holder_q{}", s.q), &s.holder));
    }
    for t in &rec.tk_checks {
        rows.push(bound(format!("tk_k{}", t.k), &t.clean));
    }
    for e in &rec.vanish_probe {
        let slack = if e.bound > 0.0 { e.value.abs() / e.bound } else { 0.0 };
        rows.push(row(format!("vanish_{}", e.test), e.value.abs(), Some(e.bound), Some(slack), Some(e.passed)));
    }
    let m = &rec.minty;
    let slack = if m.eps_v_l1 > 0.0 { m.gap / m.eps_v_l1 } else { 0.0 };
    rows.push(row("minty".into(), m.gap, Some(m.eps_v_l1), Some(slack), Some(m.passed)));
    rows.push(bound("a_priori".into(), &rec.a_priori));
    for e in &rec.entropy_residuals {
        rows.push(row(format!("entropy_{}_k{}", e.phi, e.k), e.residual, None, None, None));
    }
    rows
}

#[derive(Serialize)]
struct MeshInfo {
    nodes: usize,
    triangles: usize,
    interior_nodes: usize,
    h: f64,
}

impl MeshInfo {
    fn of(mesh: &TriangleMesh) -> Self {
        Self {
            nodes: mesh.n_nodes(),
            triangles: mesh.n_triangles(),
            interior_nodes: mesh.interior_nodes().len(),
            h: mesh.max_edge_length(),
        }
    }
}

#[derive(Serialize)]
struct StepSummary<'a> {
    eps: f64,
    report: &'a SolveReport,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    mesh: MeshInfo,
    steps: Vec<StepSummary<'a>>,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    outcome: Outcome,
    exit_code: i32,
    converged: bool,
    diagnostics_passed: bool,
    config: &'a RunConfig,
    runs: Vec<RunSummary<'a>>,
}

fn summary_json(command: &'static str, outcome: Outcome, config: &RunConfig, runs: &[(&ProblemInstance, &[ContinuationStep])]) -> String {
    let all = || runs.iter().flat_map(|r| r.1.iter());
    let s = Summary {
        command,
        outcome,
        exit_code: outcome.exit_code(),
        converged: all().all(|s| s.report.converged),
        diagnostics_passed: all().all(|s| diagnostics_passed(&s.report)),
        config,
        runs: runs
            .iter()
            .map(|(inst, steps)| RunSummary {
                mesh: MeshInfo::of(inst.mesh()),
                steps: steps.iter().map(|s| StepSummary { eps: s.eps, report: &s.report }).collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&s).expect("summary is serializable");
    text.push('\n');
    text
}

fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| RunError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}

pub struct SolveOutput {
    pub outcome: Outcome,
    pub steps: Vec<ContinuationStep>,
    pub files: Vec<PathBuf>,
}

/// Continuation over the schedule on the finest configured mesh; writes
/// `solution.csv` (last step), `diagnostics.csv` (every step) and
/// `summary.json`.
pub fn run_solve(prepared: &Prepared) -> Result<SolveOutput, RunError> {
    let inst = prepared.instances.last().expect("at least one mesh");
    let steps = prepared.continuation(inst)?;
    let outcome = Outcome::of(&steps, prepared.config.eps_schedule.len());
    let last = steps.last().expect("non-empty schedule");
    let solution = solution_csv(&last.instance, last)?;
    let rows: Vec<Vec<String>> = steps
        .iter()
        .filter_map(|s| s.report.diagnostics.as_ref())
        .flat_map(diagnostics_rows)
        .collect();
    let files = write_all(
        &prepared.config.output_dir,
        &[
            ("solution.csv", solution),
            ("diagnostics.csv", csv_string(&DIAGNOSTICS_HEADER, &rows)),
            ("summary.json", summary_json("solve", outcome, &prepared.config, &[(inst, &steps)])),
        ],
    )?;
    Ok(SolveOutput { outcome, steps, files })
}

/// One row of the refinement / regularization study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub refinement: usize,
    pub h: f64,
    pub eps: f64,
    pub converged: bool,
    pub outer_iters: usize,
    pub final_residual: f64,
    pub u_max: f64,
    pub u_lq_hat: f64,
    pub chi_slack: f64,
    pub weighted_plap_slack: f64,
    pub a_priori_slack: f64,
    pub tk_passed: bool,
    pub vanish_value: f64,
    pub vanish_bound: f64,
    /// `d ln |vanish_value| / d ln eps` against the previous row.
    pub vanish_slope: Option<f64>,
    pub minty_gap: f64,
    pub eps_v_l1: f64,
    pub entropy_max: Option<f64>,
    /// `||u_eps - u_prev||` in the lumped `q_hat` norm.
    pub successive_diff: Option<f64>,
    pub diagnostics_passed: bool,
}

pub const SWEEP_HEADER: [&str; 20] = [
    "refinement",
    "h",
    "eps",
    "converged",
    "outer_iters",
    "final_residual",
    "u_max",
    "u_lq_hat",
    "chi_slack",
    "weighted_plap_slack",
    "a_priori_slack",
    "tk_passed",
    "vanish_value",
    "vanish_bound",
    "vanish_slope",
    "minty_gap",
    "eps_v_l1",
    "entropy_max",
    "successive_diff",
    "diagnostics_passed",
];

impl SweepRow {
    fn cells(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        vec![
            self.refinement.to_string(),
            fmt_f64(self.h),
            fmt_f64(self.eps),
            self.converged.to_string(),
            self.outer_iters.to_string(),
            fmt_f64(self.final_residual),
            fmt_f64(self.u_max),
            fmt_f64(self.u_lq_hat),
            fmt_f64(self.chi_slack),
            fmt_f64(self.weighted_plap_slack),
            fmt_f64(self.a_priori_slack),
            self.tk_passed.to_string(),
            fmt_f64(self.vanish_value),
            fmt_f64(self.vanish_bound),
            opt(self.vanish_slope),
            fmt_f64(self.minty_gap),
            fmt_f64(self.eps_v_l1),
            opt(self.entropy_max),
            opt(self.successive_diff),
            self.diagnostics_passed.to_string(),
        ]
    }
}

/// Study rows for one continuation run on one mesh.
pub fn sweep_rows(refinement: usize, steps: &[ContinuationStep], q: f64) -> Result<Vec<SweepRow>, RunError> {
    let q_hat = diagnostics::q_hat(q).map_err(RunError::Solve)?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(steps.len());
    let mut prev: Option<NodalField> = None;
    for s in steps {
        let mesh = s.instance.mesh();
        let u = s.instance.recover_u(&s.state).map_err(RunError::Solve)?;
        let d = s.report.diagnostics.as_ref().expect("solve attaches diagnostics");
        let (vanish_value, vanish_bound) = d
            .vanish_probe
            .iter()
            .map(|e| (e.value.abs(), e.bound))
            .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        let vanish_slope = rows.last().and_then(|r| {
            (r.vanish_value > 0.0 && vanish_value > 0.0).then(|| (vanish_value / r.vanish_value).ln() / (s.eps / r.eps).ln())
        });
        let successive_diff = prev.as_ref().map(|p| {
            let diff: Vec<f64> = u.iter().zip(p.iter()).map(|(a, b)| a - b).collect();
            lumped_lq(mesh, &diff, q_hat)
        });
        rows.push(SweepRow {
            refinement,
            h: mesh.max_edge_length(),
            eps: s.eps,
            converged: s.report.converged,
            outer_iters: s.report.outer_iters,
            final_residual: s.report.final_residual,
            u_max: u.max_abs(),
            u_lq_hat: u.lq_norm(mesh, q_hat),
            chi_slack: d.chi_check.slack,
            weighted_plap_slack: d.weighted_plap_check.slack,
            a_priori_slack: d.a_priori.slack,
            tk_passed: d.tk_checks.iter().all(|t| t.clean.passed),
            vanish_value,
            vanish_bound,
            vanish_slope,
            minty_gap: d.minty.gap,
            eps_v_l1: d.minty.eps_v_l1,
            entropy_max: d.entropy_residuals.iter().map(|e| e.residual).reduce(f64::max),
            successive_diff,
            diagnostics_passed: d.passed,
        });
        prev = Some(u);
    }
    Ok(rows)
}

pub struct SweepOutput {
    pub outcome: Outcome,
    pub rows: Vec<SweepRow>,
    pub files: Vec<PathBuf>,
}

/// The full schedule on every configured mesh; writes `study.csv` and
/// `summary.json`.
pub fn run_sweep(prepared: &Prepared) -> Result<SweepOutput, RunError> {
    let c = &prepared.config;
    let refinements = match &c.mesh {
        MeshSpec::Structured { refinements, .. } => refinements.clone(),
        MeshSpec::File(_) => vec![0],
    };
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut outcome = Outcome::Success;
    for (inst, &n) in prepared.instances.iter().zip(&refinements) {
        let steps = prepared.continuation(inst)?;
        rows.extend(sweep_rows(n, &steps, c.sweep_q)?);
        outcome = match (outcome, Outcome::of(&steps, c.eps_schedule.len())) {
            (Outcome::NotConverged, _) | (_, Outcome::NotConverged) => Outcome::NotConverged,
            (Outcome::DiagnosticsFailed, _) | (_, Outcome::DiagnosticsFailed) => Outcome::DiagnosticsFailed,
            _ => Outcome::Success,
        };
        let stop = c.abort_on_failure && outcome == Outcome::NotConverged;
        runs.push((inst, steps));
        if stop {
            break;
        }
    }
    let table: Vec<Vec<String>> = rows.iter().map(SweepRow::cells).collect();
    let views: Vec<(&ProblemInstance, &[ContinuationStep])> = runs.iter().map(|(i, s)| (*i, s.as_slice())).collect();
    let files = write_all(
        &c.output_dir,
        &[
            ("study.csv", csv_string(&SWEEP_HEADER, &table)),
            ("summary.json", summary_json("sweep", outcome, c, &views)),
        ],
    )?;
    Ok(SweepOutput { outcome, rows, files })
}

/// Reads the `u` column of a stored solution on the configured mesh.
pub fn read_solution(mesh: &TriangleMesh, text: &str) -> Result<NodalField, ConfigError> {
    let bad = |m: String| field_error("solution", m);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (cx, cy, cu) = (col("x")?, col("y")?, col("u")?);
    let mut u = Vec::with_capacity(mesh.n_nodes());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |c: usize| -> Result<f64, ConfigError> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse().map_err(|_| bad(format!("row {}: `{s}` is not a number", i + 1)))
        };
        let Some(p) = mesh.nodes().get(i) else {
            return Err(bad(format!("more rows than the {} mesh nodes", mesh.n_nodes())));
        };
        let (x, y) = (num(cx)?, num(cy)?);
        if (x - p[0]).abs() > 1e-9 || (y - p[1]).abs() > 1e-9 {
            return Err(bad(format!("row {} at ({x}, {y}) does not match mesh node ({}, {})", i + 1, p[0], p[1])));
        }
        u.push(num(cu)?);
    }
    if u.len() != mesh.n_nodes() {
        return Err(bad(format!("{} rows for {} mesh nodes", u.len(), mesh.n_nodes())));
    }
    NodalField::new(mesh, u).map_err(|e| bad(e.to_string()))
}

/// Re-runs the diagnostics on a stored solution at the last value of the
/// schedule; returns the outcome and the diagnostics table.
pub fn run_check(prepared: &Prepared, solution: &Path) -> Result<(Outcome, String), RunError> {
    let base = prepared.instances.last().expect("at least one mesh");
    let eps = *prepared.config.eps_schedule.last().expect("non-empty schedule");
    let inst = base.with_eps(eps).map_err(|e| field_error("problem.eps", e))?;
    let text = std::fs::read_to_string(solution).map_err(|e| ConfigError::Io {
        path: solution.display().to_string(),
        message: e.to_string(),
    })?;
    let u = read_solution(inst.mesh(), &text)?;
    let state = inst.transform(&u).map_err(|e| field_error("solution", e))?;
    let rec = diagnostics::evaluate(&inst, &state, &prepared.config.diagnostics).map_err(RunError::Solve)?;
    let outcome = if rec.passed {
        Outcome::Success
    } else {
        Outcome::DiagnosticsFailed
    };
    Ok((outcome, csv_string(&DIAGNOSTICS_HEADER, &diagnostics_rows(&rec))))
}

pub const KERNEL_HEADER: [&str; 7] = ["s", "psi", "psi_prime", "psi_p", "psi_p_prime", "chi_tilde", "alpha"];

/// Kernel table on `s = 0` and `points - 1` log-spaced values in `[1e-4, s_max]`.
pub fn tabulate_kernel(p: f64, points: usize, s_max: f64) -> Result<String, RunError> {
    let order = RegularizationOrder::new(p).map_err(|e| field_error("p", e))?;
    if points < 2 {
        return Err(field_error("points", "need at least 2").into());
    }
    if !(s_max > 1e-4 && s_max.is_finite()) {
        return Err(field_error("s_max", "must be finite and > 1e-4").into());
    }
    let cfg = Default::default();
    let k = Kernel::new(order, cfg).map_err(RunError::Solve)?;
    let (lo, hi) = (1e-4f64.ln(), s_max.ln());
    let grid = std::iter::once(0.0).chain((0..points - 1).map(|i| (lo + (hi - lo) * i as f64 / (points - 2).max(1) as f64).exp()));
    let rows = grid
        .map(|s| -> wplap::Result<Vec<String>> {
            Ok(vec![
                fmt_f64(s),
                fmt_f64(kernel::psi(s)?),
                fmt_f64(kernel::psi_prime(s)?),
                fmt_f64(k.psi_p(s)?),
                fmt_f64(k.psi_p_prime(s)?),
                fmt_f64(kernel::chi_tilde(s, &cfg)?),
                fmt_f64(kernel::alpha(s, order)?),
            ])
        })
        .collect::<wplap::Result<Vec<_>>>()
        .map_err(RunError::Solve)?;
    Ok(csv_string(&KERNEL_HEADER, &rows))
}
