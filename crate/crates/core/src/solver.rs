//! Convex inner minimization, the Picard outer loop, a monolithic Newton path
//! and the eps-continuation driver.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsOptions, DiagnosticsRecord};
use crate::domain::NodalField;
use crate::error::{invalid, Error, Result};
use crate::sparse::{bicgstab, conjugate_gradient, CsrMatrix};
use crate::system::{from_dofs, to_dofs, DiscreteState, Frozen, ProblemInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FixedPoint,
    Monolithic,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_point" => Ok(Self::FixedPoint),
            "monolithic" => Ok(Self::Monolithic),
            other => Err(invalid(
                "strategy",
                format!("expected `fixed_point` or `monolithic`, got `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Threshold on the max-norm of the residual.
    pub inner_tol: f64,
    /// Threshold on the max-norm of the outer increment.
    pub outer_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Initial Picard relaxation in `(0, 1]`.
    pub damping: f64,
    pub strategy: Strategy,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-10,
            outer_tol: 1e-9,
            max_inner: 50,
            max_outer: 200,
            damping: 1.0,
            strategy: Strategy::Monolithic,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0 && self.inner_tol.is_finite()) {
            return Err(invalid("inner_tol", "must be finite and > 0"));
        }
        if !(self.outer_tol > 0.0 && self.outer_tol.is_finite()) {
            return Err(invalid("outer_tol", "must be finite and > 0"));
        }
        if self.max_inner == 0 {
            return Err(invalid("max_inner", "must be >= 1"));
        }
        if self.max_outer == 0 {
            return Err(invalid("max_outer", "must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub strategy: Strategy,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    /// Max-norm of the full residual, one entry per outer iterate.
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    pub final_residual: f64,
    pub final_increment: f64,
    pub final_damping: f64,
    pub hints: Vec<String>,
    pub diagnostics: Option<DiagnosticsRecord>,
}

/// Outcome of one inner minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub minimizer: NodalField,
    pub iterations: usize,
    pub residual: f64,
    pub energy_history: Vec<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Linear tolerance for a Newton step at residual `r`: loose far away,
/// quadratic forcing close in, never below a tenth of the target.
fn forcing(r: f64, target: f64) -> f64 {
    (0.1 * target).max((1e-2 * r).min(r * r))
}

fn krylov_cap(n: usize) -> usize {
    (20 * n).max(1000)
}

fn solve_spd(j: &CsrMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut d = vec![0.0; j.dim()];
    conjugate_gradient(j, rhs, &mut d, tol, krylov_cap(j.dim()))?;
    Ok(d)
}

fn add_scaled(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Newton's method with backtracking for the strictly convex frozen energy.
pub fn minimize_energy(
    inst: &ProblemInstance,
    frozen: &Frozen,
    start: &NodalField,
    opts: &SolverOptions,
) -> Result<InnerResult> {
    opts.validate()?;
    let mesh = inst.mesh();
    let mut w = start.values().to_vec();
    let mut e = inst.energy(frozen, &w);
    let mut history = vec![e];
    let mut r = inst.residual(frozen, &w);
    let mut rn = max_abs(&r);
    for it in 0..opts.max_inner {
        if rn <= opts.inner_tol {
            return Ok(InnerResult {
                minimizer: NodalField::new(mesh, w)?,
                iterations: it,
                residual: rn,
                energy_history: history,
            });
        }
        let j = inst.subproblem_jacobian(frozen, &w);
        let neg_r: Vec<f64> = to_dofs(mesh, &r).iter().map(|x| -x).collect();
        let d = from_dofs(mesh, &solve_spd(&j, &neg_r, forcing(rn, opts.inner_tol))?);
        let slope = dot(&r, &d);
        let mut accepted = None;
        // below this predicted decrease the energy is dominated by round-off
        if -slope > 1e-11 * (1.0 + e.abs()) {
            let mut t = 1.0;
            while t > 1e-6 {
                let trial = add_scaled(&w, t, &d);
                let et = inst.energy(frozen, &trial);
                if et <= e + 1e-4 * t * slope {
                    accepted = Some((trial, et));
                    break;
                }
                t *= 0.5;
            }
        }
        let (trial, et) = match accepted {
            Some(a) => a,
            None => {
                let r2 = norm2(&r);
                let mut t = 1.0;
                let mut found = None;
                while t > 1e-6 {
                    let trial = add_scaled(&w, t, &d);
                    if norm2(&inst.residual(frozen, &trial)) < r2 {
                        found = Some(trial);
                        break;
                    }
                    t *= 0.5;
                }
                let Some(trial) = found else {
                    return Err(Error::InnerNotConverged {
                        iterations: it + 1,
                        residual: rn,
                    });
                };
                let et = inst.energy(frozen, &trial);
                (trial, et)
            }
        };
        w = trial;
        e = et;
        history.push(e);
        r = inst.residual(frozen, &w);
        rn = max_abs(&r);
    }
    if rn <= opts.inner_tol {
        return Ok(InnerResult {
            minimizer: NodalField::new(mesh, w)?,
            iterations: opts.max_inner,
            residual: rn,
            energy_history: history,
        });
    }
    Err(Error::InnerNotConverged {
        iterations: opts.max_inner,
        residual: rn,
    })
}

const MIN_DAMPING: f64 = 1e-6;

const HINTS: [&str; 3] = [
    "reduce damping",
    "increase eps",
    "refine the eps continuation schedule",
];

fn check_start(inst: &ProblemInstance, start: Option<&DiscreteState>) -> Result<Vec<f64>> {
    match start {
        Some(s) => Ok(NodalField::new(inst.mesh(), s.tilde_u.values().to_vec())?.into_inner()),
        None => Ok(vec![0.0; inst.mesh().n_nodes()]),
    }
}

/// Relaxed Picard iteration `v <- (1 - theta) v + theta F(v)`, where `F(v)`
/// minimizes the energy frozen at `v`. `theta` is halved whenever a step
/// would increase the full residual.
pub fn fixed_point_solve(
    inst: &ProblemInstance,
    opts: &SolverOptions,
    start: Option<&DiscreteState>,
) -> Result<(DiscreteState, SolveReport)> {
    opts.validate()?;
    let mesh = inst.mesh();
    let mut v = check_start(inst, start)?;
    let mut frozen = inst.freeze(&v)?;
    let r0 = inst.residual(&frozen, &v);
    let mut res = max_abs(&r0);
    let mut res2 = norm2(&r0);
    let mut theta = opts.damping;
    let mut report = SolveReport {
        converged: false,
        strategy: Strategy::FixedPoint,
        outer_iters: 0,
        total_inner_iters: 0,
        residual_history: vec![res],
        energy_history: vec![inst.energy(&frozen, &v)],
        final_residual: res,
        final_increment: f64::INFINITY,
        final_damping: theta,
        hints: Vec::new(),
        diagnostics: None,
    };
    let mut increment = f64::INFINITY;
    for k in 0..opts.max_outer {
        if res <= opts.inner_tol || (increment <= opts.outer_tol && res <= 10.0 * opts.inner_tol) {
            report.converged = true;
            break;
        }
        let inner = match minimize_energy(inst, &frozen, &NodalField::new(mesh, v.clone())?, opts) {
            Ok(inner) => inner,
            Err(Error::InnerNotConverged { iterations, residual }) => {
                report.total_inner_iters += iterations;
                report
                    .hints
                    .push(format!("inner minimization stalled at residual {residual:e}; increase max_inner"));
                break;
            }
            Err(e) => return Err(e),
        };
        report.total_inner_iters += inner.iterations;
        let target = inner.minimizer.into_inner();
        let step: Vec<f64> = target.iter().zip(&v).map(|(a, b)| a - b).collect();
        let mut halved = false;
        loop {
            let cand = add_scaled(&v, theta, &step);
            let cand_frozen = inst.freeze(&cand)?;
            let cand_r = inst.residual(&cand_frozen, &cand);
            let cand_res2 = norm2(&cand_r);
            if cand_res2 <= res2 || theta <= MIN_DAMPING {
                increment = theta * max_abs(&step);
                v = cand;
                frozen = cand_frozen;
                res = max_abs(&cand_r);
                res2 = cand_res2;
                break;
            }
            theta *= 0.5;
            halved = true;
        }
        if !halved {
            // let the relaxation recover after a run of successful steps
            theta = (2.0 * theta).min(opts.damping);
        }
        report.outer_iters = k + 1;
        report.residual_history.push(res);
        report.energy_history.push(inst.energy(&frozen, &v));
    }
    if !report.converged
        && (res <= opts.inner_tol || (increment <= opts.outer_tol && res <= 10.0 * opts.inner_tol))
    {
        report.converged = true;
    }
    report.final_residual = res;
    report.final_increment = increment;
    report.final_damping = theta;
    if !report.converged {
        report.hints.extend(HINTS.iter().map(|s| s.to_string()));
    }
    Ok((
        DiscreteState {
            tilde_u: NodalField::new(mesh, v)?,
        },
        report,
    ))
}

/// Damped Newton on the full residual with its exact Jacobian, falling back
/// to the frozen-coefficient Jacobian when the step is unusable.
pub fn monolithic_solve(
    inst: &ProblemInstance,
    opts: &SolverOptions,
    start: Option<&DiscreteState>,
) -> Result<(DiscreteState, SolveReport)> {
    opts.validate()?;
    let mesh = inst.mesh();
    let mut v = check_start(inst, start)?;
    let mut frozen = inst.freeze(&v)?;
    let mut r = inst.residual(&frozen, &v);
    let mut rn = max_abs(&r);
    let mut r2 = norm2(&r);
    let mut report = SolveReport {
        converged: false,
        strategy: Strategy::Monolithic,
        outer_iters: 0,
        total_inner_iters: 0,
        residual_history: vec![rn],
        energy_history: vec![inst.energy(&frozen, &v)],
        final_residual: rn,
        final_increment: f64::INFINITY,
        final_damping: 1.0,
        hints: Vec::new(),
        diagnostics: None,
    };
    let mut increment = f64::INFINITY;
    for k in 0..opts.max_outer {
        if rn <= opts.inner_tol {
            report.converged = true;
            break;
        }
        let neg_r: Vec<f64> = to_dofs(mesh, &r).iter().map(|x| -x).collect();
        let tol = forcing(rn, opts.inner_tol);
        let exact = inst.full_jacobian(&v)?;
        let mut d = vec![0.0; exact.dim()];
        let mut directions = Vec::with_capacity(2);
        if bicgstab(&exact, &neg_r, &mut d, tol, krylov_cap(exact.dim())).is_ok() {
            directions.push(from_dofs(mesh, &d));
        }
        let frozen_j = inst.subproblem_jacobian(&frozen, &v);
        let mut step_taken = false;
        for attempt in 0..2 {
            if attempt == directions.len() {
                directions.push(from_dofs(mesh, &solve_spd(&frozen_j, &neg_r, tol)?));
            }
            let dir = &directions[attempt];
            let mut t = 1.0;
            for _ in 0..30 {
                let trial = add_scaled(&v, t, dir);
                let tf = inst.freeze(&trial)?;
                let tr = inst.residual(&tf, &trial);
                let tn = norm2(&tr);
                if tn <= (1.0 - 1e-4 * t) * r2 {
                    increment = t * max_abs(dir);
                    report.final_damping = t;
                    v = trial;
                    frozen = tf;
                    r = tr;
                    r2 = tn;
                    rn = max_abs(&r);
                    step_taken = true;
                    break;
                }
                t *= 0.5;
            }
            if step_taken {
                break;
            }
        }
        report.outer_iters = k + 1;
        report.total_inner_iters += 1;
        if !step_taken {
            break;
        }
        report.residual_history.push(rn);
        report.energy_history.push(inst.energy(&frozen, &v));
    }
    report.converged = rn <= opts.inner_tol;
    report.final_residual = rn;
    report.final_increment = increment;
    if !report.converged {
        report.hints = HINTS.iter().map(|s| s.to_string()).collect();
    }
    Ok((
        DiscreteState {
            tilde_u: NodalField::new(mesh, v)?,
        },
        report,
    ))
}

/// Solves with the configured strategy and attaches diagnostics.
pub fn solve(
    inst: &ProblemInstance,
    opts: &SolverOptions,
    diag: &DiagnosticsOptions,
    start: Option<&DiscreteState>,
) -> Result<(DiscreteState, SolveReport)> {
    let (state, mut report) = match opts.strategy {
        Strategy::FixedPoint => fixed_point_solve(inst, opts, start)?,
        Strategy::Monolithic => monolithic_solve(inst, opts, start)?,
    };
    report.diagnostics = Some(diagnostics::evaluate(inst, &state, diag)?);
    Ok((state, report))
}

#[derive(Clone, Debug)]
pub struct ContinuationStep {
    pub eps: f64,
    pub instance: ProblemInstance,
    pub state: DiscreteState,
    pub report: SolveReport,
}

/// Solves for every `eps` of a strictly decreasing schedule, warm-starting
/// each solve from the previous transformed state.
pub fn continuation_run(
    base: &ProblemInstance,
    schedule: &[f64],
    opts: &SolverOptions,
    diag: &DiagnosticsOptions,
    abort_on_failure: bool,
) -> Result<Vec<ContinuationStep>> {
    if schedule.is_empty() {
        return Err(invalid("eps_schedule", "must not be empty"));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("eps_schedule", "must be strictly decreasing"));
    }
    let instances = schedule
        .iter()
        .map(|&eps| base.with_eps(eps))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<ContinuationStep> = Vec::with_capacity(schedule.len());
    for (inst, &eps) in instances.into_iter().zip(schedule) {
        let start = out.last().map(|s| s.state.clone());
        let (state, report) = solve(&inst, opts, diag, start.as_ref())?;
        let failed = !report.converged;
        out.push(ContinuationStep {
            eps,
            instance: inst,
            state,
            report,
        });
        if failed && abort_on_failure {
            break;
        }
    }
    Ok(out)
}
