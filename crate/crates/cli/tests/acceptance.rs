//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wplap::diagnostics::DiagnosticsOptions;
use wplap::domain::{lumped_lq, Dirac, DiffusionField, LineSource, MeasureData};
use wplap::kernel::{psi_prime, Kernel, RegularizationOrder};
use wplap::mesh::{Shape, TriangleMesh};
use wplap::monotone::{NonlinearityPair, PiecewiseLinearMonotone, Preset};
use wplap::solver::{continuation_run, fixed_point_solve, monolithic_solve, ContinuationStep, SolverOptions, Strategy};
use wplap::system::ProblemInstance;

type Verdict = Result<String, String>;

fn kernel(p: f64) -> Kernel {
    Kernel::new(RegularizationOrder::new(p).unwrap(), Default::default()).unwrap()
}

fn log_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..=1200).map(|i| 10f64.powf(-6.0 + i as f64 / 100.0)))
        .collect()
}

fn within(elapsed: Duration, limit: f64, what: &str) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit {
        Ok(())
    } else {
        Err(format!("{what} took {:.2} s, limit {limit} s", elapsed.as_secs_f64()))
    }
}

fn kernel_bounds() -> Verdict {
    let start = Instant::now();
    let grid = log_grid();
    let mut checked = 0usize;
    for tau in [0.1, 0.5, 1.0, 1.9] {
        for &s in &grid {
            let d = psi_prime(s).unwrap();
            let lo = tau * tau / (4.0 * (1.0 + s).powf(1.0 + tau));
            if !(lo <= d && d <= 1.0 / (1.0 + s)) {
                return Err(format!("psi' bounds fail at tau {tau}, s {s:e}"));
            }
            checked += 1;
        }
    }
    for p in [2.5, 3.0, 4.0] {
        let k = kernel(p);
        for &s in &grid {
            let v = k.psi_p(s).unwrap();
            if v > k.upper_bound(s) {
                return Err(format!("psi_p upper bound fails at p {p}, s {s:e}"));
            }
            for frac in [0.1, 0.5, 1.0] {
                if k.lower_bound(s, frac / (p - 1.0)) > v {
                    return Err(format!("psi_p lower bound fails at p {p}, s {s:e}, t {frac}/(p-1)"));
                }
            }
            for x in [s, -s] {
                let back = k.psi_p_inverse(k.psi_p(x).unwrap()).unwrap();
                if (back - x).abs() > 1e-8 * (1.0 + x.abs()) {
                    return Err(format!("roundtrip at p {p}, s {x:e}: {back:e}"));
                }
            }
            checked += 6;
        }
    }
    within(start.elapsed(), 1.0, "kernel suite")?;
    Ok(format!("{checked} inequalities and roundtrips in {:.2} s", start.elapsed().as_secs_f64()))
}

fn random_pair(rng: &mut ChaCha8Rng) -> NonlinearityPair {
    match rng.gen_range(0..4) {
        0 => NonlinearityPair::preset(Preset::Linear, 0.0).unwrap(),
        1 => NonlinearityPair::preset(Preset::Stefan, rng.gen_range(0.0..3.0)).unwrap(),
        2 => NonlinearityPair::preset(Preset::Richards, 0.0).unwrap(),
        _ => loop {
            let knots = |rng: &mut ChaCha8Rng, n: usize| {
                let mut k: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                k.sort_by(f64::total_cmp);
                k
            };
            let nz = rng.gen_range(0..4);
            let zk = knots(rng, nz);
            let mut zs: Vec<f64> = (0..=nz).map(|_| rng.gen_range(0.0..2.0)).collect();
            zs[0] += 0.1;
            zs[nz] += 0.1;
            let nb = rng.gen_range(0..3);
            let bk = knots(rng, nb);
            let bs: Vec<f64> = (0..=nb).map(|_| rng.gen_range(0.0..2.0)).collect();
            let (Ok(z), Ok(b)) = (PiecewiseLinearMonotone::new(zk, zs), PiecewiseLinearMonotone::new(bk, bs)) else {
                continue;
            };
            if let Ok(pair) = NonlinearityPair::normalize(&b, &z) {
                break pair;
            }
        },
    }
}

fn random_eps(rng: &mut ChaCha8Rng, pair: &NonlinearityPair) -> f64 {
    let hi = pair.max_eps().min(1.0) * 0.99;
    (rng.gen_range(1e-4f64.ln()..hi.ln())).exp()
}

fn resolvent_identity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let pair = random_pair(&mut rng);
        let eps = random_eps(&mut rng, &pair);
        let s = rng.gen_range(-10.0..10.0);
        let r = pair.resolvent(eps, s);
        let err = (pair.mu_eps(eps, s) - ((1.0 + eps) * r - s)).abs();
        worst = worst.max(err);
    }
    within(start.elapsed(), 1.0, "identity suite")?;
    if worst <= 1e-10 {
        Ok(format!("max deviation {worst:.2e} over 1000 samples"))
    } else {
        Err(format!("max deviation {worst:.2e} > 1e-10"))
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> ProblemInstance {
    let shape = if rng.gen() { Shape::UnitSquare } else { Shape::UnitDisk };
    let mesh = TriangleMesh::structured(shape, rng.gen_range(3..6)).unwrap();
    let tensors = (0..mesh.n_triangles())
        .map(|_| {
            let (a, c): (f64, f64) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
            let b = rng.gen_range(-0.4..0.4) * (a * c).sqrt();
            [a, b, c]
        })
        .collect();
    let diffusion = DiffusionField::per_triangle(tensors).unwrap();
    let lo = if shape == Shape::UnitSquare { 0.1 } else { -0.6 };
    let hi = if shape == Shape::UnitSquare { 0.9 } else { 0.6 };
    let mut f = MeasureData::ac_from_fn(&mesh, |p| 2.0 * p[0] - p[1]);
    f.diracs.push(Dirac {
        point: [rng.gen_range(lo..hi), rng.gen_range(lo..hi)],
        weight: rng.gen_range(-2.0..2.0),
    });
    f.lines.push(LineSource {
        start: [lo, lo],
        end: [hi, rng.gen_range(lo..hi)],
        density: rng.gen_range(-1.0..1.0),
    });
    let pair = random_pair(rng);
    let eps = random_eps(rng, &pair);
    let p = rng.gen_range(2.5..4.0);
    ProblemInstance::new(mesh, diffusion, f, pair, RegularizationOrder::new(p).unwrap(), eps, Default::default()).unwrap()
}

fn random_state(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mesh = inst.mesh();
    (0..mesh.n_nodes())
        .map(|i| if mesh.is_boundary(i) { 0.0 } else { rng.gen_range(-0.8..0.8) })
        .collect()
}

/// Outer hexagon of boundary nodes around an inner, rotated hexagon.
fn hexagon_mesh() -> TriangleMesh {
    let mut nodes = Vec::new();
    for j in 0..6 {
        let a = j as f64 * PI / 3.0;
        nodes.push([a.cos(), a.sin()]);
    }
    for j in 0..6 {
        let a = (j as f64 + 0.5) * PI / 3.0;
        nodes.push([0.5 * a.cos(), 0.5 * a.sin()]);
    }
    let mut tris = vec![[6, 7, 8], [6, 8, 9], [6, 9, 10], [6, 10, 11]];
    for j in 0..6 {
        let (o0, o1, i0, i1) = (j, (j + 1) % 6, 6 + j, 6 + (j + 1) % 6);
        tris.push([o0, o1, i0]);
        tris.push([i0, o1, i1]);
    }
    let boundary = (0..12).map(|i| i < 6).collect();
    TriangleMesh::new(nodes, tris, boundary).unwrap()
}

fn gradient_consistency() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let v = random_state(&inst, &mut rng);
        let w = random_state(&inst, &mut rng);
        let frozen = inst.freeze(&v).unwrap();
        let r = inst.residual(&frozen, &w);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for &j in inst.mesh().interior_nodes() {
            let h = 1e-5 * (1.0 + w[j].abs());
            let mut a = w.clone();
            let mut b = w.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (inst.energy(&frozen, &a) - inst.energy(&frozen, &b)) / (2.0 * h);
            num = num.max((fd - r[j]).abs());
            den = den.max(r[j].abs());
        }
        worst = worst.max(num / den);
    }
    if worst > 1e-6 {
        return Err(format!("relative gradient error {worst:.2e} > 1e-6"));
    }
    let mesh = hexagon_mesh();
    let mut min_eig = f64::INFINITY;
    for _ in 0..20 {
        let mut f = MeasureData::dirac([rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)], 1.0);
        f.ac = vec![rng.gen_range(-1.0..1.0); mesh.n_triangles()];
        let pair = random_pair(&mut rng);
        let eps = random_eps(&mut rng, &pair);
        let diffusion = DiffusionField::constant(&mesh, [1.3, 0.2, 0.8]).unwrap();
        let inst = ProblemInstance::new(mesh.clone(), diffusion, f, pair, RegularizationOrder::new(3.0).unwrap(), eps, Default::default()).unwrap();
        let v = random_state(&inst, &mut rng);
        let w = random_state(&inst, &mut rng);
        let j = inst.subproblem_jacobian(&inst.freeze(&v).unwrap(), &w);
        let n = j.dim();
        let dense = DMatrix::from_fn(n, n, |a, b| j.get(a, b));
        if (&dense - dense.transpose()).amax() > 1e-13 * dense.amax() {
            return Err("subproblem Jacobian is not symmetric".into());
        }
        min_eig = min_eig.min(dense.symmetric_eigen().eigenvalues.min());
    }
    within(start.elapsed(), 10.0, "consistency suite")?;
    if min_eig < -1e-10 {
        return Err(format!("minimum eigenvalue {min_eig:e} < -1e-10"));
    }
    Ok(format!("gradient error {worst:.2e}, min eigenvalue {min_eig:.3e} on {} interior nodes", mesh.interior_nodes().len()))
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mesh = TriangleMesh::structured(Shape::UnitSquare, 3).unwrap();
    let diffusion = DiffusionField::constant(&mesh, [1.5, 0.4, 0.7]).unwrap();
    let mut f_lin = MeasureData::ac_from_fn(&mesh, |p| 4.0 * p[0] - 1.0);
    f_lin.diracs.push(Dirac { point: [0.4, 0.5], weight: 0.8 });
    let mut f_st = MeasureData::dirac([0.5, 0.5], 2.0);
    f_st.ac = vec![-1.0; mesh.n_triangles()];
    let cases = [
        ("linear", NonlinearityPair::linear(), f_lin.clone()),
        ("stefan", NonlinearityPair::stefan(1.0).unwrap(), f_st),
        ("richards", NonlinearityPair::richards(), f_lin),
    ];
    let mut worst: f64 = 0.0;
    for (name, pair, f) in cases {
        let inst = ProblemInstance::new(mesh.clone(), diffusion.clone(), f, pair, RegularizationOrder::new(3.0).unwrap(), 0.1, Default::default()).unwrap();
        let reference = oracle::frozen_chain(&inst, 1.0);
        let fp = SolverOptions {
            strategy: Strategy::FixedPoint,
            inner_tol: 1e-12,
            outer_tol: 1e-12,
            ..Default::default()
        };
        let mono = SolverOptions {
            inner_tol: 1e-12,
            ..Default::default()
        };
        let (a, ra) = fixed_point_solve(&inst, &fp, None).map_err(|e| e.to_string())?;
        let (b, rb) = monolithic_solve(&inst, &mono, None).map_err(|e| e.to_string())?;
        if !(ra.converged && rb.converged) {
            return Err(format!("{name}: solver did not converge"));
        }
        let d = sup(a.tilde_u.values(), &reference).max(sup(b.tilde_u.values(), &reference));
        if d > 1e-6 {
            return Err(format!("{name}: distance to oracle {d:.2e} > 1e-6"));
        }
        worst = worst.max(d);
    }
    within(start.elapsed(), 30.0, "oracle suite")?;
    Ok(format!("max sup distance {worst:.2e} on 4 interior nodes (linear, stefan, richards)"))
}

fn benchmark(mesh: TriangleMesh, pair: NonlinearityPair, f: MeasureData, schedule: &[f64]) -> Result<Vec<ContinuationStep>, String> {
    let diffusion = DiffusionField::identity(&mesh);
    let inst = ProblemInstance::new(mesh, diffusion, f, pair, RegularizationOrder::new(3.0).unwrap(), schedule[0], Default::default())
        .map_err(|e| e.to_string())?;
    let steps = continuation_run(&inst, schedule, &SolverOptions::default(), &DiagnosticsOptions::default(), false)
        .map_err(|e| e.to_string())?;
    if let Some(s) = steps.iter().find(|s| !s.report.converged) {
        return Err(format!("no convergence at eps {}", s.eps));
    }
    Ok(steps)
}

fn green_function(steps: &[ContinuationStep]) -> Verdict {
    let last = steps.last().unwrap();
    let mesh = last.instance.mesh();
    let u = last.instance.recover_u(&last.state).map_err(|e| e.to_string())?;
    let ring: Vec<f64> = (0..mesh.n_nodes())
        .filter(|&i| ((mesh.nodes()[i][0].hypot(mesh.nodes()[i][1])) - 0.5).abs() < 1e-9)
        .map(|i| u[i])
        .collect();
    let mean = ring.iter().sum::<f64>() / ring.len() as f64;
    let exact = -(0.5f64).ln() / (2.0 * PI);
    let rel = (mean - exact).abs() / exact;
    let msg = format!("u(0.5) = {mean:.6} vs {exact:.6} (rel. error {rel:.2e}, {} ring nodes)", ring.len());
    if rel <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// L2 error between the P1 field and `sin(pi x) sin(pi y)`, by a degree-4
/// six-point rule on every triangle.
fn l2_error(mesh: &TriangleMesh, u: &[f64]) -> f64 {
    const RULE: [(f64, f64); 2] = [(0.445_948_490_915_965, 0.223_381_589_678_011), (0.091_576_213_509_771, 0.109_951_743_655_322)];
    let mut e2 = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &(a, w) in &RULE {
            for k in 0..3 {
                let mut lam = [a; 3];
                lam[k] = 1.0 - 2.0 * a;
                let (mut x, mut y, mut uh) = (0.0, 0.0, 0.0);
                for m in 0..3 {
                    let p = mesh.nodes()[tri[m]];
                    x += lam[m] * p[0];
                    y += lam[m] * p[1];
                    uh += lam[m] * u[tri[m]];
                }
                let d = uh - (PI * x).sin() * (PI * y).sin();
                e2 += w * mesh.area(t) * d * d;
            }
        }
    }
    e2.sqrt()
}

fn manufactured(runs: &[(usize, Vec<ContinuationStep>)]) -> Verdict {
    let errors: Vec<f64> = runs
        .iter()
        .map(|(_, steps)| {
            let s = &steps[0];
            l2_error(s.instance.mesh(), &s.instance.recover_u(&s.state).unwrap())
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    let msg = format!("L2 errors [{}], observed orders {orders:.3?}", shown.join(", "));
    if orders.iter().all(|&o| o >= 1.8) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn estimate_suite(groups: &[(&str, &[ContinuationStep], bool)]) -> Verdict {
    let mut solves = 0;
    let mut max_chi: f64 = 0.0;
    let mut max_wplap: f64 = 0.0;
    let mut slopes = Vec::new();
    for (name, steps, is_sweep) in groups {
        for s in steps.iter() {
            let d = s.report.diagnostics.as_ref().unwrap();
            let tk_levels: Vec<f64> = d.tk_checks.iter().map(|t| t.k).collect();
            let failed = if !(d.chi_check.passed && d.chi_check.slack <= 1.1) {
                Some("chi_energy")
            } else if !(d.weighted_plap_check.passed && d.weighted_plap_check.slack <= 1.1) {
                Some("weighted_plap")
            } else if tk_levels != [0.1, 1.0, 10.0] || !d.tk_checks.iter().all(|t| t.clean.passed) {
                Some("tk_gradient")
            } else if !d.vanish_probe.iter().all(|e| e.passed) {
                Some("vanishing bound")
            } else {
                None
            };
            if let Some(check) = failed {
                return Err(format!("{name} at eps {}: {check} failed", s.eps));
            }
            max_chi = max_chi.max(d.chi_check.slack);
            max_wplap = max_wplap.max(d.weighted_plap_check.slack);
            solves += 1;
        }
        if *is_sweep {
            let eps: Vec<f64> = steps.iter().map(|s| s.eps).collect();
            let v: Vec<f64> = steps
                .iter()
                .map(|s| {
                    let d = s.report.diagnostics.as_ref().unwrap();
                    d.vanish_probe.iter().map(|e| e.value.abs()).fold(0.0, f64::max)
                })
                .collect();
            let slope = loglog_slope(&eps, &v);
            let p = steps[0].instance.p();
            if slope < 1.0 / p - 0.1 {
                return Err(format!("{name}: vanishing slope {slope:.3} < 1/p - 0.1"));
            }
            slopes.push(format!("{name} {slope:.3}"));
        }
    }
    Ok(format!(
        "{solves} solves, max slack chi {max_chi:.3}, weighted {max_wplap:.3}; vanishing slopes {}",
        slopes.join(", ")
    ))
}

/// One constant per refinement level for the whole default test set:
/// `C_h = max_tests max(residual, 0) / h`. Stable means the fit does not grow
/// under refinement and the coarsest fit bounds every later residual.
fn entropy_rates(runs: &[(usize, Vec<ContinuationStep>)]) -> Verdict {
    let records: Vec<_> = runs
        .iter()
        .map(|(_, steps)| (steps[0].instance.mesh().max_edge_length(), steps[0].report.diagnostics.clone().unwrap()))
        .collect();
    let n_tests = records[0].1.entropy_residuals.len();
    if n_tests != 6 {
        return Err(format!("expected 6 default entropy tests, got {n_tests}"));
    }
    let fits: Vec<f64> = records
        .iter()
        .map(|(h, d)| d.entropy_residuals.iter().map(|e| e.residual.max(0.0) / h).fold(0.0, f64::max))
        .collect();
    let c0 = fits[0];
    for (h, d) in &records {
        if let Some(e) = d.entropy_residuals.iter().find(|e| e.residual > c0 * h) {
            return Err(format!("phi {} k {}: residual {:.3e} above C h = {:.3e}", e.phi, e.k, e.residual, c0 * h));
        }
    }
    let msg = format!("fitted C per refinement {fits:.4?}");
    if fits.windows(2).all(|w| w[1] <= 1.1 * w[0]) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn stefan(steps: &[ContinuationStep]) -> Verdict {
    let mut worst_gap: f64 = 0.0;
    let mut worst_graph: f64 = 0.0;
    let mut worst_ub: f64 = 0.0;
    let mut prev = None;
    let mut diffs = Vec::new();
    for s in steps {
        let inst = &s.instance;
        let d = s.report.diagnostics.as_ref().unwrap();
        worst_gap = worst_gap.max((d.minty.gap - d.minty.eps_v_l1).abs());
        let u = inst.recover_u(&s.state).unwrap();
        let v = inst.recover_v(&u);
        let b = inst.recover_b(&v);
        let pair = inst.pair();
        for i in 0..u.len() {
            let z = pair.zeta().eval(v[i]);
            if !pair.graph_contains(z, b[i], 1e-6) {
                return Err(format!("node {i} at eps {}: b off the graph", s.eps));
            }
            worst_graph = worst_graph.max(pair.graph_distance(z, b[i]));
            worst_ub = worst_ub.max(pair.graph_distance(u[i], b[i]));
        }
        if let Some(p) = prev.replace(u.clone()) {
            let diff: Vec<f64> = u.iter().zip(p.iter()).map(|(a, c)| a - c).collect();
            diffs.push(lumped_lq(inst.mesh(), &diff, 3.0));
        }
    }
    if worst_gap > 1e-8 {
        return Err(format!("Minty gap deviates from eps ||v||_1 by {worst_gap:e}"));
    }
    let msg = format!(
        "gap deviation {worst_gap:.1e}, graph distance {worst_graph:.1e} (u itself off by {worst_ub:.1e}), successive L3 differences {diffs:.4?}"
    );
    if diffs.windows(2).all(|w| w[1] < w[0]) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "[problem]\npreset = stefan\neps = 0.1, 0.05\n[mesh]\nshape = unit_disk\nrefinement = 8\n\
         [diffusion]\ntensor = 1.2 0.3 0.9\n[measure]\ndirac = 0.1 0.2 2\nline = -0.5 -0.5 0.5 -0.2 1\nac_constant = -0.5\n\
         [output]\ndirectory = out\n",
    )
    .map_err(|e| e.to_string())?;
    let run = || -> Result<Vec<Vec<u8>>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_wplap"))
            .arg("solve")
            .arg(&cfg)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("solve exited with {:?}", status.status.code()));
        }
        ["solution.csv", "diagnostics.csv", "summary.json"]
            .iter()
            .map(|f| std::fs::read(dir.path().join("out").join(f)).map_err(|e| e.to_string()))
            .collect()
    };
    let first = run()?;
    let second = run()?;
    if first == second {
        Ok(format!("solution, diagnostics and summary identical ({} bytes)", first.iter().map(Vec::len).sum::<usize>()))
    } else {
        Err("outputs differ between runs".into())
    }
}

fn report(id: usize, name: &str, start: Instant, v: Verdict, failures: &mut usize) {
    let (tag, detail) = match v {
        Ok(d) => ("PASS", d),
        Err(d) => {
            *failures += 1;
            ("FAIL", d)
        }
    };
    println!("criterion {id:>2} {tag} {name} [{:.2} s]: {detail}", start.elapsed().as_secs_f64());
}

fn main() {
    let mut failures = 0;
    let t = Instant::now();
    report(1, "scalar kernel bounds", t, kernel_bounds(), &mut failures);
    let t = Instant::now();
    report(2, "resolvent identity", t, resolvent_identity(), &mut failures);
    let t = Instant::now();
    report(3, "gradient and Jacobian consistency", t, gradient_consistency(), &mut failures);
    let t = Instant::now();
    report(4, "small-instance oracle", t, oracle_equivalence(), &mut failures);

    let t = Instant::now();
    let disk = benchmark(
        TriangleMesh::structured(Shape::UnitDisk, 64).unwrap(),
        NonlinearityPair::linear(),
        MeasureData::dirac([0.0, 0.0], 1.0),
        &[1e-1, 1e-2, 1e-3, 1e-4],
    );
    report(5, "disk Green's function", t, disk.as_ref().map_err(Clone::clone).and_then(|s| green_function(s)), &mut failures);

    let t = Instant::now();
    let mms: Result<Vec<(usize, Vec<ContinuationStep>)>, String> = [8, 16, 32]
        .into_iter()
        .map(|n| {
            let mesh = TriangleMesh::structured(Shape::UnitSquare, n).unwrap();
            let f = MeasureData::ac_from_fn(&mesh, |p| 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin());
            benchmark(mesh, NonlinearityPair::linear(), f, &[1e-6]).map(|s| (n, s))
        })
        .collect();
    report(6, "manufactured solution", t, mms.as_ref().map_err(Clone::clone).and_then(|r| manufactured(r)), &mut failures);

    let t = Instant::now();
    let stefan_steps = {
        let mesh = TriangleMesh::structured(Shape::UnitSquare, 16).unwrap();
        let mut f = MeasureData::dirac([0.5, 0.5], 2.0);
        f.ac = vec![-1.0; mesh.n_triangles()];
        benchmark(mesh, NonlinearityPair::stefan(1.0).unwrap(), f, &[0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625])
    };
    let stefan_time = t.elapsed();

    let t = Instant::now();
    let suite = match (&disk, &mms, &stefan_steps) {
        (Ok(d), Ok(m), Ok(s)) => {
            let mut groups: Vec<(&str, &[ContinuationStep], bool)> = vec![("disk", d, true), ("stefan", s, true)];
            for (n, steps) in m {
                groups.push((if *n == 8 { "mms8" } else if *n == 16 { "mms16" } else { "mms32" }, steps, false));
            }
            estimate_suite(&groups)
        }
        _ => Err("a benchmark did not converge".into()),
    };
    report(7, "estimate suite", t, suite, &mut failures);

    let t = Instant::now();
    report(8, "entropy residual rate", t, mms.as_ref().map_err(Clone::clone).and_then(|r| entropy_rates(r)), &mut failures);

    let t = Instant::now() - stefan_time;
    report(9, "Stefan benchmark", t, stefan_steps.as_ref().map_err(Clone::clone).and_then(|s| stefan(s)), &mut failures);

    let t = Instant::now();
    report(10, "determinism", t, determinism(), &mut failures);

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
