//! WebAssembly bindings for the browser demo in `www/`: kernel curves, the
//! point-source solve on the unit disk and resolvent curves of the presets.
//!
//! The computations live in plain functions so they can be tested natively;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use wasm_bindgen::prelude::*;
use wplap::diagnostics::DiagnosticsOptions;
use wplap::domain::{DiffusionField, MeasureData};
use wplap::kernel::{self, Kernel, RegularizationOrder};
use wplap::mesh::{Shape, TriangleMesh};
use wplap::monotone::{NonlinearityPair, Preset};
use wplap::solver::{continuation_run, SolverOptions, Strategy};
use wplap::system::ProblemInstance;

#[wasm_bindgen]
#[derive(Clone, Debug, Default)]
pub struct Curves {
    x: Vec<f64>,
    series: Vec<Vec<f64>>,
}

#[wasm_bindgen]
impl Curves {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(js_name = seriesCount, getter)]
    pub fn series_count(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self, i: usize) -> Vec<f64> {
        self.series.get(i).cloned().unwrap_or_default()
    }
}

/// `psi`, `psi'`, `psi_p` and `chi_tilde` on `[0, s_max]`.
pub fn kernel_table(p: f64, s_max: f64, points: usize) -> Result<Curves, String> {
    let order = RegularizationOrder::new(p).map_err(|e| e.to_string())?;
    if !(s_max > 0.0 && s_max.is_finite()) || points < 2 {
        return Err("need s_max > 0 and at least 2 points".into());
    }
    let cfg = Default::default();
    let k = Kernel::new(order, cfg).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..points).map(|i| s_max * i as f64 / (points - 1) as f64).collect();
    let mut series: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(points)).collect();
    for &s in &x {
        let row = [
            kernel::psi(s),
            kernel::psi_prime(s),
            k.psi_p(s),
            kernel::chi_tilde(s, &cfg),
        ];
        for (col, v) in series.iter_mut().zip(row) {
            col.push(v.map_err(|e| e.to_string())?);
        }
    }
    Ok(Curves { x, series })
}

/// Resolvent `v = (eps Id + zeta)^{-1}(s)`, `zeta(v)` and `mu_eps(s)`.
pub fn resolvent_table(preset: &str, latent_heat: f64, eps: f64, s_max: f64, points: usize) -> Result<Curves, String> {
    let preset: Preset = preset.parse().map_err(|e: wplap::Error| e.to_string())?;
    let pair = NonlinearityPair::preset(preset, latent_heat).map_err(|e| e.to_string())?;
    if !(eps > 0.0 && eps < pair.max_eps()) {
        return Err(format!("eps must lie in (0, {})", pair.max_eps()));
    }
    if !(s_max > 0.0 && s_max.is_finite()) || points < 2 {
        return Err("need s_max > 0 and at least 2 points".into());
    }
    let x: Vec<f64> = (0..points).map(|i| -s_max + 2.0 * s_max * i as f64 / (points - 1) as f64).collect();
    let v: Vec<f64> = x.iter().map(|&s| pair.resolvent(eps, s)).collect();
    let z = v.iter().map(|&v| pair.zeta().eval(v)).collect();
    let mu = x.iter().map(|&s| pair.mu_eps(eps, s)).collect();
    Ok(Curves { x, series: vec![v, z, mu] })
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct DiskSolution {
    nodes: Vec<f64>,
    triangles: Vec<u32>,
    u: Vec<f64>,
    radii: Vec<f64>,
    ring_mean: Vec<f64>,
    converged: bool,
    summary: String,
}

#[wasm_bindgen]
impl DiskSolution {
    /// Node coordinates, interleaved `x0, y0, x1, y1, ...`.
    #[wasm_bindgen(getter)]
    pub fn nodes(&self) -> Vec<f64> {
        self.nodes.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn triangles(&self) -> Vec<u32> {
        self.triangles.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn u(&self) -> Vec<f64> {
        self.u.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn radii(&self) -> Vec<f64> {
        self.radii.clone()
    }

    #[wasm_bindgen(js_name = ringMean, getter)]
    pub fn ring_mean(&self) -> Vec<f64> {
        self.ring_mean.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// JSON with one entry per continuation step.
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

/// Unit point source at the origin of the unit disk, with eps continuation
/// from 0.1 down to `eps_final` (one decade per step).
pub fn disk_solve(refinement: usize, eps_final: f64, p: f64, strategy: &str) -> Result<DiskSolution, String> {
    if !(2..=96).contains(&refinement) {
        return Err("refinement must lie in [2, 96]".into());
    }
    if !(eps_final > 0.0 && eps_final <= 0.1) {
        return Err("final eps must lie in (0, 0.1]".into());
    }
    let strategy: Strategy = strategy.parse().map_err(|e: wplap::Error| e.to_string())?;
    let mesh = TriangleMesh::structured(Shape::UnitDisk, refinement).map_err(|e| e.to_string())?;
    let order = RegularizationOrder::new(p).map_err(|e| e.to_string())?;
    let diffusion = DiffusionField::identity(&mesh);
    let inst = ProblemInstance::new(
        mesh,
        diffusion,
        MeasureData::dirac([0.0, 0.0], 1.0),
        NonlinearityPair::linear(),
        order,
        0.1,
        Default::default(),
    )
    .map_err(|e| e.to_string())?;
    let mut schedule = vec![0.1];
    while *schedule.last().unwrap() > eps_final * 1.000001 {
        let next = (schedule.last().unwrap() * 0.1).max(eps_final);
        schedule.push(next);
    }
    let opts = SolverOptions {
        strategy,
        ..Default::default()
    };
    let steps = continuation_run(&inst, &schedule, &opts, &DiagnosticsOptions::default(), true).map_err(|e| e.to_string())?;
    let last = steps.last().expect("non-empty schedule");
    let mesh = last.instance.mesh();
    let u = last.instance.recover_u(&last.state).map_err(|e| e.to_string())?.into_inner();

    let mut radii: Vec<f64> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (i, p) in mesh.nodes().iter().enumerate() {
        let r = p[0].hypot(p[1]);
        match radii.iter().position(|&q| (q - r).abs() < 1e-9) {
            Some(k) => {
                sums[k].0 += u[i];
                sums[k].1 += 1;
            }
            None => {
                radii.push(r);
                sums.push((u[i], 1));
            }
        }
    }
    let mut rings: Vec<(f64, f64)> = radii.into_iter().zip(sums).map(|(r, (s, n))| (r, s / n as f64)).collect();
    rings.sort_by(|a, b| a.0.total_cmp(&b.0));

    let summary: Vec<serde_json::Value> = steps
        .iter()
        .map(|s| {
            serde_json::json!({
                "eps": s.eps,
                "converged": s.report.converged,
                "outer_iters": s.report.outer_iters,
                "residual": s.report.final_residual,
                "diagnostics_passed": s.report.diagnostics.as_ref().map(|d| d.passed),
                "chi_slack": s.report.diagnostics.as_ref().map(|d| d.chi_check.slack),
            })
        })
        .collect();
    Ok(DiskSolution {
        nodes: mesh.nodes().iter().flat_map(|p| [p[0], p[1]]).collect(),
        triangles: mesh.triangles().iter().flat_map(|t| t.map(|i| i as u32)).collect(),
        u,
        radii: rings.iter().map(|r| r.0).collect(),
        ring_mean: rings.iter().map(|r| r.1).collect(),
        converged: steps.iter().all(|s| s.report.converged),
        summary: serde_json::Value::Array(summary).to_string(),
    })
}

#[wasm_bindgen(js_name = kernelCurves)]
pub fn kernel_curves(p: f64, s_max: f64, points: usize) -> Result<Curves, JsError> {
    kernel_table(p, s_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = resolventCurves)]
pub fn resolvent_curves(preset: &str, latent_heat: f64, eps: f64, s_max: f64, points: usize) -> Result<Curves, JsError> {
    resolvent_table(preset, latent_heat, eps, s_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = solveDisk)]
pub fn solve_disk(refinement: usize, eps_final: f64, p: f64, strategy: &str) -> Result<DiskSolution, JsError> {
    disk_solve(refinement, eps_final, p, strategy).map_err(|e| JsError::new(&e))
}
