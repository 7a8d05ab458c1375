//! Discrete counterparts of the a-priori estimates, attached to every solve.
//!
//! Nonlinear coefficients of the gradient (psi', truncations) are taken at
//! triangle means of the nodal values, matching the assembly. Several checks
//! are then exact inequalities at the discrete level (the Hoelder chains, the
//! clean truncation bound, the vanishing-term bound); the energy bounds carry
//! a slack budget for the discrete chain rule.

use serde::{Deserialize, Serialize};

use crate::domain::{lumped_lq, NodalField};
use crate::error::{invalid, Error, Result};
use crate::kernel::{psi_prime_unchecked, truncate_unchecked};
use crate::mesh::{Point, TriangleMesh};
use crate::monotone::PiecewiseLinearMonotone;
use crate::system::{DiscreteState, ProblemInstance};

/// Relative tolerance for inequalities that hold exactly up to round-off.
const EXACT: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    pub q_list: Vec<f64>,
    pub tk_levels: Vec<f64>,
    pub entropy_levels: Vec<f64>,
    /// Centre of the entropy test bump; defaults to the mean node position.
    pub bump_center: Option<Point>,
    /// Allowed ratio lhs/rhs for the energy bounds.
    pub slack_budget: f64,
    /// Allowed ratio for the a-priori bound of the transformed gradient.
    pub a_priori_budget: f64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            q_list: vec![1.25, 1.5, 1.75],
            tk_levels: vec![0.1, 1.0, 10.0],
            entropy_levels: vec![0.1, 1.0, 10.0],
            bump_center: None,
            slack_budget: 1.1,
            a_priori_budget: 1.05,
        }
    }
}

impl DiagnosticsOptions {
    pub fn validate(&self) -> Result<()> {
        for &q in &self.q_list {
            q_hat(q)?;
        }
        if self.tk_levels.iter().chain(&self.entropy_levels).any(|k| !(*k > 0.0)) {
            return Err(invalid("k", "truncation levels must be > 0"));
        }
        if !(self.slack_budget >= 1.0 && self.a_priori_budget >= 1.0) {
            return Err(invalid("slack_budget", "budgets must be >= 1"));
        }
        Ok(())
    }
}

/// `lhs <= budget * rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64, budget: f64) -> Self {
        let slack = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            lhs,
            rhs,
            slack,
            passed: lhs <= budget * rhs + 1e-14,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SobolevNorms {
    pub q: f64,
    pub q_hat: f64,
    pub grad_q: f64,
    pub u_q_hat: f64,
    pub inv_psi_prime_q_hat: f64,
    /// `||grad u||_q^q <= (chi_energy * ||1/psi'||_q_hat)^(q/2)` with the
    /// weight at triangle means.
    pub holder: BoundCheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TkCheck {
    pub k: f64,
    /// Gradient energy on triangles where every `|u_i| <= k`.
    pub clean: BoundCheck,
    /// Gradient energy of the nodal truncation over all triangles.
    pub full_lhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VanishEntry {
    pub test: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyEntry {
    pub phi: String,
    pub k: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MintyCheck {
    pub gap: f64,
    pub eps_v_l1: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub eps: f64,
    pub p: f64,
    pub rhs_norm: f64,
    /// `sum_T |T| psi'(mean u) |grad u|^2`.
    pub chi_energy: f64,
    pub chi_check: BoundCheck,
    /// `eps sum_T |T| psi'(mean u)^(p-1) |grad u|^p`.
    pub weighted_plap: f64,
    pub weighted_plap_check: BoundCheck,
    pub sobolev: Vec<SobolevNorms>,
    pub tk_checks: Vec<TkCheck>,
    pub vanish_probe: Vec<VanishEntry>,
    pub entropy_residuals: Vec<EntropyEntry>,
    pub entropy_note: Option<String>,
    pub minty: MintyCheck,
    /// `eps ||grad tilde_u||_p^(p-1) <= C_dual ||f||_M`.
    pub a_priori: BoundCheck,
    /// `max_j |L_j| / (||f||_M ||grad phi_j||_p)` over nodal basis functions.
    pub c_dual_basis: f64,
    pub flags: Vec<(String, bool)>,
    pub passed: bool,
}

pub fn q_hat(q: f64) -> Result<f64> {
    if q > 1.0 && q < 2.0 {
        Ok(q / (2.0 - q))
    } else {
        Err(invalid("q", format!("must lie in (1, 2), got {q}")))
    }
}

fn grad_norm2(g: Point) -> f64 {
    g[0] * g[0] + g[1] * g[1]
}

/// `sum_T |T| psi'(mean u) |grad u|^2`.
pub fn chi_energy(mesh: &TriangleMesh, u: &[f64]) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| mesh.area(t) * psi_prime_unchecked(mesh.mean(t, u)) * grad_norm2(mesh.gradient(t, u)))
        .sum()
}

/// `lambda_lo * chi_energy <= ||f||_M`.
pub fn chi_energy_check(inst: &ProblemInstance, u: &[f64], budget: f64) -> BoundCheck {
    let lhs = inst.diffusion().lambda_lo() * chi_energy(inst.mesh(), u);
    BoundCheck::new(lhs, inst.rhs().norm(inst.mesh()), budget)
}

pub fn weighted_plap(inst: &ProblemInstance, u: &[f64]) -> f64 {
    let mesh = inst.mesh();
    let p = inst.p();
    inst.eps()
        * (0..mesh.n_triangles())
            .map(|t| {
                let w = psi_prime_unchecked(mesh.mean(t, u)).powf(p - 1.0);
                mesh.area(t) * w * grad_norm2(mesh.gradient(t, u)).powf(0.5 * p)
            })
            .sum::<f64>()
}

pub fn weighted_plap_check(inst: &ProblemInstance, u: &[f64], budget: f64) -> BoundCheck {
    BoundCheck::new(weighted_plap(inst, u), inst.rhs().norm(inst.mesh()), budget)
}

pub fn sobolev_family_norms(mesh: &TriangleMesh, u: &[f64], q_list: &[f64]) -> Result<Vec<SobolevNorms>> {
    let chi = chi_energy(mesh, u);
    let inv_psi: Vec<f64> = u.iter().map(|&s| 1.0 / psi_prime_unchecked(s)).collect();
    q_list
        .iter()
        .map(|&q| {
            let qh = q_hat(q)?;
            let mut grad_q = 0.0;
            let mut weight = 0.0;
            for t in 0..mesh.n_triangles() {
                let a = mesh.area(t);
                grad_q += a * grad_norm2(mesh.gradient(t, u)).powf(0.5 * q);
                weight += a * psi_prime_unchecked(mesh.mean(t, u)).powf(-qh);
            }
            let lhs = grad_q;
            // (sum psi'^{-q_hat})^{(2-q)/2} = ||1/psi'||_{q_hat}^{q/2}
            let rhs = chi.powf(0.5 * q) * weight.powf(0.5 * (2.0 - q));
            Ok(SobolevNorms {
                q,
                q_hat: qh,
                grad_q: grad_q.powf(1.0 / q),
                u_q_hat: lumped_lq(mesh, u, qh),
                inv_psi_prime_q_hat: lumped_lq(mesh, &inv_psi, qh),
                holder: BoundCheck::new(lhs, rhs, 1.0 + EXACT),
            })
        })
        .collect()
}

pub fn tk_gradient_check(mesh: &TriangleMesh, u: &[f64], levels: &[f64]) -> Result<Vec<TkCheck>> {
    let chi = chi_energy(mesh, u);
    levels
        .iter()
        .map(|&k| {
            if !(k > 0.0) {
                return Err(invalid("k", format!("truncation level must be > 0, got {k}")));
            }
            let tk: Vec<f64> = u.iter().map(|&s| truncate_unchecked(s, k)).collect();
            let mut clean = 0.0;
            let mut full = 0.0;
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let e = mesh.area(t) * grad_norm2(mesh.gradient(t, &tk));
                full += e;
                if tri.iter().all(|&i| u[i].abs() <= k) {
                    clean += e;
                }
            }
            Ok(TkCheck {
                k,
                clean: BoundCheck::new(clean, chi / psi_prime_unchecked(k), 1.0 + EXACT),
                full_lhs: full,
            })
        })
        .collect()
}

/// `eps sum_T |T| |psi'(mean u) grad u|^(p-2) grad u . grad w` against its
/// Hoelder bound.
pub fn vanishing_term_probe(inst: &ProblemInstance, u: &[f64], tests: &[(String, NodalField)]) -> Vec<VanishEntry> {
    let mesh = inst.mesh();
    let p = inst.p();
    let eps = inst.eps();
    let wplap = weighted_plap(inst, u);
    let inv_weight: f64 = (0..mesh.n_triangles())
        .map(|t| mesh.area(t) / psi_prime_unchecked(mesh.mean(t, u)))
        .sum();
    tests
        .iter()
        .map(|(name, w)| {
            let mut value = 0.0;
            let mut grad_w_max: f64 = 0.0;
            for t in 0..mesh.n_triangles() {
                let gu = mesh.gradient(t, u);
                let gw = mesh.gradient(t, w);
                grad_w_max = grad_w_max.max(grad_norm2(gw).sqrt());
                let s = psi_prime_unchecked(mesh.mean(t, u)) * grad_norm2(gu).sqrt();
                value += mesh.area(t) * s.powf(p - 2.0) * (gu[0] * gw[0] + gu[1] * gw[1]);
            }
            value *= eps;
            let bound = grad_w_max * eps.powf(1.0 / p) * inv_weight.powf(1.0 / p) * wplap.powf((p - 1.0) / p);
            VanishEntry {
                test: name.clone(),
                value,
                bound,
                passed: value.abs() <= bound * (1.0 + EXACT) + 1e-300,
            }
        })
        .collect()
}

/// Entropy residual
/// `int b T_k(u-phi) + int Lambda grad u . grad T_k(u-phi) - int f T_k(u-phi)`,
/// with lumped mass for the first term. Requires an
/// absolutely continuous right-hand side.
pub fn entropy_residual(inst: &ProblemInstance, u: &[f64], b: &[f64], phi: &[f64], k: f64) -> Result<f64> {
    if inst.rhs().has_singular_part() {
        return Err(Error::SingularMeasure);
    }
    if !(k > 0.0) {
        return Err(invalid("k", format!("truncation level must be > 0, got {k}")));
    }
    let mesh = inst.mesh();
    let load = inst.load();
    let mass = inst.lumped_mass();
    let tk: Vec<f64> = u
        .iter()
        .zip(phi)
        .map(|(&a, &c)| truncate_unchecked(a - c, k))
        .collect();
    let mut r = 0.0;
    for &i in mesh.interior_nodes() {
        r += (mass[i] * b[i] - load[i]) * tk[i];
    }
    for t in 0..mesh.n_triangles() {
        let lg = inst.diffusion().apply(t, mesh.gradient(t, u));
        let gt = mesh.gradient(t, &tk);
        r += mesh.area(t) * (lg[0] * gt[0] + lg[1] * gt[1]);
    }
    Ok(r)
}

/// Lumped `||u - zeta(v)||_1` against `eps ||v||_1`.
pub fn minty_consistency(mesh: &TriangleMesh, u: &[f64], v: &[f64], zeta: &PiecewiseLinearMonotone, eps: f64) -> MintyCheck {
    let gap_field: Vec<f64> = u.iter().zip(v).map(|(&a, &s)| a - zeta.eval(s)).collect();
    let gap = lumped_lq(mesh, &gap_field, 1.0);
    let v1 = lumped_lq(mesh, v, 1.0);
    MintyCheck {
        gap,
        eps_v_l1: eps * v1,
        passed: (gap - eps * v1).abs() <= 1e-8 * (1.0 + v1),
    }
}

/// Nodal interpolant of `max(0, 1 - 4 |x - c|^2)`.
pub fn bump(mesh: &TriangleMesh, center: Point) -> NodalField {
    NodalField::interpolate(mesh, |p| {
        let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
        (1.0 - 4.0 * r2).max(0.0)
    })
}

pub fn node_mean(mesh: &TriangleMesh) -> Point {
    let n = mesh.n_nodes() as f64;
    mesh.nodes()
        .iter()
        .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n])
}

/// Test functions of the vanishing-term probe: the bump and the nodal basis
/// function of the interior node closest to the centre.
pub fn default_probe_tests(mesh: &TriangleMesh, center: Point) -> Vec<(String, NodalField)> {
    let mut tests = vec![("bump".to_string(), bump(mesh, center))];
    let nearest = mesh.interior_nodes().iter().copied().min_by(|&a, &b| {
        let d = |i: usize| {
            let p = mesh.nodes()[i];
            (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)
        };
        d(a).total_cmp(&d(b))
    });
    if let Some(j) = nearest {
        let mut hat = vec![0.0; mesh.n_nodes()];
        hat[j] = 1.0;
        tests.push((
            "hat".to_string(),
            NodalField::new(mesh, hat).expect("interior hat function"),
        ));
    }
    tests
}

/// `eps ||grad tilde_u||_p^(p-1)` against `C_dual ||f||_M`, where `C_dual`
/// is the largest `|L.w| / (||f||_M ||grad w||_p)` over the nodal basis
/// functions and the solution direction itself. Returns the check and the
/// basis-only constant.
pub fn a_priori_check(inst: &ProblemInstance, tilde_u: &[f64], budget: f64) -> (BoundCheck, f64) {
    let mesh = inst.mesh();
    let p = inst.p();
    let fnorm = inst.rhs().norm(mesh);
    let load = inst.load();
    let grad_p = |w: &[f64]| -> f64 {
        (0..mesh.n_triangles())
            .map(|t| mesh.area(t) * grad_norm2(mesh.gradient(t, w)).powf(0.5 * p))
            .sum::<f64>()
            .powf(1.0 / p)
    };
    let gu = grad_p(tilde_u);
    let lhs = inst.eps() * gu.powf(p - 1.0);
    if fnorm == 0.0 {
        return (BoundCheck::new(lhs, 0.0, budget), 0.0);
    }
    // grad phi_j restricted to the patch of j
    let mut patch = vec![0.0; mesh.n_nodes()];
    for t in 0..mesh.n_triangles() {
        let g = mesh.basis_gradients(t);
        for (k, &i) in mesh.triangles()[t].iter().enumerate() {
            patch[i] += mesh.area(t) * grad_norm2(g[k]).powf(0.5 * p);
        }
    }
    let c_basis = mesh
        .interior_nodes()
        .iter()
        .map(|&j| load[j].abs() / (fnorm * patch[j].powf(1.0 / p)))
        .fold(0.0, f64::max);
    let c_self = if gu > 0.0 {
        let lw: f64 = mesh.interior_nodes().iter().map(|&j| load[j] * tilde_u[j]).sum();
        lw.abs() / (fnorm * gu)
    } else {
        0.0
    };
    let c_dual = c_basis.max(c_self);
    (BoundCheck::new(lhs, c_dual * fnorm, budget), c_basis)
}

/// Runs every check on a solved state.
pub fn evaluate(inst: &ProblemInstance, state: &DiscreteState, opts: &DiagnosticsOptions) -> Result<DiagnosticsRecord> {
    opts.validate()?;
    let mesh = inst.mesh();
    let u = inst.recover_u(state)?;
    let v = inst.recover_v(&u);
    let b = inst.recover_b(&v);
    let chi = chi_energy(mesh, &u);
    let chi_check = chi_energy_check(inst, &u, opts.slack_budget);
    let wplap = weighted_plap(inst, &u);
    let wplap_check = weighted_plap_check(inst, &u, opts.slack_budget);
    let sobolev = sobolev_family_norms(mesh, &u, &opts.q_list)?;
    let tk_checks = tk_gradient_check(mesh, &u, &opts.tk_levels)?;
    let center = opts.bump_center.unwrap_or_else(|| node_mean(mesh));
    let vanish_probe = vanishing_term_probe(inst, &u, &default_probe_tests(mesh, center));
    let (entropy_residuals, entropy_note) = if inst.rhs().has_singular_part() {
        (Vec::new(), Some(Error::SingularMeasure.to_string()))
    } else {
        let phis = [
            ("zero".to_string(), NodalField::zeros(mesh)),
            ("bump".to_string(), bump(mesh, center)),
        ];
        let mut out = Vec::new();
        for (name, phi) in &phis {
            for &k in &opts.entropy_levels {
                out.push(EntropyEntry {
                    phi: name.clone(),
                    k,
                    residual: entropy_residual(inst, &u, &b, phi, k)?,
                });
            }
        }
        (out, None)
    };
    let minty = minty_consistency(mesh, &u, &v, inst.pair().zeta(), inst.eps());
    let (a_priori, c_dual_basis) = a_priori_check(inst, &state.tilde_u, opts.a_priori_budget);

    let mut flags = vec![
        ("chi_energy".to_string(), chi_check.passed),
        ("weighted_plap".to_string(), wplap_check.passed),
    ];
    for s in &sobolev {
        flags.push((format!("holder_q{}", s.q), s.holder.passed));
    }
    for t in &tk_checks {
        flags.push((format!("tk_k{}", t.k), t.clean.passed));
    }
    for e in &vanish_probe {
        flags.push((format!("vanish_{}", e.test), e.passed));
    }
    flags.push(("minty".to_string(), minty.passed));
    flags.push(("a_priori".to_string(), a_priori.passed));
    let passed = flags.iter().all(|f| f.1);
    Ok(DiagnosticsRecord {
        eps: inst.eps(),
        p: inst.p(),
        rhs_norm: inst.rhs().norm(mesh),
        chi_energy: chi,
        chi_check,
        weighted_plap: wplap,
        weighted_plap_check: wplap_check,
        sobolev,
        tk_checks,
        vanish_probe,
        entropy_residuals,
        entropy_note,
        minty,
        a_priori,
        c_dual_basis,
        flags,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DiffusionField, MeasureData};
    use crate::kernel::RegularizationOrder;
    use crate::mesh::Shape;
    use crate::monotone::NonlinearityPair;

    fn instance(rhs: impl Fn(&TriangleMesh) -> MeasureData, pair: NonlinearityPair) -> ProblemInstance {
        let mesh = TriangleMesh::structured(Shape::UnitSquare, 6).unwrap();
        let rhs = rhs(&mesh);
        ProblemInstance::new(
            mesh.clone(),
            DiffusionField::identity(&mesh),
            rhs,
            pair,
            RegularizationOrder::new(3.0).unwrap(),
            0.05,
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn q_hat_range() {
        assert_eq!(q_hat(1.5).unwrap(), 3.0);
        assert!(q_hat(1.0).is_err());
        assert!(q_hat(2.0).is_err());
        let mesh = TriangleMesh::structured(Shape::UnitSquare, 2).unwrap();
        assert!(sobolev_family_norms(&mesh, &vec![0.0; mesh.n_nodes()], &[2.5]).is_err());
    }

    #[test]
    fn zero_state_passes_trivially() {
        let inst = instance(|_| MeasureData::empty(), NonlinearityPair::linear());
        let rec = evaluate(&inst, &inst.zero_state(), &DiagnosticsOptions::default()).unwrap();
        assert!(rec.passed);
        assert_eq!(rec.chi_energy, 0.0);
        assert_eq!(rec.weighted_plap, 0.0);
        assert!(rec.vanish_probe.iter().all(|e| e.value == 0.0));
        assert!(rec.entropy_residuals.iter().all(|e| e.residual == 0.0));
    }

    #[test]
    fn exact_inequalities_on_arbitrary_fields() {
        let inst = instance(|m| MeasureData::ac_from_fn(m, |_| 1.0), NonlinearityPair::linear());
        let mesh = inst.mesh();
        let u = NodalField::interpolate(mesh, |p| 3.0 * (5.0 * p[0]).sin() * p[1] * (1.0 - p[1]) * p[0] * (1.0 - p[0]));
        for s in sobolev_family_norms(mesh, &u, &[1.1, 1.5, 1.9]).unwrap() {
            assert!(s.holder.passed, "{s:?}");
        }
        for t in tk_gradient_check(mesh, &u, &[0.01, 0.05, 1.0]).unwrap() {
            assert!(t.clean.passed, "{t:?}");
        }
        let tests = default_probe_tests(mesh, [0.5, 0.5]);
        assert_eq!(tests.len(), 2);
        for e in vanishing_term_probe(&inst, &u, &tests) {
            assert!(e.passed && e.value != 0.0, "{e:?}");
        }
    }

    #[test]
    fn entropy_residual_vanishes_for_phi_equal_u() {
        let inst = instance(|m| MeasureData::ac_from_fn(m, |p| p[0]), NonlinearityPair::linear());
        let mesh = inst.mesh();
        let u = NodalField::interpolate(mesh, |p| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]));
        let b = u.clone();
        assert_eq!(entropy_residual(&inst, &u, &b, &u, 1.0).unwrap(), 0.0);
        assert!(entropy_residual(&inst, &u, &b, &u, 0.0).is_err());
        let singular = instance(|_| MeasureData::dirac([0.5, 0.5], 1.0), NonlinearityPair::linear());
        assert_eq!(
            entropy_residual(&singular, &u, &b, &u, 1.0),
            Err(Error::SingularMeasure)
        );
    }

    #[test]
    fn minty_identity_on_recovered_fields() {
        let inst = instance(|m| MeasureData::ac_from_fn(m, |_| 1.0), NonlinearityPair::stefan(1.0).unwrap());
        let mesh = inst.mesh();
        let u = NodalField::interpolate(mesh, |p| 4.0 * (p[0] - 0.3) * p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]));
        let v = inst.recover_v(&u);
        let m = minty_consistency(mesh, &u, &v, inst.pair().zeta(), inst.eps());
        assert!(m.passed && m.gap > 0.0, "{m:?}");
        let wrong = minty_consistency(mesh, &u, &v, inst.pair().zeta(), 2.0 * inst.eps());
        assert!(!wrong.passed);
    }

    #[test]
    fn options_validation() {
        let mut o = DiagnosticsOptions::default();
        assert!(o.validate().is_ok());
        o.tk_levels.push(-1.0);
        assert!(o.validate().is_err());
        let o = DiagnosticsOptions {
            slack_budget: 0.5,
            ..Default::default()
        };
        assert!(o.validate().is_err());
    }
}
