//! P1 discretization of the regularized problem in the transformed variable
//! `tilde_u = psi_p(u)`.
//!
//! With coefficients frozen at a state `v`, the discrete functional is
//!
//! ```text
//! I_v(w) = sum_i m_i sigma(v_i) w_i
//!        + sum_T |T| ( eps/p |grad w|^p + 1/2 rho_T Lambda_T grad w . grad w )
//!        - L . w
//! ```
//!
//! where `m_i` are lumped masses, `sigma = mu_eps o psi_p^{-1}`, and
//! `rho_T = (psi_p^{-1})'` evaluated at the mean of `v` over `T`.

use std::sync::Arc;

use crate::domain::{DiffusionField, MeasureData, NodalField};
use crate::error::{invalid, Error, Result};
use crate::kernel::{Kernel, RegularizationOrder, ScalarToleranceConfig};
use crate::mesh::TriangleMesh;
use crate::monotone::NonlinearityPair;
use crate::sparse::{CsrMatrix, Pattern};

/// A fully specified regularized problem on a mesh.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    mesh: Arc<TriangleMesh>,
    diffusion: Arc<DiffusionField>,
    rhs: Arc<MeasureData>,
    pair: Arc<NonlinearityPair>,
    kernel: Kernel,
    eps: f64,
    load: Arc<Vec<f64>>,
    mass: Arc<Vec<f64>>,
    pattern: Arc<Pattern>,
}

/// Coefficients of `I_v` that depend only on the frozen state `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frozen {
    /// `sigma(v_i)` per node.
    pub sigma: Vec<f64>,
    /// `rho` per triangle.
    pub rho: Vec<f64>,
}

/// State of the discrete problem: the transformed unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteState {
    pub tilde_u: NodalField,
}

impl ProblemInstance {
    pub fn new(
        mesh: TriangleMesh,
        diffusion: DiffusionField,
        rhs: MeasureData,
        pair: NonlinearityPair,
        order: RegularizationOrder,
        eps: f64,
        tolerances: ScalarToleranceConfig,
    ) -> Result<Self> {
        diffusion.check_mesh(&mesh)?;
        let load = rhs.assemble_load(&mesh)?;
        let mass = mesh.lumped_mass();
        let pattern = Pattern::new(&mesh);
        let base = Self {
            mesh: Arc::new(mesh),
            diffusion: Arc::new(diffusion),
            rhs: Arc::new(rhs),
            pair: Arc::new(pair),
            kernel: Kernel::new(order, tolerances)?,
            eps: 1.0,
            load: Arc::new(load),
            mass: Arc::new(mass),
            pattern: Arc::new(pattern),
        };
        base.with_eps(eps)
    }

    /// Same problem with another regularization parameter.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid("eps", format!("must be finite and > 0, got {eps}")));
        }
        if !self.pair.is_linear() && eps >= self.pair.max_eps() {
            return Err(invalid(
                "eps",
                format!(
                    "quasilinear problems need eps < Z1/2 = {}, got {eps}",
                    self.pair.max_eps()
                ),
            ));
        }
        Ok(Self {
            eps,
            ..self.clone()
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn diffusion(&self) -> &DiffusionField {
        &self.diffusion
    }

    pub fn rhs(&self) -> &MeasureData {
        &self.rhs
    }

    pub fn pair(&self) -> &NonlinearityPair {
        &self.pair
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn order(&self) -> RegularizationOrder {
        self.kernel.order()
    }

    pub fn p(&self) -> f64 {
        self.kernel.order().value()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Load vector over all nodes (boundary entries are ignored).
    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn zero_state(&self) -> DiscreteState {
        DiscreteState {
            tilde_u: NodalField::zeros(&self.mesh),
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.mesh.n_nodes() {
            return Err(Error::Dimension {
                expected: self.mesh.n_nodes(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn freeze(&self, state: &[f64]) -> Result<Frozen> {
        self.check_len(state)?;
        let sigma = if self.pair.is_linear() {
            vec![0.0; state.len()]
        } else {
            state
                .iter()
                .map(|&y| Ok(self.pair.mu_eps(self.eps, self.kernel.psi_p_inverse(y)?)))
                .collect::<Result<_>>()?
        };
        let rho = (0..self.mesh.n_triangles())
            .map(|t| self.kernel.psi_p_inverse_prime(self.mesh.mean(t, state)))
            .collect::<Result<_>>()?;
        Ok(Frozen { sigma, rho })
    }

    /// `I_v(w)` for the coefficients frozen at `v`.
    pub fn energy(&self, frozen: &Frozen, w: &[f64]) -> f64 {
        let p = self.p();
        let mut e = 0.0;
        for &i in self.mesh.interior_nodes() {
            e += (self.mass[i] * frozen.sigma[i] - self.load[i]) * w[i];
        }
        for t in 0..self.mesh.n_triangles() {
            let g = self.mesh.gradient(t, w);
            let kg = self.diffusion.apply(t, g);
            let n2 = g[0] * g[0] + g[1] * g[1];
            e += self.mesh.area(t)
                * (self.eps / p * n2.powf(0.5 * p) + 0.5 * frozen.rho[t] * (kg[0] * g[0] + kg[1] * g[1]));
        }
        e
    }

    /// Gradient of `I_v` at `w`; zero at boundary nodes.
    pub fn residual(&self, frozen: &Frozen, w: &[f64]) -> Vec<f64> {
        let p = self.p();
        let mut r = vec![0.0; w.len()];
        for &i in self.mesh.interior_nodes() {
            r[i] = self.mass[i] * frozen.sigma[i] - self.load[i];
        }
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let g = self.mesh.gradient(t, w);
            let kg = self.diffusion.apply(t, g);
            let c = self.eps * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * (p - 2.0));
            let flux = [c * g[0] + frozen.rho[t] * kg[0], c * g[1] + frozen.rho[t] * kg[1]];
            let a = self.mesh.area(t);
            let grads = self.mesh.basis_gradients(t);
            for k in 0..3 {
                r[tri[k]] += a * (flux[0] * grads[k][0] + flux[1] * grads[k][1]);
            }
        }
        for (i, ri) in r.iter_mut().enumerate() {
            if self.mesh.is_boundary(i) {
                *ri = 0.0;
            }
        }
        r
    }

    /// Hessian of `I_v` at `w` on interior dofs.
    pub fn subproblem_jacobian(&self, frozen: &Frozen, w: &[f64]) -> CsrMatrix {
        let p = self.p();
        let mut j = self.pattern.zeros();
        for t in 0..self.mesh.n_triangles() {
            let g = self.mesh.gradient(t, w);
            let n2 = g[0] * g[0] + g[1] * g[1];
            let lam = self.diffusion.tensor(t);
            let rho = frozen.rho[t];
            // element tensor: eps |g|^{p-2} (I + (p-2) g g^T / |g|^2) + rho Lambda
            let mut h = [rho * lam[0], rho * lam[1], rho * lam[2]];
            if n2 > 0.0 {
                let c = self.eps * n2.powf(0.5 * (p - 2.0));
                let d = c * (p - 2.0) / n2;
                h[0] += c + d * g[0] * g[0];
                h[1] += d * g[0] * g[1];
                h[2] += c + d * g[1] * g[1];
            }
            let a = self.mesh.area(t);
            let grads = self.mesh.basis_gradients(t);
            let mut local = [[0.0; 3]; 3];
            for (r, row) in local.iter_mut().enumerate() {
                let hg = [
                    h[0] * grads[r][0] + h[1] * grads[r][1],
                    h[1] * grads[r][0] + h[2] * grads[r][1],
                ];
                for (c, entry) in row.iter_mut().enumerate() {
                    *entry = a * (hg[0] * grads[c][0] + hg[1] * grads[c][1]);
                }
            }
            self.pattern.scatter(&mut j, t, &local);
        }
        j
    }

    /// Residual of the nonlinear system, coefficients frozen at the state itself.
    pub fn full_residual(&self, state: &[f64]) -> Result<Vec<f64>> {
        let frozen = self.freeze(state)?;
        Ok(self.residual(&frozen, state))
    }

    /// Exact Jacobian of [`full_residual`](Self::full_residual), generally
    /// nonsymmetric.
    pub fn full_jacobian(&self, state: &[f64]) -> Result<CsrMatrix> {
        self.check_len(state)?;
        let mut rho = Vec::with_capacity(self.mesh.n_triangles());
        let mut drho = Vec::with_capacity(self.mesh.n_triangles());
        for t in 0..self.mesh.n_triangles() {
            let (_, r, dr) = self.kernel.inverse_jet(self.mesh.mean(t, state))?;
            rho.push(r);
            drho.push(dr);
        }
        let frozen = Frozen {
            sigma: Vec::new(),
            rho,
        };
        let mut j = self.subproblem_jacobian(&frozen, state);
        for t in 0..self.mesh.n_triangles() {
            if drho[t] == 0.0 {
                continue;
            }
            let kg = self.diffusion.apply(t, self.mesh.gradient(t, state));
            let a = self.mesh.area(t);
            let grads = self.mesh.basis_gradients(t);
            let mut local = [[0.0; 3]; 3];
            for (r, row) in local.iter_mut().enumerate() {
                let flux = a * (kg[0] * grads[r][0] + kg[1] * grads[r][1]) * drho[t] / 3.0;
                row.fill(flux);
            }
            self.pattern.scatter(&mut j, t, &local);
        }
        if !self.pair.is_linear() {
            for &i in self.mesh.interior_nodes() {
                let (u, rho_i, _) = self.kernel.inverse_jet(state[i])?;
                let (_, dmu) = self.pair.mu_eps_with_derivative(self.eps, u);
                let dof = self.mesh.dof(i).expect("interior node");
                j.add_diagonal(dof, self.mass[i] * dmu * rho_i);
            }
        }
        Ok(j)
    }

    pub fn recover_u(&self, state: &DiscreteState) -> Result<NodalField> {
        let values = state
            .tilde_u
            .iter()
            .map(|&y| self.kernel.psi_p_inverse(y))
            .collect::<Result<Vec<_>>>()?;
        NodalField::new(&self.mesh, values)
    }

    pub fn recover_v(&self, u: &NodalField) -> NodalField {
        u.map(&self.mesh, |s| self.pair.resolvent(self.eps, s))
    }

    pub fn recover_b(&self, v: &NodalField) -> NodalField {
        v.map(&self.mesh, |s| self.pair.beta().eval(s))
    }

    /// Transformed state of a field in the original variable.
    pub fn transform(&self, u: &NodalField) -> Result<DiscreteState> {
        let values = u
            .iter()
            .map(|&s| self.kernel.psi_p(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteState {
            tilde_u: NodalField::new(&self.mesh, values)?,
        })
    }
}

/// Restriction of a nodal vector to interior dofs.
pub fn to_dofs(mesh: &TriangleMesh, nodal: &[f64]) -> Vec<f64> {
    mesh.interior_nodes().iter().map(|&i| nodal[i]).collect()
}

/// Extension of a dof vector by zero boundary values.
pub fn from_dofs(mesh: &TriangleMesh, dofs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_nodes()];
    for (k, &i) in mesh.interior_nodes().iter().enumerate() {
        out[i] = dofs[k];
    }
    out
}
