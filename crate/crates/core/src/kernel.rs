//! Scalar calculus of the log-type diffeomorphism `psi : R -> (-1, 1)` and
//! the maps built from it.
//!
//! * `psi(s) = ln(1+|s|) / (1 + ln(1+|s|)) * sign(s)`
//! * `psi_p(s) = int_0^s psi'(t)^((p-2)/(p-1)) dt`, a diffeomorphism of `R`
//!   that turns the weighted p-Laplace term into a plain p-Laplacian.
//! * `chi_tilde(s) = int_0^s sqrt(psi'(t)) dt`, whose gradient energy is the
//!   quantity controlled by the `psi(u)` test.
//!
//! Both integrals are evaluated after the substitution `x = ln(1+t)`, under
//! which the integrand `psi'(t)^a dt` becomes `exp((1-a) x) (1+x)^(-2a) dx`,
//! smooth and free of the slow algebraic tail.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;

const LARGE: f64 = 1e8;

/// Exponent `p > 2` of the regularizing p-Laplace term (spatial dimension 2).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RegularizationOrder(f64);

impl RegularizationOrder {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 2.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidOrder(p))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `(p-2)/(p-1)`, the power of `psi'` integrated by `psi_p`.
    #[inline]
    pub fn change_exponent(self) -> f64 {
        (self.0 - 2.0) / (self.0 - 1.0)
    }
}

impl TryFrom<f64> for RegularizationOrder {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<RegularizationOrder> for f64 {
    fn from(p: RegularizationOrder) -> f64 {
        p.0
    }
}

/// Tolerances for the quadrature-backed maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarToleranceConfig {
    pub quadrature_rel_tol: f64,
    pub root_abs_tol: f64,
}

impl Default for ScalarToleranceConfig {
    fn default() -> Self {
        Self {
            quadrature_rel_tol: 1e-10,
            root_abs_tol: 1e-12,
        }
    }
}

impl ScalarToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quadrature_rel_tol > 0.0) {
            return Err(invalid("quadrature_rel_tol", "must be > 0"));
        }
        if !(self.root_abs_tol > 0.0) {
            return Err(invalid("root_abs_tol", "must be > 0"));
        }
        Ok(())
    }
}

#[inline]
fn finite(s: f64) -> Result<f64> {
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite(s))
    }
}

#[inline]
fn sign(s: f64) -> f64 {
    if s < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `ln psi'(s) = -(L + 2 ln(1+L))` with `L = ln(1+|s|)`.
#[inline]
fn ln_psi_prime(s: f64) -> f64 {
    let l = s.abs().ln_1p();
    -(l + 2.0 * l.ln_1p())
}

pub fn psi(s: f64) -> Result<f64> {
    let s = finite(s)?;
    let l = s.abs().ln_1p();
    Ok(sign(s) * l / (1.0 + l))
}

pub fn psi_prime(s: f64) -> Result<f64> {
    let s = finite(s)?;
    Ok(psi_prime_unchecked(s))
}

#[inline]
pub(crate) fn psi_prime_unchecked(s: f64) -> f64 {
    let a = s.abs();
    if a > LARGE {
        ln_psi_prime(a).exp()
    } else {
        let l = a.ln_1p();
        let m = 1.0 + l;
        1.0 / (m * m * (1.0 + a))
    }
}

/// Weight `alpha(s) = psi'(s)^(p-2)` of the p-Laplace term.
pub fn alpha(s: f64, p: RegularizationOrder) -> Result<f64> {
    let s = finite(s)?;
    Ok(((p.value() - 2.0) * ln_psi_prime(s)).exp())
}

/// `T_k(s) = min(|s|, k) sign(s)`.
pub fn truncate(s: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(invalid("k", format!("truncation level must be > 0, got {k}")));
    }
    Ok(truncate_unchecked(s, k))
}

#[inline]
pub(crate) fn truncate_unchecked(s: f64, k: f64) -> f64 {
    sign(s) * s.abs().min(k)
}

/// `int_0^|s| psi'(t)^a dt` in the log variable.
fn log_integral(abs_s: f64, a: f64, rel_tol: f64) -> Result<f64> {
    let x = abs_s.ln_1p();
    log_variable_integral(x, a, rel_tol)
}

fn log_variable_integral(x: f64, a: f64, rel_tol: f64) -> Result<f64> {
    let b = 1.0 - a;
    let q = quadrature::integrate(
        |t| (b * t - 2.0 * a * t.ln_1p()).exp(),
        0.0,
        x,
        rel_tol,
        f64::MIN_POSITIVE,
    )?;
    Ok(q.value)
}

/// `chi_tilde(s) = int_0^s sqrt(psi'(t)) dt`.
pub fn chi_tilde(s: f64, cfg: &ScalarToleranceConfig) -> Result<f64> {
    let s = finite(s)?;
    Ok(sign(s) * log_integral(s.abs(), 0.5, cfg.quadrature_rel_tol)?)
}

/// Derivative of `chi_tilde`: `sqrt(psi'(s))`.
pub fn chi_tilde_prime(s: f64) -> Result<f64> {
    Ok(psi_prime(s)?.sqrt())
}

/// The change of variable `psi_p` and its inverse for a fixed order `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    order: RegularizationOrder,
    cfg: ScalarToleranceConfig,
    exponent: f64,
}

impl Kernel {
    pub fn new(order: RegularizationOrder, cfg: ScalarToleranceConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            order,
            cfg,
            exponent: order.change_exponent(),
        })
    }

    pub fn order(&self) -> RegularizationOrder {
        self.order
    }

    pub fn tolerances(&self) -> &ScalarToleranceConfig {
        &self.cfg
    }

    pub fn psi_p(&self, s: f64) -> Result<f64> {
        let s = finite(s)?;
        Ok(sign(s) * log_integral(s.abs(), self.exponent, self.cfg.quadrature_rel_tol)?)
    }

    /// `psi_p'(s) = psi'(s)^((p-2)/(p-1))`, in `(0, 1]`.
    pub fn psi_p_prime(&self, s: f64) -> Result<f64> {
        let s = finite(s)?;
        Ok(self.psi_p_prime_unchecked(s))
    }

    #[inline]
    pub(crate) fn psi_p_prime_unchecked(&self, s: f64) -> f64 {
        if s == 0.0 {
            1.0
        } else {
            (self.exponent * ln_psi_prime(s)).exp()
        }
    }

    /// Upper bound `(p-1)((1+s)^(1/(p-1)) - 1)` on `psi_p(s)` for `s >= 0`.
    pub fn upper_bound(&self, s: f64) -> f64 {
        let p = self.order.value();
        (p - 1.0) * (s.ln_1p() / (p - 1.0)).exp_m1()
    }

    /// Lower bound `(1-t(p-1))^2 / (4 t (p-2)^2) ((1+s)^t - 1)` on `psi_p(s)`,
    /// valid for `s >= 0` and `t` in `(0, 1/(p-1)]`.
    pub fn lower_bound(&self, s: f64, t: f64) -> f64 {
        let p = self.order.value();
        let c = (1.0 - t * (p - 1.0)).powi(2) / (4.0 * t * (p - 2.0).powi(2));
        c * (t * s.ln_1p()).exp_m1()
    }

    /// Solves `psi_p(s) = y`.
    ///
    /// The root is bracketed in the variable `x = ln(1+s)` by inverting the
    /// two sides of the bound sandwich, then refined by Newton steps that
    /// fall back to bisection whenever they leave the bracket.
    pub fn psi_p_inverse(&self, y: f64) -> Result<f64> {
        let y = finite(y)?;
        if y == 0.0 {
            return Ok(0.0);
        }
        let target = y.abs();
        let p = self.order.value();
        let a = self.exponent;
        let rel = self.cfg.quadrature_rel_tol;

        // psi_p <= upper_bound  =>  s >= upper_bound^{-1}(y)
        let mut lo = (p - 1.0) * (target / (p - 1.0)).ln_1p();
        // lower_bound with t = 1/(2(p-1))  =>  s <= lower_bound^{-1}(y)
        let t = 0.5 / (p - 1.0);
        let c = (p - 1.0) / (8.0 * (p - 2.0).powi(2));
        let mut hi = (target / c).ln_1p() / t;
        if !(hi.is_finite() && lo <= hi) {
            return Err(Error::Bracket(y));
        }
        let tol = self.cfg.root_abs_tol * (1.0 + target);
        let integrand = |x: f64| ((1.0 - a) * x - 2.0 * a * x.ln_1p()).exp();

        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let gap = log_variable_integral(x, a, rel)? - target;
            if gap.abs() <= 0.1 * tol {
                break;
            }
            if gap > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.max(1.0) {
                break;
            }
            let newton = x - gap / integrand(x);
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(sign(y) * x.exp_m1())
    }

    /// `(psi_p^{-1})'(y) = 1 / psi_p'(psi_p^{-1}(y))`.
    pub fn psi_p_inverse_prime(&self, y: f64) -> Result<f64> {
        let s = self.psi_p_inverse(y)?;
        Ok(1.0 / self.psi_p_prime_unchecked(s))
    }

    /// `(u, rho, rho')` with `u = psi_p^{-1}(y)` and `rho = (psi_p^{-1})'`.
    pub fn inverse_jet(&self, y: f64) -> Result<(f64, f64, f64)> {
        let u = self.psi_p_inverse(y)?;
        let rho = 1.0 / self.psi_p_prime_unchecked(u);
        let a = u.abs();
        let l = a.ln_1p();
        // psi''/psi' = -(3+L) / ((1+L)(1+|u|)) sign(u)
        // one-sided derivatives differ at 0; take their mean
        if u == 0.0 {
            return Ok((0.0, rho, 0.0));
        }
        let drho = sign(u) * self.exponent * rho * rho * (3.0 + l) / ((1.0 + l) * (1.0 + a));
        Ok((u, rho, drho))
    }
}
