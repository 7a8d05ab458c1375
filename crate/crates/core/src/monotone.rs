//! Normalized monotone nonlinearities `(beta, zeta)` with `beta + zeta = Id`.
//!
//! Everything is piecewise linear, so compositions, inverses and the
//! `eps`-resolvent `(eps Id + zeta)^{-1}` reduce to exact segment arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous, non-decreasing, piecewise-linear function vanishing at 0.
///
/// `slopes[0]` applies on `(-inf, breakpoints[0])`, `slopes[i]` on
/// `[breakpoints[i-1], breakpoints[i])` and the last slope on
/// `[breakpoints[n-1], +inf)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiecewiseLinearMonotone {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    #[serde(skip)]
    knot_values: Vec<f64>,
    #[serde(skip)]
    zero_interval: usize,
}

impl PiecewiseLinearMonotone {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::Monotone(format!(
                "{} breakpoints need {} slopes, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                slopes.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Monotone("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Monotone(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if slopes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Monotone(
                "slopes must be finite and non-negative".into(),
            ));
        }
        let zero_interval = breakpoints.partition_point(|&b| b <= 0.0);
        let n = breakpoints.len();
        let mut knot_values = vec![0.0; n];
        let z = zero_interval;
        if z < n {
            knot_values[z] = slopes[z] * breakpoints[z];
            for i in z + 1..n {
                knot_values[i] =
                    knot_values[i - 1] + slopes[i] * (breakpoints[i] - breakpoints[i - 1]);
            }
        }
        if z > 0 {
            knot_values[z - 1] = slopes[z] * breakpoints[z - 1];
            for i in (0..z - 1).rev() {
                knot_values[i] =
                    knot_values[i + 1] - slopes[i + 1] * (breakpoints[i + 1] - breakpoints[i]);
            }
        }
        Ok(Self {
            breakpoints,
            slopes,
            knot_values,
            zero_interval,
        })
    }

    pub fn linear(slope: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![slope])
    }

    pub fn identity() -> Self {
        Self::linear(1.0).expect("identity is valid")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn max_slope(&self) -> f64 {
        self.slopes.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the interval containing `x` (right-continuous convention).
    #[inline]
    fn interval(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let j = self.interval(x);
        let z = self.zero_interval;
        if j == z {
            self.slopes[z] * x
        } else if j > z {
            self.knot_values[j - 1] + self.slopes[j] * (x - self.breakpoints[j - 1])
        } else {
            self.knot_values[j] - self.slopes[j] * (self.breakpoints[j] - x)
        }
    }

    /// Right derivative at `x`.
    pub fn slope_at(&self, x: f64) -> f64 {
        self.slopes[self.interval(x)]
    }

    /// Pointwise sum with another piecewise-linear function.
    pub fn add(&self, other: &Self) -> Self {
        let mut knots: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let slopes = interval_samples(&knots)
            .map(|x| self.slope_at(x) + other.slope_at(x))
            .collect();
        Self::new(knots, slopes).expect("sum of monotone functions is monotone")
    }

    /// `self \circ other^{-1}` for strictly increasing `other` with image `R`.
    fn compose_inverse(&self, other: &Self) -> Result<Self> {
        let mut knots: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut slopes = Vec::with_capacity(knots.len() + 1);
        for (index, x) in interval_samples(&knots).enumerate() {
            let den = other.slope_at(x);
            if !(den > 0.0) {
                return Err(Error::DegenerateSum { index });
            }
            slopes.push(self.slope_at(x) / den);
        }
        let image: Vec<f64> = knots.iter().map(|&k| other.eval(k)).collect();
        Self::new(image, slopes)
    }
}

/// One sample point inside each interval delimited by `knots` (end rays included).
fn interval_samples(knots: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let n = knots.len();
    (0..=n).map(move |i| match (i, n) {
        (_, 0) => 0.0,
        (0, _) => knots[0] - 1.0,
        (i, n) if i == n => knots[n - 1] + 1.0,
        (i, _) => 0.5 * (knots[i - 1] + knots[i]),
    })
}

/// Preset names accepted by configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Linear,
    Stefan,
    Richards,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "stefan" => Ok(Self::Stefan),
            "richards" => Ok(Self::Richards),
            other => Err(Error::Monotone(format!("unknown preset `{other}`"))),
        }
    }
}

/// Normalized pair with `beta = Id - zeta`, both 1-Lipschitz and
/// non-decreasing, and `|zeta(s)| >= z1 |s| - z0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonlinearityPair {
    zeta: PiecewiseLinearMonotone,
    beta: PiecewiseLinearMonotone,
    z0: f64,
    z1: f64,
}

impl NonlinearityPair {
    /// Builds the pair from an already normalized `zeta`.
    pub fn from_zeta(zeta: PiecewiseLinearMonotone) -> Result<Self> {
        if zeta.slopes.iter().any(|&s| s > 1.0) {
            return Err(Error::Monotone("zeta must be 1-Lipschitz".into()));
        }
        let beta_slopes = zeta.slopes.iter().map(|s| 1.0 - s).collect();
        let beta = PiecewiseLinearMonotone::new(zeta.breakpoints.clone(), beta_slopes)?;
        let first = zeta.slopes[0];
        let last = *zeta.slopes.last().expect("at least one slope");
        let z1 = first.min(last);
        if !(z1 > 0.0) {
            return Err(Error::Monotone(
                "zeta must grow at least linearly: both end slopes must be positive".into(),
            ));
        }
        // z1|s| - |zeta(s)| is piecewise linear and non-increasing on the end
        // rays, so its supremum sits at a knot (or at 0).
        let z0 = zeta
            .breakpoints
            .iter()
            .map(|&b| z1 * b.abs() - zeta.eval(b).abs())
            .fold(0.0, f64::max);
        Ok(Self { zeta, beta, z0, z1 })
    }

    /// Normalizes raw nonlinearities: returns `beta_hat \circ (beta_hat + zeta_hat)^{-1}`
    /// and `zeta_hat \circ (beta_hat + zeta_hat)^{-1}`.
    pub fn normalize(
        beta_hat: &PiecewiseLinearMonotone,
        zeta_hat: &PiecewiseLinearMonotone,
    ) -> Result<Self> {
        let sum = beta_hat.add(zeta_hat);
        let zeta = zeta_hat.compose_inverse(&sum)?;
        Self::from_zeta(zeta)
    }

    /// `beta = 0`, `zeta = Id`: the linear problem.
    pub fn linear() -> Self {
        Self::normalize(
            &PiecewiseLinearMonotone::linear(0.0).expect("zero"),
            &PiecewiseLinearMonotone::identity(),
        )
        .expect("linear preset")
    }

    /// Enthalpy formulation: `beta_hat = Id`, temperature `zeta_hat` flat on
    /// `[0, latent_heat]`.
    pub fn stefan(latent_heat: f64) -> Result<Self> {
        if !(latent_heat > 0.0 && latent_heat.is_finite()) {
            return Err(Error::Monotone(format!(
                "latent heat must be positive, got {latent_heat}"
            )));
        }
        let zeta_hat =
            PiecewiseLinearMonotone::new(vec![0.0, latent_heat], vec![1.0, 0.0, 1.0])?;
        Self::normalize(&PiecewiseLinearMonotone::identity(), &zeta_hat)
    }

    /// Saturation-type preset: `zeta_hat = Id`, and the water content
    /// `beta_hat(w) = max(w / 2, -1)` for `w < 0`, `0` for `w >= 0`.
    pub fn richards() -> Self {
        let beta_hat =
            PiecewiseLinearMonotone::new(vec![-2.0, 0.0], vec![0.0, 0.5, 0.0]).expect("valid");
        Self::normalize(&beta_hat, &PiecewiseLinearMonotone::identity()).expect("richards preset")
    }

    pub fn preset(preset: Preset, latent_heat: f64) -> Result<Self> {
        match preset {
            Preset::Linear => Ok(Self::linear()),
            Preset::Stefan => Self::stefan(latent_heat),
            Preset::Richards => Ok(Self::richards()),
        }
    }

    pub fn zeta(&self) -> &PiecewiseLinearMonotone {
        &self.zeta
    }

    pub fn beta(&self) -> &PiecewiseLinearMonotone {
        &self.beta
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn z1(&self) -> f64 {
        self.z1
    }

    /// True when `beta` vanishes identically, i.e. `mu_eps = 0`.
    pub fn is_linear(&self) -> bool {
        self.beta.slopes.iter().all(|&s| s == 0.0)
    }

    /// Largest admissible regularization for the quasilinear problem.
    pub fn max_eps(&self) -> f64 {
        if self.is_linear() {
            f64::INFINITY
        } else {
            0.5 * self.z1
        }
    }

    /// `v = (eps Id + zeta)^{-1}(s)`, exact on each segment.
    pub fn resolvent(&self, eps: f64, s: f64) -> f64 {
        let (v, _) = self.resolvent_with_slope(eps, s);
        v
    }

    /// Resolvent together with `zeta'(v)` on the segment used.
    pub fn resolvent_with_slope(&self, eps: f64, s: f64) -> (f64, f64) {
        let z = &self.zeta;
        let bp = &z.breakpoints;
        let g = |i: usize| eps * bp[i] + z.knot_values[i];
        // first knot index whose image by eps Id + zeta exceeds s
        let (mut lo, mut hi) = (0usize, bp.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if g(mid) <= s {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let j = lo;
        let zs = z.slopes[j];
        let slope = eps + zs;
        let zi = z.zero_interval;
        let v = if j == zi {
            s / slope
        } else if j > zi {
            bp[j - 1] + (s - g(j - 1)) / slope
        } else {
            bp[j] - (g(j) - s) / slope
        };
        (v, zs)
    }

    /// `mu_eps(s) = beta((eps Id + zeta)^{-1}(s))`.
    pub fn mu_eps(&self, eps: f64, s: f64) -> f64 {
        self.beta.eval(self.resolvent(eps, s))
    }

    /// `mu_eps` and its right derivative `beta'(v) / (eps + zeta'(v))`.
    pub fn mu_eps_with_derivative(&self, eps: f64, s: f64) -> (f64, f64) {
        let (v, zs) = self.resolvent_with_slope(eps, s);
        (self.beta.eval(v), (1.0 - zs) / (eps + zs))
    }

    /// Euclidean distance from `(u, b)` to the graph `{(zeta(s), beta(s))}`.
    pub fn graph_distance(&self, u: f64, b: f64) -> f64 {
        let bp = &self.zeta.breakpoints;
        let point = |s: f64| (self.zeta.eval(s), self.beta.eval(s));
        let first = self.zeta.slopes[0];
        let last = *self.zeta.slopes.last().expect("slope");
        if bp.is_empty() {
            return distance_to_ray((0.0, 0.0), (first, 1.0 - first), (u, b))
                .min(distance_to_ray((0.0, 0.0), (-first, first - 1.0), (u, b)));
        }
        let mut best = distance_to_ray(point(bp[0]), (-first, first - 1.0), (u, b));
        best = best.min(distance_to_ray(
            point(bp[bp.len() - 1]),
            (last, 1.0 - last),
            (u, b),
        ));
        for w in bp.windows(2) {
            best = best.min(distance_to_segment(point(w[0]), point(w[1]), (u, b)));
        }
        best
    }

    /// Tests `b in T(u)` up to `tol`.
    pub fn graph_contains(&self, u: f64, b: f64, tol: f64) -> bool {
        self.graph_distance(u, b) <= tol
    }
}

fn distance_to_ray(origin: (f64, f64), dir: (f64, f64), q: (f64, f64)) -> f64 {
    let (dx, dy) = (q.0 - origin.0, q.1 - origin.1);
    let len2 = dir.0 * dir.0 + dir.1 * dir.1;
    let t = ((dx * dir.0 + dy * dir.1) / len2).max(0.0);
    (dx - t * dir.0).hypot(dy - t * dir.1)
}

fn distance_to_segment(a: (f64, f64), b: (f64, f64), q: (f64, f64)) -> f64 {
    let dir = (b.0 - a.0, b.1 - a.1);
    let (dx, dy) = (q.0 - a.0, q.1 - a.1);
    let len2 = dir.0 * dir.0 + dir.1 * dir.1;
    let t = if len2 > 0.0 {
        ((dx * dir.0 + dy * dir.1) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (dx - t * dir.0).hypot(dy - t * dir.1)
}
