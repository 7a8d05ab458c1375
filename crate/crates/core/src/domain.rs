//! Diffusion tensors, measure-valued right-hand sides and nodal fields.

use std::ops::Deref;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{Point, TriangleMesh};

/// Symmetric tensor stored as `[xx, xy, yy]`.
pub type Tensor = [f64; 3];

fn eigen_bounds(t: &Tensor) -> (f64, f64) {
    let m = 0.5 * (t[0] + t[2]);
    let d = (0.5 * (t[0] - t[2])).hypot(t[1]);
    (m - d, m + d)
}

/// Piecewise-constant symmetric diffusion tensor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionField {
    tensors: Vec<Tensor>,
    lambda_lo: f64,
    lambda_hi: f64,
}

impl DiffusionField {
    /// Bounds are the extreme eigenvalues over all triangles.
    pub fn per_triangle(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Diffusion("no tensors given".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (t, tensor) in tensors.iter().enumerate() {
            if tensor.iter().any(|c| !c.is_finite()) {
                return Err(Error::Diffusion(format!("tensor {t} has non-finite entries")));
            }
            let (a, b) = eigen_bounds(tensor);
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if !(lo > 0.0) {
            return Err(Error::Diffusion(format!(
                "tensors must be positive definite (smallest eigenvalue {lo})"
            )));
        }
        Ok(Self {
            tensors,
            lambda_lo: lo,
            lambda_hi: hi,
        })
    }

    pub fn constant(mesh: &TriangleMesh, tensor: Tensor) -> Result<Self> {
        Self::per_triangle(vec![tensor; mesh.n_triangles()])
    }

    pub fn identity(mesh: &TriangleMesh) -> Self {
        Self::constant(mesh, [1.0, 0.0, 1.0]).expect("identity is positive definite")
    }

    /// Ellipticity bounds wider than the computed spectrum.
    pub fn with_bounds(mut self, lambda_lo: f64, lambda_hi: f64) -> Result<Self> {
        if !(lambda_lo > 0.0 && lambda_lo <= self.lambda_lo && lambda_hi >= self.lambda_hi) {
            return Err(Error::Diffusion(format!(
                "bounds [{lambda_lo}, {lambda_hi}] do not enclose spectrum [{}, {}]",
                self.lambda_lo, self.lambda_hi
            )));
        }
        self.lambda_lo = lambda_lo;
        self.lambda_hi = lambda_hi;
        Ok(self)
    }

    pub fn tensor(&self, t: usize) -> &Tensor {
        &self.tensors[t]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn lambda_lo(&self) -> f64 {
        self.lambda_lo
    }

    pub fn lambda_hi(&self) -> f64 {
        self.lambda_hi
    }

    #[inline]
    pub fn apply(&self, t: usize, g: Point) -> Point {
        let k = &self.tensors[t];
        [k[0] * g[0] + k[1] * g[1], k[1] * g[0] + k[2] * g[1]]
    }

    pub fn check_mesh(&self, mesh: &TriangleMesh) -> Result<()> {
        if self.tensors.len() != mesh.n_triangles() {
            return Err(Error::Dimension {
                expected: mesh.n_triangles(),
                got: self.tensors.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Dirac {
    pub point: Point,
    pub weight: f64,
}

/// Uniform density along a straight segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineSource {
    pub start: Point,
    pub end: Point,
    pub density: f64,
}

impl LineSource {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }
}

/// Finite Radon measure: point atoms, segment densities and a per-triangle
/// absolutely continuous density.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MeasureData {
    pub diracs: Vec<Dirac>,
    pub lines: Vec<LineSource>,
    /// Empty, or one density per mesh triangle.
    pub ac: Vec<f64>,
}

impl MeasureData {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn dirac(point: Point, weight: f64) -> Self {
        Self {
            diracs: vec![Dirac { point, weight }],
            ..Self::default()
        }
    }

    /// Absolutely continuous part from a density sampled at triangle centroids.
    pub fn ac_from_fn(mesh: &TriangleMesh, f: impl Fn(Point) -> f64) -> Self {
        let ac = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let c = tri
                    .iter()
                    .map(|&i| mesh.nodes()[i])
                    .fold([0.0, 0.0], |a, p| [a[0] + p[0] / 3.0, a[1] + p[1] / 3.0]);
                f(c)
            })
            .collect();
        Self {
            ac,
            ..Self::default()
        }
    }

    pub fn has_singular_part(&self) -> bool {
        !self.diracs.is_empty() || !self.lines.is_empty()
    }

    /// Pointwise sum of measures. Absolutely continuous parts must have equal
    /// length unless one is empty.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let ac = match (self.ac.len(), other.ac.len()) {
            (0, _) => other.ac.clone(),
            (_, 0) => self.ac.clone(),
            (a, b) if a == b => self.ac.iter().zip(&other.ac).map(|(x, y)| x + y).collect(),
            (a, b) => return Err(Error::Dimension { expected: a, got: b }),
        };
        Ok(Self {
            diracs: self.diracs.iter().chain(&other.diracs).copied().collect(),
            lines: self.lines.iter().chain(&other.lines).copied().collect(),
            ac,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            diracs: self
                .diracs
                .iter()
                .map(|d| Dirac {
                    weight: c * d.weight,
                    ..*d
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineSource {
                    density: c * l.density,
                    ..*l
                })
                .collect(),
            ac: self.ac.iter().map(|x| c * x).collect(),
        }
    }

    /// Total-variation norm.
    pub fn norm(&self, mesh: &TriangleMesh) -> f64 {
        let atoms: f64 = self.diracs.iter().map(|d| d.weight.abs()).sum();
        let lines: f64 = self.lines.iter().map(|l| l.density.abs() * l.length()).sum();
        let ac: f64 = self
            .ac
            .iter()
            .zip(mesh.areas())
            .map(|(c, a)| c.abs() * a)
            .sum();
        atoms + lines + ac
    }

    /// Absolutely continuous part alone.
    pub fn ac_part(&self) -> Self {
        Self {
            ac: self.ac.clone(),
            ..Self::default()
        }
    }

    /// Checks finiteness, lengths and support against the mesh.
    pub fn validate(&self, mesh: &TriangleMesh) -> Result<()> {
        if !self.ac.is_empty() && self.ac.len() != mesh.n_triangles() {
            return Err(Error::Measure(format!(
                "absolutely continuous part has {} entries for {} triangles",
                self.ac.len(),
                mesh.n_triangles()
            )));
        }
        let finite = self
            .diracs
            .iter()
            .all(|d| d.weight.is_finite() && d.point.iter().all(|c| c.is_finite()))
            && self.lines.iter().all(|l| {
                l.density.is_finite() && l.start.iter().chain(&l.end).all(|c| c.is_finite())
            })
            && self.ac.iter().all(|c| c.is_finite());
        if !finite {
            return Err(Error::Measure("non-finite entries".into()));
        }
        for d in &self.diracs {
            if mesh.locate(d.point).is_none() {
                return Err(Error::PointOutside {
                    x: d.point[0],
                    y: d.point[1],
                });
            }
        }
        for l in &self.lines {
            line_pieces(mesh, l)?;
        }
        Ok(())
    }

    /// Load vector `L_j = <f, phi_j>` over all nodes, boundary included.
    pub fn assemble_load(&self, mesh: &TriangleMesh) -> Result<Vec<f64>> {
        self.validate(mesh)?;
        let mut load = vec![0.0; mesh.n_nodes()];
        for d in &self.diracs {
            let (t, lam) = mesh.locate(d.point).ok_or(Error::PointOutside {
                x: d.point[0],
                y: d.point[1],
            })?;
            for (k, &i) in mesh.triangles()[t].iter().enumerate() {
                load[i] += d.weight * lam[k];
            }
        }
        for l in &self.lines {
            for (t, ta, tb) in line_pieces(mesh, l)? {
                let len = (tb - ta) * l.length();
                let la = mesh.barycentric(t, lerp(l, ta));
                let lb = mesh.barycentric(t, lerp(l, tb));
                for (k, &i) in mesh.triangles()[t].iter().enumerate() {
                    load[i] += l.density * len * 0.5 * (la[k] + lb[k]);
                }
            }
        }
        for (t, &c) in self.ac.iter().enumerate() {
            let share = c * mesh.area(t) / 3.0;
            for &i in &mesh.triangles()[t] {
                load[i] += share;
            }
        }
        Ok(load)
    }
}

fn lerp(l: &LineSource, t: f64) -> Point {
    [
        l.start[0] + t * (l.end[0] - l.start[0]),
        l.start[1] + t * (l.end[1] - l.start[1]),
    ]
}

/// Parameter interval of the segment inside triangle `t`, if non-degenerate.
fn clip(mesh: &TriangleMesh, t: usize, l: &LineSource) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let la = mesh.barycentric(t, l.start);
    let lb = mesh.barycentric(t, l.end);
    for k in 0..3 {
        // lambda_k(t) = la + t (lb - la) >= 0
        let (a, d) = (la[k], lb[k] - la[k]);
        if d.abs() < 1e-300 {
            if a < -1e-12 {
                return None;
            }
        } else if d > 0.0 {
            lo = lo.max(-a / d);
        } else {
            hi = hi.min(-a / d);
        }
    }
    (hi - lo > 1e-12).then_some((lo, hi))
}

/// Splits a segment at triangle crossings: `(triangle, t_start, t_end)`.
fn line_pieces(mesh: &TriangleMesh, l: &LineSource) -> Result<Vec<(usize, f64, f64)>> {
    if l.length() == 0.0 {
        return Err(Error::Measure("line source of zero length".into()));
    }
    let hits: Vec<(usize, f64, f64)> = (0..mesh.n_triangles())
        .filter_map(|t| clip(mesh, t, l).map(|(a, b)| (t, a, b)))
        .collect();
    let mut cuts: Vec<f64> = vec![0.0, 1.0];
    cuts.extend(hits.iter().flat_map(|&(_, a, b)| [a, b]));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|b, a| (*b - *a).abs() < 1e-12);
    let mut pieces = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let owner = hits
            .iter()
            .find(|&&(_, a, b)| a <= mid && mid <= b)
            .map(|h| h.0);
        match owner {
            Some(t) => pieces.push((t, w[0], w[1])),
            None => {
                let p = lerp(l, mid);
                return Err(Error::PointOutside { x: p[0], y: p[1] });
            }
        }
    }
    Ok(pieces)
}

/// P1 function with homogeneous Dirichlet values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self(vec![0.0; mesh.n_nodes()])
    }

    pub fn new(mesh: &TriangleMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Dimension {
                expected: mesh.n_nodes(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(*bad));
        }
        if let Some(i) = (0..values.len()).find(|&i| mesh.is_boundary(i) && values[i] != 0.0) {
            return Err(Error::Mesh(format!(
                "nodal field is {} at boundary node {i}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    /// Interpolates `f` at interior nodes; boundary nodes are set to zero.
    pub fn interpolate(mesh: &TriangleMesh, f: impl Fn(Point) -> f64) -> Self {
        Self(
            mesh.nodes()
                .iter()
                .enumerate()
                .map(|(i, &p)| if mesh.is_boundary(i) { 0.0 } else { f(p) })
                .collect(),
        )
    }

    /// Nodewise map. `f(0)` must be `0` for the result to stay admissible;
    /// boundary entries are kept at zero regardless.
    pub fn map(&self, mesh: &TriangleMesh, f: impl Fn(f64) -> f64) -> Self {
        Self(
            self.0
                .iter()
                .enumerate()
                .map(|(i, &v)| if mesh.is_boundary(i) { 0.0 } else { f(v) })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Lumped-quadrature `L^q` norm.
    pub fn lq_norm(&self, mesh: &TriangleMesh, q: f64) -> f64 {
        lumped_lq(mesh, &self.0, q)
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `(sum_i m_i |v_i|^q)^(1/q)` with vertex-lumped masses.
pub fn lumped_lq(mesh: &TriangleMesh, values: &[f64], q: f64) -> f64 {
    let mut s = 0.0;
    for (tri, &a) in mesh.triangles().iter().zip(mesh.areas()) {
        for &i in tri {
            s += a / 3.0 * values[i].abs().powf(q);
        }
    }
    s.powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Shape;

    fn square(n: usize) -> TriangleMesh {
        TriangleMesh::structured(Shape::UnitSquare, n).unwrap()
    }

    #[test]
    fn measure_norm_examples() {
        let m = square(2);
        let f = MeasureData {
            diracs: vec![
                Dirac {
                    point: [0.5, 0.5],
                    weight: 2.0,
                },
                Dirac {
                    point: [0.25, 0.5],
                    weight: -3.0,
                },
            ],
            ..Default::default()
        };
        assert_eq!(f.norm(&m), 5.0);
        let g = MeasureData {
            lines: vec![LineSource {
                start: [0.1, 0.2],
                end: [0.4, 0.6],
                density: 4.0,
            }],
            ..Default::default()
        };
        assert!((g.norm(&m) - 2.0).abs() < 1e-15);
        assert_eq!(MeasureData::empty().norm(&m), 0.0);
    }

    #[test]
    fn dirac_loads() {
        let m = square(4);
        let node = 7;
        let f = MeasureData::dirac(m.nodes()[node], 1.0);
        let load = f.assemble_load(&m).unwrap();
        for (i, &l) in load.iter().enumerate() {
            assert!((l - if i == node { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
        let t = 5;
        let tri = m.triangles()[t];
        let c = tri
            .iter()
            .fold([0.0, 0.0], |a, &i| [a[0] + m.nodes()[i][0] / 3.0, a[1] + m.nodes()[i][1] / 3.0]);
        let load = MeasureData::dirac(c, 1.0).assemble_load(&m).unwrap();
        for &i in &tri {
            assert!((load[i] - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!((load.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(matches!(
            MeasureData::dirac([1.2, 0.3], 1.0).assemble_load(&m),
            Err(Error::PointOutside { .. })
        ));
    }

    #[test]
    fn ac_single_triangle() {
        let m = square(3);
        let mut ac = vec![0.0; m.n_triangles()];
        ac[4] = 2.5;
        let f = MeasureData {
            ac,
            ..Default::default()
        };
        let load = f.assemble_load(&m).unwrap();
        for (i, &l) in load.iter().enumerate() {
            let expected = if m.triangles()[4].contains(&i) {
                2.5 * m.area(4) / 3.0
            } else {
                0.0
            };
            assert!((l - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn line_integral_matches_direct_quadrature() {
        let m = square(5);
        let l = LineSource {
            start: [0.07, 0.13],
            end: [0.91, 0.62],
            density: 1.7,
        };
        let f = MeasureData {
            lines: vec![l],
            ..Default::default()
        };
        let load = f.assemble_load(&m).unwrap();
        // partition of unity: the total equals density * length
        assert!((load.iter().sum::<f64>() - 1.7 * l.length()).abs() < 1e-13);
        // first moment: sum_j L_j x_j = density * int x ds, since sum_j x_j phi_j = x
        let mx: f64 = load.iter().zip(m.nodes()).map(|(l, p)| l * p[0]).sum();
        let exact = 1.7 * l.length() * 0.5 * (0.07 + 0.91);
        assert!((mx - exact).abs() < 1e-13);
        // a fine midpoint rule as an independent oracle for a single basis function
        let j = m.interior_nodes()[7];
        let samples = 200_000;
        let mut acc = 0.0;
        for s in 0..samples {
            let t = (s as f64 + 0.5) / samples as f64;
            let p = lerp(&l, t);
            let (tri, lam) = m.locate(p).unwrap();
            if let Some(k) = m.triangles()[tri].iter().position(|&i| i == j) {
                acc += lam[k];
            }
        }
        acc *= 1.7 * l.length() / samples as f64;
        assert!((acc - load[j]).abs() < 1e-6);
    }

    #[test]
    fn line_leaving_domain_is_rejected() {
        let m = square(3);
        let f = MeasureData {
            lines: vec![LineSource {
                start: [0.5, 0.5],
                end: [1.5, 0.5],
                density: 1.0,
            }],
            ..Default::default()
        };
        assert!(f.assemble_load(&m).is_err());
    }

    #[test]
    fn load_is_linear() {
        let m = square(4);
        let f1 = MeasureData::dirac([0.3, 0.7], 1.5);
        let f2 = MeasureData::ac_from_fn(&m, |p| p[0] - p[1]);
        let sum = f1.add(&f2).unwrap().assemble_load(&m).unwrap();
        let a = f1.assemble_load(&m).unwrap();
        let b = f2.assemble_load(&m).unwrap();
        for i in 0..m.n_nodes() {
            assert!((sum[i] - a[i] - b[i]).abs() < 1e-15);
        }
        let c = 0.37;
        let total: f64 = sum.iter().map(|l| l * c).sum();
        assert!(total.abs() <= c * f1.add(&f2).unwrap().norm(&m) + 1e-15);
    }

    #[test]
    fn diffusion_bounds() {
        let m = square(2);
        let d = DiffusionField::constant(&m, [2.0, 1.0, 2.0]).unwrap();
        assert!((d.lambda_lo() - 1.0).abs() < 1e-15 && (d.lambda_hi() - 3.0).abs() < 1e-15);
        assert!(DiffusionField::constant(&m, [1.0, 2.0, 1.0]).is_err());
        assert!(d.clone().with_bounds(0.5, 4.0).is_ok());
        assert!(d.with_bounds(1.5, 4.0).is_err());
    }

    #[test]
    fn nodal_field_boundary() {
        let m = square(3);
        assert!(NodalField::new(&m, vec![1.0; m.n_nodes()]).is_err());
        let f = NodalField::interpolate(&m, |p| p[0] + 1.0);
        assert!(NodalField::new(&m, f.values().to_vec()).is_ok());
        let u0 = NodalField::zeros(&m);
        let mass = m.lumped_mass();
        let interior: f64 = m.interior_nodes().iter().map(|&i| mass[i]).sum();
        assert!((u0.map(&m, |_| 1.0).lq_norm(&m, 2.0) - interior.sqrt()).abs() < 1e-14);
    }
}
