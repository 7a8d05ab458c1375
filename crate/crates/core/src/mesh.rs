//! Conforming P1 triangle meshes with per-element geometry cached at build time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    UnitSquare,
    UnitDisk,
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_square" => Ok(Self::UnitSquare),
            "unit_disk" => Ok(Self::UnitDisk),
            other => Err(Error::Mesh(format!("unknown shape `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
    // gradients of the three barycentric basis functions, per triangle
    gradients: Vec<[Point; 3]>,
    dof_of_node: Vec<Option<usize>>,
    interior: Vec<usize>,
}

impl TriangleMesh {
    pub fn new(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Vec<bool>) -> Result<Self> {
        if boundary.len() != nodes.len() {
            return Err(Error::Mesh(format!(
                "{} boundary flags for {} nodes",
                boundary.len(),
                nodes.len()
            )));
        }
        if nodes.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Mesh("node coordinates must be finite".into()));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut gradients = Vec::with_capacity(triangles.len());
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= nodes.len()) {
                return Err(Error::Mesh(format!(
                    "triangle {t} references node {bad} (only {} nodes)",
                    nodes.len()
                )));
            }
            let [a, b, c] = tri.map(|i| nodes[i]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if !(det > 0.0) {
                return Err(Error::Mesh(format!(
                    "triangle {t} has non-positive signed area {}",
                    0.5 * det
                )));
            }
            areas.push(0.5 * det);
            // grad lambda_i = rot90(opposite edge) / det
            let g = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
            gradients.push([g(b, c), g(c, a), g(a, b)]);
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((i.min(j), i.max(j))).or_insert(0) += 1;
            }
        }
        for (&(i, j), &count) in &edges {
            match count {
                1 if !(boundary[i] && boundary[j]) => {
                    return Err(Error::Mesh(format!(
                        "edge ({i}, {j}) lies on the boundary but its endpoints are not flagged"
                    )))
                }
                1 | 2 => {}
                _ => {
                    return Err(Error::Mesh(format!(
                        "edge ({i}, {j}) is shared by {count} triangles"
                    )))
                }
            }
        }
        let mut dof_of_node = vec![None; nodes.len()];
        let mut interior = Vec::new();
        for (i, &b) in boundary.iter().enumerate() {
            if !b {
                dof_of_node[i] = Some(interior.len());
                interior.push(i);
            }
        }
        Ok(Self {
            nodes,
            triangles,
            boundary,
            areas,
            gradients,
            dof_of_node,
            interior,
        })
    }

    /// Structured meshes of the unit square `[0,1]^2` (alternating diagonals,
    /// right triangles) and of the unit disk (concentric rings, `6k` nodes on
    /// ring `k`).
    pub fn structured(shape: Shape, refinement: usize) -> Result<Self> {
        if refinement == 0 {
            return Err(Error::Mesh("refinement must be >= 1".into()));
        }
        match shape {
            Shape::UnitSquare => Ok(unit_square(refinement)),
            Shape::UnitDisk => Ok(unit_disk(refinement)),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Gradients of the three nodal basis functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> &[Point; 3] {
        &self.gradients[t]
    }

    /// Constant gradient of the P1 interpolant of `values` on triangle `t`.
    #[inline]
    pub fn gradient(&self, t: usize, values: &[f64]) -> Point {
        let tri = &self.triangles[t];
        let g = &self.gradients[t];
        let mut out = [0.0; 2];
        for k in 0..3 {
            let v = values[tri[k]];
            out[0] += v * g[k][0];
            out[1] += v * g[k][1];
        }
        out
    }

    /// Mean of the three vertex values of triangle `t`.
    #[inline]
    pub fn mean(&self, t: usize, values: &[f64]) -> f64 {
        let [a, b, c] = self.triangles[t];
        (values[a] + values[b] + values[c]) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Vertex-lumped mass: one third of the area of every adjacent triangle.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nodes.len()];
        for (tri, &a) in self.triangles.iter().zip(&self.areas) {
            for &i in tri {
                m[i] += a / 3.0;
            }
        }
        m
    }

    /// Longest edge length.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                let (p, q) = (self.nodes[tri[k]], self.nodes[tri[(k + 1) % 3]]);
                h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        h
    }

    /// Interior (unknown) nodes in ascending order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let tri = &self.triangles[t];
        let g = &self.gradients[t];
        let mut lam = [0.0; 3];
        for k in 0..3 {
            let v = self.nodes[tri[k]];
            // lambda_k is affine, equal to 1 at its own vertex
            lam[k] = 1.0 + g[k][0] * (p[0] - v[0]) + g[k][1] * (p[1] - v[1]);
        }
        lam
    }

    /// First triangle containing `p` (closed triangles, small tolerance).
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        (0..self.triangles.len()).find_map(|t| {
            let lam = self.barycentric(t, p);
            if lam.iter().all(|&l| l >= -TOL) {
                let clipped = lam.map(|l| l.max(0.0));
                let sum: f64 = clipped.iter().sum();
                Some((t, clipped.map(|l| l / sum)))
            } else {
                None
            }
        })
    }

    /// Serializes to the ASCII exchange format.
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes {} triangles {}\n", self.n_nodes(), self.n_triangles());
        for (p, &b) in self.nodes.iter().zip(&self.boundary) {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], u8::from(b));
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    /// Parses the ASCII exchange format: a header `nodes <n> triangles <m>`,
    /// `n` lines `x y boundary_flag`, then `m` lines `i j k` (0-based).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Mesh("empty mesh file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let (n, m) = match h.as_slice() {
            ["nodes", n, "triangles", m] => (parse_usize(n, 1)?, parse_usize(m, 1)?),
            _ => {
                return Err(Error::Mesh(format!(
                    "line 1: expected `nodes <n> triangles <m>`, got `{header}`"
                )))
            }
        };
        let mut nodes = Vec::with_capacity(n);
        let mut boundary = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::Mesh(format!("expected {n} node lines")))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Mesh(format!("line {}: expected `x y flag`", ln + 1)));
            }
            let x = parse_f64(f[0], ln + 1)?;
            let y = parse_f64(f[1], ln + 1)?;
            let b = match f[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Mesh(format!(
                        "line {}: boundary flag must be 0 or 1, got `{other}`",
                        ln + 1
                    )))
                }
            };
            nodes.push([x, y]);
            boundary.push(b);
        }
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::Mesh(format!("expected {m} triangle lines")))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Mesh(format!("line {}: expected `i j k`", ln + 1)));
            }
            triangles.push([
                parse_usize(f[0], ln + 1)?,
                parse_usize(f[1], ln + 1)?,
                parse_usize(f[2], ln + 1)?,
            ]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Mesh(format!("line {}: trailing content", ln + 1)));
        }
        Self::new(nodes, triangles, boundary)
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Mesh(format!("line {line}: invalid index `{s}`")))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Mesh(format!("line {line}: invalid number `{s}`")))
}

fn unit_square(n: usize) -> TriangleMesh {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::with_capacity(nodes.capacity());
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    TriangleMesh::new(nodes, triangles, boundary).expect("structured square mesh is valid")
}

fn unit_disk(n: usize) -> TriangleMesh {
    use std::f64::consts::TAU;
    let mut nodes = vec![[0.0, 0.0]];
    let mut boundary = vec![n == 0];
    let mut rings: Vec<Vec<usize>> = vec![vec![0]];
    for k in 1..=n {
        let r = k as f64 / n as f64;
        let count = 6 * k;
        let ring = (0..count)
            .map(|j| {
                let th = TAU * j as f64 / count as f64;
                nodes.push([r * th.cos(), r * th.sin()]);
                boundary.push(k == n);
                nodes.len() - 1
            })
            .collect();
        rings.push(ring);
    }
    let mut triangles = Vec::with_capacity(6 * n * n);
    for k in 1..=n {
        let (inner, outer) = (&rings[k - 1], &rings[k]);
        let (ni, no) = (inner.len(), outer.len());
        if ni == 1 {
            for j in 0..no {
                triangles.push([inner[0], outer[j], outer[(j + 1) % no]]);
            }
            continue;
        }
        let (mut i, mut j) = (0, 0);
        while i < ni || j < no {
            let next_inner = (i + 1) as f64 / ni as f64;
            let next_outer = (j + 1) as f64 / no as f64;
            if j < no && (i == ni || next_outer <= next_inner) {
                triangles.push([inner[i % ni], outer[j], outer[(j + 1) % no]]);
                j += 1;
            } else {
                triangles.push([inner[i % ni], outer[j % no], inner[(i + 1) % ni]]);
                i += 1;
            }
        }
    }
    for tri in &mut triangles {
        let [a, b, c] = tri.map(|i| nodes[i]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if det < 0.0 {
            tri.swap(1, 2);
        }
    }
    TriangleMesh::new(nodes, triangles, boundary).expect("structured disk mesh is valid")
}
