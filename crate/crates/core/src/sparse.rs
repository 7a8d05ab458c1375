//! Compressed sparse row matrices on interior degrees of freedom and
//! Jacobi-preconditioned Krylov solvers.

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    #[inline]
    pub fn add_at(&mut self, slot: usize, v: f64) {
        self.vals[slot] += v;
    }

    pub fn add_diagonal(&mut self, i: usize, v: f64) {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        let k = row.binary_search(&i).expect("diagonal is in the pattern");
        self.vals[self.row_ptr[i] + k] += v;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.cols[k]] = self.vals[k];
            }
        }
        d
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m = m.max((self.vals[k] - self.get(self.cols[k], i)).abs());
            }
        }
        m
    }
}

/// Sparsity pattern of P1 stiffness matrices on interior nodes, with the
/// storage slot of every local (row, column) pair of every triangle.
#[derive(Clone, Debug)]
pub struct Pattern {
    template: CsrMatrix,
    slots: Vec<[[Option<usize>; 3]; 3]>,
}

impl Pattern {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let n = mesh.interior_nodes().len();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in mesh.triangles() {
            let dofs = tri.map(|i| mesh.dof(i));
            for a in dofs.iter().flatten() {
                for b in dofs.iter().flatten() {
                    rows[*a].push(*b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let template = CsrMatrix {
            n,
            vals: vec![0.0; cols.len()],
            row_ptr,
            cols,
        };
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let dofs = tri.map(|i| mesh.dof(i));
                let mut s = [[None; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                            let row = &template.cols[template.row_ptr[i]..template.row_ptr[i + 1]];
                            let k = row.binary_search(&j).expect("pattern holds element pairs");
                            s[a][b] = Some(template.row_ptr[i] + k);
                        }
                    }
                }
                s
            })
            .collect();
        Self { template, slots }
    }

    pub fn zeros(&self) -> CsrMatrix {
        self.template.clone()
    }

    /// Adds a local 3x3 element matrix of triangle `t`.
    #[inline]
    pub fn scatter(&self, m: &mut CsrMatrix, t: usize, local: &[[f64; 3]; 3]) {
        for a in 0..3 {
            for b in 0..3 {
                if let Some(k) = self.slots[t][a][b] {
                    m.vals[k] += local[a][b];
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearStats {
    pub iterations: usize,
    pub residual: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn jacobi(a: &CsrMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .map(|d| {
            if d != 0.0 && d.is_finite() {
                Ok(1.0 / d)
            } else {
                Err(Error::LinearSolver(format!("unusable diagonal entry {d}")))
            }
        })
        .collect()
}

/// Preconditioned conjugate gradients for symmetric positive definite `a`.
/// Stops when `max_i |b - a x|_i <= tol`; `x` holds the initial guess.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<LinearStats> {
    let n = a.dim();
    let inv_d = jacobi(a)?;
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..=max_iter {
        let res = max_abs(&r);
        if res <= tol {
            return Ok(LinearStats {
                iterations: it,
                residual: res,
            });
        }
        if it == max_iter {
            break;
        }
        a.mul_vec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::LinearSolver(format!(
                "matrix is not positive definite (p.Ap = {pq:e})"
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] * inv_d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolver(format!(
        "conjugate gradients stalled after {max_iter} iterations (residual {:e})",
        max_abs(&r)
    )))
}

/// Jacobi-preconditioned BiCGSTAB for general square `a`.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<LinearStats> {
    let n = a.dim();
    let inv_d = jacobi(a)?;
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..=max_iter {
        let res = max_abs(&r);
        if res <= tol {
            return Ok(LinearStats {
                iterations: it,
                residual: res,
            });
        }
        if it == max_iter {
            break;
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_d[i];
        }
        a.mul_vec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if max_abs(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(LinearStats {
                iterations: it + 1,
                residual: max_abs(&s),
            });
        }
        for i in 0..n {
            z[i] = s[i] * inv_d[i];
        }
        a.mul_vec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::LinearSolver(format!(
        "BiCGSTAB failed after at most {max_iter} iterations (residual {:e})",
        max_abs(&r)
    )))
}
