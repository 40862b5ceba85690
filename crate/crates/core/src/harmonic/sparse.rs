//! Compressed sparse rows and Krylov solvers.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

/// Row-by-row builder.
#[derive(Debug)]
pub struct CsrBuilder {
    m: Csr,
}

impl CsrBuilder {
    pub fn new(n_cols: usize) -> Self {
        CsrBuilder { m: Csr { n_rows: 0, n_cols, indptr: vec![0], indices: vec![], values: vec![] } }
    }

    pub fn push(&mut self, col: usize, v: f64) {
        debug_assert!(col < self.m.n_cols);
        self.m.indices.push(col as u32);
        self.m.values.push(v);
    }

    pub fn end_row(&mut self) {
        self.m.indptr.push(self.m.indices.len());
        self.m.n_rows += 1;
    }

    pub fn finish(self) -> Csr {
        self.m
    }
}

impl Csr {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().zip(&self.values[r]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n_rows) {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k] as usize];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for k in 0..self.n_cols {
            counts[k + 1] += counts[k];
        }
        let mut next = counts.clone();
        let mut indices = vec![0u32; self.indices.len()];
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let c = self.indices[k] as usize;
                indices[next[c]] = i as u32;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        Csr { n_rows: self.n_cols, n_cols: self.n_rows, indptr: counts, indices, values }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).filter(|&(c, _)| c == i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                d[(i, c)] += v;
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Relative residual target `|b - Ax| / |b|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-12, max_iter: 20_000 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn cg(a: &Csr, b: &[f64], x: &mut [f64], opts: SolveOptions) -> Result<SolveStats> {
    let n = b.len();
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bn = norm(b);
    if bn == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let mut r = a.mul(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..opts.max_iter {
        let rn = norm(&r) / bn;
        if rn <= opts.tol {
            return Ok(SolveStats { iterations: it, residual: rn });
        }
        a.mul_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = norm(&r) / bn;
    if residual <= opts.tol {
        Ok(SolveStats { iterations: opts.max_iter, residual })
    } else {
        Err(Error::SolverDiverged { residual, iterations: opts.max_iter })
    }
}

/// Jacobi-preconditioned BiCGSTAB for general nonsingular `a`.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], opts: SolveOptions) -> Result<SolveStats> {
    let n = b.len();
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bn = norm(b);
    if bn == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let mut r = a.mul(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut restarts = 0;
    for it in 0..opts.max_iter {
        let rn = norm(&r) / bn;
        if rn <= opts.tol {
            return Ok(SolveStats { iterations: it, residual: rn });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // breakdown: restart from the current iterate
            restarts += 1;
            if restarts > 20 {
                break;
            }
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.fill(0.0);
            p.fill(0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        a.mul_into(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn <= opts.tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(SolveStats { iterations: it + 1, residual: norm(&s) / bn });
        }
        for i in 0..n {
            zz[i] = s[i] * dinv[i];
        }
        a.mul_into(&zz, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    // true residual
    let ax = a.mul(x);
    let residual = norm(&b.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>()) / bn;
    if residual <= opts.tol {
        Ok(SolveStats { iterations: opts.max_iter, residual })
    } else {
        Err(Error::SolverDiverged { residual, iterations: opts.max_iter })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn laplacian_1d(n: usize, shift: f64) -> Csr {
        let mut b = CsrBuilder::new(n);
        for i in 0..n {
            if i > 0 {
                b.push(i - 1, -1.0);
            }
            b.push(i, 2.0 + shift);
            if i + 1 < n {
                b.push(i + 1, if shift > 0.0 { -0.5 } else { -1.0 });
            }
            b.end_row();
        }
        b.finish()
    }

    #[test]
    fn cg_matches_dense() {
        let a = laplacian_1d(50, 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; 50];
        cg(&a, &b, &mut x, SolveOptions::default()).unwrap();
        let exact = a.to_dense().lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..50 {
            assert!((x[i] - exact[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn bicgstab_nonsymmetric() {
        let a = laplacian_1d(60, 0.3);
        let b: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; 60];
        bicgstab(&a, &b, &mut x, SolveOptions::default()).unwrap();
        let exact = a.to_dense().lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..60 {
            assert!((x[i] - exact[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn transpose_twice() {
        let a = laplacian_1d(7, 0.3);
        let t = a.transpose().transpose();
        assert_eq!(a.to_dense(), t.to_dense());
        assert_eq!(a.transpose().to_dense(), a.to_dense().transpose());
    }

    #[test]
    fn diverges_with_tiny_budget() {
        let a = laplacian_1d(200, 0.0);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let r = cg(&a, &b, &mut x, SolveOptions { tol: 1e-14, max_iter: 3 });
        assert!(matches!(r, Err(Error::SolverDiverged { .. })));
    }
}
