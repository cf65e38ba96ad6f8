//! Dense and sparse symmetric linear algebra on top of faer.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    let mut w = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NotConverged(format!("symmetric eigenvalues: {e:?}")))?;
    w.sort_by(f64::total_cmp);
    Ok(w)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NotConverged(format!("symmetric eigendecomposition: {e:?}")))?;
    let s = e.S().column_vector();
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let vals = idx.iter().map(|&i| s[i]).collect();
    let u = e.U();
    let vecs = Mat::from_fn(n, n, |r, c| u[(r, idx[c])]);
    Ok((vals, vecs))
}

/// Cholesky certificate: true iff a + τI admits an LLᵀ factorization.
pub fn psd_with_shift(a: &Mat<f64>, tau: f64) -> bool {
    let n = a.nrows();
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += tau;
    }
    b.llt(Side::Lower).is_ok()
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &Mat<f64>) -> Result<Mat<f64>> {
    use faer::linalg::solvers::DenseSolveCore;
    let llt = a
        .llt(Side::Lower)
        .map_err(|_| Error::NotPositive(f64::NAN))?;
    let mut inv = llt.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn max_abs(a: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn asymmetry(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// y = A x for symmetric A, one contiguous column per output entry.
pub fn symv(a: &Mat<f64>, x: &[f64], y: &mut [f64]) {
    use rayon::prelude::*;
    y.par_iter_mut()
        .enumerate()
        .for_each(|(i, yi)| *yi = dot(a.col_as_slice(i), x));
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Smallest,
    Largest,
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Lanczos with full reorthogonalization for the `count` extreme eigenpairs of
/// a symmetric operator given by its action `op(x, y)` (y = A x).
pub fn lanczos<F>(
    n: usize,
    op: F,
    count: usize,
    end: End,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<LanczosResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    if count == 0 || count > n {
        return Err(Error::InvalidInput(format!(
            "lanczos: count {count} for dimension {n}"
        )));
    }
    let max_iter = max_iter.min(n);
    let mut rng = SplitMix64::derive(seed, "lanczos-start");
    let mut v: Vec<f64> = (0..n).map(|_| rng.next_f64() - 0.5).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let check_every = 8;
    for j in 0..max_iter {
        op(&basis[j], &mut w);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= a * vi;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= b * vi;
            }
        }
        for _ in 0..2 {
            for q in &basis {
                let d = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= d * qi;
                }
            }
        }
        let b = norm(&w);
        let m = j + 1;
        let exhausted = b <= 1e-14 * alpha.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
        if m >= count && (m % check_every == 0 || exhausted || m == max_iter) {
            let t = Mat::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let (theta, s) = sym_eigen(&t)?;
            let pick: Vec<usize> = match end {
                End::Smallest => (0..count).collect(),
                End::Largest => (0..count).map(|i| m - 1 - i).collect(),
            };
            let scale = theta.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            let converged = pick
                .iter()
                .all(|&i| (b * s[(m - 1, i)]).abs() <= tol * scale || exhausted);
            if converged || m == max_iter {
                if !converged {
                    return Err(Error::NotConverged(format!(
                        "lanczos: {count} eigenpairs not converged after {m} iterations"
                    )));
                }
                let mut values = Vec::with_capacity(count);
                let mut vectors = Vec::with_capacity(count);
                for &i in &pick {
                    values.push(theta[i]);
                    let mut x = vec![0.0; n];
                    for (k, q) in basis.iter().enumerate().take(m) {
                        let c = s[(k, i)];
                        for (xi, qi) in x.iter_mut().zip(q) {
                            *xi += c * qi;
                        }
                    }
                    let nx = norm(&x);
                    x.iter_mut().for_each(|v| *v /= nx);
                    vectors.push(x);
                }
                return Ok(LanczosResult {
                    values,
                    vectors,
                    iterations: m,
                });
            }
        }
        if exhausted {
            return Err(Error::NotConverged(
                "lanczos: invariant subspace too small".into(),
            ));
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Err(Error::NotConverged(
        "lanczos: iteration budget exhausted".into(),
    ))
}

/// Sparse symmetric matrix in compressed rows (both triangles stored).
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (j, v) in r {
                idx.push(j);
                val.push(v);
            }
            ptr.push(idx.len());
        }
        Self { n, ptr, idx, val }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.ptr[i]..self.ptr[i + 1] {
                s += self.val[p] * x[self.idx[p]];
            }
            y[i] = s;
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut a = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.ptr[i]..self.ptr[i + 1] {
                a[(i, self.idx[p])] = self.val[p];
            }
        }
        a
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut t = Vec::with_capacity(self.val.len());
        for i in 0..self.n {
            for p in self.ptr[i]..self.ptr[i + 1] {
                t.push(Triplet::new(i, self.idx[p], self.val[p]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| Error::InvalidInput(format!("sparse assembly: {e:?}")))
    }
}

/// Sparse Cholesky factor usable as a solver.
pub struct SparseSpd {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SparseSpd {
    pub fn new(a: &Csr) -> Result<Self> {
        let m = a.to_faer()?;
        let llt = m
            .sp_cholesky(Side::Lower)
            .map_err(|_| Error::NotPositive(f64::NAN))?;
        Ok(Self { llt, n: a.n })
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        for i in 0..self.n {
            x[i] = rhs[(i, 0)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> Csr {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        Csr::from_rows(n, rows)
    }

    fn exact(n: usize, k: usize) -> f64 {
        let t = std::f64::consts::PI * k as f64 / (n + 1) as f64;
        2.0 - 2.0 * t.cos()
    }

    #[test]
    fn lanczos_smallest_and_largest() {
        let n = 200;
        let a = tridiag(n);
        let r = lanczos(n, |x, y| a.matvec(x, y), 3, End::Largest, 1e-12, 400, 1).unwrap();
        for (i, v) in r.values.iter().enumerate() {
            assert!((v - exact(n, n - i)).abs() < 1e-9);
        }
        let f = SparseSpd::new(&a).unwrap();
        let r = lanczos(n, |x, y| f.solve(x, y), 2, End::Largest, 1e-13, 200, 2).unwrap();
        assert!((1.0 / r.values[0] - exact(n, 1)).abs() < 1e-11);
        assert!((1.0 / r.values[1] - exact(n, 2)).abs() < 1e-11);
    }

    #[test]
    fn dense_eigen_and_certificates() {
        let a = tridiag(30).to_dense();
        let (w, v) = sym_eigen(&a).unwrap();
        assert!((w[0] - exact(30, 1)).abs() < 1e-12);
        let av = &a * &v;
        for c in 0..30 {
            for r in 0..30 {
                assert!((av[(r, c)] - w[c] * v[(r, c)]).abs() < 1e-12);
            }
        }
        assert!(psd_with_shift(&a, 0.0));
        let mut b = a.clone();
        for i in 0..30 {
            b[(i, i)] -= w[0] * 1.01;
        }
        assert!(!psd_with_shift(&b, 0.0));
        let inv = spd_inverse(&a).unwrap();
        let p = &a * &inv;
        assert!((p[(3, 3)] - 1.0).abs() < 1e-12 && p[(3, 4)].abs() < 1e-12);
    }
}
