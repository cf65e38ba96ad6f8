//! Dirichlet eigenpairs of rectangles, disks and raster masks, and Weyl-law
//! diagnostics.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Container, Domain, DomainKind, Grid, Mask, TAG_EIGENBASIS};
use crate::linalg::{self, Csr, End, SparseSpd};
use crate::special::{bessel_j, bessel_zero_unchecked, bessel_zeros_below};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Rect {
        j: usize,
        k: usize,
    },
    /// `norm` is the L² normalization factor, `z` the Bessel zero z_{m,k}.
    Disk {
        m: u32,
        k: u32,
        trig: Trig,
        z: f64,
        norm: f64,
    },
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// 1-based position in the sorted spectrum.
    pub index: usize,
    pub lambda: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub domain: Domain,
    pub grid: Grid,
    pub pairs: Vec<EigenPair>,
}

/// The `n` smallest values π²(j²/a² + k²/b²), ties broken by smaller j.
pub fn rectangle_levels(a: f64, b: f64, n: usize) -> Vec<(f64, usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    // Weyl count plus boundary correction gives a safe first radius
    let mut lmax =
        4.0 * PI * n as f64 / (a * b) * 1.2 + 4.0 * PI * PI * (1.0 / (a * a) + 1.0 / (b * b));
    loop {
        let jmax = (a * lmax.sqrt() / PI).floor() as usize;
        let mut v = Vec::new();
        for j in 1..=jmax {
            let rest = lmax - PI * PI * (j * j) as f64 / (a * a);
            if rest <= 0.0 {
                break;
            }
            let kmax = (b * rest.sqrt() / PI).floor() as usize;
            for k in 1..=kmax {
                v.push((level(a, b, j, k), j, k));
            }
        }
        if v.len() >= n {
            v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            v.truncate(n);
            return v;
        }
        lmax *= 1.5;
    }
}

fn level(a: f64, b: f64, j: usize, k: usize) -> f64 {
    if a == b {
        PI * PI * ((j * j + k * k) as f64) / (a * a)
    } else {
        PI * PI * ((j * j) as f64 / (a * a) + (k * k) as f64 / (b * b))
    }
}

/// Sine factor √(2/a)·sin(jπx/a) sampled on the rectangle grid's x nodes
/// (exactly zero off the open interval).
pub fn sine_factor(len: f64, j: usize, coords: &[f64], h: f64) -> Vec<f64> {
    let c = (2.0 / len).sqrt();
    coords
        .iter()
        .map(|&x| {
            if x > 0.5 * h && x < len - 0.5 * h {
                c * (j as f64 * PI * x / len).sin()
            } else {
                0.0
            }
        })
        .collect()
}

pub fn eigenbasis_rectangle(a: f64, b: f64, n: usize, h: f64) -> Result<SpectralBasis> {
    if n > 1_000_000 {
        return invalid("rectangle basis limited to N <= 1e6");
    }
    let domain = Domain::rectangle(a, b)?;
    let grid = domain.grid(h)?;
    let pairs = rectangle_levels(a, b, n)
        .into_iter()
        .enumerate()
        .map(|(i, (lambda, j, k))| EigenPair {
            index: i + 1,
            lambda,
            mode: Mode::Rect { j, k },
        })
        .collect();
    Ok(SpectralBasis {
        domain,
        grid,
        pairs,
    })
}

/// Completeness bound for the disk table: every level below z_{21,1}² has m ≤ 20.
pub fn disk_capacity_zero() -> Result<f64> {
    bessel_zero_unchecked(21, 1)
}

/// ∫_0^R J_m(z r/R)² r dr by composite Simpson with 2048 intervals.
pub fn disk_radial_norm_sq(m: u32, z: f64, radius: f64) -> f64 {
    let n = 2048;
    let dr = radius / n as f64;
    let f = |r: f64| {
        let v = bessel_j(m, z * r / radius);
        v * v * r
    };
    let mut s = f(0.0) + f(radius);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * dr);
    }
    s * dr / 3.0
}

pub fn eigenbasis_disk(radius: f64, n: usize, h: f64) -> Result<SpectralBasis> {
    if n > 10_000 {
        return invalid("disk basis limited to N <= 1e4");
    }
    let domain = Domain::disk(radius)?;
    let grid = domain.grid(h)?;
    let cap = disk_capacity_zero()?;
    let mut levels = Vec::new();
    for m in 0..=20u32 {
        for (k, z) in bessel_zeros_below(m, cap).into_iter().enumerate() {
            let radial = disk_radial_norm_sq(m, z, radius);
            let ang = if m == 0 { 2.0 * PI } else { PI };
            let norm = 1.0 / (ang * radial).sqrt();
            let k = k as u32 + 1;
            levels.push((z, m, k, Trig::Cos, norm));
            if m > 0 {
                levels.push((z, m, k, Trig::Sin, norm));
            }
        }
    }
    if n > levels.len() {
        return Err(Error::Capacity(format!(
            "disk basis holds {} levels below z_(21,1); requested {n}",
            levels.len()
        )));
    }
    levels.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
            .then((x.3 == Trig::Sin).cmp(&(y.3 == Trig::Sin)))
    });
    let pairs = levels
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (z, m, k, trig, norm))| EigenPair {
            index: i + 1,
            lambda: (z / radius) * (z / radius),
            mode: Mode::Disk {
                m,
                k,
                trig,
                z,
                norm,
            },
        })
        .collect();
    Ok(SpectralBasis {
        domain,
        grid,
        pairs,
    })
}

/// Integer 5-point stencil h²(−Δ_h) on the interior nodes, numbered in raster
/// order, together with that numbering.
pub fn stencil_matrix(grid: &Grid) -> (Csr, Vec<usize>) {
    let idx = grid.interior_indices();
    let mut pos = vec![usize::MAX; grid.len()];
    for (i, &p) in idx.iter().enumerate() {
        pos[p] = i;
    }
    let nx = grid.nx;
    let rows = idx
        .iter()
        .map(|&p| {
            let mut r = vec![(pos[p], 4.0)];
            for q in [p - 1, p + 1, p - nx, p + nx] {
                if grid.interior[q] {
                    r.push((pos[q], -1.0));
                }
            }
            r
        })
        .collect();
    (Csr::from_rows(idx.len(), rows), idx)
}

/// Dimension up to which mask eigenproblems are solved densely.
pub const DENSE_LIMIT: usize = 1024;
/// Relative eigenvalue gap below which numerical eigenvalues count as one level.
pub const DEGENERACY_TOL: f64 = 1e-6;
/// Residual bound on the integer-stencil matrix.
pub const RESIDUAL_TOL: f64 = 1e-8;

pub fn eigenbasis_mask(mask: &Mask, n: usize) -> Result<SpectralBasis> {
    let domain = Domain::mask(mask.clone());
    let grid = Grid::mask(mask);
    let (a, idx) = stencil_matrix(&grid);
    let dim = a.n;
    if dim < 4 * n {
        return invalid(format!(
            "mask has {dim} interior cells; need at least 4N = {}",
            4 * n
        ));
    }
    let (theta, mut vecs) = if dim <= DENSE_LIMIT {
        let (w, v) = linalg::sym_eigen(&a.to_dense())?;
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|c| (0..dim).map(|r| v[(r, c)]).collect())
            .collect();
        (w[..n].to_vec(), vecs)
    } else {
        let f = SparseSpd::new(&a)?;
        // a few extra Ritz pairs so the last requested level is not split
        let want = (n + 4).min(dim);
        let r = linalg::lanczos(
            dim,
            |x, y| f.solve(x, y),
            want,
            End::Largest,
            1e-12,
            3 * want + 200,
            17,
        )?;
        let mut pairs: Vec<(f64, Vec<f64>)> =
            r.values.iter().map(|t| 1.0 / t).zip(r.vectors).collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        pairs.truncate(n);
        // one step of inverse iteration with the exact factor sharpens the vectors
        let mut out_v = Vec::with_capacity(n);
        let mut out_w = Vec::with_capacity(n);
        for (w, v) in pairs {
            let mut y = vec![0.0; dim];
            f.solve(&v, &mut y);
            let ny = linalg::norm(&y);
            y.iter_mut().for_each(|x| *x /= ny);
            out_w.push(w);
            out_v.push(y);
        }
        (out_w, out_v)
    };
    orthonormalize_clusters(&theta, &mut vecs);
    let mut y = vec![0.0; dim];
    let mut pairs = Vec::with_capacity(n);
    for (i, v) in vecs.iter_mut().enumerate() {
        let nv = linalg::norm(v);
        v.iter_mut().for_each(|x| *x /= nv);
        // Rayleigh quotient after refinement
        a.matvec(v, &mut y);
        let t = linalg::dot(v, &y);
        let res: f64 = y
            .iter()
            .zip(v.iter())
            .map(|(ay, x)| (ay - t * x).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > RESIDUAL_TOL {
            return Err(Error::NotConverged(format!(
                "mask eigenpair {} residual {res:.3e} exceeds {RESIDUAL_TOL:e}",
                i + 1
            )));
        }
        let s: f64 = v.iter().sum();
        let first = v.iter().copied().find(|x| x.abs() > 1e-8).unwrap_or(1.0);
        let sign = if s.abs() > 1e-8 {
            s.signum()
        } else {
            first.signum()
        };
        let mut phi = vec![0.0; grid.len()];
        let scale = sign / grid.h;
        for (k, &p) in idx.iter().enumerate() {
            phi[p] = v[k] * scale;
        }
        pairs.push(EigenPair {
            index: i + 1,
            lambda: t / (grid.h * grid.h),
            mode: Mode::Sampled(phi),
        });
    }
    Ok(SpectralBasis {
        domain,
        grid,
        pairs,
    })
}

/// Gram-Schmidt inside each run of eigenvalues within the degeneracy tolerance.
fn orthonormalize_clusters(theta: &[f64], vecs: &mut [Vec<f64>]) {
    let mut start = 0;
    while start < theta.len() {
        let mut end = start + 1;
        while end < theta.len()
            && (theta[end] - theta[start]).abs() <= DEGENERACY_TOL * theta[start].abs()
        {
            end += 1;
        }
        for _ in 0..2 {
            for i in start..end {
                for j in start..i {
                    let (head, tail) = vecs.split_at_mut(i);
                    let d = linalg::dot(&head[j], &tail[0]);
                    for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                        *x -= d * y;
                    }
                }
                let nv = linalg::norm(&vecs[i]);
                vecs[i].iter_mut().for_each(|x| *x /= nv);
            }
        }
        start = end;
    }
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Samples of φ_n (0-based n) on the grid.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let pair = &self.pairs[n];
        match (&pair.mode, &self.domain.kind) {
            (Mode::Rect { j, k }, DomainKind::Rectangle { a, b }) => {
                let xf = sine_factor(*a, *j, &self.grid.x_coords(), self.grid.h);
                let yf = sine_factor(*b, *k, &self.grid.y_coords(), self.grid.h);
                let mut out = vec![0.0; self.grid.len()];
                for (iy, yv) in yf.iter().enumerate() {
                    for (ix, xv) in xf.iter().enumerate() {
                        out[iy * self.grid.nx + ix] = xv * yv;
                    }
                }
                out
            }
            (
                Mode::Disk {
                    m, trig, z, norm, ..
                },
                DomainKind::Disk { radius },
            ) => (0..self.grid.len())
                .map(|p| {
                    if !self.grid.interior[p] {
                        return 0.0;
                    }
                    let (x, y) = self.grid.coords(p);
                    let r = (x * x + y * y).sqrt();
                    let th = y.atan2(x);
                    let ang = match trig {
                        Trig::Cos => (*m as f64 * th).cos(),
                        Trig::Sin => (*m as f64 * th).sin(),
                    };
                    norm * bessel_j(*m, z * r / radius) * ang
                })
                .collect(),
            (Mode::Sampled(v), _) => v.clone(),
            _ => unreachable!("mode does not match domain"),
        }
    }

    /// Grid-quadrature Gram matrix of the first `n` eigenfunctions.
    pub fn gram(&self, n: usize) -> Mat<f64> {
        let s: Vec<Vec<f64>> = (0..n).map(|i| self.sample(i)).collect();
        Mat::from_fn(n, n, |i, j| self.grid.inner(&s[i], &s[j]))
    }

    pub fn to_container(&self) -> Container {
        let n = self.len();
        let mut samples = Vec::with_capacity(n * self.grid.len());
        for i in 0..n {
            samples.extend(self.sample(i));
        }
        Container {
            tag: TAG_EIGENBASIS,
            dims: vec![self.grid.ny, self.grid.nx],
            h: self.grid.h,
            values: self.lambdas(),
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylRow {
    pub n: usize,
    /// λ_N |Ω| / (4πN)
    pub lambda_ratio: f64,
    /// Σ_{n≤N} 1/λ_n
    pub harmonic_sum: f64,
    /// (|Ω|/4π) ln N
    pub weyl_log: f64,
    /// harmonic_sum / weyl_log; undefined at N = 1
    pub harmonic_ratio: Option<f64>,
}

/// One row per prefix length N = 1..=len of the sorted eigenvalues.
pub fn weyl_diagnostics(lambdas: &[f64], measure: f64) -> Vec<WeylRow> {
    let mut sum = 0.0;
    lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let n = i + 1;
            sum += 1.0 / l;
            let weyl_log = measure / (4.0 * PI) * (n as f64).ln();
            WeylRow {
                n,
                lambda_ratio: l * measure / (4.0 * PI * n as f64),
                harmonic_sum: sum,
                weyl_log,
                harmonic_ratio: if n > 1 { Some(sum / weyl_log) } else { None },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_levels_and_tie_break() {
        let v = rectangle_levels(1.0, 1.0, 5);
        assert!((v[0].0 - 2.0 * PI * PI).abs() < 1e-12);
        assert_eq!((v[1].1, v[1].2), (1, 2));
        assert_eq!((v[2].1, v[2].2), (2, 1));
        assert!((v[3].0 - 8.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn rectangle_levels_match_brute_force() {
        let (a, b) = (1.3, 0.7);
        let got = rectangle_levels(a, b, 200);
        let mut all = Vec::new();
        for j in 1..60 {
            for k in 1..60 {
                all.push(level(a, b, j, k));
            }
        }
        all.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&all) {
            assert_eq!(g.0, *e);
        }
    }

    #[test]
    fn rectangle_modes_orthonormal_on_grid() {
        let b = eigenbasis_rectangle(1.0, 1.0, 12, 1.0 / 64.0).unwrap();
        let g = b.gram(12);
        for i in 0..12 {
            for j in 0..12 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disk_radial_norm_closed_form() {
        // ∫_0^R J_m(zr/R)² r dr = R² J_{m+1}(z)² / 2 at a zero z of J_m
        for (m, k) in [(0u32, 1u32), (3, 2), (7, 1)] {
            let z = crate::special::bessel_zero(m, k).unwrap();
            let num = disk_radial_norm_sq(m, z, 0.8);
            let ex = 0.64 * bessel_j(m + 1, z).powi(2) / 2.0;
            assert!((num - ex).abs() < 1e-12 * ex, "m={m} k={k}");
        }
    }

    #[test]
    fn disk_spectrum_basics() {
        let b = eigenbasis_disk(1.0, 20, 1.0 / 32.0).unwrap();
        let z = crate::special::z01();
        assert!((b.pairs[0].lambda - z * z).abs() < 1e-12);
        assert_eq!(b.pairs[1].lambda, b.pairs[2].lambda);
        assert!(eigenbasis_disk(1.0, 10_000, 0.1).is_err());
    }

    #[test]
    fn dense_mask_matches_discrete_square() {
        let m = Mask::rectangle(1.0, 1.0, 1.0 / 32.0).unwrap();
        let b = eigenbasis_mask(&m, 4).unwrap();
        let h = 1.0 / 32.0;
        let disc = |j: f64, k: f64| {
            4.0 / (h * h) * ((j * PI * h / 2.0).sin().powi(2) + (k * PI * h / 2.0).sin().powi(2))
        };
        assert!((b.pairs[0].lambda - disc(1.0, 1.0)).abs() < 1e-9);
        assert!((b.pairs[1].lambda - disc(1.0, 2.0)).abs() < 1e-9);
        assert!((b.pairs[3].lambda - disc(2.0, 2.0)).abs() < 1e-9);
        let g = b.gram(4);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn weyl_rows() {
        let l = rectangle_levels(1.0, 1.0, 10)
            .into_iter()
            .map(|x| x.0)
            .collect::<Vec<_>>();
        let t = weyl_diagnostics(&l, 1.0);
        assert_eq!(t.len(), 10);
        assert!(t[0].harmonic_ratio.is_none() && t[0].lambda_ratio.is_finite());
        assert!((t[9].harmonic_sum - l.iter().map(|x| 1.0 / x).sum::<f64>()).abs() < 1e-15);
    }
}
