//! Function families u_1..u_N on a grid and their operator constraints.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    Container, DomainKind, Grid, TAG_GRADIENT_ORTHONORMAL, TAG_OPERATOR_DOMINATED,
};
use crate::linalg;
use crate::report::{Report, Status};
use crate::schrodinger::SpectralOperator;
use crate::spectral::{sine_factor, Mode, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// ⟨∇u_n, ∇u_m⟩ = δ_nm
    GradientOrthonormal,
    /// Σ|u_n⟩⟨u_n| ≤ L⁻¹ for a positive operator L
    OperatorDominated,
}

/// Base functions b_k; members are u_m = Σ_k mix[m,k]·coeffs[k]·b_k.
#[derive(Debug, Clone)]
pub enum Base {
    /// b_k(x, y) = X_{jk}(x)·Y_{kk}(y) with factors sampled on the grid axes.
    Separable {
        xs: Vec<Vec<f64>>,
        ys: Vec<Vec<f64>>,
        terms: Vec<(usize, usize)>,
    },
    Sampled(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct Family {
    pub grid: Grid,
    pub base: Base,
    pub coeffs: Vec<f64>,
    pub mix: Option<Mat<f64>>,
    /// Exact −Δ eigenvalues of the base functions when they are analytic.
    pub base_lambdas: Option<Vec<f64>>,
    pub kind: ConstraintKind,
    pub source: String,
    pub measure: f64,
}

/// Operator used to pair members: M_nm = ⟨u_n, L u_m⟩.
pub enum Pairing<'a> {
    /// −Δ − shift in the continuum; exact on analytic eigenbases.
    Continuum { shift: f64 },
    /// 5-point Laplacian with zero extension, minus shift.
    FiniteDifference { shift: f64 },
    /// Dense operator on the interior nodes of the same grid.
    Operator(&'a SpectralOperator),
}

fn separable_base(basis: &SpectralBasis, n: usize) -> Option<Base> {
    let DomainKind::Rectangle { a, b } = basis.domain.kind else {
        return None;
    };
    let (xc, yc) = (basis.grid.x_coords(), basis.grid.y_coords());
    let mut xslot = std::collections::BTreeMap::new();
    let mut yslot = std::collections::BTreeMap::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut terms = Vec::with_capacity(n);
    for p in &basis.pairs[..n] {
        let Mode::Rect { j, k } = p.mode else {
            return None;
        };
        let sx = *xslot.entry(j).or_insert_with(|| {
            xs.push(sine_factor(a, j, &xc, basis.grid.h));
            xs.len() - 1
        });
        let sy = *yslot.entry(k).or_insert_with(|| {
            ys.push(sine_factor(b, k, &yc, basis.grid.h));
            ys.len() - 1
        });
        terms.push((sx, sy));
    }
    Some(Base::Separable { xs, ys, terms })
}

fn analytic(basis: &SpectralBasis) -> bool {
    !matches!(basis.domain.kind, DomainKind::Mask(_))
}

/// u_n = φ_n/√λ_n for the first `n` eigenpairs.
pub fn family_from_eigenbasis(basis: &SpectralBasis, n: usize) -> Result<Family> {
    shifted_family(basis, n, 0.0, ConstraintKind::GradientOrthonormal)
}

/// u_n = (λ_n − c)^{-1/2} φ_n, the family built from the spectrum of −Δ − c.
pub fn family_from_shifted_eigenbasis(basis: &SpectralBasis, n: usize, c: f64) -> Result<Family> {
    shifted_family(basis, n, c, ConstraintKind::OperatorDominated)
}

fn shifted_family(basis: &SpectralBasis, n: usize, c: f64, kind: ConstraintKind) -> Result<Family> {
    if n == 0 || n > basis.len() {
        return invalid(format!("family size {n} outside 1..={}", basis.len()));
    }
    let lam = basis.lambdas();
    if let Some(bad) = lam[..n].iter().find(|&&l| !(l - c > 0.0)) {
        return Err(Error::NotPositive(bad - c));
    }
    let coeffs = lam[..n].iter().map(|l| 1.0 / (l - c).sqrt()).collect();
    let base = match separable_base(basis, n) {
        Some(b) => b,
        None => Base::Sampled((0..n).map(|i| basis.sample(i)).collect()),
    };
    let source = if c == 0.0 {
        format!("eigenbasis scaled by lambda^-1/2, N={n}")
    } else {
        format!("eigenbasis scaled by (lambda-{c})^-1/2, N={n}")
    };
    Ok(Family {
        grid: basis.grid.clone(),
        base,
        coeffs,
        mix: None,
        base_lambdas: if analytic(basis) {
            Some(lam[..n].to_vec())
        } else {
            None
        },
        kind,
        source,
        measure: basis.domain.measure,
    })
}

/// u_n = μ_n^{-1/2} ψ_n from the lowest eigenpairs of a positive operator.
pub fn family_from_operator(op: &SpectralOperator, n: usize) -> Result<Family> {
    let (mu, psi) = op.lowest_eigenpairs(n)?;
    if mu[0] <= 0.0 {
        return Err(Error::NotPositive(mu[0]));
    }
    let members = psi;
    Ok(Family {
        grid: op.grid.clone(),
        base: Base::Sampled(members),
        coeffs: mu.iter().map(|m| 1.0 / m.sqrt()).collect(),
        mix: None,
        base_lambdas: None,
        kind: ConstraintKind::OperatorDominated,
        source: format!("{} eigenpairs scaled by mu^-1/2, N={n}", op.kind_name()),
        measure: op.measure,
    })
}

impl Family {
    pub fn len(&self) -> usize {
        match &self.mix {
            Some(m) => m.nrows(),
            None => self.coeffs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Orthogonal (or any) mixing u'_m = Σ_n o[m,n] u_n.
    pub fn mixed(&self, o: &Mat<f64>) -> Result<Family> {
        if o.ncols() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "mixing {}x{} for N={}",
                o.nrows(),
                o.ncols(),
                self.len()
            )));
        }
        let mix = match &self.mix {
            Some(m) => o * m,
            None => o.clone(),
        };
        let mut f = self.clone();
        f.mix = Some(mix);
        f.source = format!(
            "{} mixed by {}x{} matrix",
            self.source,
            o.nrows(),
            o.ncols()
        );
        Ok(f)
    }

    pub fn scaled(&self, s: f64) -> Family {
        let mut f = self.clone();
        f.coeffs.iter_mut().for_each(|c| *c *= s);
        f.source = format!("{} scaled by {s}", self.source);
        f
    }

    fn base_len(&self) -> usize {
        self.coeffs.len()
    }

    /// Effective coefficient matrix E (N × K) with u_m = Σ_k E[m,k] b_k.
    pub fn coefficient_matrix(&self) -> Mat<f64> {
        let k = self.base_len();
        match &self.mix {
            Some(m) => Mat::from_fn(m.nrows(), k, |i, j| m[(i, j)] * self.coeffs[j]),
            None => Mat::from_fn(k, k, |i, j| if i == j { self.coeffs[i] } else { 0.0 }),
        }
    }

    pub fn base_sample(&self, k: usize) -> Vec<f64> {
        match &self.base {
            Base::Sampled(v) => v[k].clone(),
            Base::Separable { xs, ys, terms } => {
                let (sx, sy) = terms[k];
                let nx = self.grid.nx;
                let mut out = vec![0.0; self.grid.len()];
                for (iy, yv) in ys[sy].iter().enumerate() {
                    if *yv == 0.0 {
                        continue;
                    }
                    for (ix, xv) in xs[sx].iter().enumerate() {
                        out[iy * nx + ix] = xv * yv;
                    }
                }
                out
            }
        }
    }

    /// Grid samples of all members.
    pub fn members(&self) -> Vec<Vec<f64>> {
        let e = self.coefficient_matrix();
        let base: Vec<Vec<f64>> = (0..self.base_len()).map(|k| self.base_sample(k)).collect();
        (0..e.nrows())
            .into_par_iter()
            .map(|m| {
                let mut u = vec![0.0; self.grid.len()];
                for (k, b) in base.iter().enumerate() {
                    let c = e[(m, k)];
                    if c != 0.0 {
                        for (x, y) in u.iter_mut().zip(b) {
                            *x += c * y;
                        }
                    }
                }
                u
            })
            .collect()
    }

    /// K × K matrices of base pairings: (L² Gram, discrete gradient Gram).
    fn base_grams_discrete(&self) -> (Mat<f64>, Mat<f64>) {
        let k = self.base_len();
        let h2 = self.grid.h * self.grid.h;
        match &self.base {
            Base::Separable { xs, ys, terms } => {
                let g1 = |f: &Vec<Vec<f64>>| {
                    let n = f.len();
                    let s = Mat::from_fn(n, n, |a, b| linalg::dot(&f[a], &f[b]));
                    let d = Mat::from_fn(n, n, |a, b| {
                        f[a].windows(2)
                            .zip(f[b].windows(2))
                            .map(|(u, v)| (u[1] - u[0]) * (v[1] - v[0]))
                            .sum::<f64>()
                    });
                    (s, d)
                };
                let (sx, dx) = g1(xs);
                let (sy, dy) = g1(ys);
                let l2 = Mat::from_fn(k, k, |n, m| {
                    let (a, c) = terms[n];
                    let (b, d) = terms[m];
                    h2 * sx[(a, b)] * sy[(c, d)]
                });
                let gr = Mat::from_fn(k, k, |n, m| {
                    let (a, c) = terms[n];
                    let (b, d) = terms[m];
                    dx[(a, b)] * sy[(c, d)] + sx[(a, b)] * dy[(c, d)]
                });
                (l2, gr)
            }
            Base::Sampled(v) => {
                let lap: Vec<Vec<f64>> = v
                    .par_iter()
                    .map(|u| {
                        let mut o = vec![0.0; u.len()];
                        self.grid.apply_laplacian(u, &mut o);
                        o
                    })
                    .collect();
                let l2 = Mat::from_fn(k, k, |n, m| self.grid.inner(&v[n], &v[m]));
                let gr = Mat::from_fn(k, k, |n, m| h2 * linalg::dot(&v[n], &lap[m]));
                (l2, gr)
            }
        }
    }

    fn congruence(&self, base: &Mat<f64>) -> Mat<f64> {
        let e = self.coefficient_matrix();
        let mut m = &e * base * e.transpose();
        linalg::symmetrize(&mut m);
        m
    }

    /// Discrete gradient Gram matrix ⟨∇u_n, ∇u_m⟩ (forward differences,
    /// zero extension).
    pub fn gradient_gram(&self) -> Mat<f64> {
        let (_, gr) = self.base_grams_discrete();
        self.congruence(&gr)
    }

    pub fn l2_gram(&self) -> Mat<f64> {
        let (l2, _) = self.base_grams_discrete();
        self.congruence(&l2)
    }

    /// M_nm = ⟨u_n, L u_m⟩ for the chosen operator.
    pub fn pairing_matrix(&self, pairing: &Pairing) -> Result<Mat<f64>> {
        match pairing {
            Pairing::Continuum { shift } => {
                let lam = self.base_lambdas.as_ref().ok_or_else(|| {
                    Error::InvalidInput("continuum pairing needs an analytic eigenbasis".into())
                })?;
                let k = self.base_len();
                let d = Mat::from_fn(k, k, |i, j| if i == j { lam[i] - shift } else { 0.0 });
                Ok(self.congruence(&d))
            }
            Pairing::FiniteDifference { shift } => {
                let (l2, gr) = self.base_grams_discrete();
                let k = self.base_len();
                let b = Mat::from_fn(k, k, |i, j| gr[(i, j)] - shift * l2[(i, j)]);
                Ok(self.congruence(&b))
            }
            Pairing::Operator(op) => {
                if op.grid.nx != self.grid.nx
                    || op.grid.ny != self.grid.ny
                    || op.grid.h != self.grid.h
                {
                    return Err(Error::DimensionMismatch(
                        "family and operator grids differ".into(),
                    ));
                }
                op.pairing_gram(&self.members())
            }
        }
    }

    pub fn to_container(&self) -> Container {
        let members = self.members();
        // per-member scale recorded in the value slots: ‖∇u_n‖² (discrete)
        let g = self.gradient_gram();
        Container {
            tag: match self.kind {
                ConstraintKind::GradientOrthonormal => TAG_GRADIENT_ORTHONORMAL,
                ConstraintKind::OperatorDominated => TAG_OPERATOR_DOMINATED,
            },
            dims: vec![self.grid.ny, self.grid.nx],
            h: self.grid.h,
            values: (0..self.len()).map(|i| g[(i, i)]).collect(),
            samples: members.into_iter().flatten().collect(),
        }
    }
}

/// Largest eigenvalue of M_nm = ⟨u_n, L u_m⟩; PASS iff ≤ 1 + 1e-8.
pub fn verify_constraint(f: &Family, pairing: &Pairing) -> Result<Report> {
    let m = f.pairing_matrix(pairing)?;
    Ok(constraint_report(&m, &f.source))
}

pub const CONSTRAINT_TOL: f64 = 1e-8;

pub fn constraint_report(m: &Mat<f64>, source: &str) -> Report {
    let w = match linalg::sym_eigenvalues(m) {
        Ok(w) => w,
        Err(e) => {
            return Report::new("verify_constraint")
                .with_status(Status::Fail)
                .detail("error", e.to_string())
        }
    };
    let top = *w.last().unwrap_or(&f64::NAN);
    let bottom = *w.first().unwrap_or(&f64::NAN);
    Report::upper_bound("verify_constraint", top, 1.0, 0.0, CONSTRAINT_TOL)
        .param("N", m.nrows())
        .param("source", source)
        .detail("min_eigenvalue", bottom)
}

/// Hoffmann-Ostenhof: ‖∇√ρ‖² against N and against Σ‖∇u_n‖² (discrete).
pub fn hoffmann_ostenhof(f: &Family, rho: &[f64]) -> Report {
    let sq: Vec<f64> = rho.iter().map(|r| r.max(0.0).sqrt()).collect();
    let lhs = f.grid.grad_sq(&sq);
    let g = f.gradient_gram();
    let energy: f64 = (0..f.len()).map(|i| g[(i, i)]).sum();
    let n = f.len() as f64;
    Report::upper_bound("hoffmann_ostenhof", lhs, n, 0.0, HO_ALLOWANCE)
        .param("N", f.len())
        .param("h", f.grid.h)
        .detail("sum_grad_sq", energy)
        .detail("excess_over_N", lhs - n)
        .detail("excess_over_energy", lhs - energy)
}

/// Discretization allowance of the Hoffmann-Ostenhof check.
pub const HO_ALLOWANCE: f64 = 2e-2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_orthogonal, SplitMix64};
    use crate::spectral::eigenbasis_rectangle;

    #[test]
    fn gradient_gram_is_diagonal_for_eigenfamily() {
        let b = eigenbasis_rectangle(1.0, 1.0, 9, 1.0 / 64.0).unwrap();
        let f = family_from_eigenbasis(&b, 9).unwrap();
        let g = f.gradient_gram();
        let h = 1.0 / 64.0;
        for (n, p) in b.pairs.iter().enumerate() {
            let Mode::Rect { j, k } = p.mode else {
                unreachable!()
            };
            let disc = 4.0 / (h * h)
                * ((j as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2)
                    + (k as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2));
            assert!((g[(n, n)] - disc / p.lambda).abs() < 1e-12);
            for m in 0..9 {
                if m != n {
                    assert!(g[(n, m)].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn separable_and_sampled_grams_agree() {
        let b = eigenbasis_rectangle(1.0, 1.0, 6, 1.0 / 32.0).unwrap();
        let f = family_from_eigenbasis(&b, 6).unwrap();
        let mut s = f.clone();
        s.base = Base::Sampled((0..6).map(|k| f.base_sample(k)).collect());
        let (a, c) = (f.gradient_gram(), s.gradient_gram());
        for i in 0..6 {
            for j in 0..6 {
                assert!((a[(i, j)] - c[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constraint_exact_scaled_and_mixed() {
        let b = eigenbasis_rectangle(1.0, 1.0, 10, 1.0 / 32.0).unwrap();
        let f = family_from_eigenbasis(&b, 10).unwrap();
        let r = verify_constraint(&f, &Pairing::Continuum { shift: 0.0 }).unwrap();
        assert!(r.passed() && (r.lhs - 1.0).abs() < 1e-12);
        let r = verify_constraint(&f.scaled(1.1), &Pairing::Continuum { shift: 0.0 }).unwrap();
        assert!(r.failed() && (r.lhs - 1.21).abs() < 1e-12);
        let o = random_orthogonal(10, &mut SplitMix64::new(3));
        let r =
            verify_constraint(&f.mixed(&o).unwrap(), &Pairing::Continuum { shift: 0.0 }).unwrap();
        assert!(r.passed());
        let r = verify_constraint(&f, &Pairing::FiniteDifference { shift: 0.0 }).unwrap();
        assert!(r.passed() && r.lhs < 1.0);
    }

    #[test]
    fn rejects_nonpositive_shift() {
        let b = eigenbasis_rectangle(1.0, 1.0, 3, 1.0 / 16.0).unwrap();
        let l1 = b.pairs[0].lambda;
        assert!(family_from_shifted_eigenbasis(&b, 3, l1).is_err());
        let f = family_from_shifted_eigenbasis(&b, 3, 0.5 * l1).unwrap();
        assert!((f.coeffs[0] - (0.5 * l1).powf(-0.5)).abs() < 1e-15);
    }
}
