//! The restricted half-Laplacian on an interval, discretized by the Fourier
//! form of zero-extended piecewise-linear hats.
//!
//! Hats e_j (j = 1..m−1) on nodes x_j = jL/m are translates, so the form
//! Q_ij = ∫|2πξ|^{2s}|ê(ξ)|² e^{2πiξ(x_i−x_j)} dξ is Toeplitz. On a periodic
//! box of length B = M·h the integral becomes a sum over ξ = k/B, k ∈ Z; the
//! aliased sum over k ≡ r (mod M) has the closed form
//! sin⁴(πr/M)·M^{-p}[ζ(p, r/M) + ζ(p, 1 − r/M)] with p = 4 − 2s, so one
//! length-M transform yields every entry.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, Par, Side};
use rustfft::num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::cutoff::{layer_cake, lemma34_reports, log_levels, CutoffSpec, RUMIN_LEVELS};
use crate::density::{check_thm31, mt_functional, DensityField};
use crate::error::{invalid, Error, Result};
use crate::family::constraint_report;
use crate::linalg::{self, sym_eigen};
use crate::report::{Report, Status};
use crate::rng::SplitMix64;
use crate::schrodinger::OperatorKind;
use crate::special::{hurwitz_zeta, SemiclassicalConstants};

pub const MAX_NODES: usize = 2048;

#[derive(Clone)]
pub struct FractionalForm {
    pub length: f64,
    pub m: usize,
    pub padding: usize,
    pub s: f64,
    /// First column of the Toeplitz form, q[d] = Q_{i,i+d}.
    pub column: Vec<f64>,
    /// Aliased spectral weight per residue r, so xᵀQx = Σ_r weight[r]·|X_r|².
    weight: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

impl FractionalForm {
    pub fn h(&self) -> f64 {
        self.length / self.m as f64
    }

    pub fn dim(&self) -> usize {
        self.m - 1
    }

    pub fn fft_size(&self) -> usize {
        self.padding * self.m
    }

    pub fn side(&self) -> f64 {
        self.length * self.padding as f64
    }

    pub fn matrix(&self) -> Mat<f64> {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| self.column[i.abs_diff(j)])
    }

    /// Consistent mass matrix of the hats, tridiagonal h(1, 4, 1)/6.
    pub fn mass(&self) -> Mat<f64> {
        let n = self.dim();
        let h = self.h();
        Mat::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 4.0 * h / 6.0,
            1 => h / 6.0,
            _ => 0.0,
        })
    }

    /// Padded DFT of hat coefficients, X_r = Σ_j x_j e^{−2πirj/M} with x_j at node j.
    fn coefficient_dft(&self, x: &[f64]) -> Vec<C64> {
        let mut b = vec![C64::new(0.0, 0.0); self.fft_size()];
        for (j, v) in x.iter().enumerate() {
            b[j + 1].re = *v;
        }
        self.fwd.process(&mut b);
        b
    }

    /// Form value through the padded transform of the zero extension.
    pub fn form_by_transform(&self, x: &[f64]) -> f64 {
        self.coefficient_dft(x)
            .iter()
            .zip(&self.weight)
            .map(|(z, w)| w * z.norm_sqr())
            .sum()
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": OperatorKind::Fractional { s: self.s },
            "dim": self.dim(),
            "h": self.h(),
            "length": self.length,
            "padding": self.padding,
        })
    }
}

/// Form of (−Δ)^s with s = 1/2.
pub fn assemble_halflap(length: f64, m: usize, padding: usize) -> Result<FractionalForm> {
    assemble_form(length, m, padding, 0.5)
}

/// Form of (−Δ)^s for s ∈ (0, 1]; s = 1 reproduces the hat stiffness matrix.
pub fn assemble_form(length: f64, m: usize, padding: usize, s: f64) -> Result<FractionalForm> {
    if !(2..=MAX_NODES).contains(&m) {
        return Err(Error::Capacity(format!(
            "{m} nodes (allowed 2..={MAX_NODES})"
        )));
    }
    if padding < 4 {
        return invalid(format!("padding {padding} < 4"));
    }
    if !(length > 0.0) || !(s > 0.0 && s <= 1.0) {
        return invalid("need L > 0 and 0 < s <= 1");
    }
    let mm = padding * m;
    let h = length / m as f64;
    let b = mm as f64 * h;
    let p = 4.0 - 2.0 * s;
    let scale =
        h * h / b * (2.0 * PI / b).powf(2.0 * s) * (mm as f64 / PI).powi(4) * (mm as f64).powf(-p);
    let weight: Vec<f64> = (0..mm)
        .map(|r| {
            if r == 0 {
                return 0.0;
            }
            let a = r as f64 / mm as f64;
            scale * (PI * a).sin().powi(4) * (hurwitz_zeta(p, a) + hurwitz_zeta(p, 1.0 - a))
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(mm);
    let mut buf: Vec<C64> = weight.iter().map(|w| C64::new(*w, 0.0)).collect();
    fwd.process(&mut buf);
    let column = buf.iter().take(m - 1).map(|z| z.re).collect();
    Ok(FractionalForm {
        length,
        m,
        padding,
        s,
        column,
        weight,
        fwd,
    })
}

/// Generalized eigenpairs Qψ = μMψ, ψᵀMψ = 1, lowest `count`.
pub fn eigenpairs(form: &FractionalForm, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = form.dim();
    let llt = form
        .mass()
        .llt(Side::Lower)
        .map_err(|_| Error::NotPositive(f64::NAN))?;
    let l = llt.L();
    let mut y = form.matrix();
    solve_lower_triangular_in_place(l, y.as_mut(), Par::Seq);
    let mut c = y.transpose().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    linalg::symmetrize(&mut c);
    let (vals, vecs) = sym_eigen(&c)?;
    let k = count.min(n);
    let mut top = Mat::from_fn(n, k, |i, j| vecs[(i, j)]);
    solve_upper_triangular_in_place(l.transpose(), top.as_mut(), Par::Seq);
    let psi = (0..k).map(|j| top.col_as_slice(j).to_vec()).collect();
    Ok((vals[..k].to_vec(), psi))
}

/// Operator-dominated family u_n = μ_n^{-1/2}ψ_n in hat coefficients.
#[derive(Debug, Clone)]
pub struct FractionalFamily {
    pub mu: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl FractionalFamily {
    pub fn new(form: &FractionalForm, n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("empty family");
        }
        let (mu, psi) = eigenpairs(form, n)?;
        let coeffs = psi
            .into_iter()
            .zip(&mu)
            .map(|(p, m)| p.iter().map(|v| v / m.sqrt()).collect())
            .collect();
        Ok(Self { mu, coeffs })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// ⟨u_n, Q u_m⟩
    pub fn form_gram(&self, form: &FractionalForm) -> Mat<f64> {
        let q = form.matrix();
        let n = self.len();
        let qu: Vec<Vec<f64>> = self
            .coeffs
            .iter()
            .map(|c| {
                let mut y = vec![0.0; c.len()];
                linalg::symv(&q, c, &mut y);
                y
            })
            .collect();
        Mat::from_fn(n, n, |i, j| linalg::dot(&self.coeffs[i], &qu[j]))
    }

    /// ρ at nodes 0..=m with trapezoid weights; the 2h sub-lattice is
    /// attached when m is even.
    pub fn density(&self, form: &FractionalForm) -> DensityField {
        let m = form.m;
        let h = form.h();
        let mut values = vec![0.0; m + 1];
        for c in &self.coeffs {
            for (j, v) in c.iter().enumerate() {
                values[j + 1] += v * v;
            }
        }
        let trap = |n: usize, h: f64| {
            (0..=n)
                .map(|j| if j == 0 || j == n { 0.5 * h } else { h })
                .collect::<Vec<_>>()
        };
        let mut d = DensityField::new(values.clone(), trap(m, h), self.len(), form.length, h);
        if m % 2 == 0 {
            let cv = values.iter().step_by(2).cloned().collect();
            d.coarse = Some(Box::new(DensityField::new(
                cv,
                trap(m / 2, 2.0 * h),
                self.len(),
                form.length,
                2.0 * h,
            )));
        }
        d
    }
}

/// Density of the cutoff lo < |2πξ|^{2s} ≤ hi at the nodes of a box
/// `box_factor`·L long, frequencies ξ = k/B.
fn cutoff_density(
    form: &FractionalForm,
    fam: &FractionalFamily,
    box_factor: usize,
    lo: f64,
    hi: f64,
) -> Vec<f64> {
    let m = form.m;
    let mm = box_factor * m;
    let h = form.h();
    let b = mm as f64 * h;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(mm);
    let inv = planner.plan_fft_inverse(mm);
    // |k| ≤ B·hi^{1/2s}/2π
    let kmax = (b * hi.powf(0.5 / form.s) / (2.0 * PI)).floor() as i64;
    let ks: Vec<i64> = (-kmax..=kmax)
        .filter(|k| {
            let sy = (2.0 * PI * k.unsigned_abs() as f64 / b).powf(2.0 * form.s);
            sy > lo && sy <= hi
        })
        .collect();
    let mut rho = vec![0.0; mm];
    for c in &fam.coeffs {
        let mut x = vec![C64::new(0.0, 0.0); mm];
        for (j, v) in c.iter().enumerate() {
            x[j + 1].re = *v;
        }
        fwd.process(&mut x);
        let mut spec = vec![C64::new(0.0, 0.0); mm];
        for &k in &ks {
            let r = k.rem_euclid(mm as i64) as usize;
            let uh = x[r] * (h * sinc(PI * k as f64 / mm as f64).powi(2));
            spec[r] += uh;
        }
        inv.process(&mut spec);
        for (r, z) in rho.iter_mut().zip(&spec) {
            let v = z.re / b;
            *r += v * v;
        }
    }
    rho
}

/// ‖Eu‖ form identity: xᵀQx against the padded Fourier sum, for u given at
/// nodes 0..=m (zero at both ends).
pub fn extension_isometry_check(u: &[f64], form: &FractionalForm) -> Report {
    let base = Report::new("extension_isometry")
        .param("m", form.m)
        .param("padding", form.padding);
    if u.len() != form.m + 1 {
        return base
            .with_status(Status::Rejected)
            .detail("reason", "expected values at nodes 0..=m");
    }
    if u[0] != 0.0 || u[form.m] != 0.0 {
        return base
            .with_status(Status::Rejected)
            .detail("reason", "support leaks outside the interval");
    }
    let x = &u[1..form.m];
    let mut y = vec![0.0; x.len()];
    linalg::symv(&form.matrix(), x, &mut y);
    let a = linalg::dot(x, &y);
    let b = form.form_by_transform(x);
    let rel = if a.abs().max(b.abs()) > 0.0 {
        (a - b).abs() / a.abs().max(b.abs())
    } else {
        0.0
    };
    let mut r = base
        .detail("form_value", a)
        .detail("fourier_value", b)
        .detail("relative_error", rel)
        .with_status(if rel <= 1e-10 {
            Status::Pass
        } else {
            Status::Fail
        });
    r.set_values(a, b, 0.0);
    r
}

/// λ_n L/(π n) at the given n.
pub fn weyl_ratio(form: &FractionalForm, mu: &[f64], n: usize) -> Report {
    let ratio = mu[n - 1] * form.length / (PI * n as f64);
    let mut r = Report::new("fractional_weyl")
        .param("n", n)
        .param("m", form.m)
        .detail("ratio", ratio)
        .with_status(if (ratio - 1.0).abs() <= 0.1 {
            Status::Pass
        } else {
            Status::Fail
        });
    r.set_values((ratio - 1.0).abs(), 0.1, 0.0);
    r
}

/// min eig ≥ 1/(Λ₁⁴ L) with 5% allowance.
pub fn spectral_gap_check(form: &FractionalForm, mu1: f64) -> Result<Report> {
    let c = SemiclassicalConstants::new(1)?;
    let low = 1.0 / (c.lambda_d.powi(4) * form.length);
    let ok = mu1 >= low * (1.0 - 0.05);
    let mut r = Report::new("fractional_gap")
        .param("m", form.m)
        .detail("ground_eigenvalue", mu1)
        .with_status(if ok { Status::Pass } else { Status::Fail });
    r.set_values(low, mu1, 0.0);
    Ok(r)
}

/// Largest change of the form entries when the padding doubles, relative to the diagonal.
pub fn padding_sensitivity(form: &FractionalForm) -> Result<Report> {
    let wide = assemble_form(form.length, form.m, 2 * form.padding, form.s)?;
    let d = form
        .column
        .iter()
        .zip(&wide.column)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / form.column[0].abs();
    Ok(Report::upper_bound("fractional_padding", d, 0.01, 0.0, 0.0)
        .param("padding", form.padding)
        .param("m", form.m))
}

/// Cutoff density bounds on the interval, with the half-padded box as discretization estimate.
pub fn check_lemma34_d1(
    form: &FractionalForm,
    fam: &FractionalFamily,
    spec: &CutoffSpec,
) -> Result<(Report, Report)> {
    spec.validate()?;
    let (d, l) = (spec.delta, spec.ell);
    let low = |p: usize| cutoff_density(form, fam, p, -1.0, d);
    let band = |p: usize| cutoff_density(form, fam, p, d, l);
    let vmax = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    let (mb, ml) = (vmax(band(spec.padding)), vmax(low(spec.padding)));
    let disc = if spec.padding >= 4 {
        let (cb, cl) = (vmax(band(spec.padding / 2)), vmax(low(spec.padding / 2)));
        (
            (mb - cb).abs() / mb.max(1e-300),
            (ml - cl).abs() / ml.max(1e-300),
        )
    } else {
        (0.0, 0.0)
    };
    let (b, lo) = lemma34_reports(mb, ml, disc, spec, 1, form.length)?;
    Ok((b.param("N", fam.len()), lo.param("N", fam.len())))
}

/// Layer-cake identity for the half-Laplacian and the Rumin-type lower bound.
pub fn rumin_d1(form: &FractionalForm, fam: &FractionalFamily) -> (Report, Report) {
    let mm = form.fft_size();
    let h = form.h();
    let b = form.side();
    let mut energy = vec![0.0; mm];
    for c in &fam.coeffs {
        for (e, z) in energy.iter_mut().zip(form.coefficient_dft(c)) {
            *e += z.norm_sqr();
        }
    }
    let exact: f64 = energy.iter().zip(&form.weight).map(|(e, w)| e * w).sum();
    // explicit frequencies |k| ≤ 64M; the aliased remainder decays like 1/k²
    let kmax = 64 * mm as i64;
    let mut kappa = Vec::with_capacity(2 * kmax as usize + 1);
    let mut w = Vec::with_capacity(kappa.capacity());
    for k in -kmax..=kmax {
        let r = k.rem_euclid(mm as i64) as usize;
        let sy = (2.0 * PI * k.unsigned_abs() as f64 / b).powf(2.0 * form.s);
        kappa.push(sy);
        w.push(h * h * sinc(PI * k as f64 / mm as f64).powi(4) * energy[r] / b);
    }
    let (direct, cake) = layer_cake(&kappa, &w);
    let truncation = (exact - direct) / exact;
    let rel = (cake - direct).abs() / direct;
    let ok = rel <= 1e-10 && truncation.abs() <= 1e-6;
    let mut identity = Report::new("rumin_identity_d1")
        .param("N", fam.len())
        .param("m", form.m)
        .detail("layer_cake", cake)
        .detail("frequency_sum", direct)
        .detail("form_trace", exact)
        .detail("truncation", truncation)
        .with_status(if ok { Status::Pass } else { Status::Fail });
    identity.set_values(cake, exact, 0.0);

    let rho: Vec<f64> = {
        let mut r = vec![0.0; mm];
        for c in &fam.coeffs {
            for (j, v) in c.iter().enumerate() {
                r[j + 1] += v * v;
            }
        }
        r
    };
    let top = (PI / h).powf(2.0 * form.s) * 10.0;
    let levels = log_levels((2.0 * PI / b).powf(2.0 * form.s), top, RUMIN_LEVELS);
    let vals: Vec<f64> = levels
        .iter()
        .map(|&l| {
            let below = cutoff_density(form, fam, form.padding, -1.0, l);
            rho.iter()
                .zip(&below)
                .map(|(a, c)| {
                    let d = a.sqrt() - c.sqrt();
                    if d > 0.0 {
                        d * d
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                * h
        })
        .collect();
    let mut lower = 0.0;
    for i in 1..levels.len() {
        lower += 0.5
            * (levels[i].ln() - levels[i - 1].ln())
            * (vals[i] * levels[i] + vals[i - 1] * levels[i - 1]);
    }
    let n = fam.len() as f64;
    let ineq = Report::upper_bound("rumin_lower_bound_d1", lower, n, 0.0, 0.0)
        .param("N", fam.len())
        .param("levels", levels.len());
    (identity, ineq)
}

/// Parameters of the d = 1 pipeline.
#[derive(Debug, Clone, Copy)]
pub struct D1Params {
    pub length: f64,
    pub m: usize,
    pub padding: usize,
    pub n: usize,
    pub alpha: f64,
    pub ell: f64,
    pub seed: u64,
}

impl D1Params {
    pub fn new(length: f64, m: usize, n: usize, alpha: f64) -> Self {
        Self {
            length,
            m,
            padding: 4,
            n,
            alpha,
            ell: 1e3,
            seed: 7,
        }
    }
}

/// Interval suite: the log bound, the cutoff bounds and the supporting form checks.
pub fn run_d1_suite(p: &D1Params) -> Result<Vec<Report>> {
    if p.n * 8 > p.m {
        return invalid(format!("N = {} exceeds m/8", p.n));
    }
    let form = assemble_halflap(p.length, p.m, p.padding)?;
    let weyl_n = 64.min(p.m / 16).max(1);
    let fam_all = FractionalFamily::new(&form, weyl_n.max(p.n))?;
    let fam = FractionalFamily {
        mu: fam_all.mu[..p.n].to_vec(),
        coeffs: fam_all.coeffs[..p.n].to_vec(),
    };
    let mut out = Vec::new();
    let rho = fam.density(&form);
    let f = mt_functional(&rho, p.alpha / (p.n as f64).ln().max(f64::MIN_POSITIVE));
    out.push(check_thm31(&rho, p.alpha, p.n, 1).detail("functional", f.value()));
    let spec = CutoffSpec {
        delta: fam.mu[0] / 2.0,
        ell: p.ell,
        s: 0.5,
        padding: p.padding,
    };
    let (b, l) = check_lemma34_d1(&form, &fam, &spec)?;
    out.push(b);
    out.push(l);
    let (id, ineq) = rumin_d1(&form, &fam);
    out.push(id);
    out.push(ineq);
    out.push(constraint_report(&fam.form_gram(&form), "fractional"));
    out.push(weyl_ratio(&form, &fam_all.mu, weyl_n));
    out.push(spectral_gap_check(&form, fam.mu[0])?);
    out.push(padding_sensitivity(&form)?);
    // isometry on the ground state and on a seeded random interior function
    let mut u = vec![0.0; p.m + 1];
    u[1..p.m].copy_from_slice(&fam.coeffs[0]);
    out.push(extension_isometry_check(&u, &form).param("input", "ground_state"));
    let mut rng = SplitMix64::derive(p.seed, "fractional-isometry");
    for v in u[1..p.m].iter_mut() {
        *v = rng.next_normal();
    }
    out.push(extension_isometry_check(&u, &form).param("input", "random"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_one_is_stiffness() {
        let f = assemble_form(1.0, 32, 4, 1.0).unwrap();
        let h = f.h();
        assert!((f.column[0] - 2.0 / h).abs() < 1e-9 * f.column[0]);
        assert!((f.column[1] + 1.0 / h).abs() < 1e-9 * f.column[0]);
        assert!(f.column[2..].iter().all(|q| q.abs() < 1e-9 * f.column[0]));
    }

    #[test]
    fn form_is_positive_and_eigs_increase() {
        let f = assemble_halflap(1.0, 64, 4).unwrap();
        let (mu, _) = eigenpairs(&f, 63).unwrap();
        assert!(mu[0] > 0.0);
        assert!(mu.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_function_isometry() {
        let f = assemble_halflap(1.0, 16, 4).unwrap();
        let r = extension_isometry_check(&vec![0.0; 17], &f);
        assert!(r.passed() && r.lhs == 0.0);
        let mut u = vec![0.0; 17];
        u[0] = 1.0;
        assert_eq!(extension_isometry_check(&u, &f).status, Status::Rejected);
    }
}
