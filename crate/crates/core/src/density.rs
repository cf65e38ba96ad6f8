//! One-body densities ρ = Σ|u_n|², the exponential-integral functional and
//! the bound checks built on it.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::family::{Base, Family};
use crate::geometry::{DomainKind, Grid};
use crate::report::{Report, Status};
use crate::special::SemiclassicalConstants;
use crate::spectral::SpectralBasis;

/// Exponent above which the functional is reported as saturated.
pub const SATURATION: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub family_size: usize,
    pub measure: f64,
    pub h: f64,
    /// The same density on the lattice of spacing 2h, when that lattice
    /// is a sub-lattice of this one.
    pub coarse: Option<Box<DensityField>>,
}

impl DensityField {
    pub fn new(
        values: Vec<f64>,
        weights: Vec<f64>,
        family_size: usize,
        measure: f64,
        h: f64,
    ) -> Self {
        Self {
            values,
            weights,
            family_size,
            measure,
            h,
            coarse: None,
        }
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| r * w)
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.total_weight()
    }
}

/// Coarse grid of spacing 2h on the same domain, if it nests in `g`.
fn coarse_grid(g: &Grid, kind: &DomainKind) -> Option<Grid> {
    match kind {
        DomainKind::Rectangle { a, b } => Grid::rectangle(*a, *b, 2.0 * g.h).ok(),
        DomainKind::Disk { radius } => Grid::disk(*radius, 2.0 * g.h).ok(),
        DomainKind::Mask(_) => None,
    }
}

fn subsample(fine: &Grid, coarse: &Grid, v: &[f64]) -> Option<Vec<f64>> {
    let mut out = vec![0.0; coarse.len()];
    for (p, o) in out.iter_mut().enumerate() {
        let (x, y) = coarse.coords(p);
        let fx = (x - fine.origin[0]) / fine.h;
        let fy = (y - fine.origin[1]) / fine.h;
        let (ix, iy) = (fx.round(), fy.round());
        if (fx - ix).abs() > 1e-6 || (fy - iy).abs() > 1e-6 {
            return None;
        }
        if ix >= 0.0 && iy >= 0.0 && (ix as usize) < fine.nx && (iy as usize) < fine.ny {
            *o = v[iy as usize * fine.nx + ix as usize];
        }
    }
    Some(out)
}

fn separable_density(
    f: &Family,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    terms: &[(usize, usize)],
) -> Vec<f64> {
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    let mut w = vec![vec![0.0; ys.len()]; xs.len()];
    for (&(a, b), c) in terms.iter().zip(&f.coeffs) {
        w[a][b] += c * c;
    }
    (0..ny)
        .into_par_iter()
        .flat_map_iter(|iy| {
            let t: Vec<f64> = w
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(ys)
                        .map(|(wab, yb)| wab * yb[iy] * yb[iy])
                        .sum()
                })
                .collect();
            (0..nx).map(move |ix| {
                xs.iter()
                    .zip(&t)
                    .map(|(xa, ta)| xa[ix] * xa[ix] * ta)
                    .sum::<f64>()
            })
        })
        .collect()
}

/// Pointwise Σ|u_n|² with a fixed summation order.
pub fn density_on(f: &Family, kind: &DomainKind) -> DensityField {
    let values = match (&f.base, &f.mix) {
        (Base::Separable { xs, ys, terms }, None) => separable_density(f, xs, ys, terms),
        (Base::Sampled(b), None) => (0..f.grid.len())
            .into_par_iter()
            .map(|p| {
                b.iter()
                    .zip(&f.coeffs)
                    .map(|(u, c)| c * c * u[p] * u[p])
                    .sum()
            })
            .collect(),
        _ => {
            let m = f.members();
            (0..f.grid.len())
                .into_par_iter()
                .map(|p| m.iter().map(|u| u[p] * u[p]).sum())
                .collect()
        }
    };
    let mut d = DensityField::new(values, f.grid.weights.clone(), f.len(), f.measure, f.grid.h);
    if let Some(cg) = coarse_grid(&f.grid, kind) {
        if let Some(v) = subsample(&f.grid, &cg, &d.values) {
            d.coarse = Some(Box::new(DensityField::new(
                v,
                cg.weights,
                f.len(),
                f.measure,
                cg.h,
            )));
        }
    }
    d
}

/// Density of a family built from a spectral basis (attaches the 2h estimate).
pub fn density(f: &Family, basis: &SpectralBasis) -> DensityField {
    density_on(f, &basis.domain.kind)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    Value { value: f64, ln_value: f64 },
    Saturated { ln_value: f64 },
}

impl Functional {
    pub fn ln(&self) -> f64 {
        match self {
            Functional::Value { ln_value, .. } | Functional::Saturated { ln_value } => *ln_value,
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Functional::Value { value, .. } => *value,
            Functional::Saturated { .. } => f64::INFINITY,
        }
    }
}

/// (1/|Ω|)∫exp(weight·ρ) by grid quadrature, with |Ω| the total quadrature
/// weight, evaluated in log-sum-exp form.
pub fn mt_functional(rho: &DensityField, weight: f64) -> Functional {
    let top = weight * rho.max();
    let s: f64 = rho
        .values
        .iter()
        .zip(&rho.weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(r, w)| w * (weight * r - top).exp())
        .sum();
    let ln_value = top + s.ln() - rho.total_weight().ln();
    if top > SATURATION {
        Functional::Saturated { ln_value }
    } else {
        Functional::Value {
            value: ln_value.exp(),
            ln_value,
        }
    }
}

/// Functional value and the relative change from the 2h lattice.
fn with_richardson(rho: &DensityField, weight: f64) -> (Functional, f64) {
    let f = mt_functional(rho, weight);
    let disc = match &rho.coarse {
        Some(c) => {
            let g = mt_functional(c, weight);
            ((g.ln() - f.ln()).exp() - 1.0).abs()
        }
        None => 0.0,
    };
    (f, disc)
}

/// exp(α/(|Ω| ln N)·∫ρ), the lower bound from Jensen's inequality.
pub fn jensen_lower_bound(rho: &DensityField, alpha: f64, n: usize) -> f64 {
    (alpha / (n as f64).ln() * rho.mean()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub n: usize,
}

impl MtParams {
    /// κ = 1 − (1−ε)^{1/4}
    pub fn kappa(&self) -> f64 {
        1.0 - (1.0 - self.epsilon).powf(0.25)
    }

    /// β = α/(4π(ln N − 1)); at most 1 above the N-threshold.
    pub fn beta(&self) -> f64 {
        self.alpha / (4.0 * PI * ((self.n as f64).ln() - 1.0))
    }
}

fn finish(mut r: Report, f: Functional, rhs: f64, ln_rhs: f64, disc: f64) -> Report {
    r.set_values(f.value(), rhs, disc);
    r.ln_lhs = f.ln();
    r.ln_rhs = ln_rhs;
    r.status = match f {
        Functional::Saturated { .. } => Status::Saturated,
        Functional::Value { .. } => {
            if f.ln() <= ln_rhs {
                Status::Pass
            } else {
                Status::Fail
            }
        }
    };
    r
}

/// (1/|Ω|)∫exp(4π(1−ε)ρ) ≤ e⁸N/ε⁴ for ε ∈ (0, 1/4].
pub fn check_thm1_pointbound(rho: &DensityField, p: &MtParams) -> Report {
    let base = Report::new("thm1_pointbound")
        .param("N", p.n)
        .param("epsilon", p.epsilon)
        .param("h", rho.h);
    if !(p.epsilon > 0.0 && p.epsilon <= 0.25) || p.n == 0 {
        return base
            .with_status(Status::Rejected)
            .detail("reason", "requires 0 < eps <= 1/4 and N >= 1");
    }
    let w = 4.0 * PI * (1.0 - p.epsilon);
    let (f, disc) = with_richardson(rho, w);
    let ln_rhs = 8.0 + (p.n as f64).ln() - 4.0 * p.epsilon.ln();
    finish(base, f, ln_rhs.exp(), ln_rhs, disc).detail("kappa", p.kappa())
}

/// max{e⁴, exp(a + 1)}, the N-threshold with a the exponent constant.
pub fn log_bound_threshold(a: f64) -> f64 {
    (4.0f64).max(a + 1.0).exp()
}

/// (1/|Ω|)∫exp(α ρ/ln N) ≤ exp((αω_d/(2π)^d)[1 + 4(2π)^d/ω_d · ln ln N/ln N]).
/// For d = 2 the factor 4(2π)²/ω₂ is 16π > 14, so the d = 2 log bound uses
/// its own constant 14 (see `check_thm1_logbound`).
pub fn check_thm31(rho: &DensityField, alpha: f64, n: usize, d: usize) -> Report {
    let base = Report::new("thm31")
        .param("alpha", alpha)
        .param("N", n)
        .param("d", d)
        .param("h", rho.h);
    let c = match SemiclassicalConstants::new(d) {
        Ok(c) => c,
        Err(e) => {
            return base
                .with_status(Status::Rejected)
                .detail("reason", e.to_string())
        }
    };
    let sc = c.semiclassical();
    log_bound(base, rho, alpha, n, sc, 4.0 * c.mt_constant)
}

/// Log-form bound with constant 14 in d = 2.
pub fn check_thm1_logbound(rho: &DensityField, alpha: f64, n: usize) -> Report {
    let base = Report::new("thm1_logbound")
        .param("alpha", alpha)
        .param("N", n)
        .param("h", rho.h);
    log_bound(base, rho, alpha, n, 1.0 / (4.0 * PI), 14.0)
}

fn log_bound(base: Report, rho: &DensityField, alpha: f64, n: usize, sc: f64, k: f64) -> Report {
    if !(alpha > 0.0) {
        return base
            .with_status(Status::Rejected)
            .detail("reason", "alpha must be positive");
    }
    let threshold = log_bound_threshold(alpha * sc);
    if (n as f64) < threshold {
        return base
            .with_status(Status::Rejected)
            .detail("reason", format!("N below threshold {threshold:.6}"));
    }
    let ln_n = (n as f64).ln();
    let (f, disc) = with_richardson(rho, alpha / ln_n);
    let ln_rhs = alpha * sc * (1.0 + k * ln_n.ln() / ln_n);
    let jensen = jensen_lower_bound(rho, alpha, n);
    finish(base, f, ln_rhs.exp(), ln_rhs, disc)
        .detail("jensen_lower", jensen)
        .detail("semiclassical_constant", sc)
        .detail("threshold", threshold)
}

/// Potential-case log bound: LHS ≤ exp(α·sc·[1 + C/(ln N)^t]); records the minimal C.
pub fn check_thm12(rho: &DensityField, alpha: f64, n: usize, d: usize, t: f64, c: f64) -> Report {
    let base = Report::new("thm12")
        .param("alpha", alpha)
        .param("N", n)
        .param("t", t)
        .param("C", c)
        .param("h", rho.h);
    let sc = match SemiclassicalConstants::new(d) {
        Ok(k) => k.semiclassical(),
        Err(e) => {
            return base
                .with_status(Status::Rejected)
                .detail("reason", e.to_string())
        }
    };
    if n < 2 || !(alpha > 0.0) {
        return base
            .with_status(Status::Rejected)
            .detail("reason", "requires N >= 2 and alpha > 0");
    }
    let ln_n = (n as f64).ln();
    let (f, disc) = with_richardson(rho, alpha / ln_n);
    let ln_rhs = alpha * sc * (1.0 + c / ln_n.powf(t));
    let c_min = minimal_c(f.ln(), alpha * sc, ln_n, t);
    finish(base, f, ln_rhs.exp(), ln_rhs, disc).detail("c_min", c_min)
}

/// Smallest C with ln LHS ≤ α·sc·(1 + C/(ln N)^t).
pub fn minimal_c(ln_lhs: f64, a: f64, ln_n: f64, t: f64) -> f64 {
    (ln_lhs / a - 1.0).max(0.0) * ln_n.powf(t)
}

/// Sweep of the potential-case bound over N; PASS iff every point passes at its own
/// minimal C and the minimal C is non-increasing in N.
pub fn thm12_sweep(points: &[(usize, DensityField)], alpha: f64, d: usize, t: f64) -> Report {
    let mut cs = Vec::new();
    let mut all = true;
    for (n, rho) in points {
        let probe = check_thm12(rho, alpha, *n, d, t, 0.0);
        let c = probe
            .details
            .get("c_min")
            .and_then(|v| v.as_f64())
            .unwrap_or(f64::NAN);
        let r = check_thm12(rho, alpha, *n, d, t, c * (1.0 + 1e-12) + 1e-15);
        all &= r.passed();
        cs.push(c);
    }
    let monotone = cs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
    let ns: Vec<usize> = points.iter().map(|p| p.0).collect();
    let status = if all && monotone {
        Status::Pass
    } else {
        Status::Fail
    };
    let mut r = Report::new("thm12_sweep")
        .param("alpha", alpha)
        .param("t", t)
        .param("N", ns)
        .detail("c_min", cs.clone())
        .detail("non_increasing", monotone)
        .with_status(status);
    r.set_values(
        *cs.last().unwrap_or(&f64::NAN),
        *cs.first().unwrap_or(&f64::NAN),
        0.0,
    );
    r
}

/// One row of the Jensen/log-bound sandwich.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub n: usize,
    pub jensen_lower: f64,
    pub computed: f64,
    pub upper: f64,
    pub ln_gap: f64,
    pub ln_allowance: f64,
}

/// Sandwich jensen ≤ computed ≤ upper for eigen families of growing N, and
/// |ln computed − α/4π| ≤ (α/4π)·14 ln ln N/ln N.
pub fn corollary_sandwich(
    basis: &SpectralBasis,
    alpha: f64,
    ns: &[usize],
) -> Result<(Vec<SandwichRow>, Vec<Report>)> {
    let dens = |n: usize| -> Result<DensityField> {
        let f = crate::family::family_from_eigenbasis(basis, n)?;
        Ok(density(&f, basis))
    };
    sandwich_rows(alpha, ns, dens)
}

pub fn sandwich_rows(
    alpha: f64,
    ns: &[usize],
    mut dens: impl FnMut(usize) -> Result<DensityField>,
) -> Result<(Vec<SandwichRow>, Vec<Report>)> {
    if !(alpha > 0.0) {
        return invalid("alpha must be positive");
    }
    let a = alpha / (4.0 * PI);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &n in ns {
        let base = Report::new("corollary_sandwich")
            .param("alpha", alpha)
            .param("N", n);
        if (n as f64) < log_bound_threshold(a) {
            reports.push(
                base.with_status(Status::Rejected)
                    .detail("reason", "N below threshold"),
            );
            continue;
        }
        let rho = dens(n)?;
        let ln_n = (n as f64).ln();
        let (f, disc) = with_richardson(&rho, alpha / ln_n);
        let lower = jensen_lower_bound(&rho, alpha, n);
        let allowance = a * 14.0 * ln_n.ln() / ln_n;
        let ln_upper = a + allowance;
        let gap = (f.ln() - a).abs();
        let ok = lower.ln() <= f.ln() * (1.0 + 1e-12) && f.ln() <= ln_upper && gap <= allowance;
        let mut r = finish(base, f, ln_upper.exp(), ln_upper, disc)
            .detail("jensen_lower", lower)
            .detail("ln_gap", gap)
            .detail("ln_allowance", allowance);
        if r.status == Status::Pass && !ok {
            r.status = Status::Fail;
        }
        rows.push(SandwichRow {
            n,
            jensen_lower: lower,
            computed: f.value(),
            upper: ln_upper.exp(),
            ln_gap: gap,
            ln_allowance: allowance,
        });
        reports.push(r);
    }
    Ok((rows, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::family_from_eigenbasis;
    use crate::spectral::eigenbasis_rectangle;

    fn field(v: Vec<f64>) -> DensityField {
        let n = v.len();
        DensityField::new(v, vec![1.0 / n as f64; n], 1, 1.0, 1.0)
    }

    #[test]
    fn functional_trivial_cases() {
        let z = field(vec![0.0; 10]);
        assert!((mt_functional(&z, 3.0).value() - 1.0).abs() < 1e-15);
        let r = field(vec![0.3, 0.1, 2.0]);
        assert!((mt_functional(&r, 0.0).value() - 1.0).abs() < 1e-15);
        let c = field(vec![0.7; 5]);
        let j = jensen_lower_bound(&c, 4.0, 100);
        let f = mt_functional(&c, 4.0 / (100f64).ln()).value();
        assert!((j - f).abs() < 1e-12 * f);
        assert!(matches!(
            mt_functional(&field(vec![1.0, 800.0]), 1.0),
            Functional::Saturated { .. }
        ));
    }

    #[test]
    fn ground_state_density() {
        let b = eigenbasis_rectangle(1.0, 1.0, 1, 1.0 / 64.0).unwrap();
        let f = family_from_eigenbasis(&b, 1).unwrap();
        let rho = density(&f, &b);
        assert!((rho.max() - 4.0 / (2.0 * PI * PI)).abs() < 1e-12);
        assert!((rho.integral() - 1.0 / (2.0 * PI * PI)).abs() < 1e-12);
        let c = rho.coarse.as_ref().unwrap();
        assert!((c.max() - rho.max()).abs() < 1e-15 && (c.h - 1.0 / 32.0).abs() < 1e-15);
        let v = mt_functional(&rho, 3.0 * PI).value();
        assert!(v >= 1.0 && v <= (3.0 * PI * 0.2026f64).exp());
    }

    #[test]
    fn thresholds_and_rejections() {
        let b = eigenbasis_rectangle(1.0, 1.0, 54, 1.0 / 64.0).unwrap();
        let f = family_from_eigenbasis(&b, 54).unwrap();
        let rho = density(&f, &b);
        assert_eq!(
            check_thm1_logbound(&rho, 4.0 * PI, 54).status,
            Status::Rejected
        );
        let p = MtParams {
            alpha: 4.0 * PI,
            epsilon: 0.26,
            n: 54,
        };
        assert_eq!(check_thm1_pointbound(&rho, &p).status, Status::Rejected);
        let p = MtParams { epsilon: 0.25, ..p };
        assert!(check_thm1_pointbound(&rho, &p).passed());
    }

    #[test]
    fn kappa_range() {
        for i in 1..=100 {
            let e = 0.25 * i as f64 / 100.0;
            let k = MtParams {
                alpha: 1.0,
                epsilon: e,
                n: 100,
            }
            .kappa();
            assert!(k > e / 4.0 && k < 1.0);
        }
    }
}
