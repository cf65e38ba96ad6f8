//! Sharp momentum cutoffs of zero-extended families on a periodic box.
//!
//! Discrete model: a family on a grid of spacing h sits in an M × M box
//! (M a power of two, box side B = M h). Coefficients are û = h² DFT(u) and
//! the momentum symbol is the lattice symbol κ(k) = (2/h)² Σ_a sin²(π k_a/M)
//! of the forward-difference gradient, so that (1/B²) Σ κ |û|² equals the
//! discrete ‖∇u‖² exactly.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::error::{invalid, io_err, Result};
use crate::family::{Base, Family};
use crate::report::{Report, Status};
use crate::rng::SplitMix64;
use crate::special::{z01, SemiclassicalConstants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub delta: f64,
    pub ell: f64,
    /// Symbol exponent: cutoffs are on |2πξ|^{2s}.
    pub s: f64,
    pub padding: usize,
}

impl CutoffSpec {
    pub fn new(delta: f64, ell: f64, padding: usize) -> Result<Self> {
        let c = Self {
            delta,
            ell,
            s: 1.0,
            padding,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.padding < 2 {
            return invalid(format!("padding {} < 2", self.padding));
        }
        if !(self.delta > 0.0 && self.ell > self.delta && self.ell.is_finite()) {
            return invalid(format!(
                "need 0 < delta < ell (got {}, {})",
                self.delta, self.ell
            ));
        }
        Ok(())
    }

    /// Power-of-two transform length for a domain spanning `span` steps.
    pub fn fft_size(&self, span: usize) -> usize {
        (self.padding * span.max(1)).next_power_of_two()
    }

    pub fn with_padding(&self, padding: usize) -> Self {
        Self { padding, ..*self }
    }
}

/// Cutoff densities on the full box, row-major (index iy·m + ix); box node
/// (ix, iy) coincides with grid node (ix, iy).
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffDensities {
    pub m: usize,
    pub h: f64,
    pub rho_low: Vec<f64>,
    pub rho_band: Vec<f64>,
    /// Σ|u_n^{≤ℓ}|²
    pub rho_le_ell: Vec<f64>,
    /// Σ|u_n − u_n^{≤ℓ}|²
    pub rho_high_residual: Vec<f64>,
    /// max_n relative Plancherel defect ‖u‖² vs low + band + high parts.
    pub plancherel_defect: f64,
    pub members: usize,
}

fn vmax(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

impl CutoffDensities {
    pub fn max_low(&self) -> f64 {
        vmax(&self.rho_low)
    }

    pub fn max_band(&self) -> f64 {
        vmax(&self.rho_band)
    }

    /// Restriction of a box field to the nx × ny grid.
    pub fn restrict(&self, field: &[f64], nx: usize, ny: usize) -> Vec<f64> {
        let mut out = vec![0.0; nx * ny];
        for iy in 0..ny.min(self.m) {
            for ix in 0..nx.min(self.m) {
                out[iy * nx + ix] = field[iy * self.m + ix];
            }
        }
        out
    }
}

/// Periodic M × M transform box with lattice symbol.
pub struct BoxModel {
    pub m: usize,
    pub h: f64,
    /// (2/h)² sin²(πk/M)
    pub kappa1: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl BoxModel {
    pub fn new(m: usize, h: f64) -> Self {
        let mut p = FftPlanner::new();
        let s = (2.0 / h) * (2.0 / h);
        let kappa1 = (0..m)
            .map(|k| s * (PI * k as f64 / m as f64).sin().powi(2))
            .collect();
        Self {
            m,
            h,
            kappa1,
            fwd: p.plan_fft_forward(m),
            inv: p.plan_fft_inverse(m),
        }
    }

    pub fn side(&self) -> f64 {
        self.m as f64 * self.h
    }

    pub fn kappa(&self, kx: usize, ky: usize) -> f64 {
        self.kappa1[kx] + self.kappa1[ky]
    }

    /// h·DFT of a 1-D profile placed at box indices 0..len.
    fn factor_hat(&self, f: &[f64]) -> Vec<C64> {
        let mut b = vec![C64::new(0.0, 0.0); self.m];
        for (x, v) in b.iter_mut().zip(f) {
            x.re = *v;
        }
        self.fwd.process(&mut b);
        b.iter_mut().for_each(|z| *z *= self.h);
        b
    }

    /// h²·DFT of a grid field (nx × ny, row-major), returned row-major [ky][kx].
    fn full_hat(&self, u: &[f64], nx: usize, ny: usize) -> Vec<C64> {
        let m = self.m;
        let mut a = vec![C64::new(0.0, 0.0); m * m];
        for iy in 0..ny {
            for ix in 0..nx {
                a[iy * m + ix].re = u[iy * nx + ix];
            }
        }
        self.fwd.process(&mut a);
        let mut t = transpose(&a, m);
        self.fwd.process(&mut t);
        let mut out = transpose(&t, m);
        let s = self.h * self.h;
        out.iter_mut().for_each(|z| *z *= s);
        out
    }

    /// Inverse transform of the spectrum given row by row, restricted to the
    /// rows `rows` and the mask `keep(kx, ky)`. Output column-major [x][y].
    fn synthesize(
        &self,
        row: &dyn Fn(usize, &mut [C64]),
        rows: &[usize],
        keep: &dyn Fn(usize, usize) -> bool,
    ) -> Vec<C64> {
        let m = self.m;
        let mut rb = vec![C64::new(0.0, 0.0); rows.len() * m];
        for (r, &ky) in rows.iter().enumerate() {
            let seg = &mut rb[r * m..(r + 1) * m];
            row(ky, seg);
            for (kx, z) in seg.iter_mut().enumerate() {
                if !keep(kx, ky) {
                    *z = C64::new(0.0, 0.0);
                }
            }
        }
        if !rows.is_empty() {
            self.inv.process(&mut rb);
        }
        let mut cb = vec![C64::new(0.0, 0.0); m * m];
        for (r, &ky) in rows.iter().enumerate() {
            for x in 0..m {
                cb[x * m + ky] = rb[r * m + x];
            }
        }
        if !rows.is_empty() {
            self.inv.process(&mut cb);
        }
        let s = 1.0 / (self.side() * self.side());
        cb.iter_mut().for_each(|z| *z *= s);
        cb
    }

    fn rows_below(&self, level: f64) -> Vec<usize> {
        (0..self.m).filter(|&k| self.kappa1[k] <= level).collect()
    }
}

fn transpose(a: &[C64], m: usize) -> Vec<C64> {
    let mut t = vec![C64::new(0.0, 0.0); m * m];
    for i in 0..m {
        for j in 0..m {
            t[j * m + i] = a[i * m + j];
        }
    }
    t
}

/// Coefficient representation of one member.
enum Spectrum {
    /// Σ c·X̂_a(kx)·Ŷ_b(ky)
    Separable(Vec<(f64, usize, usize)>),
    Full(Vec<C64>),
}

/// Spectra of all members of a family in a box.
pub struct FamilySpectra<'a> {
    pub model: BoxModel,
    family: &'a Family,
    xhat: Vec<Vec<C64>>,
    yhat: Vec<Vec<C64>>,
    samples: Option<Vec<Vec<f64>>>,
    coeffs: Vec<Vec<(f64, usize)>>,
}

/// Number of lattice steps covered by the weighted part of the grid.
pub fn grid_span(f: &Family) -> usize {
    let g = &f.grid;
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
    for p in 0..g.len() {
        if g.weights[p] > 0.0 {
            let (ix, iy) = (p % g.nx, p / g.nx);
            x0 = x0.min(ix);
            x1 = x1.max(ix);
            y0 = y0.min(iy);
            y1 = y1.max(iy);
        }
    }
    if x0 == usize::MAX {
        return 1;
    }
    (x1 - x0).max(y1 - y0).max(1)
}

impl<'a> FamilySpectra<'a> {
    pub fn new(f: &'a Family, padding: usize) -> Result<Self> {
        if padding < 2 {
            return invalid(format!("padding {padding} < 2"));
        }
        let m = (padding * grid_span(f)).next_power_of_two();
        if m < f.grid.nx.max(f.grid.ny) + 1 {
            return invalid("transform box does not contain the grid with a zero ring");
        }
        let model = BoxModel::new(m, f.grid.h);
        let e = f.coefficient_matrix();
        let coeffs: Vec<Vec<(f64, usize)>> = (0..e.nrows())
            .map(|i| {
                (0..e.ncols())
                    .filter(|&k| e[(i, k)] != 0.0)
                    .map(|k| (e[(i, k)], k))
                    .collect()
            })
            .collect();
        let (xhat, yhat, samples) = match &f.base {
            Base::Separable { xs, ys, .. } => (
                xs.iter().map(|x| model.factor_hat(x)).collect(),
                ys.iter().map(|y| model.factor_hat(y)).collect(),
                None,
            ),
            Base::Sampled(_) => (Vec::new(), Vec::new(), Some(f.members())),
        };
        Ok(Self {
            model,
            family: f,
            xhat,
            yhat,
            samples,
            coeffs,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn spectrum(&self, n: usize) -> Spectrum {
        match (&self.family.base, &self.samples) {
            (Base::Separable { terms, .. }, _) => Spectrum::Separable(
                self.coeffs[n]
                    .iter()
                    .map(|&(c, k)| (c, terms[k].0, terms[k].1))
                    .collect(),
            ),
            (_, Some(s)) => Spectrum::Full(self.model.full_hat(
                &s[n],
                self.family.grid.nx,
                self.family.grid.ny,
            )),
            _ => unreachable!(),
        }
    }

    fn fill_row(&self, sp: &Spectrum, ky: usize, out: &mut [C64]) {
        let m = self.model.m;
        match sp {
            Spectrum::Separable(t) => {
                out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                for &(c, a, b) in t {
                    let yb = self.yhat[b][ky] * c;
                    for (z, x) in out.iter_mut().zip(&self.xhat[a]) {
                        *z += yb * x;
                    }
                }
            }
            Spectrum::Full(s) => out.copy_from_slice(&s[ky * m..(ky + 1) * m]),
        }
    }

    /// Member samples in the box, column-major [x][y].
    fn box_samples(&self, n: usize) -> Vec<f64> {
        let g = &self.family.grid;
        let m = self.model.m;
        let u = match &self.samples {
            Some(s) => s[n].clone(),
            None => {
                let mut u = vec![0.0; g.len()];
                let e = &self.coeffs[n];
                for &(c, k) in e {
                    let b = self.family.base_sample(k);
                    u.iter_mut().zip(&b).for_each(|(x, y)| *x += c * y);
                }
                u
            }
        };
        let mut out = vec![0.0; m * m];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                out[ix * m + iy] = u[iy * g.nx + ix];
            }
        }
        out
    }

    /// Σ_k w(κ(k))|û_n(k)|²/B² over rows of the spectrum.
    fn spectral_sum(&self, sp: &Spectrum, w: &dyn Fn(f64) -> f64) -> f64 {
        let m = self.model.m;
        let mut row = vec![C64::new(0.0, 0.0); m];
        let mut s = 0.0;
        for ky in 0..m {
            self.fill_row(sp, ky, &mut row);
            for (kx, z) in row.iter().enumerate() {
                let wk = w(self.model.kappa(kx, ky));
                if wk != 0.0 {
                    s += wk * z.norm_sqr();
                }
            }
        }
        s / (self.model.side() * self.model.side())
    }

    /// Per-frequency tail weights Σ_n |û_n(k)|²/B², row-major [ky][kx].
    pub fn energy_by_frequency(&self) -> Vec<f64> {
        let m = self.model.m;
        let mut acc = vec![0.0; m * m];
        let mut row = vec![C64::new(0.0, 0.0); m];
        let b2 = self.model.side() * self.model.side();
        for n in 0..self.len() {
            let sp = self.spectrum(n);
            for ky in 0..m {
                self.fill_row(&sp, ky, &mut row);
                for (kx, z) in row.iter().enumerate() {
                    acc[ky * m + kx] += z.norm_sqr() / b2;
                }
            }
        }
        acc
    }

    /// Inverse transform of a pair of members (b may be absent) through
    /// the mask; returns column-major complex field a + i·b.
    fn pair_field(
        &self,
        a: &Spectrum,
        b: Option<&Spectrum>,
        rows: &[usize],
        keep: &dyn Fn(usize, usize) -> bool,
    ) -> Vec<C64> {
        let m = self.model.m;
        let row = |ky: usize, out: &mut [C64]| {
            self.fill_row(a, ky, out);
            if let Some(b) = b {
                let mut t = vec![C64::new(0.0, 0.0); m];
                self.fill_row(b, ky, &mut t);
                for (z, w) in out.iter_mut().zip(&t) {
                    *z += C64::new(-w.im, w.re);
                }
            }
        };
        self.model.synthesize(&row, rows, keep)
    }

    /// ρ^{≤ℓ} on the box (column-major) for a single level.
    pub fn density_below(&self, level: f64) -> Vec<f64> {
        let m = self.model.m;
        let rows = self.model.rows_below(level);
        let md = &self.model;
        let keep = |kx: usize, ky: usize| md.kappa(kx, ky) <= level;
        let mut acc = vec![0.0; m * m];
        let mut n = 0;
        while n < self.len() {
            let a = self.spectrum(n);
            let b = if n + 1 < self.len() {
                Some(self.spectrum(n + 1))
            } else {
                None
            };
            let f = self.pair_field(&a, b.as_ref(), &rows, &keep);
            for (r, z) in acc.iter_mut().zip(&f) {
                *r += z.re * z.re + z.im * z.im;
            }
            n += 2;
        }
        acc
    }
}

fn to_row_major(v: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for x in 0..m {
        for y in 0..m {
            out[y * m + x] = v[x * m + y];
        }
    }
    out
}

/// Low (κ ≤ δ), band (δ < κ ≤ ℓ) and residual (κ > ℓ) densities.
pub fn cutoff_project(f: &Family, spec: &CutoffSpec) -> Result<CutoffDensities> {
    spec.validate()?;
    let fs = FamilySpectra::new(f, spec.padding)?;
    let md = &fs.model;
    let m = md.m;
    let (delta, ell) = (spec.delta, spec.ell);
    let rows_low = md.rows_below(delta);
    let rows_band = md.rows_below(ell);
    let keep_low = |kx: usize, ky: usize| md.kappa(kx, ky) <= delta;
    let keep_band = |kx: usize, ky: usize| {
        let k = md.kappa(kx, ky);
        k > delta && k <= ell
    };
    let mut low = vec![0.0; m * m];
    let mut band = vec![0.0; m * m];
    let mut le = vec![0.0; m * m];
    let mut res = vec![0.0; m * m];
    let mut defect = 0.0f64;
    let h2 = f.grid.h * f.grid.h;
    let mut n = 0;
    while n < fs.len() {
        let two = n + 1 < fs.len();
        let a = fs.spectrum(n);
        let b = if two { Some(fs.spectrum(n + 1)) } else { None };
        let ua = fs.box_samples(n);
        let ub = if two {
            fs.box_samples(n + 1)
        } else {
            vec![0.0; m * m]
        };
        let mut fl = fs.pair_field(&a, b.as_ref(), &rows_low, &keep_low);
        let fb = fs.pair_field(&a, b.as_ref(), &rows_band, &keep_band);
        // spatial norms of the parts, per member (re ↔ a, im ↔ b)
        let mut nl = [0.0; 2];
        let mut nb = [0.0; 2];
        for i in 0..m * m {
            let (l, w) = (fl[i], fb[i]);
            low[i] += l.re * l.re + l.im * l.im;
            band[i] += w.re * w.re + w.im * w.im;
            nl[0] += l.re * l.re;
            nl[1] += l.im * l.im;
            nb[0] += w.re * w.re;
            nb[1] += w.im * w.im;
            let s = l + w;
            le[i] += s.re * s.re + s.im * s.im;
            let (ra, rb) = (ua[i] - s.re, ub[i] - s.im);
            res[i] += ra * ra + rb * rb;
            fl[i] = s;
        }
        drop(fl);
        let members: Vec<(&Spectrum, &Vec<f64>, usize)> = match &b {
            Some(bs) => vec![(&a, &ua, 0), (bs, &ub, 1)],
            None => vec![(&a, &ua, 0)],
        };
        for (sp, u, slot) in members {
            let total: f64 = h2 * u.iter().map(|x| x * x).sum::<f64>();
            let high = fs.spectral_sum(sp, &|k| if k > ell { 1.0 } else { 0.0 });
            let parts = h2 * (nl[slot] + nb[slot]) + high;
            if total > 0.0 {
                defect = defect.max((parts - total).abs() / total);
            }
        }
        n += 2;
    }
    Ok(CutoffDensities {
        m,
        h: f.grid.h,
        rho_low: to_row_major(&low, m),
        rho_band: to_row_major(&band, m),
        rho_le_ell: to_row_major(&le, m),
        rho_high_residual: to_row_major(&res, m),
        plancherel_defect: defect,
        members: fs.len(),
    })
}

/// Allowance on the cutoff maxima.
pub const LEMMA_TOL: f64 = 0.05;

/// Band and low cutoff checks at `spec.padding`, with the discretization estimate
/// from the half-padded box.
pub struct Lemma21 {
    pub band: Report,
    pub low: Report,
    pub densities: CutoffDensities,
}

pub fn check_lemma21(f: &Family, spec: &CutoffSpec, measure: f64, lambda1: f64) -> Result<Lemma21> {
    let cd = cutoff_project(f, spec)?;
    let coarse = if spec.padding >= 4 {
        Some(cutoff_project(f, &spec.with_padding(spec.padding / 2))?)
    } else {
        None
    };
    Ok(lemma21_reports(
        f,
        spec,
        cd,
        coarse.as_ref(),
        measure,
        lambda1,
    ))
}

fn rel_change(a: f64, b: Option<f64>) -> f64 {
    match b {
        Some(b) if a > 0.0 => (a - b).abs() / a,
        _ => 0.0,
    }
}

/// Band and low reports from densities at `spec.padding` and, optionally, at half padding.
pub fn lemma21_reports(
    f: &Family,
    spec: &CutoffSpec,
    cd: CutoffDensities,
    coarse: Option<&CutoffDensities>,
    measure: f64,
    lambda1: f64,
) -> Lemma21 {
    let (mb, ml) = (cd.max_band(), cd.max_low());
    let db = rel_change(mb, coarse.map(|c| c.max_band()));
    let dl = rel_change(ml, coarse.map(|c| c.max_low()));
    let z = z01();
    let bb = (spec.ell / spec.delta).ln() / (4.0 * PI);
    let bl = measure * spec.delta / (4.0 * PI * PI * z * z);
    let params = |r: Report| {
        r.param("N", f.len())
            .param("delta", spec.delta)
            .param("ell", spec.ell)
            .param("padding", spec.padding)
            .param("h", f.grid.h)
            .param("fft_size", cd.m)
    };
    let band = params(Report::upper_bound("lemma21_band", mb, bb, db, LEMMA_TOL))
        .detail("plancherel_defect", cd.plancherel_defect);
    let chain = spec.delta / (4.0 * PI * lambda1);
    let low = params(Report::upper_bound("lemma21_low", ml, bl, dl, LEMMA_TOL))
        .detail("chain_bound", chain)
        .detail("chain_over_bound", chain / bl)
        .detail("lambda1", lambda1);
    Lemma21 {
        band,
        low,
        densities: cd,
    }
}

pub fn check_lemma21_band(f: &Family, spec: &CutoffSpec, lambda1: f64) -> Result<Report> {
    Ok(check_lemma21(f, spec, f.measure, lambda1)?.band)
}

pub fn check_lemma21_low(
    f: &Family,
    spec: &CutoffSpec,
    measure: f64,
    lambda1: f64,
) -> Result<Report> {
    Ok(check_lemma21(f, spec, measure, lambda1)?.low)
}

/// Cutoff bounds in dimension d from the two cutoff maxima.
pub fn lemma34_reports(
    max_band: f64,
    max_low: f64,
    disc: (f64, f64),
    spec: &CutoffSpec,
    d: usize,
    measure: f64,
) -> Result<(Report, Report)> {
    let c = SemiclassicalConstants::new(d)?;
    let sc = c.semiclassical();
    let bb = sc * (spec.ell / spec.delta).ln();
    let bl = c.lambda_d.powi(4) * sc * measure * spec.delta;
    let band = Report::upper_bound("lemma34_band", max_band, bb, disc.0, LEMMA_TOL)
        .param("d", d)
        .param("delta", spec.delta)
        .param("ell", spec.ell)
        .param("padding", spec.padding);
    let mut low = Report::upper_bound("lemma34_low", max_low, bl, disc.1, LEMMA_TOL)
        .param("d", d)
        .param("delta", spec.delta)
        .param("padding", spec.padding)
        .detail("lambda_d", c.lambda_d);
    if d == 2 {
        let z = z01();
        low = low.detail(
            "faber_krahn_bound",
            measure * spec.delta / (4.0 * PI * PI * z * z),
        );
    }
    Ok((band, low))
}

/// Dimension-general cutoff bounds for a planar family (s = 1).
pub fn check_lemma34(f: &Family, spec: &CutoffSpec) -> Result<(Report, Report)> {
    let cd = cutoff_project(f, spec)?;
    let coarse = if spec.padding >= 4 {
        Some(cutoff_project(f, &spec.with_padding(spec.padding / 2))?)
    } else {
        None
    };
    let c = coarse.as_ref();
    let disc = (
        rel_change(cd.max_band(), c.map(|c| c.max_band())),
        rel_change(cd.max_low(), c.map(|c| c.max_low())),
    );
    lemma34_reports(cd.max_band(), cd.max_low(), disc, spec, 2, f.measure)
}

/// Σ_k w_k·κ_k against the layer-cake integral ∫₀^∞ Σ_{κ_k>ℓ} w_k dℓ
/// summed exactly over sorted frequency levels.
pub fn layer_cake(kappa: &[f64], w: &[f64]) -> (f64, f64) {
    let direct: f64 = kappa.iter().zip(w).map(|(k, w)| k * w).sum();
    let mut idx: Vec<usize> = (0..kappa.len()).collect();
    idx.sort_by(|&a, &b| kappa[a].total_cmp(&kappa[b]));
    // tail(ℓ) = Σ_{κ > ℓ} w is constant between consecutive sorted levels;
    // suffix sums from the top avoid cancellation
    let mut tail = vec![0.0; idx.len() + 1];
    for i in (0..idx.len()).rev() {
        tail[i] = tail[i + 1] + w[idx[i]];
    }
    let mut prev = 0.0;
    let mut cake = 0.0;
    for (i, &p) in idx.iter().enumerate() {
        let k = kappa[p];
        cake += (k - prev) * tail[i];
        prev = k;
    }
    (direct, cake)
}

/// Log-spaced levels from `lo` to `hi`.
pub fn log_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1).max(1) as f64).exp())
        .collect()
}

pub const RUMIN_LEVELS: usize = 64;

/// Layer-cake identity Σ‖∇u_n‖² = ∫₀^∞∫Σ|u_n − u_n^{≤ℓ}|² and the lower
/// bound ∫∫[√ρ − √ρ^{≤ℓ}]₊² ≤ N on log-spaced levels.
pub fn rumin_layer_cake(
    f: &Family,
    padding: usize,
    levels: Option<&[f64]>,
) -> Result<(Report, Report)> {
    let fs = FamilySpectra::new(f, padding)?;
    let md = &fs.model;
    let m = md.m;
    let w = fs.energy_by_frequency();
    let kappa: Vec<f64> = (0..m * m).map(|i| md.kappa(i % m, i / m)).collect();
    let (direct, cake) = layer_cake(&kappa, &w);
    let g = f.gradient_gram();
    let grad: f64 = (0..f.len()).map(|i| g[(i, i)]).sum();
    let rel = (cake - grad).abs() / grad;
    let identity = Report::new("rumin_identity")
        .param("N", f.len())
        .param("h", f.grid.h)
        .param("padding", padding)
        .detail("frequency_sum", direct)
        .detail("layer_cake", cake)
        .detail("relative_error", rel)
        .detail("sum_over_N", grad / f.len() as f64);
    let mut identity = identity.with_status(if rel <= 1e-8 {
        Status::Pass
    } else {
        Status::Fail
    });
    identity.set_values(cake, grad, 0.0);

    // inequality on levels
    let kmin = kappa
        .iter()
        .cloned()
        .filter(|k| *k > 0.0)
        .fold(f64::INFINITY, f64::min);
    let kmax = 8.0 / (f.grid.h * f.grid.h);
    let own;
    let lv: &[f64] = match levels {
        Some(l) => l,
        None => {
            own = log_levels(kmin, 10.0 * kmax, RUMIN_LEVELS);
            &own
        }
    };
    let top = *lv.last().unwrap_or(&0.0);
    let total_w: f64 = direct;
    let truncated: f64 = kappa
        .iter()
        .zip(&w)
        .filter(|(k, _)| **k > top)
        .map(|(k, w)| (k - top) * w)
        .sum();
    let rho_box: Vec<f64> = {
        let mut acc = vec![0.0; m * m];
        for n in 0..fs.len() {
            let u = fs.box_samples(n);
            acc.iter_mut().zip(&u).for_each(|(a, b)| *a += b * b);
        }
        acc
    };
    let h2 = f.grid.h * f.grid.h;
    let g_of = |level: f64| -> f64 {
        let below = fs.density_below(level);
        rho_box
            .iter()
            .zip(&below)
            .map(|(r, b)| {
                let d = r.sqrt() - b.sqrt();
                if d > 0.0 {
                    d * d
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            * h2
    };
    let vals: Vec<f64> = lv.iter().map(|&l| g_of(l)).collect();
    let mut lower = 0.0;
    for i in 1..lv.len() {
        let dl = lv[i].ln() - lv[i - 1].ln();
        lower += 0.5 * dl * (vals[i] * lv[i] + vals[i - 1] * lv[i - 1]);
    }
    let n = f.len() as f64;
    let mut ineq = Report::upper_bound("rumin_lower_bound", lower, n, 0.0, 0.0)
        .param("N", f.len())
        .param("levels", lv.len())
        .param("padding", padding)
        .detail("gap", n - lower)
        .detail("truncation_estimate", truncated / total_w.max(1e-300) + 0.0);
    if truncated > 1e-6 * total_w && ineq.passed() {
        ineq.status = Status::Warn;
    }
    Ok((identity, ineq))
}

/// Σ_n |⟨w, v_n⟩|² ≤ 1 for random unit w on the band, v_n = √κ û_n / B.
pub fn bessel_spot_check(
    f: &Family,
    spec: &CutoffSpec,
    trials: usize,
    seed: u64,
) -> Result<Report> {
    spec.validate()?;
    let fs = FamilySpectra::new(f, spec.padding)?;
    let md = &fs.model;
    let m = md.m;
    let rows = md.rows_below(spec.ell);
    let mut band = Vec::new();
    for &ky in &rows {
        for kx in 0..m {
            let k = md.kappa(kx, ky);
            if k > spec.delta && k <= spec.ell {
                band.push((kx, ky));
            }
        }
    }
    if band.is_empty() {
        return Ok(Report::new("bessel_spot_check")
            .with_status(Status::Warn)
            .detail("reason", "empty band"));
    }
    let b = md.side();
    // v_n restricted to the band
    let mut v: Vec<Vec<C64>> = Vec::with_capacity(fs.len());
    let mut row = vec![C64::new(0.0, 0.0); m];
    for n in 0..fs.len() {
        let sp = fs.spectrum(n);
        let mut vn = Vec::with_capacity(band.len());
        let mut cur = usize::MAX;
        for &(kx, ky) in &band {
            if ky != cur {
                fs.fill_row(&sp, ky, &mut row);
                cur = ky;
            }
            vn.push(row[kx] * (md.kappa(kx, ky).sqrt() / b));
        }
        v.push(vn);
    }
    let mut rng = SplitMix64::derive(seed, "bessel-spot-check");
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut w: Vec<C64> = (0..band.len())
            .map(|_| C64::new(rng.next_normal(), rng.next_normal()))
            .collect();
        let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        w.iter_mut().for_each(|z| *z /= nw);
        let s: f64 = v
            .iter()
            .map(|vn| {
                vn.iter()
                    .zip(&w)
                    .map(|(a, b)| b.conj() * a)
                    .sum::<C64>()
                    .norm_sqr()
            })
            .sum();
        worst = worst.max(s);
    }
    Ok(
        Report::upper_bound("bessel_spot_check", worst, 1.0, 0.0, 1e-12)
            .param("trials", trials)
            .param("band_size", band.len())
            .param("N", f.len()),
    )
}

/// ∫_δ^∞[a − √(ln(ℓ/δ)/4π)]₊² dℓ for a ≥ 0. With ℓ = δ·exp(4πu²) and
/// w = a − u this is δ e^{4πa²} ∫_0^a w² 8π(a−w) e^{−4π(2aw−w²)} dw; the
/// damped integrand is cut where the exponent passes 60.
pub fn ell_integral(a: f64, delta: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let c = 4.0 * PI;
    // 2aw − w² = 60/c  →  w = a − √(a² − 60/c)
    let top = if c * a * a > 60.0 {
        a - (a * a - 60.0 / c).sqrt()
    } else {
        a
    };
    let g = |w: f64| w * w * 2.0 * c * (a - w) * (-c * (2.0 * a * w - w * w)).exp();
    delta * (c * a * a).exp() * adaptive_simpson(&g, 0.0, top, 1e-13 * a * a * a / c.sqrt())
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let d = left + right - whole;
        if depth == 0 || d.abs() <= 15.0 * tol {
            return left + right + d / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// The chain of the main proof evaluated numerically.
pub fn proof_pipeline_thm1(f: &Family, rho: &DensityField, epsilon: f64) -> Report {
    let base = Report::new("proof_pipeline_thm1")
        .param("N", f.len())
        .param("epsilon", epsilon)
        .param("h", rho.h);
    if !(epsilon > 0.0 && epsilon <= 0.25) {
        return base
            .with_status(Status::Rejected)
            .detail("reason", "requires 0 < eps <= 1/4");
    }
    let n = f.len() as f64;
    let kappa = 1.0 - (1.0 - epsilon).powf(0.25);
    let z = z01();
    let measure = rho.total_weight();
    let delta = 4.0 * PI * PI * z * z * kappa * kappa / measure;
    let w = 4.0 * PI * (1.0 - epsilon);
    // ∫_{ρ>1} exp(wρ)
    let upper: f64 = rho
        .values
        .iter()
        .zip(&rho.weights)
        .filter(|(r, _)| **r > 1.0)
        .map(|(r, q)| q * (w * r).exp())
        .sum::<f64>()
        + 0.0;
    let bound = 2.0 * n / (delta * kappa * kappa);
    // N ≥ ∫_Ω ∫_δ^∞ [√ρ − κ − √(ln(ℓ/δ)/4π)]₊²
    let outer: f64 = rho
        .values
        .iter()
        .zip(&rho.weights)
        .map(|(r, q)| q * ell_integral(r.sqrt() - kappa, delta))
        .sum();
    // chain at the 10 largest-ρ points, and on synthetic ρ > 1 values
    let mut order: Vec<usize> = (0..rho.values.len())
        .filter(|&i| rho.weights[i] > 0.0)
        .collect();
    order.sort_by(|&a, &b| rho.values[b].total_cmp(&rho.values[a]));
    let mut sample: Vec<f64> = order.iter().take(10).map(|&i| rho.values[i]).collect();
    let sampled_above_one = sample.iter().filter(|r| **r > 1.0).count();
    sample.extend([1.25, 1.5, 2.0, 3.0, 5.0]);
    let mut chain_ok = true;
    for &r in &sample {
        let a = ell_integral(r.sqrt() - kappa, delta);
        if r > 1.0 {
            let b = ell_integral((1.0 - kappa) * r.sqrt(), delta);
            let c = delta
                * (1.0 - kappa).powi(2)
                * kappa
                * kappa
                * r
                * ((4.0 * PI * (1.0 - kappa).powi(4) * r).exp() - 1.0);
            let d = 0.5 * delta * kappa * kappa * (w * r).exp();
            chain_ok &= a >= b * (1.0 - 1e-9) && b >= c * (1.0 - 1e-9) && c >= d * (1.0 - 1e-9);
        }
    }
    // final assembly: (1/|Ω|)∫exp ≤ N/(2π²z²κ⁴) + e^{4π} ≤ e⁸N/ε⁴
    let split = bound / measure + (4.0 * PI).exp();
    let closed = n / (2.0 * PI * PI * z * z * kappa.powi(4)) + (4.0 * PI).exp();
    let final_rhs = (8.0f64).exp() * n / epsilon.powi(4);
    let ok = upper <= bound
        && outer <= n * (1.0 + 1e-9)
        && chain_ok
        && split <= closed * (1.0 + 1e-12)
        && closed <= final_rhs;
    let mut r = base
        .detail("kappa", kappa)
        .detail("delta", delta)
        .detail("outer_integral", outer)
        .detail("chain_ok", chain_ok)
        .detail("sampled_points_above_one", sampled_above_one)
        .detail("assembled_bound", closed)
        .detail("final_bound", final_rhs)
        .with_status(if ok { Status::Pass } else { Status::Fail });
    r.set_values(upper, bound, 0.0);
    r
}

/// Writes "x,y,value" rows of a box field (row-major) to CSV.
pub fn write_heatmap(
    path: &Path,
    cd: &CutoffDensities,
    field: &[f64],
    origin: [f64; 2],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    w.write_record(["x", "y", "value"])?;
    for iy in 0..cd.m {
        for ix in 0..cd.m {
            let x = origin[0] + ix as f64 * cd.h;
            let y = origin[1] + iy as f64 * cd.h;
            w.write_record([
                crate::report::fmt17(x),
                crate::report::fmt17(y),
                crate::report::fmt17(field[iy * cd.m + ix]),
            ])?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::family_from_eigenbasis;
    use crate::spectral::eigenbasis_rectangle;

    #[test]
    fn layer_cake_exact() {
        let k = [0.0, 3.0, 1.0, 3.0, 7.5];
        let w = [0.2, 1.0, 0.5, 0.25, 2.0];
        let (a, b) = layer_cake(&k, &w);
        assert!((a - b).abs() < 1e-14 * a);
    }

    #[test]
    fn ell_integral_large_argument() {
        // δ e^{4πa²}·2∫(a−u)e^{−4π(a²−u²)}du − δa², by a fine trapezoid in u
        let (a, delta) = (2.3, 0.4);
        let n = 2_000_000;
        let du = a / n as f64;
        let c = 4.0 * PI;
        let f = |u: f64| (a - u) * (-c * (a * a - u * u)).exp();
        let mut s = 0.5 * (f(0.0) + f(a));
        for i in 1..n {
            s += f(i as f64 * du);
        }
        let oracle = delta * ((c * a * a).exp() * 2.0 * s * du - a * a);
        let v = ell_integral(a, delta);
        assert!((v - oracle).abs() < 1e-7 * oracle, "{v} {oracle}");
    }

    #[test]
    fn ell_integral_against_trapezoid() {
        let (a, delta) = (0.7, 3.0);
        // trapezoid in v with ℓ = δ + v², which removes the endpoint square root
        let top = (delta * (4.0 * PI * a * a).exp() - delta).sqrt();
        let n = 200_000;
        let dv = top / n as f64;
        let g = |v: f64| {
            let l = delta + v * v;
            let r = a - ((l / delta).ln() / (4.0 * PI)).sqrt();
            if r > 0.0 {
                2.0 * v * r * r
            } else {
                0.0
            }
        };
        let mut s = 0.5 * (g(0.0) + g(top));
        for i in 1..n {
            s += g(i as f64 * dv);
        }
        s *= dv;
        assert!((ell_integral(a, delta) - s).abs() < 1e-6 * s);
    }

    #[test]
    fn single_mode_plancherel_and_limits() {
        let b = eigenbasis_rectangle(1.0, 1.0, 1, 1.0 / 32.0).unwrap();
        let f = family_from_eigenbasis(&b, 1).unwrap();
        let l1 = b.pairs[0].lambda;
        let cd = cutoff_project(&f, &CutoffSpec::new(l1 / 2.0, 1e3, 4).unwrap()).unwrap();
        assert!(cd.plancherel_defect < 1e-10);
        // full capture
        let cd = cutoff_project(&f, &CutoffSpec::new(1e6, 2e6, 2).unwrap()).unwrap();
        let rho = crate::density::density(&f, &b);
        let r = cd.restrict(&cd.rho_low, f.grid.nx, f.grid.ny);
        for (a, c) in r.iter().zip(&rho.values) {
            assert!((a - c).abs() < 1e-12);
        }
        assert!(cd.max_band() < 1e-20);
    }
}
