//! Gamma function, Bessel functions of integer order, and the constants that
//! enter the density bounds.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for real arguments (Lanczos, g = 7).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let z = x - 1.0;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * (t.ln() * (z + 0.5) - t).exp() * a
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > 16 {
        return invalid(format!("dimension d={d} outside 1..=16"));
    }
    Ok(())
}

/// Volume of the unit ball in R^d, π^{d/2}/Γ(d/2+1).
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    check_dim(d)?;
    let half = d as f64 / 2.0;
    Ok(PI.powf(half) / gamma(half + 1.0))
}

/// Λ_d = (4π)^{-d/8} (Γ(d/4)/Γ(3d/4))^{1/2} (Γ(d)/Γ(d/2))^{1/4}.
pub fn lambda_gn(d: usize) -> Result<f64> {
    check_dim(d)?;
    let x = d as f64;
    let ln = -x / 8.0 * (4.0 * PI).ln()
        + 0.5 * (ln_gamma(x / 4.0) - ln_gamma(3.0 * x / 4.0))
        + 0.25 * (ln_gamma(x) - ln_gamma(x / 2.0));
    Ok(ln.exp())
}

/// Below this argument (or below the order) J_m is summed from its power series.
pub const BESSEL_SERIES_SWITCH: f64 = 12.5;

fn bessel_series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=m {
        term *= half / i as f64;
    }
    let q = half * half;
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= -q / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && k as f64 > half {
            break;
        }
        if k > 500 {
            break;
        }
    }
    sum
}

/// Hankel asymptotic expansion, only used for m ∈ {0, 1} and large x.
fn bessel_hankel(m: u32, x: f64) -> f64 {
    let mu = 4.0 * (m * m) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut t: f64 = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60u32 {
        let odd = (2 * k - 1) as f64;
        let next = t * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= prev || next == 0.0 {
            break;
        }
        prev = next.abs();
        t = next;
        match k % 4 {
            1 => q += t,
            2 => p -= t,
            3 => q -= t,
            _ => p += t,
        }
        if t.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * m as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Bessel function of the first kind J_m(x) for integer m ≥ 0 and x ≥ 0.
pub fn bessel_j(m: u32, x: f64) -> f64 {
    if x < 0.0 {
        let v = bessel_j(m, -x);
        return if m % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if x < BESSEL_SERIES_SWITCH.max(m as f64) {
        return bessel_series(m, x);
    }
    let j0 = bessel_hankel(0, x);
    if m == 0 {
        return j0;
    }
    let j1 = bessel_hankel(1, x);
    let (mut a, mut b) = (j0, j1);
    for k in 1..m {
        let c = 2.0 * k as f64 / x * b - a;
        a = b;
        b = c;
    }
    b
}

fn bisect_zero(m: u32, mut a: f64, mut b: f64) -> f64 {
    let mut fa = bessel_j(m, a);
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if b - a <= 4.0 * f64::EPSILON * c {
            break;
        }
        let fc = bessel_j(m, c);
        if fc == 0.0 {
            return c;
        }
        if (fa < 0.0) == (fc < 0.0) {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    0.5 * (a + b)
}

const ZERO_SCAN_STEP: f64 = 0.25;

/// All positive zeros of J_m below `xmax`, ascending.
pub fn bessel_zeros_below(m: u32, xmax: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut a = if m == 0 { 0.5 } else { m as f64 };
    let mut fa = bessel_j(m, a);
    while a < xmax {
        let b = a + ZERO_SCAN_STEP;
        let fb = bessel_j(m, b);
        if (fa < 0.0) != (fb < 0.0) || fb == 0.0 {
            let z = bisect_zero(m, a, b);
            if z < xmax {
                out.push(z);
            }
        }
        a = b;
        fa = fb;
    }
    out
}

fn bessel_zero_any(m: u32, k: u32) -> Result<f64> {
    if k == 0 {
        return invalid("Bessel zero index k must be positive");
    }
    // zeros are spaced by about π; leave generous room before giving up
    let limit = m as f64 + (k as f64 + 4.0) * PI + 10.0;
    let mut a = if m == 0 { 0.5 } else { m as f64 };
    let mut fa = bessel_j(m, a);
    let mut found = 0;
    while a < limit {
        let b = a + ZERO_SCAN_STEP;
        let fb = bessel_j(m, b);
        if (fa < 0.0) != (fb < 0.0) || fb == 0.0 {
            found += 1;
            if found == k {
                return Ok(bisect_zero(m, a, b));
            }
        }
        a = b;
        fa = fb;
    }
    Err(Error::NotConverged(format!(
        "could not bracket zero {k} of J_{m} below x={limit}"
    )))
}

/// k-th positive zero of J_m.
pub fn bessel_zero(m: u32, k: u32) -> Result<f64> {
    if m > 20 || k > 200 {
        return invalid(format!("bessel_zero({m},{k}) outside m<=20, k<=200"));
    }
    bessel_zero_any(m, k)
}

pub(crate) fn bessel_zero_unchecked(m: u32, k: u32) -> Result<f64> {
    bessel_zero_any(m, k)
}

/// j_{0,1}, first zero of J_0.
pub fn z01() -> f64 {
    // bracketing cannot fail for the first zero
    bessel_zero_any(0, 1).unwrap_or(2.404_825_557_695_773)
}

/// Hurwitz zeta ζ(s, a) = Σ_{n≥0} (n + a)^{-s} for s > 1, a > 0, by
/// Euler-Maclaurin summation after twelve direct terms.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const B2K: [f64; 7] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
    ];
    let n = 12;
    let mut sum: f64 = (0..n).map(|k| (k as f64 + a).powf(-s)).sum();
    let x = n as f64 + a;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // B_{2k}/(2k)! · s(s+1)…(s+2k−2) · x^{−s−2k+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut xp = x.powf(-s - 1.0);
    for (k, b) in B2K.iter().enumerate() {
        let term = b / fact * rising * xp;
        sum += term;
        let k2 = 2.0 * (k as f64 + 1.0);
        rising *= (s + k2 - 1.0) * (s + k2);
        fact *= (k2 + 1.0) * (k2 + 2.0);
        xp /= x * x;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalConstants {
    pub d: usize,
    pub omega_d: f64,
    /// (2π)^d / ω_d
    pub mt_constant: f64,
    pub lambda_d: f64,
    pub z01: f64,
}

impl SemiclassicalConstants {
    pub fn new(d: usize) -> Result<Self> {
        let omega_d = unit_ball_volume(d)?;
        Ok(Self {
            d,
            omega_d,
            mt_constant: (2.0 * PI).powi(d as i32) / omega_d,
            lambda_d: lambda_gn(d)?,
            z01: z01(),
        })
    }

    /// ω_d/(2π)^d, the exponent constant of the sharp semiclassical bound.
    pub fn semiclassical(&self) -> f64 {
        1.0 / self.mt_constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_limits() {
        // ζ(3, 1) is Apéry's constant, ζ(2, 1/2) = 3ζ(2) = π²/2
        assert!((hurwitz_zeta(3.0, 1.0) - 1.202_056_903_159_594_2).abs() < 1e-14);
        assert!((hurwitz_zeta(2.0, 0.5) - PI * PI / 2.0).abs() < 1e-13);
        let a = 0.013;
        assert!((hurwitz_zeta(3.0, a) - a.powi(-3) - hurwitz_zeta(3.0, 1.0 + a)).abs() < 1e-9);
    }

    fn j_integral(m: u32, x: f64) -> f64 {
        // periodic trapezoid on (1/π)∫_0^π cos(mτ − x sin τ) dτ
        let n = 4096;
        let mut s = 0.0;
        for i in 0..n {
            let t = PI * (i as f64 + 0.5) / n as f64;
            s += (m as f64 * t - x * t.sin()).cos();
        }
        s / n as f64
    }

    #[test]
    fn gamma_small_integers() {
        let mut f = 1.0;
        for n in 1..15 {
            assert!((gamma(n as f64) - f).abs() <= 1e-13 * f, "n={n}");
            f *= n as f64;
        }
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ln_gamma_matches_gamma() {
        for &x in &[0.3, 1.7, 4.25, 9.5, 15.0] {
            assert!((ln_gamma(x) - gamma(x).ln()).abs() < 1e-13);
        }
    }

    #[test]
    fn ball_volume_low_dims() {
        assert!((unit_ball_volume(1).unwrap() - 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(2).unwrap() - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3).unwrap() - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!(unit_ball_volume(0).is_err());
        assert!(unit_ball_volume(17).is_err());
    }

    #[test]
    fn lambda_two_by_hand() {
        // Γ(1/2)/Γ(3/2) = 2, Γ(2)/Γ(1) = 1
        let v = 2f64.sqrt() * (4.0 * PI).powf(-0.25);
        assert!((lambda_gn(2).unwrap() - v).abs() < 1e-14);
    }

    #[test]
    fn bessel_against_integral_representation() {
        for m in [0u32, 1, 2, 7, 20] {
            for &x in &[0.3, 3.0, 9.0, 12.49, 12.51, 18.0, 26.0, 33.0] {
                let a = bessel_j(m, x);
                let b = j_integral(m, x);
                assert!((a - b).abs() < 2e-11, "m={m} x={x} {a} {b}");
            }
        }
    }

    #[test]
    fn series_and_hankel_agree_at_switch() {
        for m in [0u32, 1] {
            for &x in &[
                BESSEL_SERIES_SWITCH - 0.3,
                BESSEL_SERIES_SWITCH,
                BESSEL_SERIES_SWITCH + 0.3,
            ] {
                let d = (bessel_series(m, x) - bessel_hankel(m, x)).abs();
                assert!(d < 1e-11, "m={m} x={x} diff {d}");
            }
        }
    }

    #[test]
    fn first_zeros() {
        assert!((bessel_zero(0, 1).unwrap() - 2.404_825_557_695_773).abs() < 1e-12);
        assert!((bessel_zero(0, 2).unwrap() - 5.520_078_110_286_311).abs() < 1e-12);
        assert!((bessel_zero(1, 1).unwrap() - 3.831_705_970_207_512).abs() < 1e-12);
        assert!(bessel_zero(21, 1).is_err());
        assert!(bessel_zero(0, 0).is_err());
    }

    #[test]
    fn zeros_below_matches_indexed() {
        let zs = bessel_zeros_below(3, 30.0);
        for (i, z) in zs.iter().enumerate() {
            assert!((z - bessel_zero(3, i as u32 + 1).unwrap()).abs() < 1e-13);
        }
        assert_eq!(zs.len(), 8);
    }

    #[test]
    fn constants_d2() {
        let c = SemiclassicalConstants::new(2).unwrap();
        assert!((c.semiclassical() - 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert!(c.z01 > 2.404 && c.z01 < 2.405);
    }
}
