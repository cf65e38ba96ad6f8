use mtlab_core::special::{bessel_j, bessel_zero, gamma, lambda_gn, unit_ball_volume};

fn rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().collect())
}

#[test]
fn gamma_matches_table() {
    for r in rows(include_str!("fixtures/gamma.txt")) {
        let x: f64 = r[0].parse().unwrap();
        let g: f64 = r[1].parse().unwrap();
        let rel = (gamma(x) - g).abs() / g.abs();
        assert!(rel < 1e-13, "x={x} rel={rel:e}");
    }
}

#[test]
fn lambda_and_omega_match_table() {
    for r in rows(include_str!("fixtures/lambda_d.txt")) {
        let d: usize = r[0].parse().unwrap();
        let lam: f64 = r[1].parse().unwrap();
        let om: f64 = r[2].parse().unwrap();
        assert!((lambda_gn(d).unwrap() - lam).abs() <= 1e-12 * lam, "d={d}");
        assert!(
            (unit_ball_volume(d).unwrap() - om).abs() <= 1e-12 * om,
            "d={d}"
        );
        assert!(lam < 1.5);
    }
}

#[test]
fn bessel_zeros_match_table() {
    for r in rows(include_str!("fixtures/bessel_zeros.txt")) {
        let m: u32 = r[0].parse().unwrap();
        let k: u32 = r[1].parse().unwrap();
        let z: f64 = r[2].parse().unwrap();
        let got = bessel_zero(m, k).unwrap();
        assert!((got - z).abs() <= 1e-10, "m={m} k={k} {got} vs {z}");
    }
}

#[test]
fn bessel_values_match_table() {
    for r in rows(include_str!("fixtures/bessel_j.txt")) {
        let m: u32 = r[0].parse().unwrap();
        let x: f64 = r[1].parse().unwrap();
        let v: f64 = r[2].parse().unwrap();
        let got = bessel_j(m, x);
        assert!((got - v).abs() <= 5e-11, "m={m} x={x} {got} vs {v}");
    }
}
