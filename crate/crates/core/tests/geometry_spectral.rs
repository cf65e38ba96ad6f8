use std::f64::consts::PI;

use mtlab_core::geometry::Mask;
use mtlab_core::special::z01;
use mtlab_core::spectral::{
    eigenbasis_mask, eigenbasis_rectangle, rectangle_levels, weyl_diagnostics,
};

#[test]
fn square_mask_h256_first_level() {
    let m = Mask::rectangle(1.0, 1.0, 1.0 / 256.0).unwrap();
    let b = eigenbasis_mask(&m, 3).unwrap();
    let l1 = 2.0 * PI * PI;
    assert!((b.pairs[0].lambda - l1).abs() < 0.01 * l1);
    // degenerate pair (1,2)/(2,1) stays orthonormal after refinement
    let g = b.gram(3);
    assert!(g[(1, 2)].abs() < 1e-6 && (g[(2, 2)] - 1.0).abs() < 1e-6);
}

#[test]
fn l_shape_above_square() {
    let h = 1.0 / 64.0;
    let sq = eigenbasis_mask(&Mask::rectangle(1.0, 1.0, h).unwrap(), 1).unwrap();
    let l = eigenbasis_mask(&Mask::l_shape(h).unwrap(), 1).unwrap();
    assert!(l.pairs[0].lambda > sq.pairs[0].lambda);
}

#[test]
fn disk_raster_first_level() {
    let r = 1.0;
    let b = eigenbasis_mask(&Mask::disk(r, r / 128.0).unwrap(), 1).unwrap();
    let z = z01();
    let ex = z * z / (r * r);
    assert!(
        (b.pairs[0].lambda - ex).abs() < 0.02 * ex,
        "{}",
        b.pairs[0].lambda
    );
}

#[test]
fn mask_converges_at_second_order() {
    let ex = 5.0 * PI * PI;
    let err = |h: f64| {
        let b = eigenbasis_mask(&Mask::rectangle(1.0, 1.0, h).unwrap(), 2).unwrap();
        (b.pairs[1].lambda - ex).abs()
    };
    let (e1, e2) = (err(1.0 / 32.0), err(1.0 / 64.0));
    let order = (e1 / e2).log2();
    assert!(order >= 1.8, "observed order {order}");
}

#[test]
fn inclusion_monotone_on_fixtures() {
    let h = 1.0 / 48.0;
    let inner = Mask::from_fn(49, 49, h, |r, c| {
        (8..40).contains(&r) && (8..40).contains(&c)
    })
    .unwrap();
    let outer = Mask::rectangle(1.0, 1.0, h).unwrap();
    let a = eigenbasis_mask(&inner, 1).unwrap().pairs[0].lambda;
    let b = eigenbasis_mask(&outer, 1).unwrap().pairs[0].lambda;
    assert!(a >= b);
}

#[test]
fn weyl_lambda_ratio_at_1e4() {
    let l: Vec<f64> = rectangle_levels(1.0, 1.0, 10_000)
        .into_iter()
        .map(|x| x.0)
        .collect();
    let t = weyl_diagnostics(&l, 1.0);
    let r = t[9_999].lambda_ratio;
    assert!((r - 1.0).abs() <= 0.05, "{r}");
    // independent count of lattice points (j,k ≥ 1) under the ellipse j²+k² ≤ λ_N/π²
    let rad = l[9_999] / (PI * PI);
    let mut count = 0usize;
    for j in 1..200usize {
        for k in 1..200usize {
            if ((j * j + k * k) as f64) <= rad {
                count += 1;
            }
        }
    }
    assert!(count >= 10_000);
}

#[test]
fn weyl_harmonic_ratio_trend() {
    let l: Vec<f64> = rectangle_levels(1.0, 1.0, 1000)
        .into_iter()
        .map(|x| x.0)
        .collect();
    let t = weyl_diagnostics(&l, 1.0);
    let r2 = t[99].harmonic_ratio.unwrap();
    let r3 = t[999].harmonic_ratio.unwrap();
    assert!((r3 - 1.0).abs() <= 0.25);
    assert!((r3 - 1.0).abs() < (r2 - 1.0).abs());
    // frozen from a direct summation in a separate script
    assert!((r3 - 0.861).abs() < 2e-3, "{r3}");
}

#[test]
fn analytic_rectangle_n1() {
    let b = eigenbasis_rectangle(1.0, 1.0, 2, 1.0 / 16.0).unwrap();
    assert!((b.pairs[0].lambda - 2.0 * PI * PI).abs() < 1e-12);
    assert!((b.pairs[1].lambda - 5.0 * PI * PI).abs() < 1e-12);
}
