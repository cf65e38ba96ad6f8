use proptest::prelude::*;

use mtlab_core::cutoff::{cutoff_project, CutoffSpec};
use mtlab_core::density::{density, jensen_lower_bound, mt_functional, DensityField};
use mtlab_core::family::family_from_eigenbasis;
use mtlab_core::fractional::{assemble_form, extension_isometry_check};
use mtlab_core::geometry::Domain;
use mtlab_core::rng::{random_orthogonal, SplitMix64};
use mtlab_core::schrodinger::{
    assemble_schrodinger, fit_resolvent_expansion, PotentialSpec, SpectralOperator,
};
use mtlab_core::special::{lambda_gn, unit_ball_volume};
use mtlab_core::spectral::eigenbasis_rectangle;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn density_field() -> impl Strategy<Value = DensityField> {
    prop::collection::vec((0.0..3.0f64, 0.01..1.0f64), 4..64).prop_map(|v| {
        let (r, w): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let m = w.iter().sum();
        DensityField::new(r, w, 10, m, 0.1)
    })
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn density_is_mixing_invariant(n in 2usize..12, seed in any::<u64>()) {
        let b = eigenbasis_rectangle(1.0, 1.0, n, 1.0 / 16.0).unwrap();
        let f = family_from_eigenbasis(&b, n).unwrap();
        let o = random_orthogonal(n, &mut SplitMix64::new(seed));
        let a = density(&f, &b);
        let m = density(&f.mixed(&o).unwrap(), &b);
        let top = a.max();
        for (x, y) in a.values.iter().zip(&m.values) {
            prop_assert!((x - y).abs() <= 1e-12 * top);
        }
    }

    #[test]
    fn jensen_below_functional(rho in density_field(), alpha in 0.1..20.0f64, n in 3usize..10_000) {
        let w = alpha / (n as f64).ln();
        let j = jensen_lower_bound(&rho, alpha, n);
        prop_assert!(j <= mt_functional(&rho, w).value() * (1.0 + 1e-12));
    }

    #[test]
    fn functional_monotone(rho in density_field(), w in 0.0..5.0f64, dw in 0.0..5.0f64, bump in 0.0..1.0f64) {
        let base = mt_functional(&rho, w).ln();
        prop_assert!(mt_functional(&rho, w + dw).ln() >= base - 1e-12);
        let mut up = rho.clone();
        up.values.iter_mut().for_each(|r| *r += bump);
        prop_assert!(mt_functional(&up, w).ln() >= base - 1e-12);
    }

    #[test]
    fn gagliardo_nirenberg_constants(d in 1usize..=16) {
        let l = lambda_gn(d).unwrap();
        prop_assert!(l > 0.0 && l < 1.5);
        if d > 2 {
            let (a, b) = (unit_ball_volume(d).unwrap(), unit_ball_volume(d - 2).unwrap());
            prop_assert!((a - 2.0 * std::f64::consts::PI / d as f64 * b).abs() <= 1e-13 * a);
        }
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    #[test]
    fn cutoff_decomposition(n in 1usize..8, lo in 0.05..0.9f64, hi in 1.2..40.0f64) {
        let b = eigenbasis_rectangle(1.0, 1.0, n, 1.0 / 16.0).unwrap();
        let f = family_from_eigenbasis(&b, n).unwrap();
        let l1 = b.pairs[0].lambda;
        let spec = CutoffSpec::new(lo * l1, hi * l1, 2).unwrap();
        let cd = cutoff_project(&f, &spec).unwrap();
        prop_assert!(cd.plancherel_defect < 1e-10);
        for i in 0..cd.rho_low.len() {
            let (a, bd, le) = (cd.rho_low[i], cd.rho_band[i], cd.rho_le_ell[i]);
            prop_assert!(a >= 0.0 && bd >= 0.0 && le >= 0.0 && cd.rho_high_residual[i] >= 0.0);
            prop_assert!(le.sqrt() <= a.sqrt() + bd.sqrt() + 1e-12);
        }
    }

    #[test]
    fn band_mass_grows_with_ell(n in 1usize..8, hi in 1.2..20.0f64, grow in 1.0..4.0f64) {
        let b = eigenbasis_rectangle(1.0, 1.0, n, 1.0 / 16.0).unwrap();
        let f = family_from_eigenbasis(&b, n).unwrap();
        let l1 = b.pairs[0].lambda;
        let s1 = CutoffSpec::new(0.5 * l1, hi * l1, 2).unwrap();
        let s2 = CutoffSpec { ell: hi * grow * l1, ..s1 };
        let (a, c) = (cutoff_project(&f, &s1).unwrap(), cutoff_project(&f, &s2).unwrap());
        let (ma, mc): (f64, f64) = (a.rho_band.iter().sum(), c.rho_band.iter().sum());
        prop_assert!(ma <= mc * (1.0 + 1e-12));
    }

    #[test]
    fn fractional_isometry_random(seed in any::<u64>(), m in 8usize..96) {
        let form = assemble_form(1.0, m, 4, 0.5).unwrap();
        let mut g = SplitMix64::new(seed);
        let mut u: Vec<f64> = (0..=m).map(|_| g.next_normal()).collect();
        u[0] = 0.0;
        u[m] = 0.0;
        let r = extension_isometry_check(&u, &form);
        prop_assert!(r.passed(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(cfg(6))]

    #[test]
    fn larger_q_gives_smaller_constant(c in 0.1..0.9f64, q in 0.5..3.0f64, dq in 0.1..2.0f64) {
        let l0 = SpectralOperator::laplacian(&Domain::unit_square(), 1.0 / 8.0).unwrap();
        let v = PotentialSpec::Checker(c * l0.d[0]).sample(&l0.grid).unwrap();
        let lv = assemble_schrodinger(&l0, &v, "checker", 2.0).unwrap();
        let eps = [0.5, 0.25, 0.1];
        let (a, _) = fit_resolvent_expansion(&lv, &l0, &eps, q).unwrap();
        let (b, _) = fit_resolvent_expansion(&lv, &l0, &eps, q + dq).unwrap();
        for (x, y) in a.c.iter().zip(&b.c) {
            prop_assert!(*y <= x * (1.0 + 1e-9) + 1e-12);
        }
    }
}

// Pointwise monotonicity in ell fails for sharp cutoffs: widening the band
// can cancel a single function's value at a point. Only the band mass is
// monotone.
#[test]
fn band_density_not_pointwise_monotone() {
    let b = eigenbasis_rectangle(1.0, 1.0, 1, 1.0 / 16.0).unwrap();
    let f = family_from_eigenbasis(&b, 1).unwrap();
    let l1 = b.pairs[0].lambda;
    let s1 = CutoffSpec::new(0.5 * l1, 1.2 * l1, 2).unwrap();
    let s2 = CutoffSpec {
        ell: 3.8 * l1,
        ..s1
    };
    let (a, c) = (
        cutoff_project(&f, &s1).unwrap(),
        cutoff_project(&f, &s2).unwrap(),
    );
    let worst = a
        .rho_band
        .iter()
        .zip(&c.rho_band)
        .map(|(x, y)| x - y)
        .fold(f64::MIN, f64::max);
    assert!(worst > 1e-6, "{worst}");
}
