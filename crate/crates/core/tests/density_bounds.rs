use std::f64::consts::PI;
use std::time::Instant;

use mtlab_core::density::*;
use mtlab_core::family::{family_from_eigenbasis, hoffmann_ostenhof};
use mtlab_core::spectral::eigenbasis_rectangle;

#[test]
fn point_and_log_bounds_unit_square() {
    let t = Instant::now();
    let b = eigenbasis_rectangle(1.0, 1.0, 10_000, 1.0 / 512.0).unwrap();
    for n in [1, 25, 100] {
        let f = family_from_eigenbasis(&b, n).unwrap();
        let rho = density(&f, &b);
        for eps in [0.25, 0.125] {
            let r = check_thm1_pointbound(
                &rho,
                &MtParams {
                    alpha: 4.0 * PI,
                    epsilon: eps,
                    n,
                },
            );
            eprintln!(
                "N={n} eps={eps} lhs={} rhs={} disc={:e} margin={}",
                r.lhs, r.rhs, r.disc_error, r.margin
            );
            assert!(r.passed() && r.margin > 0.0);
        }
    }
    eprintln!("{:?}", t.elapsed());
    for alpha in [2.0 * PI, 4.0 * PI] {
        for n in [100, 1000, 10_000] {
            let f = family_from_eigenbasis(&b, n).unwrap();
            let rho = density(&f, &b);
            let r = check_thm1_logbound(&rho, alpha, n);
            eprintln!(
                "a={alpha:.3} N={n} lhs={} jensen={} rhs={} disc={:e}",
                r.lhs, r.details["jensen_lower"], r.rhs, r.disc_error
            );
            assert!(r.passed());
        }
    }
    eprintln!("{:?}", t.elapsed());
    for n in [10, 50] {
        let f = family_from_eigenbasis(&b, n).unwrap();
        let rho = density(&f, &b);
        let r = hoffmann_ostenhof(&f, &rho.values);
        eprintln!("HO N={n} {} {:?}", r.lhs, r.details);
    }
}
