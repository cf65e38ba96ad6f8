use std::time::Instant;

use mtlab_core::geometry::Domain;
use mtlab_core::schrodinger::*;

fn op64() -> SpectralOperator {
    SpectralOperator::laplacian(&Domain::unit_square(), 1.0 / 64.0).unwrap()
}

#[test]
fn checker_pipeline_64() {
    let t = Instant::now();
    let l0 = op64();
    let c = 0.5 * l0.d[0];
    let v = PotentialSpec::Checker(c).sample(&l0.grid).unwrap();
    let lv = assemble_schrodinger(&l0, &v, "checker", 2.0).unwrap();
    eprintln!("assemble {:?}", t.elapsed());
    let (eta, r) = eta_gap(&lv, &l0).unwrap();
    eprintln!("eta {eta} {:?} {:?}", r.status, t.elapsed());
    assert!(eta > 0.0 && eta < 1.0 && r.passed());
    let r = check_simple_resolvent(&lv, &l0, eta).unwrap();
    eprintln!("simple {:?} lhs {} {:?}", r.status, r.lhs, t.elapsed());
    assert!(r.passed());
    let (fit, r) = fit_resolvent_expansion(&lv, &l0, &[0.5, 0.25, 0.1], 2.0).unwrap();
    eprintln!("fit {:?} {:?} {:?}", fit.c, fit.bracket_ok, t.elapsed());
    assert!(r.passed());
    let r = check_sobolev_form_bound(&l0, &v, &[0.5, 0.25, 0.1]).unwrap();
    eprintln!("sob {:?} {:?}", r.details, t.elapsed());
    let r = check_positive_part_dominance(&lv, &l0).unwrap();
    eprintln!("dom {:?} {:?}", r.status, t.elapsed());
}

#[test]
fn constant_potential_matches_scalar_oracle() {
    let t = Instant::now();
    let l0 = op64();
    let c = 0.5 * l0.d[0];
    let v = PotentialSpec::Const(c).sample(&l0.grid).unwrap();
    let lv = assemble_schrodinger(&l0, &v, "const", 2.0).unwrap();
    let eps = [0.5, 0.25, 0.1];
    for q in [1.0, 2.0] {
        let (fit, r) = fit_resolvent_expansion(&lv, &l0, &eps, q).unwrap();
        assert!(r.passed(), "{:?}", r);
        for (e, got) in eps.iter().zip(&fit.c) {
            let want =
                l0.d.iter()
                    .map(|l| e.powf(q) * l * l * (1.0 / (l - c) - (1.0 + e) / l))
                    .fold(0.0f64, f64::max);
            eprintln!("q={q} eps={e} got={got} want={want}");
            assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
        }
    }
    eprintln!("{:?}", t.elapsed());
}
