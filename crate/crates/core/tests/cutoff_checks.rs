use std::time::Instant;

use mtlab_core::cutoff::*;
use mtlab_core::density::density;
use mtlab_core::family::family_from_eigenbasis;
use mtlab_core::spectral::eigenbasis_rectangle;

#[test]
fn lemma21_unit_square_n50() {
    let t = Instant::now();
    let b = eigenbasis_rectangle(1.0, 1.0, 50, 1.0 / 256.0).unwrap();
    let f = family_from_eigenbasis(&b, 50).unwrap();
    let l1 = b.pairs[0].lambda;
    let spec = CutoffSpec::new(l1 / 2.0, 1e3, 4).unwrap();
    let r = check_lemma21(&f, &spec, 1.0, l1).unwrap();
    eprintln!(
        "band {} / {} low {} / {} defect {:e} {:?}",
        r.band.lhs,
        r.band.rhs,
        r.low.lhs,
        r.low.rhs,
        r.densities.plancherel_defect,
        t.elapsed()
    );
    assert!(r.band.passed() && r.low.passed());
    assert!(r.densities.plancherel_defect < 1e-10);
}

#[test]
fn rumin_identity_n25() {
    let t = Instant::now();
    let b = eigenbasis_rectangle(1.0, 1.0, 25, 1.0 / 128.0).unwrap();
    let f = family_from_eigenbasis(&b, 25).unwrap();
    let (id, ineq) = rumin_layer_cake(&f, 2, None).unwrap();
    eprintln!("{:?}\n{:?}\n{:?}", id, ineq, t.elapsed());
    assert!(id.passed());
    assert!(ineq.lhs <= 25.0);
    let rho = density(&f, &b);
    let spec = CutoffSpec::new(b.pairs[0].lambda / 2.0, 1e3, 2).unwrap();
    let bs = bessel_spot_check(&f, &spec, 8, 7).unwrap();
    eprintln!("{:?}", bs);
    assert!(bs.passed());
    let p = proof_pipeline_thm1(&f, &rho, 0.25);
    eprintln!("{:?}", p);
    assert!(p.passed());
}
