use std::f64::consts::PI;
use std::time::Instant;

use mtlab_core::fractional::*;

#[test]
fn d1_suite_m1024() {
    let t = Instant::now();
    let reports = run_d1_suite(&D1Params::new(1.0, 1024, 100, PI)).unwrap();
    for r in &reports {
        eprintln!(
            "{} {:?} lhs={} rhs={} disc={:e} {:?}",
            r.check, r.status, r.lhs, r.rhs, r.disc_error, r.details
        );
    }
    eprintln!("{:?}", t.elapsed());
    assert!(reports.iter().all(|r| r.passed()));
}
