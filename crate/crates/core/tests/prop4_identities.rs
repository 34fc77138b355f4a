mod support;

use hypercd::grid::{Axis, GridFunction, Slot};
use hypercd::line_integral::QuadRule;
use hypercd::residual::residual_prop4;
use support::prop4::*;

#[test]
fn derivative_identities_converge_for_every_order() {
    for m in 1..=3 {
        let coarse = report(m, 0.05);
        let fine = report(m, 0.025);
        assert!(coarse.tail <= 1e-8);
        for (c, f) in [(coarse.eq2_linf, fine.eq2_linf), (coarse.eq3_linf, fine.eq3_linf)] {
            assert!(c <= coarse.constant() * coarse.h * (1.0 + 1e-12));
            assert!(f < c, "m = {m}: {c:e} -> {f:e}");
            assert!((c / f).log2() > 0.9, "m = {m}: {c:e} -> {f:e}");
        }
        assert_eq!(coarse.cor5_linf.is_some(), m == 2);
    }
}

#[test]
fn vanishing_kernel_gives_vanishing_sides() {
    let (f, k) = sampled(0.05);
    let zero = f.zeros_like();
    for m in 1..=3 {
        let r = residual_prop4(&zero, &k, &sigma(), m, QuadRule::Simpson, 1e-8, 0.2).unwrap();
        assert_eq!((r.eq2_linf, r.eq3_linf), (0.0, 0.0));
    }
}

#[test]
fn a_slow_tail_is_reported() {
    let h = 0.05;
    let za = Axis::new(Slot::Z, 1, n_points(2.0, h), h, 0.0);
    let ya = Axis::new(Slot::Y, 1, n_points(1.0, h), h, 0.0);
    let xa = Axis::new(Slot::X, 1, n_points(1.0, h), h, 0.0);
    let f = GridFunction::from_number_fn(2, vec![za, ya], |p| f_value(p[0], p[1])).unwrap();
    let k = GridFunction::from_number_fn(2, vec![xa, za], |p| k_value(p[0], p[1])).unwrap();
    let err = residual_prop4(&f, &k, &sigma(), 1, QuadRule::Simpson, 1e-8, 0.2).unwrap_err();
    assert!(err.to_string().contains("truncation bound"), "{err}");
}

#[test]
fn second_order_difference_formula_holds_independently() {
    let (c, f) = (explicit_difference_gap(0.05), explicit_difference_gap(0.025));
    assert!(f < c && (c / f).log2() > 1.8, "{c:e} -> {f:e}");
}
