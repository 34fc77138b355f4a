mod support;

use hypercd::dressing::{build_f, solve_dressing, DressingSolution};
use hypercd::presets::kdv_scalar;
use num_complex::Complex64;
use support::Soliton;

fn oracle() -> Soliton {
    Soliton::kdv(2.0, 1.0, 1.0)
}

#[test]
fn nystrom_oracle_reproduces_the_closed_form() {
    let s = oracle();
    for x in [-1.5, -0.4, 0.0, 0.7, 1.5] {
        let k = s.nystrom_diagonal(x, 0.0, 12.0, 0.05);
        assert!((k - s.diagonal(x, 0.0)).norm() < 1e-6, "x = {x}");
        let u = s.nystrom_u(x, 0.0, 12.0, 0.05, 0.02);
        assert!((u - s.u(x, 0.0)).norm() < 1e-5, "x = {x}: {u} vs {}", s.u(x, 0.0));
    }
}

#[test]
fn dispersion_relation_matches_the_classical_speed() {
    let fm = build_f(&kdv_scalar(0.1)).unwrap();
    assert!((fm.modes[0].c - oracle().c).abs() < 1e-12);
}

fn field_error(sol: &DressingSolution, h: f64) -> (f64, f64) {
    let s = oracle();
    let axes = sol.field.axes();
    let (xa, t_mid) = (axes[0], 1);
    let mut err = 0.0f64;
    let mut leak = 0.0f64;
    for ix in 0..xa.n {
        let v = sol.field.get_number(&[ix, t_mid]);
        let got = Complex64::new(v.coeff(0), v.coeff(1));
        err = err.max((got - s.u(xa.point(ix), 0.0)).norm());
        leak = leak.max(v.coeff(2).abs()).max(v.coeff(3).abs());
    }
    assert!(xa.h == h);
    (err, leak)
}

#[test]
fn solver_matches_the_oracle_on_the_whole_window() {
    let mut last = f64::INFINITY;
    for h in [0.1, 0.05] {
        let sol = solve_dressing(&kdv_scalar(h)).unwrap();
        let (err, leak) = field_error(&sol, h);
        assert!(err < 1e-3, "h = {h}: {err:e}");
        assert!(err < last);
        assert_eq!(leak, 0.0);
        last = err;
    }
}
