use hypercd::cd_algebra::CdNumber;
use hypercd::cd_matrix::CdMatrix;
use hypercd::diff_ops::{apply_sigma, SigmaSpec};
use hypercd::dressing::{
    hilbert_norm, miura_transform, scalar_product, solve_dressing, solve_dressing_with, Scenario,
    SolveOptions,
};
use hypercd::grid::{Axis, GridFunction, Slot};
use hypercd::presets::{heat_scalar, kdv_scalar, mkdv_scalar};
use hypercd::residual::{
    evaluation_ranges, heat_field_residual, heat_kernel_residual, hyperbolic_residual,
    kdv_field_residual, kdv_kernel_residual, mkdv_field_residual, mkdv_kernel_residual,
    mkdv_reduced_residual, mkdv_symmetry_residual,
};
use proptest::prelude::*;

fn real_d(g: &GridFunction, slot: Slot, coord: usize) -> GridFunction {
    apply_sigma(&SigmaSpec::single(2, 0, 1.0, coord, slot).unwrap(), g).unwrap()
}

fn kernel_axes(h: f64) -> Vec<Axis> {
    vec![
        Axis::new(Slot::X, 1, 21, h, -1.0),
        Axis::new(Slot::Y, 1, 21, h, -1.0),
        Axis::new(Slot::T, 0, 3, h / 4.0, -h / 4.0),
    ]
}

#[test]
fn zero_kernels_have_zero_residuals() {
    let k = GridFunction::zeros(2, 1, kernel_axes(0.1)).unwrap().with_constant_elsewhere();
    let g = k.diagonal(0, 1).unwrap();
    let (kdv, mkdv, heat) = (kdv_scalar(0.1), mkdv_scalar(0.1), heat_scalar(0.1));
    let all = [
        kdv_kernel_residual(&kdv, &k).unwrap(),
        kdv_field_residual(&kdv, &g).unwrap(),
        hyperbolic_residual(&kdv, &k).unwrap(),
        mkdv_kernel_residual(&mkdv, &k).unwrap(),
        mkdv_field_residual(&mkdv, &g).unwrap(),
        mkdv_reduced_residual(&mkdv, &g).unwrap(),
        mkdv_symmetry_residual(&mkdv, &k).unwrap(),
        heat_kernel_residual(&heat, &k).unwrap(),
        heat_field_residual(&heat, &g).unwrap(),
    ];
    for r in all {
        assert_eq!(r.linf(), 0.0);
    }
}

#[test]
fn real_rescaling_of_the_source_rescales_the_kernel() {
    let sc = kdv_scalar(0.1);
    let base = solve_dressing(&sc).unwrap();
    let b = -2.5;
    let mut bm = CdMatrix::zeros(1, 2);
    bm.set(0, 0, CdNumber::from_coeffs(2, vec![b, 0.0, 0.0, 0.0]).unwrap());
    let opts = SolveOptions {
        rhs_right: Some(bm),
        ..SolveOptions::default()
    };
    let scaled = solve_dressing_with(&sc, &opts).unwrap();
    let gap = scaled.k.sub(&base.k.scale(b)).unwrap().linf();
    assert!(gap <= 1e-12 * scaled.k.linf(), "{gap:e}");

    // K·b solves the nonlinear equations with coupling p/b, and its residual
    // is the original residual times b.
    let r = evaluation_ranges(&base.k, 1.0);
    let rescaled = Scenario { p: sc.p / b, ..sc.clone() };
    let plain = hyperbolic_residual(&sc, &base.k).unwrap().scale(b);
    let twisted = hyperbolic_residual(&rescaled, &scaled.k).unwrap();
    let gap = twisted.sub(&plain).unwrap().linf_on(&r);
    assert!(gap <= 1e-10 * (1.0 + plain.linf_on(&r)), "{gap:e}");
}

/// `g` of the quaternion mKdV scenario is real and solves
/// `g_t + g_xxx + 6g²g_x = 0`; with `σ = i_1 ∂_x` its Miura image
/// `w = −g² − σg` solves `w_t − 6ww_x + w_xxx = 0`.
fn miura_gaps(h: f64) -> (f64, f64, f64) {
    let mut sc = mkdv_scalar(h);
    sc.grid.x_min = -1.0;
    sc.grid.x_max = 1.0;
    sc.grid.z_max = 11.0;
    let g = solve_dressing(&sc).unwrap().field;
    let r = evaluation_ranges(&g, 0.4);
    let third = |v: &GridFunction| real_d(&real_d(&real_d(v, Slot::X, 1), Slot::X, 1), Slot::X, 1);

    let gx = real_d(&g, Slot::X, 1);
    let mkdv = real_d(&g, Slot::T, 0)
        .add(&third(&g))
        .unwrap()
        .axpy(6.0, &g.mul(&g).unwrap().mul(&gx).unwrap())
        .unwrap();

    let w = miura_transform(&g, &SigmaSpec::single(2, 1, -1.0, 1, Slot::X).unwrap()).unwrap();
    let wwx = w.mul(&real_d(&w, Slot::X, 1)).unwrap();
    let lin = real_d(&w, Slot::T, 0).add(&third(&w)).unwrap();
    let kdv = lin.axpy(-6.0, &wwx).unwrap();
    let wrong_sign = lin.axpy(6.0, &wwx).unwrap();
    (mkdv.linf_on(&r), kdv.linf_on(&r), wrong_sign.linf_on(&r))
}

#[test]
fn miura_image_of_the_mkdv_field_solves_kdv() {
    let (m1, k1, _) = miura_gaps(0.05);
    let (m2, k2, wrong) = miura_gaps(0.025);
    assert!((m1 / m2).log2() > 1.8, "mKdV {m1:e} -> {m2:e}");
    assert!((k1 / k2).log2() > 1.8, "KdV {k1:e} -> {k2:e}");
    assert!(wrong > 50.0 * k2, "{wrong:e} vs {k2:e}");
}

/// Residual of the KdV field equation at `h`, for the solved field and for
/// the same field with a fixed smooth bump added.
fn field_residuals(h: f64) -> (f64, f64) {
    let sc = kdv_scalar(h);
    let sol = solve_dressing(&sc).unwrap();
    let r = evaluation_ranges(&sol.field, 1.0);
    let clean = kdv_field_residual(&sc, &sol.field).unwrap().linf_on(&r);
    let bump = GridFunction::from_fn(2, 1, sol.field.axes().to_vec(), |p, out| {
        out[0] = 0.5 * (-(p[0] * p[0]) / 0.1).exp();
    })
    .unwrap();
    let dirty = sol.field.add(&bump).unwrap();
    (clean, kdv_field_residual(&sc, &dirty).unwrap().linf_on(&r))
}

#[test]
fn corrupted_field_does_not_converge() {
    let (c1, d1) = field_residuals(0.1);
    let (c2, d2) = field_residuals(0.05);
    assert!((c1 / c2).log2() > 1.5, "clean {c1:e} -> {c2:e}, corrupted {d1:e} -> {d2:e}");
    assert!((d1 / d2).log2() < 0.5, "corrupted {d1:e} -> {d2:e}");
    assert!(d2 > 3.0 * c2, "{c2:e} vs {d2:e}");
}

fn field(coeffs: Vec<f64>) -> GridFunction {
    let axes = vec![Axis::new(Slot::X, 1, 11, 0.1, 0.0), Axis::new(Slot::X, 2, 11, 0.1, 0.0)];
    GridFunction::from_fn(2, 1, axes, |p, out| {
        for (m, o) in out.iter_mut().enumerate() {
            let c = coeffs[m];
            *o = c * (p[0] + c).sin() + (c - 0.5) * p[1] * p[1];
        }
    })
    .unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scalar_product_is_hermitian(a in coeffs(), b in coeffs()) {
        let (f, g) = (field(a), field(b));
        let fg = scalar_product(&f, &g).unwrap();
        let gf = scalar_product(&g, &f).unwrap();
        prop_assert!(fg.max_diff(&gf.conj()) <= 1e-12 * (1.0 + fg.norm()));
    }

    #[test]
    fn scalar_product_is_right_linear(a in coeffs(), b in coeffs(), q in coeffs()) {
        let (f, g) = (field(a), field(b));
        let q = CdNumber::from_coeffs(2, q).unwrap();
        let lhs = scalar_product(&f, &g.right_mul(&q)).unwrap();
        let rhs = scalar_product(&f, &g).unwrap().mul(&q);
        prop_assert!(lhs.max_diff(&rhs) <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn cauchy_schwarz_holds(a in coeffs(), b in coeffs()) {
        let (f, g) = (field(a), field(b));
        let fg = scalar_product(&f, &g).unwrap().norm();
        let bound = hilbert_norm(&f).unwrap() * hilbert_norm(&g).unwrap();
        prop_assert!(fg <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn norm_is_absolutely_homogeneous(a in coeffs(), c in -3.0f64..3.0) {
        let f = field(a);
        let lhs = hilbert_norm(&f.scale(c)).unwrap();
        prop_assert!((lhs - c.abs() * hilbert_norm(&f).unwrap()).abs() <= 1e-12 * (1.0 + lhs));
    }
}
