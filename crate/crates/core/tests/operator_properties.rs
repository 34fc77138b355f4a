use hypercd::cd_algebra::{dim, CdNumber};
use hypercd::diff_ops::{
    apply_partial_sigma, apply_sigma, apply_sigma_hat, grouped_product, partial_chain, Grouping,
    SigmaSpec,
};
use hypercd::grid::{Axis, GridFunction, Slot};
use hypercd::line_integral::{antideriv_from, antideriv_to_infinity, RayFoliation};
use proptest::prelude::*;

fn plane(h: f64) -> Vec<Axis> {
    let n = (1.0 / h).round() as usize + 1;
    vec![
        Axis::new(Slot::X, 1, n, h, 0.0),
        Axis::new(Slot::X, 2, n, h, 0.0),
    ]
}

/// Smooth `A_r`-valued sample whose components differ in phase and decay.
fn sample(level: u32, axes: Vec<Axis>, phase: f64) -> GridFunction {
    GridFunction::from_fn(level, 1, axes, |p, out| {
        for (m, o) in out.iter_mut().enumerate() {
            let a = m as f64 + phase;
            *o = (p[0] * (1.0 + 0.3 * a)).sin() * (-(p[1] * 0.5 * a)).exp() + 0.1 * a * p[0] * p[1];
        }
    })
    .unwrap()
    .with_constant_elsewhere()
}

fn sigma_strategy(level: u32) -> impl Strategy<Value = SigmaSpec> {
    let n = dim(level);
    (
        prop::collection::vec(-1.5f64..1.5, n),
        Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
    )
        .prop_filter_map("at least one active coefficient", move |(mut psi, xi)| {
            psi[0] = 0.0;
            SigmaSpec::new(level, psi, xi, Slot::X).ok()
        })
}

fn spread_sigma() -> SigmaSpec {
    SigmaSpec::new(2, vec![0.0, 1.0, -0.6, 0.0], vec![0, 1, 2, 3], Slot::X).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sigma_is_right_linear_on_real_functions(
        sigma in sigma_strategy(2),
        b in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let b = CdNumber::from_coeffs(2, b).unwrap();
        let f = GridFunction::from_real_fn(2, 1, plane(0.1), |p| (p[0] - 2.0 * p[1]).cos())
            .unwrap()
            .with_constant_elsewhere();
        let lhs = apply_sigma(&sigma, &f.right_mul(&b)).unwrap();
        let rhs = apply_sigma(&sigma, &f).unwrap().right_mul(&b);
        prop_assert!(lhs.sub(&rhs).unwrap().linf() <= 1e-12 * (1.0 + rhs.linf()));
    }

    #[test]
    fn conjugation_intertwines_sigma_and_sigma_hat(sigma in sigma_strategy(3)) {
        let f = sample(3, plane(0.1), 0.4);
        let lhs = apply_sigma(&sigma, &f).unwrap().conj();
        let rhs = apply_sigma_hat(&sigma, &f.conj()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().linf() <= 1e-14 * (1.0 + rhs.linf()));
    }

    #[test]
    fn antiderivative_is_right_linear_on_real_functions(
        b in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let b = CdNumber::from_coeffs(2, b).unwrap();
        let sigma = SigmaSpec::single(2, 3, 0.7, 1, Slot::X).unwrap();
        let axes = vec![Axis::new(Slot::X, 1, 41, 0.05, 0.0)];
        let f = GridFunction::from_real_fn(2, 1, axes, |p| (-p[0]).exp() * (3.0 * p[0]).cos())
            .unwrap()
            .with_constant_elsewhere();
        let fol = RayFoliation::axis_aligned(2, 1, (0.0, 2.0)).unwrap();
        let lhs = antideriv_from(&sigma, &f.right_mul(&b), &fol).unwrap();
        let rhs = antideriv_from(&sigma, &f, &fol).unwrap().right_mul(&b);
        prop_assert!(lhs.sub(&rhs).unwrap().linf() <= 1e-13 * (1.0 + rhs.linf()));
    }
}

fn leibniz_gap(h: f64) -> f64 {
    let sigma = spread_sigma();
    let f = sample(2, plane(h), 0.0);
    let g = sample(2, plane(h), 1.7);
    let grouping = Grouping::left_to_right(2);
    let whole = apply_sigma(&sigma, &grouped_product(&[&f, &g], &grouping).unwrap()).unwrap();
    let parts = apply_partial_sigma(&sigma, 0, &[&f, &g], &grouping)
        .unwrap()
        .add(&apply_partial_sigma(&sigma, 1, &[&f, &g], &grouping).unwrap())
        .unwrap();
    let inner = whole.interior(&[(0, 2.0 * h), (1, 2.0 * h)]);
    whole.sub(&parts).unwrap().linf_on(&inner)
}

#[test]
fn leibniz_rule_holds_to_second_order() {
    let (c, f) = (leibniz_gap(0.025), leibniz_gap(0.0125));
    let order = (c / f).log2();
    assert!(order > 1.9, "gaps {c:e} {f:e}, order {order}");
}

/// `σ[¹σ, ²σ](fg)` and `[¹σ, ²σ]σ(fg)` with every operator acting on
/// individual factors.
fn commutator_pair(sigma: &SigmaSpec) -> (GridFunction, GridFunction) {
    let f = sample(2, plane(0.1), 0.0);
    let g = sample(2, plane(0.1), 1.1);
    let grouping = Grouping::left_to_right(2);
    let chain = |ops: &[(usize, usize, usize)]| -> GridFunction {
        let mut acc: Option<GridFunction> = None;
        for &(a, b, c) in ops {
            let seq = [(sigma, a), (sigma, b), (sigma, c)];
            let term = partial_chain(&seq, &[&f, &g], &grouping).unwrap();
            acc = Some(match acc {
                None => term,
                Some(x) => x.add(&term).unwrap(),
            });
        }
        acc.unwrap()
    };
    // σ C = (¹σ + ²σ)(¹σ²σ − ²σ¹σ); operators listed in order of application.
    let sc = chain(&[(1, 0, 0), (1, 0, 1)]).sub(&chain(&[(0, 1, 0), (0, 1, 1)])).unwrap();
    // C σ = (¹σ²σ − ²σ¹σ)(¹σ + ²σ).
    let cs = chain(&[(0, 1, 0), (1, 1, 0)]).sub(&chain(&[(0, 0, 1), (1, 0, 1)])).unwrap();
    (sc, cs)
}

#[test]
fn sigma_anticommutes_with_the_partial_commutator() {
    for sigma in [
        spread_sigma(),
        SigmaSpec::new(2, vec![0.0, 0.4, 1.0, -0.8], vec![0, 2, 1, 3], Slot::X).unwrap(),
    ] {
        let (sc, cs) = commutator_pair(&sigma);
        let scale = sc.linf().max(cs.linf());
        assert!(scale > 1e-3, "commutator vanishes identically");
        let gap = sc.add(&cs).unwrap().linf();
        assert!(gap <= 1e-12 * scale, "gap {gap:e} at scale {scale:e}");
    }
}

fn ray_sample(h: f64) -> GridFunction {
    let axes = vec![Axis::new(Slot::X, 2, (30.0 / h).round() as usize + 1, h, 0.0)];
    GridFunction::from_fn(3, 1, axes, |p, out| {
        for (m, o) in out.iter_mut().enumerate() {
            *o = (-(1.0 + 0.1 * m as f64) * p[0]).exp() * (1.0 + 0.3 * (p[0] + m as f64).cos());
        }
    })
    .unwrap()
    .with_constant_elsewhere()
}

#[test]
fn fundamental_theorem_along_the_ray() {
    let sigma = SigmaSpec::new(
        3,
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.3, 0.0, 0.0],
        vec![0, 1, 5, 3, 4, 2, 6, 7],
        Slot::X,
    )
    .unwrap();
    let fol = RayFoliation::axis_aligned(3, 2, (0.0, 30.0)).unwrap();
    let gap = |h: f64| {
        let f = ray_sample(h);
        let back = antideriv_from(&sigma, &apply_sigma(&sigma, &f).unwrap(), &fol).unwrap();
        let f0 = f.slice_axis(0, 0).unwrap().broadcast_to(f.axes()).unwrap();
        back.sub(&f.sub(&f0).unwrap()).unwrap().linf()
    };
    let (c, f) = (gap(0.02), gap(0.01));
    assert!((c / f).log2() >= 1.9, "gaps {c:e} {f:e}");
}

#[test]
fn the_two_antiderivatives_add_up_to_the_full_integral() {
    let sigma = SigmaSpec::single(3, 6, -0.8, 2, Slot::X).unwrap();
    let fol = RayFoliation::axis_aligned(3, 2, (0.0, 30.0)).unwrap();
    let f = ray_sample(0.05);
    let from = antideriv_from(&sigma, &f, &fol).unwrap();
    let to_inf = antideriv_to_infinity(&sigma, &f, &fol, 1e-8).unwrap();
    let total = from.add(&to_inf).unwrap();
    let first = total.slice_axis(0, 0).unwrap().broadcast_to(total.axes()).unwrap();
    assert!(total.sub(&first).unwrap().linf() < 1e-13);
}

#[test]
fn truncation_with_a_live_tail_is_refused() {
    let sigma = SigmaSpec::single(2, 1, 1.0, 1, Slot::X).unwrap();
    let axes = vec![Axis::new(Slot::X, 1, 11, 0.1, 0.0)];
    let f = GridFunction::from_real_fn(2, 1, axes, |p| (-p[0]).exp()).unwrap();
    let fol = RayFoliation::axis_aligned(2, 1, (0.0, 1.0)).unwrap();
    assert!(antideriv_to_infinity(&sigma, &f, &fol, 1e-8).is_err());
}
