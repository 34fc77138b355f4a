use hypercd::cd_algebra::CdNumber;
use hypercd::dressing::{
    assemble_a, right_linearity_check, solve_dressing, solve_dressing_with, DiagonalRule,
    DressingError, GridSpec, Mode, Scenario, SolveOptions,
};
use hypercd::line_integral::QuadRule;
use hypercd::presets::{kdv_permuted, kdv_scalar, mkdv_classical, mkdv_scalar};
use nalgebra::DVector;

const BETA: f64 = 2.0;
const KAPPA: f64 = 1.0;
const SPEED: f64 = 8.0;
const T: f64 = 0.05;

fn short_ray(sc: Scenario) -> Scenario {
    Scenario {
        grid: GridSpec {
            x_min: 0.0,
            x_max: 0.6,
            z_max: 0.7,
            h: 0.1,
            rule: QuadRule::Trapezoid,
            ..sc.grid
        },
        ..sc
    }
}

fn f(z: f64, y: f64) -> f64 {
    BETA * (-KAPPA * (z + y) + SPEED * T).exp()
}

fn unit(k: usize) -> CdNumber {
    CdNumber::basis(2, k).unwrap()
}

/// `Σ_k w_k F(z_k, z_j) K_k` on eight points `0, 0.1, …, 0.7`.
fn integrate(kv: &[CdNumber]) -> Vec<CdNumber> {
    let n = kv.len();
    let z = |k: usize| k as f64 * 0.1;
    let w = |k: usize| if k == 0 || k == n - 1 { 0.05 } else { 0.1 };
    (0..n)
        .map(|j| {
            (0..n).fold(CdNumber::zero(2), |acc, k| acc + kv[k].scale(w(k) * f(z(k), z(j))))
        })
        .collect()
}

fn sample_kernel() -> Vec<CdNumber> {
    (0..8)
        .map(|k| {
            let x = k as f64;
            CdNumber::from_coeffs(2, vec![x.sin(), 0.5 - 0.1 * x, (0.7 * x).cos(), 0.2 * x * x]).unwrap()
        })
        .collect()
}

fn flatten(kv: &[CdNumber]) -> DVector<f64> {
    DVector::from_iterator(kv.len() * 4, kv.iter().flat_map(|k| k.coeffs().to_vec()))
}

fn check_against(sc: &Scenario, oracle: impl Fn(&[CdNumber]) -> Vec<CdNumber>) {
    let a = assemble_a(sc, T, 0).unwrap();
    assert_eq!(a.nrows(), 32);
    let kv = sample_kernel();
    let got = &a * flatten(&kv);
    let want = flatten(&oracle(&kv));
    let gap = (&got - &want).amax();
    assert!(gap <= 1e-13 * want.amax(), "gap {gap:e}");
}

#[test]
fn kdv_operator_matches_hypercomplex_arithmetic() {
    // S = i_2^*, so p S⁻¹ = i_2.
    check_against(&short_ray(kdv_permuted(0.1)), |kv| {
        integrate(kv).iter().map(|v| unit(2).mul(v)).collect()
    });
}

#[test]
fn mkdv_operator_is_the_composite_integral() {
    // S = i_1^*; the composite is (p/4) S⁻¹ ∫F S⁻¹ ∫F.
    check_against(&short_ray(mkdv_scalar(0.1)), |kv| {
        let inner: Vec<CdNumber> = integrate(kv).iter().map(|v| unit(1).mul(v)).collect();
        integrate(&inner).iter().map(|v| unit(1).mul(v).scale(0.25)).collect()
    });
}

#[test]
fn solution_satisfies_its_own_equation() {
    let sol = solve_dressing(&kdv_permuted(0.1)).unwrap();
    let d = &sol.diagnostics;
    assert!(d.max_fixed_point_residual <= 1e-10, "{d:?}");
    assert!(d.tail <= 1e-8);
    if d.neumann_checked > 0 {
        assert!(d.max_neumann_gap <= 1e-8, "{d:?}");
    }
}

#[test]
fn dense_and_fast_paths_agree() {
    let sc = kdv_scalar(0.1);
    let fast = solve_dressing(&sc).unwrap();
    assert!(!fast.diagnostics.dense_path);
    let opts = SolveOptions {
        force_dense: true,
        ..SolveOptions::default()
    };
    let dense = solve_dressing_with(&sc, &opts).unwrap();
    assert!(dense.diagnostics.dense_path);
    assert!(fast.k.sub(&dense.k).unwrap().linf() <= 1e-10 * fast.k.linf());
}

#[test]
fn solution_is_right_linear() {
    let sc = kdv_permuted(0.1);
    let real = CdNumber::from_coeffs(2, vec![-1.7, 0.0, 0.0, 0.0]).unwrap();
    assert!(right_linearity_check(&sc, &real).unwrap() <= 1e-12);
    assert!(right_linearity_check(&sc, &unit(1)).unwrap() <= 1e-8);
}

#[test]
fn diagonal_rules_agree_to_second_order() {
    let gap = |h: f64| {
        let sc = kdv_scalar(h);
        let integral = solve_dressing(&sc).unwrap().field;
        let opts = SolveOptions {
            diagonal: DiagonalRule::Stencil,
            ..SolveOptions::default()
        };
        let stencil = solve_dressing_with(&sc, &opts).unwrap().field;
        integral.sub(&stencil).unwrap().linf()
    };
    let (c, f) = (gap(0.1), gap(0.05));
    assert!((c / f).log2() > 1.8, "{c:e} -> {f:e}");
}

/// Single-mode classical mKdV has the rank-one operator `(p/4) G²` with
/// eigenvalue `p γ²/4`, `γ = Σ w_k β e^{−2κ z_k}` along the ray. With
/// `p = 1` and `β` tuned so that `γ = 2` on the ray from `x = 0` at `t = 0`,
/// `I − A` is exactly singular there. With `c = 8` and `dt = h/4` the ray
/// from `x = −h` at `t − dt` carries the same `γ`.
#[test]
fn tuned_classical_mkdv_is_reported_singular() {
    let mut sc = Scenario {
        p: 1.0,
        ..mkdv_classical(0.1)
    };
    sc.grid.rule = QuadRule::Trapezoid;
    let n = 121;
    let gamma_unit: f64 = (0..n)
        .map(|k| {
            let w = if k == 0 || k == n - 1 { 0.05 } else { 0.1 };
            w * (-2.0 * KAPPA * 0.1 * k as f64).exp()
        })
        .sum();
    sc.modes = vec![Mode { beta: 2.0 / gamma_unit, kappa: KAPPA }];
    match solve_dressing(&sc) {
        Err(DressingError::SingularOperator { base, rcond }) => {
            let on_pole = base.abs() < 1e-12 || (base + 0.1).abs() < 1e-12;
            assert!(on_pole && rcond < 1e-10, "{base} {rcond:e}");
        }
        other => panic!("{:?}", other.map(|s| s.diagnostics)),
    }
}

#[test]
fn focusing_classical_mkdv_is_regular() {
    let sol = solve_dressing(&mkdv_classical(0.1)).unwrap();
    assert!(sol.diagnostics.min_rcond > 1e-6);
}
