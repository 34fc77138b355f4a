//! Invariant suites shared by the `selftest` verb and the acceptance harness.
//!
//! Every suite counts individual checks so a caller can print
//! `passed/total` per suite. None of them solves a scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cd_algebra::{
    alternativity_counterexample, basis_table, dim, find_zero_divisor, CdNumber,
};
use crate::diff_ops::{apply_sigma, check_real_coefficients, SigmaSpec};
use crate::grid::{Axis, GridFunction, Slot};
use crate::line_integral::{antideriv_from, antideriv_to_infinity, RayFoliation};
use crate::operator_algebra::{dr_algebra_check, NormalOp};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    pub notes: Vec<String>,
}

impl SuiteResult {
    fn new(name: impl Into<String>) -> Self {
        SuiteResult {
            name: name.into(),
            passed: 0,
            total: 0,
            notes: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.notes.len() < 8 {
            self.notes.push(format!("failed: {}", what()));
        }
    }

    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

pub fn random_number(level: u32, rng: &mut impl Rng) -> CdNumber {
    let coeffs = (0..dim(level)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    CdNumber::from_coeffs(level, coeffs).expect("level in range")
}

/// Involution, anti-homomorphism of conjugation, real trace, `aa* = a*a > 0`
/// and `|a|² = aa*` on `samples` seeded random pairs.
pub fn algebra_axioms(level: u32, samples: usize, seed: u64, tol: f64) -> SuiteResult {
    let mut suite = SuiteResult::new(format!("algebra axioms r={level}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(level));
    for _ in 0..samples {
        let a = random_number(level, &mut rng);
        let b = random_number(level, &mut rng);
        let scale = 1.0f64.max(a.norm() * b.norm());
        let na = 1.0f64.max(a.norm_sq());

        suite.record(a.conj().conj().max_diff(&a) == 0.0, || "a** = a".into());
        let lhs = a.mul(&b).conj();
        let rhs = b.conj().mul(&a.conj());
        suite.record(lhs.max_diff(&rhs) <= tol * scale, || {
            format!("(ab)* = b*a*, gap {:e}", lhs.max_diff(&rhs))
        });
        let trace = &a + &a.conj();
        suite.record(trace.is_real(tol * 1.0f64.max(a.norm())), || "a + a* real".into());
        let aa = a.mul(&a.conj());
        let a_a = a.conj().mul(&a);
        suite.record(
            aa.max_diff(&a_a) <= tol * na && aa.is_real(tol * na) && aa.re() > 0.0,
            || "aa* = a*a > 0".into(),
        );
        let sq: f64 = a.coeffs().iter().map(|c| c * c).sum();
        suite.record((aa.re() - sq).abs() <= tol * na, || "|a|² = aa*".into());
    }
    suite
}

/// Both alternative laws on random pairs at `level`.
pub fn alternativity(level: u32, samples: usize, seed: u64, tol: f64) -> SuiteResult {
    let mut suite = SuiteResult::new(format!("alternativity r={level}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    for _ in 0..samples {
        let x = random_number(level, &mut rng);
        let y = random_number(level, &mut rng);
        let scale = 1.0f64.max(x.norm() * y.norm() * y.norm().max(x.norm()));
        let right = x.mul(&y).mul(&y).max_diff(&x.mul(&y.mul(&y)));
        let left = x.mul(&x.mul(&y)).max_diff(&x.mul(&x).mul(&y));
        suite.record(right <= tol * scale && left <= tol * scale, || {
            format!("alternative laws, gaps {right:e} / {left:e}")
        });
    }
    suite
}

/// Exhibits a violation of `(xy)y = x(yy)` and a zero-divisor pair at `level`.
pub fn sedenion_witnesses(level: u32) -> SuiteResult {
    let mut suite = SuiteResult::new(format!("non-alternativity witnesses r={level}"));
    let counter = alternativity_counterexample(level);
    suite.record(counter.is_some(), || "no alternativity counterexample".into());
    if let Some((x, y, gap)) = counter {
        suite.notes.push(format!(
            "(xy)y != x(yy) for x = {}, y = {}, gap {gap}",
            fmt_number(&x),
            fmt_number(&y)
        ));
    }
    let pair = find_zero_divisor(level);
    let verified = pair.as_ref().is_some_and(|(a, b)| {
        a.norm() > 0.5 && b.norm() > 0.5 && a.mul(b).norm() < 1e-12
    });
    suite.record(verified, || "no zero-divisor pair".into());
    if let Some((a, b)) = pair {
        suite.notes.push(format!(
            "zero divisors a = {}, b = {}, |ab| = {:e}",
            fmt_number(&a),
            fmt_number(&b),
            a.mul(&b).norm()
        ));
    }
    suite
}

/// Compares the doubling recursion with the cached basis table on every
/// pair of basis elements, exactly.
pub fn doubling_vs_table(level: u32) -> SuiteResult {
    let mut suite = SuiteResult::new(format!("doubling vs table r={level}"));
    let n = dim(level);
    let table = basis_table(level);
    for j in 0..n {
        for k in 0..n {
            let a = CdNumber::basis(level, j).expect("in range");
            let b = CdNumber::basis(level, k).expect("in range");
            let rec = a.mul(&b);
            let (sign, idx) = table.product(j, k);
            let mut expect = CdNumber::zero(level);
            expect = &expect + &CdNumber::basis(level, idx).expect("in range").scale(sign);
            suite.record(rec == expect && a.mul_table(&b) == rec, || {
                format!("i_{j} i_{k}")
            });
        }
    }
    suite
}

pub fn fmt_number(a: &CdNumber) -> String {
    let terms: Vec<String> = a
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| format!("{c:+}·i{j}"))
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" ")
    }
}

/// Operators exercised by the inversion suite: a single generator, a
/// generator moved onto the sampled coordinate by a transposition, and a
/// spread-out octonion operator under a non-identity permutation.
pub fn inversion_operators() -> Vec<(String, SigmaSpec)> {
    vec![
        (
            "i_1 on x_1".into(),
            SigmaSpec::single(2, 1, 1.0, 1, Slot::X).expect("valid"),
        ),
        (
            "i_2 on x_1 by transposition".into(),
            SigmaSpec::single(2, 2, -0.5, 1, Slot::X).expect("valid"),
        ),
        (
            "octonion mix, xi = (0 3 1 2 5 4 7 6)".into(),
            SigmaSpec::new(
                3,
                vec![0.0, 0.6, -1.2, 0.9, 0.3, 0.0, -0.4, 0.0],
                vec![0, 3, 1, 2, 5, 4, 7, 6],
                Slot::X,
            )
            .expect("valid"),
        ),
    ]
}

/// Errors of `σ∘∫_{x0}^{x} − id` and `σ∘∫_{x}^{∞} + id` at spacing `h`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InversionErrors {
    pub from: f64,
    pub to_infinity: f64,
}

fn inversion_sample(level: u32, coord: usize, h: f64) -> GridFunction {
    let len = 40.0;
    let n = (len / h).round() as usize + 1;
    let axes = vec![Axis::new(Slot::X, coord, n, h, 0.0)];
    let d = dim(level);
    GridFunction::from_fn(level, 1, axes, |p, out| {
        let x = p[0];
        for (m, o) in out.iter_mut().enumerate() {
            let a = 1.0 + m as f64 / d as f64;
            *o = (-(a * x)).exp() * (1.0 + 0.5 * (m as f64 + x).sin()) - 0.3 * (-(2.0 * x)).exp();
        }
    })
    .expect("valid grid")
    .with_constant_elsewhere()
}

fn ray_coordinate(sigma: &SigmaSpec) -> usize {
    sigma.xi()[sigma.active().next().expect("operator has an active generator")]
}

pub fn inversion_errors(sigma: &SigmaSpec, h: f64) -> Result<InversionErrors, crate::line_integral::IntegralError> {
    let coord = ray_coordinate(sigma);
    let g = inversion_sample(sigma.level(), coord, h);
    let fol = RayFoliation::axis_aligned(sigma.level(), coord, (0.0, 40.0))?;
    let w = antideriv_from(sigma, &g, &fol)?;
    let back = apply_sigma(sigma, &w).map_err(|e| {
        crate::line_integral::IntegralError::IncompatibleDirection(e.to_string())
    })?;
    let from = back.sub(&g).expect("same shape").linf();
    let w = antideriv_to_infinity(sigma, &g, &fol, 1e-8)?;
    let back = apply_sigma(sigma, &w).map_err(|e| {
        crate::line_integral::IntegralError::IncompatibleDirection(e.to_string())
    })?;
    let to_infinity = back.add(&g).expect("same shape").linf();
    Ok(InversionErrors { from, to_infinity })
}

/// Both inversion identities for every operator in [`inversion_operators`],
/// requiring an observed order of at least `min_order` between `h` and `h/2`.
pub fn inversion_suite(h: f64, min_order: f64) -> SuiteResult {
    let mut suite = SuiteResult::new("line-integral inversion");
    for (name, sigma) in inversion_operators() {
        let coarse = inversion_errors(&sigma, h);
        let fine = inversion_errors(&sigma, h / 2.0);
        match (coarse, fine) {
            (Ok(c), Ok(f)) => {
                let o_from = (c.from / f.from).log2();
                let o_inf = (c.to_infinity / f.to_infinity).log2();
                suite.record(o_from >= min_order, || format!("{name}: from-order {o_from:.3}"));
                suite.record(o_inf >= min_order, || format!("{name}: to-infinity order {o_inf:.3}"));
                suite.notes.push(format!(
                    "{name}: errors {:.2e}/{:.2e}, order {o_from:.2}; to infinity {:.2e}/{:.2e}, order {o_inf:.2}",
                    c.from, f.from, c.to_infinity, f.to_infinity
                ));
            }
            (c, f) => {
                let msg = c.err().or(f.err()).map(|e| e.to_string()).unwrap_or_default();
                suite.record(false, || format!("{name}: {msg}"));
                suite.record(false, || format!("{name}: {msg}"));
            }
        }
    }
    suite
}

/// Composition formula, power associativity and the real-coefficient
/// property of even powers.
pub fn operator_suite(seed: u64) -> SuiteResult {
    let mut suite = SuiteResult::new("operator algebra");
    let pairs = [
        (
            SigmaSpec::single(2, 1, 1.0, 1, Slot::X).expect("valid"),
            SigmaSpec::single(2, 2, 0.5, 2, Slot::X).expect("valid"),
        ),
        (
            SigmaSpec::new(2, vec![0.0, 1.0, -0.7, 0.4], vec![0, 2, 3, 1], Slot::X).expect("valid"),
            SigmaSpec::new(2, vec![0.3, 0.0, 1.0, 0.0], vec![0, 1, 2, 3], Slot::X).expect("valid"),
        ),
        (
            SigmaSpec::single(3, 5, 1.5, 2, Slot::X).expect("valid"),
            SigmaSpec::new(3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0, 1, 2, 3, 4, 5, 6, 7], Slot::X)
                .expect("valid"),
        ),
    ];
    for (k, (a, b)) in pairs.iter().enumerate() {
        let na = NormalOp::from_sigma(a);
        let nb = NormalOp::from_sigma(b);
        let rep = dr_algebra_check(&na, &nb, seed.wrapping_add(k as u64));
        suite.record(rep.signed_matches, || {
            format!("pair {k}: composition gap {:e}", rep.signed_gap)
        });
        suite.record(rep.power_assoc_gap <= 1e-9, || {
            format!("pair {k}: power associativity gap {:e}", rep.power_assoc_gap)
        });
        suite.record(rep.central_by_commutation == rep.central_by_form, || {
            format!("pair {k}: centre criteria disagree")
        });
        if a.psi0() == 0.0 {
            let even = na.power(2);
            suite.record(even.is_scalar_real(1e-10), || {
                format!("pair {k}: σ² has a non-real coefficient")
            });
        }
    }
    let real = NormalOp::from_sigma(&SigmaSpec::real_derivative(2, Slot::X));
    let rep = dr_algebra_check(&real, &NormalOp::from_sigma(&pairs[0].0), seed);
    suite.record(rep.central_by_commutation && rep.central_by_form, || {
        "the real derivative is not central".into()
    });
    let leak = real_coefficient_leak();
    suite.record(leak < 1e-10, || format!("real-coefficient leak {leak:e}"));
    suite.notes.push(format!("largest real-coefficient leak of σ², σ⁴: {leak:.2e}"));
    suite
}

/// Largest imaginary part of `σ^2 f` and `σ^4 f` for real samples `f` over a
/// two-dimensional grid, with `σ` mixing two coordinates.
pub fn real_coefficient_leak() -> f64 {
    let sigmas = [
        SigmaSpec::new(2, vec![0.0, 1.0, -0.7, 0.4], vec![0, 1, 2, 3], Slot::X).expect("valid"),
        SigmaSpec::new(3, vec![0.0, 0.5, 0.0, 1.0, 0.0, 0.0, -2.0, 0.0], vec![0, 2, 1, 3, 4, 5, 6, 7], Slot::X)
            .expect("valid"),
    ];
    let mut worst = 0.0f64;
    for sigma in &sigmas {
        let axes = vec![
            Axis::new(Slot::X, 1, 11, 0.1, 0.0),
            Axis::new(Slot::X, 2, 11, 0.1, 0.0),
        ];
        let samples: Vec<GridFunction> = [
            |p: &[f64]| (p[0] * 1.3).sin() * (p[1] * 0.7).cos(),
            |p: &[f64]| p[0] * p[0] * p[1] + (-p[1]).exp(),
        ]
        .iter()
        .map(|f| {
            GridFunction::from_real_fn(sigma.level(), 1, axes.clone(), f)
                .expect("valid")
                .with_constant_elsewhere()
        })
        .collect();
        for m in [2u32, 4] {
            match check_real_coefficients(sigma, m, &samples) {
                Ok(rep) => worst = worst.max(rep.max_leak),
                Err(_) => return f64::INFINITY,
            }
        }
    }
    worst
}

/// Runs every suite with default sizes.
pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    let mut out = Vec::new();
    for r in 1..=4 {
        out.push(algebra_axioms(r, 1000, seed, 1e-12));
    }
    out.push(alternativity(3, 1000, seed, 1e-12));
    out.push(sedenion_witnesses(4));
    for r in 0..=4 {
        out.push(doubling_vs_table(r));
    }
    out.push(inversion_suite(0.02, 1.9));
    out.push(operator_suite(seed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_axioms_hold() {
        let s = algebra_axioms(2, 50, 3, 1e-12);
        assert!(s.ok(), "{:?}", s.notes);
        assert_eq!(s.total, 250);
    }

    #[test]
    fn sedenions_have_witnesses() {
        let s = sedenion_witnesses(4);
        assert!(s.ok());
        assert_eq!(s.notes.len(), 2);
    }

    #[test]
    fn octonions_have_no_zero_divisor_witness() {
        assert!(!sedenion_witnesses(3).ok());
    }
}
