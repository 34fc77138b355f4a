//! Differential operators with constant `A_r` coefficients in the normal form
//! `Af = Σ_{j,s} (A_{j,s} f_s) i_j^*`, where every `A_{j,s}` is a real
//! constant-coefficient operator and `f = Σ_s f_s i_s`.
//!
//! Real operators are stored as polynomials in the symbols `∂_0, …, ∂_{n−1}`,
//! so their composition is polynomial multiplication. Test inputs are real
//! polynomials in the coordinates.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cd_algebra::{basis_table, dim};
use crate::diff_ops::SigmaSpec;

/// Real polynomial in `nvars` variables, keyed by exponent vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn monomial(nvars: usize, coef: f64, exps: Vec<u8>) -> Self {
        assert_eq!(exps.len(), nvars);
        let mut p = Self::zero(nvars);
        p.add_term(exps, coef);
        p
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(nvars, c, vec![0; nvars])
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &f64)> {
        self.terms.iter()
    }

    fn add_term(&mut self, exps: Vec<u8>, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let e = self.terms.entry(exps).or_insert(0.0);
        *e += coef;
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| *c == 0.0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &other.terms {
            p.add_term(e.clone(), *c);
        }
        p
    }

    pub fn scale(&self, a: f64) -> Poly {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), a * c);
        }
        p
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut p = Self::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u8> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                p.add_term(e, c1 * c2);
            }
        }
        p
    }

    /// `∂^α` of the polynomial.
    pub fn derivative(&self, alpha: &[u8]) -> Poly {
        let mut p = Self::zero(self.nvars);
        'terms: for (e, c) in &self.terms {
            let mut coef = *c;
            let mut ne = e.clone();
            for (k, &a) in alpha.iter().enumerate() {
                for _ in 0..a {
                    if ne[k] == 0 {
                        continue 'terms;
                    }
                    coef *= ne[k] as f64;
                    ne[k] -= 1;
                }
            }
            p.add_term(ne, coef);
        }
        p
    }

    /// Applies the real operator whose symbol is `self` to `f`.
    pub fn apply_as_operator(&self, f: &Poly) -> Poly {
        let mut out = Poly::zero(f.nvars);
        for (alpha, a) in &self.terms {
            out = out.add(&f.derivative(alpha).scale(*a));
        }
        out
    }

    /// Largest coefficient magnitude of `self − other`.
    pub fn max_diff(&self, other: &Poly) -> f64 {
        self.add(&other.scale(-1.0))
            .terms
            .values()
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn random(nvars: usize, max_degree: u8, n_terms: usize, rng: &mut impl Rng) -> Poly {
        let mut p = Self::zero(nvars);
        for _ in 0..n_terms {
            let total = rng.gen_range(0..=max_degree);
            let mut e = vec![0u8; nvars];
            for _ in 0..total {
                e[rng.gen_range(0..nvars)] += 1;
            }
            p.add_term(e, rng.gen_range(-1.0..1.0));
        }
        p
    }
}

/// `ε_j`: the sign with `i_j^* = ε_j i_j`.
fn eps(j: usize) -> f64 {
    if j == 0 {
        1.0
    } else {
        -1.0
    }
}

/// An `A_r`-valued function as its real components `f_s`.
pub type Components = Vec<Poly>;

/// Operator in the normal form `Af = Σ_{j,s} (A_{j,s} f_s) i_j^*`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalOp {
    level: u32,
    /// `a[j][s]` is the symbol of `A_{j,s}`.
    a: Vec<Vec<Poly>>,
}

impl NormalOp {
    pub fn zero(level: u32) -> Self {
        let n = dim(level);
        NormalOp {
            level,
            a: vec![vec![Poly::zero(n); n]; n],
        }
    }

    /// The unit operator `If = f`.
    pub fn identity(level: u32) -> Self {
        let n = dim(level);
        let mut op = Self::zero(level);
        for j in 0..n {
            op.a[j][j] = Poly::constant(n, eps(j));
        }
        op
    }

    /// Builds an operator from `(j, s, coefficient, multi-index)` terms.
    pub fn from_terms(level: u32, terms: &[(usize, usize, f64, Vec<u8>)]) -> Self {
        let n = dim(level);
        let mut op = Self::zero(level);
        for (j, s, c, alpha) in terms {
            let m = Poly::monomial(n, *c, alpha.clone());
            op.a[*j][*s] = op.a[*j][*s].add(&m);
        }
        op
    }

    /// The real operator `p(∂)` acting on every component.
    pub fn real(level: u32, symbol: &Poly) -> Self {
        let n = dim(level);
        let mut op = Self::zero(level);
        for j in 0..n {
            op.a[j][j] = symbol.scale(eps(j));
        }
        op
    }

    /// Right multiplication `f ↦ f·i_m`.
    pub fn right_generator(level: u32, m: usize) -> Self {
        let n = dim(level);
        let table = basis_table(level);
        let mut op = Self::zero(level);
        for s in 0..n {
            let (sg, t) = table.product(s, m);
            op.a[t][s] = op.a[t][s].add(&Poly::constant(n, sg * eps(t)));
        }
        op
    }

    /// Left multiplication `f ↦ i_m·f`.
    pub fn left_generator(level: u32, m: usize) -> Self {
        let n = dim(level);
        let table = basis_table(level);
        let mut op = Self::zero(level);
        for s in 0..n {
            let (sg, t) = table.product(m, s);
            op.a[t][s] = op.a[t][s].add(&Poly::constant(n, sg * eps(t)));
        }
        op
    }

    /// The operator `σ`, acting by left multiplication with `i_j^*`.
    pub fn from_sigma(sigma: &SigmaSpec) -> Self {
        let level = sigma.level();
        let n = dim(level);
        let table = basis_table(level);
        let mut op = Self::zero(level);
        for j in sigma.active() {
            let mut alpha = vec![0u8; n];
            alpha[sigma.xi()[j]] = 1;
            for s in 0..n {
                let (sg, t) = table.product(j, s);
                let c = sigma.psi()[j] * eps(j) * sg * eps(t);
                op.a[t][s] = op.a[t][s].add(&Poly::monomial(n, c, alpha.clone()));
            }
        }
        op
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn coefficient(&self, j: usize, s: usize) -> &Poly {
        &self.a[j][s]
    }

    pub fn order(&self) -> usize {
        self.a
            .iter()
            .flatten()
            .map(|p| p.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn apply(&self, f: &Components) -> Components {
        let n = dim(self.level);
        let nv = f[0].nvars();
        (0..n)
            .map(|j| {
                let mut acc = Poly::zero(nv);
                for s in 0..n {
                    if !self.a[j][s].is_zero() {
                        acc = acc.add(&self.a[j][s].apply_as_operator(&f[s]));
                    }
                }
                acc.scale(eps(j))
            })
            .collect()
    }

    pub fn add(&self, other: &NormalOp) -> NormalOp {
        let mut op = self.clone();
        for (r, o) in op.a.iter_mut().zip(&other.a) {
            for (x, y) in r.iter_mut().zip(o) {
                *x = x.add(y);
            }
        }
        op
    }

    pub fn scale(&self, t: f64) -> NormalOp {
        let mut op = self.clone();
        op.a.iter_mut().flatten().for_each(|p| *p = p.scale(t));
        op
    }

    /// `C = B·A` by `C_{k,s} = Σ_j w_j B_{k,j} A_{j,s}` with
    /// `w_j = (−1)^{sign j}` when `signed`, otherwise `w_j = 1`.
    pub fn compose_formula(b: &NormalOp, a: &NormalOp, signed: bool) -> NormalOp {
        let n = dim(a.level);
        let mut c = NormalOp::zero(a.level);
        for k in 0..n {
            for s in 0..n {
                let mut acc = Poly::zero(n);
                for j in 0..n {
                    if b.a[k][j].is_zero() || a.a[j][s].is_zero() {
                        continue;
                    }
                    let w = if signed { eps(j) } else { 1.0 };
                    acc = acc.add(&b.a[k][j].mul(&a.a[j][s]).scale(w));
                }
                c.a[k][s] = acc;
            }
        }
        c
    }

    /// `A^k` in the algebra, multiplied from the left one factor at a time.
    pub fn power(&self, k: u32) -> NormalOp {
        let mut p = NormalOp::identity(self.level);
        for _ in 0..k {
            p = NormalOp::compose_formula(self, &p, true);
        }
        p
    }

    /// True when `A = p(∂)·I` for a real operator `p`.
    pub fn is_scalar_real(&self, tol: f64) -> bool {
        let n = dim(self.level);
        let p0 = &self.a[0][0];
        for j in 0..n {
            for s in 0..n {
                let expected = if j == s {
                    p0.scale(eps(j))
                } else {
                    Poly::zero(n)
                };
                if self.a[j][s].max_diff(&expected) > tol {
                    return false;
                }
            }
        }
        true
    }
}

fn components_diff(a: &Components, b: &Components) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_diff(y)).fold(0.0, f64::max)
}

/// Random `A_r`-valued polynomial inputs.
pub fn random_inputs(level: u32, count: usize, max_degree: u8, seed: u64) -> Vec<Components> {
    let n = dim(level);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| Poly::random(n, max_degree, 4, &mut rng)).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DrAlgebraReport {
    /// Largest gap between `B(Af)` and `Cf` with the signed formula.
    pub signed_gap: f64,
    /// The same gap with all weights equal to one.
    pub unsigned_gap: f64,
    /// Which variant reproduces direct composition.
    pub signed_matches: bool,
    pub unsigned_matches: bool,
    /// Largest `‖A^k(A^m f) − A^{k+m} f‖` over `k + m ≤ 4`.
    pub power_assoc_gap: f64,
    /// `‖(AB)A f − A(BA) f‖`, recorded without a claim.
    pub associativity_gap: f64,
    /// `A` commutes with `f ↦ i_m f`, `f ↦ f i_m` and every `∂_k`.
    pub central_by_commutation: bool,
    /// `A` has the form `p(∂)·I` with a real operator `p`.
    pub central_by_form: bool,
    pub samples: usize,
}

impl DrAlgebraReport {
    pub fn passed(&self) -> bool {
        self.signed_matches
            && self.power_assoc_gap <= 1e-9
            && self.central_by_commutation == self.central_by_form
    }
}

fn apply_power(op: &NormalOp, k: u32, f: &Components) -> Components {
    let mut g = f.clone();
    for _ in 0..k {
        g = op.apply(&g);
    }
    g
}

/// Checks the composition formula, power associativity and the centre
/// criterion for `A` and `B` on seeded random polynomials of degree ≤ 5.
pub fn dr_algebra_check(a: &NormalOp, b: &NormalOp, seed: u64) -> DrAlgebraReport {
    let level = a.level;
    let n = dim(level);
    let inputs = random_inputs(level, 8, 5, seed);
    let tol = 1e-9;

    let c_signed = NormalOp::compose_formula(b, a, true);
    let c_unsigned = NormalOp::compose_formula(b, a, false);
    let mut signed_gap = 0.0f64;
    let mut unsigned_gap = 0.0f64;
    let mut power_gap = 0.0f64;
    let mut assoc_gap = 0.0f64;
    for f in &inputs {
        let direct = b.apply(&a.apply(f));
        signed_gap = signed_gap.max(components_diff(&direct, &c_signed.apply(f)));
        unsigned_gap = unsigned_gap.max(components_diff(&direct, &c_unsigned.apply(f)));
        for k in 0..=4u32 {
            for m in 0..=(4 - k) {
                let lhs = a.power(k).apply(&a.power(m).apply(f));
                let rhs = a.power(k + m).apply(f);
                power_gap = power_gap.max(components_diff(&lhs, &rhs));
                let iter = apply_power(a, k + m, f);
                power_gap = power_gap.max(components_diff(&iter, &rhs));
            }
        }
        let ab = NormalOp::compose_formula(a, b, true);
        let ba = NormalOp::compose_formula(b, a, true);
        let left = NormalOp::compose_formula(&ab, a, true).apply(f);
        let right = NormalOp::compose_formula(a, &ba, true).apply(f);
        assoc_gap = assoc_gap.max(components_diff(&left, &right));
    }

    let mut generators: Vec<NormalOp> = (0..n)
        .flat_map(|m| [NormalOp::left_generator(level, m), NormalOp::right_generator(level, m)])
        .collect();
    for k in 0..n {
        let mut alpha = vec![0u8; n];
        alpha[k] = 1;
        generators.push(NormalOp::real(level, &Poly::monomial(n, 1.0, alpha)));
    }
    let central_by_commutation = generators.iter().all(|g| {
        inputs.iter().all(|f| {
            let ag = a.apply(&g.apply(f));
            let ga = g.apply(&a.apply(f));
            components_diff(&ag, &ga) <= tol
        })
    });

    DrAlgebraReport {
        signed_gap,
        unsigned_gap,
        signed_matches: signed_gap <= tol,
        unsigned_matches: unsigned_gap <= tol,
        power_assoc_gap: power_gap,
        associativity_gap: assoc_gap,
        central_by_commutation,
        central_by_form: a.is_scalar_real(tol),
        samples: inputs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Slot;

    fn d(n: usize, k: usize) -> Poly {
        let mut a = vec![0u8; n];
        a[k] = 1;
        Poly::monomial(n, 1.0, a)
    }

    #[test]
    fn polynomial_derivatives() {
        let p = Poly::monomial(2, 3.0, vec![2, 1]);
        assert_eq!(p.derivative(&[1, 1]), Poly::monomial(2, 6.0, vec![1, 0]));
        assert!(p.derivative(&[0, 2]).is_zero());
    }

    #[test]
    fn real_derivative_is_central() {
        let a = NormalOp::real(2, &d(4, 0));
        let b = NormalOp::from_terms(2, &[(1, 2, 1.0, vec![0, 1, 0, 0]), (3, 0, -2.0, vec![0, 0, 0, 0])]);
        let r = dr_algebra_check(&a, &b, 1);
        assert!(r.central_by_form && r.central_by_commutation, "{r:?}");
        assert!(r.passed());
    }

    #[test]
    fn sigma_square_has_real_coefficients() {
        let s = SigmaSpec::single(2, 1, 1.0, 1, Slot::X).unwrap();
        let a = NormalOp::from_sigma(&s);
        assert!(!a.is_scalar_real(1e-12));
        let sq = NormalOp::compose_formula(&a, &a, true);
        assert!(sq.is_scalar_real(1e-12));
        assert_eq!(sq.coefficient(0, 0), &Poly::monomial(4, -1.0, vec![0, 2, 0, 0]));
    }

    #[test]
    fn identity_is_neutral() {
        let i = NormalOp::identity(1);
        let f = random_inputs(1, 1, 3, 5).remove(0);
        assert_eq!(i.apply(&f), f);
    }
}
