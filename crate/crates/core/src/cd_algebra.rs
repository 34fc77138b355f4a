//! Cayley-Dickson algebras `A_r` of real dimension `2^r`, built by doubling.
//!
//! An element `z = a + b·l` of `A_{r+1}` is a pair of elements of `A_r`.
//! Multiplication follows
//!
//! ```text
//! (α + β l)(γ + δ l) = (αγ − δ̃β) + (δα + βγ̃) l
//! ```
//!
//! where `~` is conjugation, and the generators are numbered so that
//! `i_{2^r + m} = i_m · l`. `A_2` is the quaternions, `A_3` the octonions and
//! `A_4` the sedenions.
//!
//! Every value is immutable once built. The signed basis table of each level
//! is computed on first use and shared read-only afterwards.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use thiserror::Error;

/// Largest level accepted by the public constructors.
pub const MAX_LEVEL: u32 = 6;

/// Default relative tolerance for algebraic identities.
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("level {0} exceeds the supported maximum {MAX_LEVEL}")]
    LevelTooHigh(u32),
    #[error("expected {expected} coefficients for level {level}, got {got}")]
    BadLength {
        level: u32,
        expected: usize,
        got: usize,
    },
    #[error("generator index {index} is out of range for level {level}")]
    BasisOutOfRange { level: u32, index: usize },
    #[error("division by an element of zero norm")]
    DivisionByZero,
}

/// Index `j` of a standard generator `i_j`, with `i_0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex(pub usize);

/// An element of `A_r` stored as its `2^r` real coefficients.
#[derive(Clone, PartialEq)]
pub struct CdNumber {
    level: u32,
    coeffs: Vec<f64>,
}

/// Real dimension `2^r` of level `r`.
pub fn dim(level: u32) -> usize {
    1usize << level
}

fn check_level(level: u32) -> Result<(), AlgebraError> {
    if level > MAX_LEVEL {
        Err(AlgebraError::LevelTooHigh(level))
    } else {
        Ok(())
    }
}

impl CdNumber {
    pub fn zero(level: u32) -> Self {
        assert!(level <= MAX_LEVEL, "level {level} exceeds {MAX_LEVEL}");
        CdNumber {
            level,
            coeffs: vec![0.0; dim(level)],
        }
    }

    pub fn one(level: u32) -> Self {
        Self::real(level, 1.0)
    }

    pub fn real(level: u32, x: f64) -> Self {
        let mut z = Self::zero(level);
        z.coeffs[0] = x;
        z
    }

    /// The generator `i_j` of `A_level`.
    pub fn basis(level: u32, j: usize) -> Result<Self, AlgebraError> {
        check_level(level)?;
        if j >= dim(level) {
            return Err(AlgebraError::BasisOutOfRange { level, index: j });
        }
        let mut z = Self::zero(level);
        z.coeffs[j] = 1.0;
        Ok(z)
    }

    pub fn from_coeffs(level: u32, coeffs: Vec<f64>) -> Result<Self, AlgebraError> {
        check_level(level)?;
        if coeffs.len() != dim(level) {
            return Err(AlgebraError::BadLength {
                level,
                expected: dim(level),
                got: coeffs.len(),
            });
        }
        Ok(CdNumber { level, coeffs })
    }

    /// Builds an element from a coefficient slice whose length is a power of two.
    pub fn from_slice(coeffs: &[f64]) -> Result<Self, AlgebraError> {
        let n = coeffs.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(AlgebraError::BadLength {
                level: 0,
                expected: n.next_power_of_two().max(1),
                got: n,
            });
        }
        Self::from_coeffs(n.trailing_zeros(), coeffs.to_vec())
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    /// Real part, the coefficient of `i_0`.
    pub fn re(&self) -> f64 {
        self.coeffs[0]
    }

    /// Zero-padding embedding `A_r ↪ A_level`. Levels below the current one
    /// are rejected by a panic since they would drop information.
    pub fn embed(&self, level: u32) -> CdNumber {
        assert!(level >= self.level, "cannot embed into a lower level");
        assert!(level <= MAX_LEVEL, "level {level} exceeds {MAX_LEVEL}");
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(dim(level), 0.0);
        CdNumber { level, coeffs }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs[1..].iter().all(|c| c.abs() <= tol)
    }

    pub fn conj(&self) -> CdNumber {
        let mut out = self.coeffs.clone();
        conj_in_place(&mut out);
        CdNumber {
            level: self.level,
            coeffs: out,
        }
    }

    /// `Re(z z*)`, equal to the sum of squared coefficients.
    pub fn norm_sq(&self) -> f64 {
        self.mul(&self.conj()).re()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Product through the doubling recursion.
    pub fn mul(&self, other: &CdNumber) -> CdNumber {
        let (a, b) = common_level(self, other);
        let mut out = vec![0.0; a.coeffs.len()];
        doubling_mul(&a.coeffs, &b.coeffs, &mut out);
        CdNumber {
            level: a.level,
            coeffs: out,
        }
    }

    /// Product through the precomputed signed basis table.
    pub fn mul_table(&self, other: &CdNumber) -> CdNumber {
        let (a, b) = common_level(self, other);
        let table = basis_table(a.level);
        let mut out = vec![0.0; a.coeffs.len()];
        table.mul_into(&a.coeffs, &b.coeffs, &mut out);
        CdNumber {
            level: a.level,
            coeffs: out,
        }
    }

    /// `z* / |z|²`.
    pub fn inv(&self) -> Result<CdNumber, AlgebraError> {
        let n = self.norm_sq();
        if n == 0.0 {
            return Err(AlgebraError::DivisionByZero);
        }
        Ok(self.conj().scale(1.0 / n))
    }

    pub fn scale(&self, s: f64) -> CdNumber {
        CdNumber {
            level: self.level,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `a^n` multiplied left to right; `a^0 = 1`.
    pub fn pow(&self, n: u32) -> CdNumber {
        let mut acc = CdNumber::one(self.level);
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Mixed absolute/relative comparison: every coefficient of the difference
    /// must be within `tol · max(1, |self|, |other|)`.
    pub fn approx_eq(&self, other: &CdNumber, tol: f64) -> bool {
        let (a, b) = common_level(self, other);
        let scale = 1.0f64.max(a.norm()).max(b.norm());
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    /// Largest coefficient magnitude of `self − other`.
    pub fn max_diff(&self, other: &CdNumber) -> f64 {
        let (a, b) = common_level(self, other);
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

fn common_level(a: &CdNumber, b: &CdNumber) -> (CdNumber, CdNumber) {
    if a.level == b.level {
        (a.clone(), b.clone())
    } else {
        let l = a.level.max(b.level);
        (a.embed(l), b.embed(l))
    }
}

/// In-place conjugation of a coefficient vector: `(a, b)* = (a*, −b)`.
pub(crate) fn conj_in_place(v: &mut [f64]) {
    let n = v.len();
    if n == 1 {
        return;
    }
    let (lo, hi) = v.split_at_mut(n / 2);
    conj_in_place(lo);
    for x in hi {
        *x = -*x;
    }
}

/// Doubling product on raw coefficient slices of equal power-of-two length.
pub(crate) fn doubling_mul(a: &[f64], b: &[f64], out: &mut [f64]) {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    debug_assert_eq!(n, out.len());
    if n == 1 {
        out[0] = a[0] * b[0];
        return;
    }
    let h = n / 2;
    let (alpha, beta) = a.split_at(h);
    let (gamma, delta) = b.split_at(h);
    let mut t1 = vec![0.0; h];
    let mut t2 = vec![0.0; h];
    let mut dc = delta.to_vec();
    conj_in_place(&mut dc);
    let mut gc = gamma.to_vec();
    conj_in_place(&mut gc);

    doubling_mul(alpha, gamma, &mut t1);
    doubling_mul(&dc, beta, &mut t2);
    for k in 0..h {
        out[k] = t1[k] - t2[k];
    }
    doubling_mul(delta, alpha, &mut t1);
    doubling_mul(beta, &gc, &mut t2);
    for k in 0..h {
        out[h + k] = t1[k] + t2[k];
    }
}

/// Signed product table of the generators: `i_j i_k = sign · i_{index}`.
#[derive(Debug)]
pub struct BasisTable {
    level: u32,
    index: Vec<usize>,
    sign: Vec<f64>,
}

impl BasisTable {
    fn build(level: u32) -> Self {
        let n = dim(level);
        let mut index = vec![0; n * n];
        let mut sign = vec![0.0; n * n];
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut out = vec![0.0; n];
        for j in 0..n {
            for k in 0..n {
                a.iter_mut().for_each(|x| *x = 0.0);
                b.iter_mut().for_each(|x| *x = 0.0);
                a[j] = 1.0;
                b[k] = 1.0;
                doubling_mul(&a, &b, &mut out);
                let (m, s) = out
                    .iter()
                    .enumerate()
                    .find(|(_, v)| **v != 0.0)
                    .map(|(m, v)| (m, *v))
                    .expect("product of generators is a signed generator");
                index[j * n + k] = m;
                sign[j * n + k] = s;
            }
        }
        BasisTable { level, index, sign }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `(sign, m)` with `i_j i_k = sign · i_m`.
    pub fn product(&self, j: usize, k: usize) -> (f64, usize) {
        let n = dim(self.level);
        (self.sign[j * n + k], self.index[j * n + k])
    }

    /// `out = a · b` using the table; `out` is overwritten.
    pub fn mul_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let n = dim(self.level);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let row = j * n;
            for (k, &bk) in b.iter().enumerate() {
                if bk != 0.0 {
                    out[self.index[row + k]] += self.sign[row + k] * aj * bk;
                }
            }
        }
    }

    /// `out += c · b` where `c` is a full element.
    pub fn mul_add_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let n = dim(self.level);
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let row = j * n;
            for (k, &bk) in b.iter().enumerate() {
                if bk != 0.0 {
                    out[self.index[row + k]] += self.sign[row + k] * aj * bk;
                }
            }
        }
    }
}

static TABLES: [OnceLock<BasisTable>; (MAX_LEVEL + 1) as usize] =
    [const { OnceLock::new() }; (MAX_LEVEL + 1) as usize];

/// Shared basis table of `A_level`.
pub fn basis_table(level: u32) -> &'static BasisTable {
    assert!(level <= MAX_LEVEL, "level {level} exceeds {MAX_LEVEL}");
    TABLES[level as usize].get_or_init(|| BasisTable::build(level))
}

/// `(ab)c − a(bc)`.
pub fn associator(a: &CdNumber, b: &CdNumber, c: &CdNumber) -> CdNumber {
    &a.mul(b).mul(c) - &a.mul(&b.mul(c))
}

/// `ab − ba`.
pub fn commutator(a: &CdNumber, b: &CdNumber) -> CdNumber {
    &a.mul(b) - &b.mul(a)
}

/// Searches products `(i_p ± i_q)(i_u ± i_v)` for a pair of nonzero factors
/// whose product has norm below `1e-12`. Division algebras (`r ≤ 3`) have none.
pub fn find_zero_divisor(level: u32) -> Option<(CdNumber, CdNumber)> {
    if level > MAX_LEVEL {
        return None;
    }
    let n = dim(level);
    let table = basis_table(level);
    let mut out = vec![0.0; n];
    let pair = |p: usize, q: usize, s: f64| {
        let mut v = vec![0.0; n];
        v[p] = 1.0;
        v[q] = s;
        v
    };
    for p in 1..n {
        for q in (p + 1)..n {
            for s1 in [1.0, -1.0] {
                let a = pair(p, q, s1);
                for u in 1..n {
                    for v in (u + 1)..n {
                        for s2 in [1.0, -1.0] {
                            let b = pair(u, v, s2);
                            table.mul_into(&a, &b, &mut out);
                            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
                            if norm < 1e-12 {
                                return Some((
                                    CdNumber { level, coeffs: a },
                                    CdNumber { level, coeffs: b },
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    None
}

/// Searches sums of two generators for a pair violating the right alternative
/// law `(xy)y = x(yy)`. Returns the pair and the size of the violation.
pub fn alternativity_counterexample(level: u32) -> Option<(CdNumber, CdNumber, f64)> {
    let n = dim(level);
    let elem = |p: usize, q: usize| {
        let mut v = CdNumber::zero(level);
        v.coeffs[p] = 1.0;
        v.coeffs[q] = 1.0;
        v
    };
    for p in 1..n {
        for q in (p + 1)..n {
            let x = elem(p, q);
            for u in 1..n {
                for v in (u + 1)..n {
                    let y = elem(u, v);
                    let lhs = x.mul(&y).mul(&y);
                    let rhs = x.mul(&y.mul(&y));
                    let d = lhs.max_diff(&rhs);
                    if d > 1e-9 {
                        return Some((x, y, d));
                    }
                }
            }
        }
    }
    None
}

impl Add for &CdNumber {
    type Output = CdNumber;
    fn add(self, rhs: &CdNumber) -> CdNumber {
        let (a, b) = common_level(self, rhs);
        CdNumber {
            level: a.level,
            coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect(),
        }
    }
}

impl Sub for &CdNumber {
    type Output = CdNumber;
    fn sub(self, rhs: &CdNumber) -> CdNumber {
        let (a, b) = common_level(self, rhs);
        CdNumber {
            level: a.level,
            coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect(),
        }
    }
}

impl Mul for &CdNumber {
    type Output = CdNumber;
    fn mul(self, rhs: &CdNumber) -> CdNumber {
        CdNumber::mul(self, rhs)
    }
}

impl Neg for &CdNumber {
    type Output = CdNumber;
    fn neg(self) -> CdNumber {
        self.scale(-1.0)
    }
}

impl Add for CdNumber {
    type Output = CdNumber;
    fn add(self, rhs: CdNumber) -> CdNumber {
        &self + &rhs
    }
}

impl Sub for CdNumber {
    type Output = CdNumber;
    fn sub(self, rhs: CdNumber) -> CdNumber {
        &self - &rhs
    }
}

impl Neg for CdNumber {
    type Output = CdNumber;
    fn neg(self) -> CdNumber {
        self.scale(-1.0)
    }
}

impl fmt::Debug for CdNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (j, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mag = c.abs();
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            }
            if j == 0 {
                write!(f, "{mag}")?;
            } else {
                write!(f, "{mag}·i{j}")?;
            }
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl fmt::Display for CdNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Renders the multiplication table of the generators of `A_level`.
pub fn format_table(level: u32) -> String {
    let n = dim(level);
    let t = basis_table(level);
    let width = format!("-i{}", n - 1).len() + 1;
    let mut s = String::new();
    s.push_str(&format!("{:>width$}", "·"));
    for k in 0..n {
        s.push_str(&format!("{:>width$}", format!("i{k}")));
    }
    s.push('\n');
    for j in 0..n {
        s.push_str(&format!("{:>width$}", format!("i{j}")));
        for k in 0..n {
            let (sg, m) = t.product(j, k);
            let cell = if sg < 0.0 {
                format!("-i{m}")
            } else {
                format!("i{m}")
            };
            s.push_str(&format!("{cell:>width$}"));
        }
        s.push('\n');
    }
    s
}
