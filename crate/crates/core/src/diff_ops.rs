//! First-order operators `σ = Σ_j i_j^* ψ_j ∂/∂x_{ξ(j)}` on grid functions.
//!
//! Derivatives are second-order finite differences: central in the interior
//! and one-sided three-point stencils at the two ends of every axis.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cd_algebra::{basis_table, dim, CdNumber};
use crate::grid::{GridError, GridFunction, Slot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("operator differentiates {slot}{coord}, which is neither sampled nor declared constant")]
    UnmappedAxis { slot: Slot, coord: usize },
    #[error("malformed grouping: {0}")]
    BadGrouping(String),
    #[error("axis {slot}{coord} has {n} points, the stencil needs {needed}")]
    GridTooSmall {
        slot: Slot,
        coord: usize,
        n: usize,
        needed: usize,
    },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid operator: {0}")]
    InvalidSigma(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Coefficients `ψ_j`, the permutation `ξ` and the variable slot of `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    level: u32,
    psi: Vec<f64>,
    xi: Vec<usize>,
    var: Slot,
}

impl SigmaSpec {
    pub fn new(level: u32, psi: Vec<f64>, xi: Vec<usize>, var: Slot) -> Result<Self, DiffError> {
        let n = dim(level);
        if psi.len() != n || xi.len() != n {
            return Err(DiffError::InvalidSigma(format!(
                "level {level} needs {n} coefficients and a permutation of {n} indices"
            )));
        }
        let mut seen = vec![false; n];
        for &k in &xi {
            if k >= n || seen[k] {
                return Err(DiffError::InvalidSigma(format!(
                    "{xi:?} is not a permutation of 0..{n}"
                )));
            }
            seen[k] = true;
        }
        if !(psi.iter().map(|p| p * p).sum::<f64>() > 0.0) {
            return Err(DiffError::InvalidSigma("all coefficients vanish".into()));
        }
        Ok(SigmaSpec {
            level,
            psi,
            xi,
            var,
        })
    }

    /// `σ = i_j^* ψ ∂/∂x_coord`, with `ξ` the transposition of `j` and `coord`.
    pub fn single(level: u32, j: usize, psi: f64, coord: usize, var: Slot) -> Result<Self, DiffError> {
        let n = dim(level);
        if j >= n || coord >= n {
            return Err(DiffError::InvalidSigma("index out of range".into()));
        }
        let mut p = vec![0.0; n];
        p[j] = psi;
        let mut xi: Vec<usize> = (0..n).collect();
        xi.swap(j, coord);
        Self::new(level, p, xi, var)
    }

    /// `∂/∂x_0` acting on the given slot.
    pub fn real_derivative(level: u32, var: Slot) -> Self {
        Self::single(level, 0, 1.0, 0, var).expect("valid")
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn xi(&self) -> &[usize] {
        &self.xi
    }

    pub fn var(&self) -> Slot {
        self.var
    }

    /// Same coefficients acting on another variable slot.
    pub fn on(&self, var: Slot) -> SigmaSpec {
        SigmaSpec {
            var,
            ..self.clone()
        }
    }

    /// Generator index driving coordinate `coord`, i.e. `ξ⁻¹(coord)`.
    pub fn generator_for(&self, coord: usize) -> usize {
        self.xi.iter().position(|&k| k == coord).expect("permutation")
    }

    /// Real coefficient `ψ_0`.
    pub fn psi0(&self) -> f64 {
        self.psi[0]
    }

    /// Indices `j` with `ψ_j ≠ 0`.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.psi
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(j, _)| j)
    }

    /// Symbol of `σ` on a function of the single coordinate `coord`:
    /// `i_j^* ψ_j` with `j = ξ⁻¹(coord)`.
    pub fn symbol(&self, coord: usize) -> CdNumber {
        let j = self.generator_for(coord);
        conj_generator(self.level, j).scale(self.psi[j])
    }

    /// True when `σ` is exactly `∂/∂x_0`.
    pub fn is_real_derivative(&self) -> bool {
        self.psi[0] == 1.0 && self.xi[0] == 0 && self.psi[1..].iter().all(|p| *p == 0.0)
    }
}

/// `i_j^*`: `1` for `j = 0`, `−i_j` otherwise.
pub fn conj_generator(level: u32, j: usize) -> CdNumber {
    let e = CdNumber::basis(level, j).expect("generator in range");
    if j == 0 {
        e
    } else {
        -e
    }
}

/// Second-order finite-difference derivative along axis `k`.
pub fn fd_derivative(f: &GridFunction, k: usize) -> Result<GridFunction, DiffError> {
    let a = f.axes()[k];
    if a.n < 3 {
        return Err(DiffError::GridTooSmall {
            slot: a.slot,
            coord: a.coord,
            n: a.n,
            needed: 3,
        });
    }
    let stride = f.strides()[k];
    let b = f.block_len();
    let n = a.n;
    let inv = 1.0 / (2.0 * a.h);
    let src = f.data();
    let mut out = f.zeros_like();
    let dst = out.data_mut();
    for p in 0..f.len() {
        let i = (p / stride) % n;
        let o = &mut dst[p * b..(p + 1) * b];
        let at = |q: usize| &src[q * b..(q + 1) * b];
        if i == 0 {
            let (f0, f1, f2) = (at(p), at(p + stride), at(p + 2 * stride));
            for m in 0..b {
                o[m] = (-3.0 * f0[m] + 4.0 * f1[m] - f2[m]) * inv;
            }
        } else if i == n - 1 {
            let (f0, f1, f2) = (at(p), at(p - stride), at(p - 2 * stride));
            for m in 0..b {
                o[m] = (3.0 * f0[m] - 4.0 * f1[m] + f2[m]) * inv;
            }
        } else {
            let (fp, fm) = (at(p + stride), at(p - stride));
            for m in 0..b {
                o[m] = (fp[m] - fm[m]) * inv;
            }
        }
    }
    Ok(out)
}

/// `acc += scale · e_j · f` (left) or `acc += scale · f · e_j` (right),
/// entrywise over all blocks.
fn accumulate_basis(acc: &mut GridFunction, f: &GridFunction, j: usize, scale: f64, left: bool) {
    let level = f.level();
    let d = dim(level);
    let table = basis_table(level);
    let src = f.data();
    for (o, x) in acc.data_mut().chunks_mut(d).zip(src.chunks(d)) {
        for (m, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let (sg, idx) = if left {
                table.product(j, m)
            } else {
                table.product(m, j)
            };
            o[idx] += scale * sg * v;
        }
    }
}

fn derivative_axis(
    sigma: &SigmaSpec,
    f: &GridFunction,
    j: usize,
) -> Result<Option<usize>, DiffError> {
    let coord = sigma.xi[j];
    match f.axis_index(sigma.var, coord) {
        Some(k) => Ok(Some(k)),
        None if f.is_declared_constant(sigma.var, coord) => Ok(None),
        None => Err(DiffError::UnmappedAxis {
            slot: sigma.var,
            coord,
        }),
    }
}

fn check_level(sigma: &SigmaSpec, f: &GridFunction) -> Result<(), DiffError> {
    if sigma.level != f.level() {
        return Err(DiffError::InvalidSigma(format!(
            "operator over level {} applied to values of level {}",
            sigma.level,
            f.level()
        )));
    }
    Ok(())
}

/// `σf = Σ_j i_j^* (∂f/∂x_{ξ(j)}) ψ_j`.
pub fn apply_sigma(sigma: &SigmaSpec, f: &GridFunction) -> Result<GridFunction, DiffError> {
    check_level(sigma, f)?;
    let mut acc = f.zeros_like();
    for j in sigma.active() {
        if let Some(k) = derivative_axis(sigma, f, j)? {
            let df = fd_derivative(f, k)?;
            let sign = if j == 0 { 1.0 } else { -1.0 };
            accumulate_basis(&mut acc, &df, j, sign * sigma.psi[j], true);
        }
    }
    Ok(acc)
}

/// `σ̂f = Σ_j (∂f/∂x_{ξ(j)}) i_j ψ_j`.
pub fn apply_sigma_hat(sigma: &SigmaSpec, f: &GridFunction) -> Result<GridFunction, DiffError> {
    check_level(sigma, f)?;
    let mut acc = f.zeros_like();
    for j in sigma.active() {
        if let Some(k) = derivative_axis(sigma, f, j)? {
            let df = fd_derivative(f, k)?;
            accumulate_basis(&mut acc, &df, j, sigma.psi[j], false);
        }
    }
    Ok(acc)
}

/// `σ^m f` by `m` successive applications.
pub fn sigma_power(sigma: &SigmaSpec, m: u32, f: &GridFunction) -> Result<GridFunction, DiffError> {
    let needed = 2 * m as usize + 1;
    for j in sigma.active() {
        if let Some(k) = derivative_axis(sigma, f, j)? {
            let a = f.axes()[k];
            if a.n < needed {
                return Err(DiffError::GridTooSmall {
                    slot: a.slot,
                    coord: a.coord,
                    n: a.n,
                    needed,
                });
            }
        }
    }
    let mut g = f.clone();
    for _ in 0..m {
        g = apply_sigma(sigma, &g)?;
    }
    Ok(g)
}

/// Parenthesization of an ordered product of factors `0, 1, …, k−1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Grouping {
    Leaf(usize),
    Pair(Box<Grouping>, Box<Grouping>),
}

impl Grouping {
    /// `((f0 f1) f2) …`.
    pub fn left_to_right(k: usize) -> Grouping {
        let mut g = Grouping::Leaf(0);
        for m in 1..k {
            g = Grouping::Pair(Box::new(g), Box::new(Grouping::Leaf(m)));
        }
        g
    }

    /// Parses strings such as `"(0(12))"`: digits are factor indices and
    /// every parenthesis encloses exactly two operands.
    pub fn parse(text: &str) -> Result<Grouping, DiffError> {
        let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let g = Self::parse_at(&chars, &mut pos)?;
        if pos != chars.len() {
            return Err(DiffError::BadGrouping(format!("trailing input in {text:?}")));
        }
        Ok(g)
    }

    fn parse_at(c: &[char], pos: &mut usize) -> Result<Grouping, DiffError> {
        match c.get(*pos) {
            Some('(') => {
                *pos += 1;
                let a = Self::parse_at(c, pos)?;
                let b = Self::parse_at(c, pos)?;
                if c.get(*pos) != Some(&')') {
                    return Err(DiffError::BadGrouping("expected ')'".into()));
                }
                *pos += 1;
                Ok(Grouping::Pair(Box::new(a), Box::new(b)))
            }
            Some(d) if d.is_ascii_digit() => {
                *pos += 1;
                Ok(Grouping::Leaf(d.to_digit(10).expect("digit") as usize))
            }
            other => Err(DiffError::BadGrouping(format!("unexpected {other:?}"))),
        }
    }

    fn leaves(&self, out: &mut Vec<usize>) {
        match self {
            Grouping::Leaf(k) => out.push(*k),
            Grouping::Pair(a, b) => {
                a.leaves(out);
                b.leaves(out);
            }
        }
    }

    /// Checks that the leaves are exactly `0, 1, …, k−1` in order.
    pub fn validate(&self, k: usize) -> Result<(), DiffError> {
        let mut l = Vec::new();
        self.leaves(&mut l);
        if l != (0..k).collect::<Vec<_>>() {
            return Err(DiffError::BadGrouping(format!(
                "leaves {l:?} do not list the {k} factors in order"
            )));
        }
        Ok(())
    }
}

/// Pointwise grouped product of factors on a common lattice.
pub fn grouped_product(
    factors: &[&GridFunction],
    grouping: &Grouping,
) -> Result<GridFunction, DiffError> {
    grouping.validate(factors.len())?;
    eval_group(factors, grouping)
}

fn eval_group(factors: &[&GridFunction], g: &Grouping) -> Result<GridFunction, DiffError> {
    match g {
        Grouping::Leaf(k) => Ok(factors[*k].clone()),
        Grouping::Pair(a, b) => {
            let x = eval_group(factors, a)?;
            let y = eval_group(factors, b)?;
            Ok(x.mul(&y)?)
        }
    }
}

/// Composition of partial operators on an ordered product. `ops` lists
/// `(σ, s)` in the order of application; each one differentiates factor `s`
/// only and multiplies the whole expression on the left by `i_j^* ψ_j`.
pub fn partial_chain(
    ops: &[(&SigmaSpec, usize)],
    factors: &[&GridFunction],
    grouping: &Grouping,
) -> Result<GridFunction, DiffError> {
    grouping.validate(factors.len())?;
    if factors.is_empty() {
        return Err(DiffError::BadGrouping("no factors".into()));
    }
    for f in factors {
        if !f.same_shape(factors[0]) {
            return Err(GridError::ShapeMismatch("factors on different lattices".into()).into());
        }
    }
    let mut choices: Vec<Vec<(usize, usize)>> = Vec::with_capacity(ops.len());
    for &(sigma, s) in ops {
        if s >= factors.len() {
            return Err(DiffError::BadGrouping(format!("factor {s} does not exist")));
        }
        check_level(sigma, factors[s])?;
        let mut c = Vec::new();
        for j in sigma.active() {
            if let Some(k) = derivative_axis(sigma, factors[s], j)? {
                c.push((j, k));
            }
        }
        choices.push(c);
    }
    let mut acc = factors[0].zeros_like();
    if choices.iter().any(|c| c.is_empty()) {
        return Ok(acc);
    }
    let mut cache: HashMap<(usize, Vec<usize>), GridFunction> = HashMap::new();
    let mut pick = vec![0usize; ops.len()];
    loop {
        let mut axes_per_factor: Vec<Vec<usize>> = vec![Vec::new(); factors.len()];
        for (q, &(_, s)) in ops.iter().enumerate() {
            axes_per_factor[s].push(choices[q][pick[q]].1);
        }
        let mut derived: Vec<GridFunction> = Vec::with_capacity(factors.len());
        for (s, mut ax) in axes_per_factor.into_iter().enumerate() {
            ax.sort_unstable();
            let key = (s, ax.clone());
            if !cache.contains_key(&key) {
                let mut g = factors[s].clone();
                for &k in &ax {
                    g = fd_derivative(&g, k)?;
                }
                cache.insert(key.clone(), g);
            }
            derived.push(cache[&key].clone());
        }
        let refs: Vec<&GridFunction> = derived.iter().collect();
        let mut term = eval_group(&refs, grouping)?;
        for (q, &(sigma, _)) in ops.iter().enumerate() {
            let j = choices[q][pick[q]].0;
            let sign = if j == 0 { 1.0 } else { -1.0 };
            let mut next = term.zeros_like();
            accumulate_basis(&mut next, &term, j, sign * sigma.psi[j], true);
            term = next;
        }
        for (a, b) in acc.data_mut().iter_mut().zip(term.data()) {
            *a += b;
        }
        let mut q = 0;
        loop {
            if q == ops.len() {
                return Ok(acc);
            }
            pick[q] += 1;
            if pick[q] < choices[q].len() {
                break;
            }
            pick[q] = 0;
            q += 1;
        }
        if ops.is_empty() {
            return Ok(acc);
        }
    }
}

/// `^sσ{f_1 … f_k}`: `σ` differentiating factor `slot` of the grouped product.
pub fn apply_partial_sigma(
    sigma: &SigmaSpec,
    slot: usize,
    factors: &[&GridFunction],
    grouping: &Grouping,
) -> Result<GridFunction, DiffError> {
    partial_chain(&[(sigma, slot)], factors, grouping)
}

/// Outcome of the real-coefficient check for even powers.
#[derive(Debug, Clone, Serialize)]
pub struct RealCoefficientReport {
    pub m: u32,
    pub max_leak: f64,
    pub per_sample: Vec<f64>,
    /// `max |σ^m f − (σ^{m/2})² f|` over the samples.
    pub composition_gap: f64,
}

/// Checks that `σ^m` maps real-valued samples to real values when `ψ_0 = 0`.
pub fn check_real_coefficients(
    sigma: &SigmaSpec,
    m: u32,
    samples: &[GridFunction],
) -> Result<RealCoefficientReport, DiffError> {
    if sigma.psi0() != 0.0 {
        return Err(DiffError::PreconditionViolated(
            "the real coefficient psi_0 must vanish".into(),
        ));
    }
    if m == 0 || m % 2 != 0 {
        return Err(DiffError::PreconditionViolated(format!(
            "power {m} is not a positive even integer"
        )));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut gap = 0.0f64;
    for f in samples {
        let g = sigma_power(sigma, m, f)?;
        per_sample.push(g.imag_leak());
        let half = sigma_power(sigma, m / 2, f)?;
        let twice = sigma_power(sigma, m / 2, &half)?;
        gap = gap.max(twice.sub(&g)?.linf());
    }
    Ok(RealCoefficientReport {
        m,
        max_leak: per_sample.iter().copied().fold(0.0, f64::max),
        per_sample,
        composition_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn line(slot: Slot, coord: usize, n: usize, h: f64) -> Vec<Axis> {
        vec![Axis::new(slot, coord, n, h, 0.0)]
    }

    #[test]
    fn real_derivative_of_square() {
        let f = GridFunction::from_real_fn(2, 1, line(Slot::X, 0, 11, 0.1), |p| p[0] * p[0])
            .unwrap();
        let s = SigmaSpec::real_derivative(2, Slot::X);
        let g = apply_sigma(&s, &f).unwrap();
        for k in 0..11 {
            let x = 0.1 * k as f64;
            assert!((g.get_number(&[k]).re() - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn single_generator_on_coordinate() {
        let f = GridFunction::from_real_fn(2, 1, line(Slot::X, 1, 5, 0.25), |p| p[0]).unwrap();
        let s = SigmaSpec::new(2, vec![0.0, 1.0, 0.0, 0.0], vec![0, 1, 2, 3], Slot::X).unwrap();
        let g = apply_sigma(&s, &f).unwrap();
        assert!(g.get_number(&[2]).approx_eq(&conj_generator(2, 1), 1e-12));
    }

    #[test]
    fn unmapped_axis_is_an_error() {
        let f = GridFunction::from_real_fn(2, 1, line(Slot::X, 1, 5, 0.25), |p| p[0]).unwrap();
        let s = SigmaSpec::new(2, vec![0.0, 1.0, 1.0, 0.0], vec![0, 1, 2, 3], Slot::X).unwrap();
        assert!(matches!(
            apply_sigma(&s, &f),
            Err(DiffError::UnmappedAxis { coord: 2, .. })
        ));
        let f = f.with_constant_elsewhere();
        assert!(apply_sigma(&s, &f).is_ok());
    }

    #[test]
    fn grouping_parser() {
        assert_eq!(Grouping::parse("((01)2)").unwrap(), Grouping::left_to_right(3));
        assert!(Grouping::parse("(0(12))").unwrap().validate(3).is_ok());
        assert!(Grouping::parse("(1(02))").unwrap().validate(3).is_err());
        assert!(matches!(Grouping::parse("(01"), Err(DiffError::BadGrouping(_))));
    }

    #[test]
    fn small_grid_is_rejected() {
        let f = GridFunction::from_real_fn(1, 1, line(Slot::X, 0, 4, 0.1), |p| p[0]).unwrap();
        let s = SigmaSpec::real_derivative(1, Slot::X);
        assert!(matches!(
            sigma_power(&s, 2, &f),
            Err(DiffError::GridTooSmall { needed: 5, .. })
        ));
    }

    #[test]
    fn invalid_specs() {
        assert!(SigmaSpec::new(1, vec![0.0, 0.0], vec![0, 1], Slot::X).is_err());
        assert!(SigmaSpec::new(1, vec![1.0, 0.0], vec![0, 0], Slot::X).is_err());
        assert!(SigmaSpec::new(1, vec![1.0], vec![0], Slot::X).is_err());
    }

    #[test]
    fn odd_power_or_real_part_rejected() {
        let s = SigmaSpec::real_derivative(2, Slot::X);
        assert!(matches!(
            check_real_coefficients(&s, 2, &[]),
            Err(DiffError::PreconditionViolated(_))
        ));
        let s = SigmaSpec::single(2, 1, 1.0, 1, Slot::X).unwrap();
        assert!(check_real_coefficients(&s, 3, &[]).is_err());
    }
}
