//! Non-commutative anti-derivatives along straight rays, plus variation and
//! distance utilities for sampled paths.
//!
//! Along a ray `x = x0 + t·v0` an operator `σ` acts on functions of `t` as
//! left multiplication by its ray symbol `u = Σ_j i_j^* ψ_j v0_{ξ(j)}` times
//! `d/dt`. The anti-derivative is therefore cumulative quadrature in `t`
//! followed by left multiplication with `u⁻¹`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cd_algebra::CdNumber;
use crate::diff_ops::{conj_generator, SigmaSpec};
use crate::grid::{GridError, GridFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegralError {
    #[error("ray direction is incompatible with the operator: {0}")]
    IncompatibleDirection(String),
    #[error("integrand is {value:.3e} at the truncation bound, above the tail tolerance {tol:.1e}")]
    TailNotDecayed { value: f64, tol: f64 },
    #[error("parameter range error: {0}")]
    RangeError(String),
    #[error("invalid foliation: {0}")]
    InvalidFoliation(String),
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuadRule {
    Trapezoid,
    #[default]
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rule: QuadRule,
    pub h: f64,
    pub z_max: f64,
    pub eps_tail: f64,
}

impl QuadratureConfig {
    pub fn new(rule: QuadRule, h: f64, z_max: f64, eps_tail: f64) -> Result<Self, IntegralError> {
        if !(h > 0.0) || !(z_max > 0.0) || !(eps_tail > 0.0) {
            return Err(IntegralError::InvalidQuadrature(
                "step, truncation bound and tail tolerance must be positive".into(),
            ));
        }
        Ok(QuadratureConfig {
            rule,
            h,
            z_max,
            eps_tail,
        })
    }
}

/// Weights for `n` equally spaced samples with spacing `h`.
///
/// Simpson weights cover an even number of intervals; an odd count closes
/// with the 3/8 rule on the last three intervals. Two samples fall back to
/// the trapezoid rule.
pub fn ray_weights(n: usize, h: f64, rule: QuadRule) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    let intervals = n - 1;
    if rule == QuadRule::Trapezoid || intervals == 1 {
        for (k, x) in w.iter_mut().enumerate() {
            *x = if k == 0 || k == n - 1 { 0.5 * h } else { h };
        }
        return w;
    }
    let simpson_end = if intervals % 2 == 0 {
        intervals
    } else {
        intervals - 3
    };
    for k in (0..simpson_end).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if simpson_end < intervals {
        let k = simpson_end;
        let c = 3.0 * h / 8.0;
        w[k] += c;
        w[k + 1] += 3.0 * c;
        w[k + 2] += 3.0 * c;
        w[k + 3] += c;
    }
    w
}

/// Running integrals `∫_{t_0}^{t_k} f` for every sample, third order per
/// interval.
pub fn cumulative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    for k in 0..n - 1 {
        let step = if k + 2 < n {
            h * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]) / 12.0
        } else {
            h * (-f[k - 1] + 8.0 * f[k] + 5.0 * f[k + 1]) / 12.0
        };
        out[k + 1] = out[k] + step;
    }
    out
}

/// Straight rays `t ↦ base + t·v0 + Σ α_m v_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayFoliation {
    pub base: CdNumber,
    pub v0: CdNumber,
    pub transverse: Vec<CdNumber>,
    pub t_range: (f64, f64),
}

impl RayFoliation {
    pub fn new(
        base: CdNumber,
        v0: CdNumber,
        transverse: Vec<CdNumber>,
        t_range: (f64, f64),
    ) -> Result<Self, IntegralError> {
        let level = base.level();
        let n = base.dim();
        if v0.level() != level || transverse.iter().any(|v| v.level() != level) {
            return Err(IntegralError::InvalidFoliation("mixed levels".into()));
        }
        if v0.norm_sq() == 0.0 {
            return Err(IntegralError::InvalidFoliation("zero ray direction".into()));
        }
        if transverse.len() + 1 != n {
            return Err(IntegralError::InvalidFoliation(format!(
                "need {} transverse directions, got {}",
                n - 1,
                transverse.len()
            )));
        }
        if t_range.0 >= t_range.1 {
            return Err(IntegralError::RangeError("empty parameter range".into()));
        }
        let mut rows: Vec<Vec<f64>> = std::iter::once(&v0)
            .chain(&transverse)
            .map(|v| v.coeffs().to_vec())
            .collect();
        let mut done: Vec<Vec<f64>> = Vec::new();
        for r in rows.iter_mut() {
            for q in &done {
                let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
            let nr = r.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nr < 1e-10 {
                return Err(IntegralError::InvalidFoliation(
                    "directions do not span the algebra".into(),
                ));
            }
            done.push(r.iter().map(|a| a / nr).collect());
        }
        Ok(RayFoliation {
            base,
            v0,
            transverse,
            t_range,
        })
    }

    /// Rays parallel to the real coordinate axis `coord`.
    pub fn axis_aligned(level: u32, coord: usize, t_range: (f64, f64)) -> Result<Self, IntegralError> {
        let n = crate::cd_algebra::dim(level);
        if coord >= n {
            return Err(IntegralError::InvalidFoliation("coordinate out of range".into()));
        }
        let e = |k: usize| CdNumber::basis(level, k).expect("in range");
        Self::new(
            CdNumber::zero(level),
            e(coord),
            (0..n).filter(|&k| k != coord).map(e).collect(),
            t_range,
        )
    }

    pub fn point(&self, t: f64) -> CdNumber {
        &self.base + &self.v0.scale(t)
    }

    /// The single coordinate the ray moves along, when it is axis-parallel.
    pub fn axis_coordinate(&self) -> Option<usize> {
        let nz: Vec<usize> = self
            .v0
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, _)| k)
            .collect();
        (nz.len() == 1).then(|| nz[0])
    }
}

/// `u = Σ_j i_j^* ψ_j v0_{ξ(j)}`.
pub fn ray_symbol(sigma: &SigmaSpec, v0: &CdNumber) -> CdNumber {
    let level = sigma.level();
    let mut u = CdNumber::zero(level);
    for j in sigma.active() {
        let c = v0.coeff(sigma.xi()[j]);
        if c != 0.0 {
            u = &u + &conj_generator(level, j).scale(sigma.psi()[j] * c);
        }
    }
    u
}

/// Checks the compatibility rule and returns the grid axis of the ray
/// together with `u⁻¹`.
fn prepare(
    sigma: &SigmaSpec,
    g: &GridFunction,
    foliation: &RayFoliation,
) -> Result<(usize, CdNumber), IntegralError> {
    let coord = foliation.axis_coordinate().ok_or_else(|| {
        IntegralError::IncompatibleDirection("only axis-parallel rays are sampled on a lattice".into())
    })?;
    let axis = g.axis_index(sigma.var(), coord).ok_or_else(|| {
        IntegralError::IncompatibleDirection(format!(
            "no {}{} axis to integrate along",
            sigma.var(),
            coord
        ))
    })?;
    for j in sigma.active() {
        let c = sigma.xi()[j];
        if c != coord && g.axis_index(sigma.var(), c).is_some() {
            return Err(IntegralError::IncompatibleDirection(format!(
                "operator also differentiates the sampled coordinate {c}"
            )));
        }
    }
    let u = ray_symbol(sigma, &foliation.v0);
    let inv = u.inv().map_err(|_| {
        IntegralError::IncompatibleDirection("operator has no derivative along the ray".into())
    })?;
    Ok((axis, inv))
}

fn integrate_lines(
    g: &GridFunction,
    axis: usize,
    mut line: impl FnMut(&[f64]) -> Vec<f64>,
) -> GridFunction {
    let stride = g.strides()[axis];
    let n = g.axes()[axis].n;
    let b = g.block_len();
    let mut out = g.zeros_like();
    let src = g.data();
    let dst = out.data_mut();
    let mut buf = vec![0.0; n];
    for p in 0..g.len() {
        if (p / stride) % n != 0 {
            continue;
        }
        for m in 0..b {
            for (k, v) in buf.iter_mut().enumerate() {
                *v = src[(p + k * stride) * b + m];
            }
            let r = line(&buf);
            for (k, v) in r.into_iter().enumerate() {
                dst[(p + k * stride) * b + m] = v;
            }
        }
    }
    out
}

/// `w(x) = ∫_{σ, x0}^{x} g` with `x0` the first sample of the ray axis.
pub fn antideriv_from(
    sigma: &SigmaSpec,
    g: &GridFunction,
    foliation: &RayFoliation,
) -> Result<GridFunction, IntegralError> {
    let (axis, inv) = prepare(sigma, g, foliation)?;
    let h = g.axes()[axis].h;
    let w = integrate_lines(g, axis, |f| cumulative(f, h));
    Ok(w.left_mul(&inv))
}

/// `w(x) = ∫_{σ, x}^{∞} g`, truncated at the last sample of the ray axis.
pub fn antideriv_to_infinity(
    sigma: &SigmaSpec,
    g: &GridFunction,
    foliation: &RayFoliation,
    eps_tail: f64,
) -> Result<GridFunction, IntegralError> {
    let (axis, inv) = prepare(sigma, g, foliation)?;
    let n = g.axes()[axis].n;
    let tail = g.slice_axis(axis, n - 1)?.linf();
    if tail > eps_tail {
        return Err(IntegralError::TailNotDecayed {
            value: tail,
            tol: eps_tail,
        });
    }
    let h = g.axes()[axis].h;
    let w = integrate_lines(g, axis, |f| {
        let c = cumulative(f, h);
        let total = c[c.len() - 1];
        c.iter().map(|v| total - v).collect()
    });
    let mut w = w.left_mul(&inv);
    w.z_max = Some(g.axes()[axis].point(n - 1));
    Ok(w)
}

/// `∫_{x}^{Z} g(…, x, …, z, …) dz` on a lattice where `z` runs over
/// `z_axis` and the lower limit is the current sample of `x_axis`, whose
/// points must lie on the `z` lattice. The `z` axis is removed.
pub fn integrate_from_diagonal(
    g: &GridFunction,
    x_axis: usize,
    z_axis: usize,
    rule: QuadRule,
) -> Result<GridFunction, IntegralError> {
    let ax = g.axes()[x_axis];
    let az = g.axes()[z_axis];
    let offset = crate::grid::lattice_offset(&ax, &az).ok_or_else(|| {
        IntegralError::IncompatibleDirection("x samples are not on the z lattice".into())
    })?;
    let mut out = g.slice_axis(z_axis, 0)?.zeros_like();
    out.z_max = Some(az.point(az.n - 1));
    let b = g.block_len();
    let zs = g.strides()[z_axis];
    let mut idx = vec![0usize; out.axes().len()];
    let mut full = vec![0usize; g.axes().len()];
    let x_pos = if x_axis < z_axis { x_axis } else { x_axis - 1 };
    for p in 0..out.len() {
        out.unflatten(p, &mut idx);
        let mut m = 0;
        for (k, f) in full.iter_mut().enumerate() {
            if k == z_axis {
                *f = 0;
            } else {
                *f = idx[m];
                m += 1;
            }
        }
        let start = offset + idx[x_pos];
        let w = ray_weights(az.n - start, az.h, rule);
        let base = g.flatten(&full);
        let blk = out.block_mut(p);
        for (k, wk) in w.iter().enumerate() {
            let q = base + (start + k) * zs;
            for (o, v) in blk.iter_mut().zip(&g.data()[q * b..(q + 1) * b]) {
                *o += wk * v;
            }
        }
    }
    Ok(out)
}

/// A path sampled at increasing parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub t: Vec<f64>,
    pub points: Vec<CdNumber>,
}

impl SampledPath {
    pub fn new(t: Vec<f64>, points: Vec<CdNumber>) -> Result<Self, IntegralError> {
        if t.len() != points.len() || t.len() < 2 {
            return Err(IntegralError::RangeError(
                "a path needs at least two samples with matching parameters".into(),
            ));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IntegralError::RangeError("parameters must increase".into()));
        }
        Ok(SampledPath { t, points })
    }

    fn at(&self, s: f64) -> CdNumber {
        let k = match self.t.iter().position(|&x| x >= s) {
            Some(0) => return self.points[0].clone(),
            Some(k) => k,
            None => return self.points[self.points.len() - 1].clone(),
        };
        let a = (s - self.t[k - 1]) / (self.t[k] - self.t[k - 1]);
        &self.points[k - 1].scale(1.0 - a) + &self.points[k].scale(a)
    }
}

/// Total variation of the sampled path on `[a, b]`, with linear
/// interpolation at the two ends.
pub fn path_variation(gamma: &SampledPath, a: f64, b: f64) -> Result<f64, IntegralError> {
    let (lo, hi) = (gamma.t[0], gamma.t[gamma.t.len() - 1]);
    if !(a < b) || a < lo || b > hi {
        return Err(IntegralError::RangeError(format!(
            "[{a}, {b}] is not inside [{lo}, {hi}]"
        )));
    }
    let mut pts = vec![gamma.at(a)];
    for (t, p) in gamma.t.iter().zip(&gamma.points) {
        if *t > a && *t < b {
            pts.push(p.clone());
        }
    }
    pts.push(gamma.at(b));
    Ok(pts.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum())
}

/// `|γ_0 − ω_0| + min V(γ − ω∘φ)` over monotone alignments of the samples.
pub fn path_distance(gamma: &SampledPath, omega: &SampledPath) -> f64 {
    let (n, m) = (gamma.points.len(), omega.points.len());
    let diff = |i: usize, j: usize| &gamma.points[i] - &omega.points[j];
    let mut cost = vec![f64::INFINITY; n * m];
    cost[0] = 0.0;
    for i in 0..n {
        for j in 0..m {
            if i == 0 && j == 0 {
                continue;
            }
            let here = diff(i, j);
            let mut best = f64::INFINITY;
            let mut step = |pi: usize, pj: usize| {
                let c = cost[pi * m + pj] + (&here - &diff(pi, pj)).norm();
                if c < best {
                    best = c;
                }
            };
            if i > 0 {
                step(i - 1, j);
            }
            if j > 0 {
                step(i, j - 1);
            }
            if i > 0 && j > 0 {
                step(i - 1, j - 1);
            }
            cost[i * m + j] = best;
        }
    }
    diff(0, 0).norm() + cost[n * m - 1]
}

/// Empirical norms of the anti-derivative on a test set.
#[derive(Debug, Clone, Serialize)]
pub struct NormDecayReport {
    /// `‖∫g‖ / ‖g‖` for every nonzero input, zero otherwise.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Largest difference quotient of every output along the ray.
    pub lipschitz: Vec<f64>,
}

pub fn operator_norm_decay(
    sigma: &SigmaSpec,
    foliation: &RayFoliation,
    tests: &[GridFunction],
) -> Result<NormDecayReport, IntegralError> {
    let mut ratios = Vec::with_capacity(tests.len());
    let mut lipschitz = Vec::with_capacity(tests.len());
    for g in tests {
        let w = antideriv_from(sigma, g, foliation)?;
        let ng = g.linf();
        ratios.push(if ng > 0.0 { w.linf() / ng } else { 0.0 });
        let (axis, _) = prepare(sigma, g, foliation)?;
        let h = g.axes()[axis].h;
        let stride = w.strides()[axis];
        let n = w.axes()[axis].n;
        let b = w.block_len();
        let mut lip = 0.0f64;
        for p in 0..w.len() {
            if (p / stride) % n + 1 < n {
                let q = p + stride;
                let d: f64 = (0..b)
                    .map(|m| (w.data()[q * b + m] - w.data()[p * b + m]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                lip = lip.max(d / h);
            }
        }
        lipschitz.push(lip);
    }
    Ok(NormDecayReport {
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
        lipschitz,
    })
}
