//! Lattice samples of matrix-valued functions over `A_r`.
//!
//! A function of one or more `A_r` variables is sampled only along a list of
//! active real axes. Each axis names the variable slot it belongs to (`x`,
//! `y`, `z` or `t`) and the real coordinate index `j` of that variable. Every
//! sample is an `s × s` matrix stored flat as `(row, col, coefficient)`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cd_algebra::{dim, CdNumber};
use crate::cd_matrix::{block_left, block_mul, block_right, CdMatrix};

/// Variable slot of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    X,
    Y,
    Z,
    T,
}

impl std::fmt::Display for Slot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            Slot::X => "x",
            Slot::Y => "y",
            Slot::Z => "z",
            Slot::T => "t",
        };
        f.write_str(c)
    }
}

/// One sampled real axis: points `origin + k·h` for `k < n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub slot: Slot,
    pub coord: usize,
    pub n: usize,
    pub h: f64,
    pub origin: f64,
}

impl Axis {
    pub fn new(slot: Slot, coord: usize, n: usize, h: f64, origin: f64) -> Self {
        Axis {
            slot,
            coord,
            n,
            h,
            origin,
        }
    }

    pub fn point(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.h
    }

    fn same_lattice(&self, other: &Axis) -> bool {
        self.n == other.n
            && (self.h - other.h).abs() <= 1e-14 * self.h.abs()
            && (self.origin - other.origin).abs() <= 1e-12 * (1.0 + self.origin.abs())
    }
}

/// Index of the first point of `inner` inside `outer`, when `inner` is a
/// contiguous run of `outer`'s points.
pub fn lattice_offset(inner: &Axis, outer: &Axis) -> Option<usize> {
    if (inner.h - outer.h).abs() > 1e-14 * outer.h {
        return None;
    }
    let shift = (inner.origin - outer.origin) / outer.h;
    let k = shift.round();
    if k < 0.0 || (shift - k).abs() > 1e-9 {
        return None;
    }
    let k = k as usize;
    (k + inner.n <= outer.n).then_some(k)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid axis: {0}")]
    InvalidAxis(String),
}

/// Samples of an `Mat_s(A_r)`-valued function on a rectangular lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    level: u32,
    s: usize,
    axes: Vec<Axis>,
    data: Vec<f64>,
    /// Truncation bound of any ray integral the samples came from.
    pub z_max: Option<f64>,
    constant: Vec<(Slot, usize)>,
    constant_elsewhere: bool,
}

impl GridFunction {
    pub fn zeros(level: u32, s: usize, axes: Vec<Axis>) -> Result<Self, GridError> {
        for a in &axes {
            if a.n == 0 || !(a.h > 0.0) {
                return Err(GridError::InvalidAxis(format!(
                    "axis {}{} needs n > 0 and h > 0",
                    a.slot, a.coord
                )));
            }
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.slot == a.slot && b.coord == a.coord) {
                return Err(GridError::InvalidAxis(format!(
                    "axis {}{} listed twice",
                    a.slot, a.coord
                )));
            }
        }
        let count: usize = axes.iter().map(|a| a.n).product();
        Ok(GridFunction {
            level,
            s,
            axes,
            data: vec![0.0; count * s * s * dim(level)],
            z_max: None,
            constant: Vec::new(),
            constant_elsewhere: false,
        })
    }

    /// Samples `f(points, out_block)` at every lattice point.
    pub fn from_fn(
        level: u32,
        s: usize,
        axes: Vec<Axis>,
        f: impl Fn(&[f64], &mut [f64]),
    ) -> Result<Self, GridError> {
        let mut g = Self::zeros(level, s, axes)?;
        let b = g.block_len();
        let mut idx = vec![0usize; g.axes.len()];
        let mut pts = vec![0.0; g.axes.len()];
        for p in 0..g.len() {
            g.unflatten(p, &mut idx);
            for (k, a) in g.axes.iter().enumerate() {
                pts[k] = a.point(idx[k]);
            }
            f(&pts, &mut g.data[p * b..(p + 1) * b]);
        }
        Ok(g)
    }

    /// Scalar real function sampled as `value · I_s`.
    pub fn from_real_fn(
        level: u32,
        s: usize,
        axes: Vec<Axis>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self, GridError> {
        let d = dim(level);
        Self::from_fn(level, s, axes, |p, out| {
            let v = f(p);
            for k in 0..s {
                out[(k * s + k) * d] = v;
            }
        })
    }

    /// Function with `1 × 1` values given as full `A_r` numbers.
    pub fn from_number_fn(
        level: u32,
        axes: Vec<Axis>,
        f: impl Fn(&[f64]) -> CdNumber,
    ) -> Result<Self, GridError> {
        Self::from_fn(level, 1, axes, |p, out| {
            out.copy_from_slice(f(p).embed(level).coeffs());
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn size(&self) -> usize {
        self.s
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reals per lattice point.
    pub fn block_len(&self) -> usize {
        self.s * self.s * dim(self.level)
    }

    /// Number of lattice points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_index(&self, slot: Slot, coord: usize) -> Option<usize> {
        self.axes
            .iter()
            .position(|a| a.slot == slot && a.coord == coord)
    }

    pub fn axis_of_slot(&self, slot: Slot) -> Option<usize> {
        self.axes.iter().position(|a| a.slot == slot)
    }

    /// Declares the function constant along a coordinate that is not sampled.
    pub fn declare_constant(&mut self, slot: Slot, coord: usize) {
        if !self.constant.contains(&(slot, coord)) {
            self.constant.push((slot, coord));
        }
    }

    /// Declares the function constant along every coordinate not sampled.
    pub fn declare_constant_elsewhere(&mut self) {
        self.constant_elsewhere = true;
    }

    pub fn with_constant_elsewhere(mut self) -> Self {
        self.constant_elsewhere = true;
        self
    }

    pub fn is_declared_constant(&self, slot: Slot, coord: usize) -> bool {
        self.axis_index(slot, coord).is_none()
            && (self.constant_elsewhere || self.constant.contains(&(slot, coord)))
    }

    pub(crate) fn copy_declarations(&mut self, from: &GridFunction) {
        self.constant = from.constant.clone();
        self.constant_elsewhere = from.constant_elsewhere;
        self.z_max = from.z_max;
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut st = vec![1usize; self.axes.len()];
        for k in (0..self.axes.len().saturating_sub(1)).rev() {
            st[k] = st[k + 1] * self.axes[k + 1].n;
        }
        st
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let st = self.strides();
        idx.iter().zip(&st).map(|(i, s)| i * s).sum()
    }

    pub fn unflatten(&self, mut p: usize, idx: &mut [usize]) {
        for k in (0..self.axes.len()).rev() {
            let n = self.axes[k].n;
            idx[k] = p % n;
            p /= n;
        }
    }

    pub fn block(&self, p: usize) -> &[f64] {
        let b = self.block_len();
        &self.data[p * b..(p + 1) * b]
    }

    pub fn block_mut(&mut self, p: usize) -> &mut [f64] {
        let b = self.block_len();
        &mut self.data[p * b..(p + 1) * b]
    }

    pub fn get(&self, idx: &[usize]) -> CdMatrix {
        CdMatrix::from_flat(self.s, self.level, self.block(self.flatten(idx)))
    }

    /// Entry `(0,0)` at a lattice point as a number.
    pub fn get_number(&self, idx: &[usize]) -> CdNumber {
        let d = dim(self.level);
        let p = self.flatten(idx);
        CdNumber::from_coeffs(self.level, self.block(p)[..d].to_vec()).expect("valid block")
    }

    pub fn set(&mut self, idx: &[usize], value: &CdMatrix) {
        let p = self.flatten(idx);
        self.block_mut(p).copy_from_slice(&value.to_flat());
    }

    pub fn same_shape(&self, other: &GridFunction) -> bool {
        self.level == other.level
            && self.s == other.s
            && self.axes.len() == other.axes.len()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| a.slot == b.slot && a.coord == b.coord && a.same_lattice(b))
    }

    fn check_shape(&self, other: &GridFunction) -> Result<(), GridError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(GridError::ShapeMismatch(
                "grid functions live on different lattices".into(),
            ))
        }
    }

    /// Same lattice and declarations, all samples zero.
    pub fn zeros_like(&self) -> GridFunction {
        let mut g = self.clone();
        g.data.iter_mut().for_each(|x| *x = 0.0);
        g
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction, GridError> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction, GridError> {
        self.axpy(-1.0, other)
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &GridFunction) -> Result<GridFunction, GridError> {
        self.check_shape(other)?;
        let mut g = self.clone();
        for (x, y) in g.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(g)
    }

    pub fn scale(&self, a: f64) -> GridFunction {
        let mut g = self.clone();
        g.data.iter_mut().for_each(|x| *x *= a);
        g
    }

    /// Pointwise matrix product `self · other`.
    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction, GridError> {
        self.check_shape(other)?;
        let mut g = self.zeros_like();
        let b = self.block_len();
        for p in 0..self.len() {
            block_mul(
                &self.data[p * b..(p + 1) * b],
                &other.data[p * b..(p + 1) * b],
                &mut g.data[p * b..(p + 1) * b],
                self.s,
                self.level,
            );
        }
        Ok(g)
    }

    /// Every entry multiplied on the left by `c`.
    pub fn left_mul(&self, c: &CdNumber) -> GridFunction {
        let c = c.embed(self.level.max(c.level()));
        assert_eq!(c.level(), self.level, "constant has a higher level than the grid");
        let mut g = self.zeros_like();
        block_left(c.coeffs(), &self.data, &mut g.data, self.level);
        g
    }

    /// Every entry multiplied on the right by `c`.
    pub fn right_mul(&self, c: &CdNumber) -> GridFunction {
        let c = c.embed(self.level.max(c.level()));
        assert_eq!(c.level(), self.level, "constant has a higher level than the grid");
        let mut g = self.zeros_like();
        block_right(&self.data, c.coeffs(), &mut g.data, self.level);
        g
    }

    /// Every sample multiplied on the right by the constant matrix `b`.
    pub fn right_mul_matrix(&self, b: &CdMatrix) -> Result<GridFunction, GridError> {
        if b.size() != self.s || b.level() != self.level {
            return Err(GridError::ShapeMismatch("constant matrix shape".into()));
        }
        let flat = b.to_flat();
        let mut g = self.zeros_like();
        let bl = self.block_len();
        for (o, x) in g.data.chunks_mut(bl).zip(self.data.chunks(bl)) {
            block_mul(x, &flat, o, self.s, self.level);
        }
        Ok(g)
    }

    /// Entrywise conjugate.
    pub fn conj(&self) -> GridFunction {
        let mut g = self.clone();
        let d = dim(self.level);
        for e in g.data.chunks_mut(d) {
            crate::cd_algebra::conj_in_place(e);
        }
        g
    }

    /// Embeds the values into a higher level by zero padding.
    pub fn embed(&self, level: u32) -> GridFunction {
        assert!(level >= self.level);
        let d0 = dim(self.level);
        let d1 = dim(level);
        let mut g = GridFunction {
            level,
            s: self.s,
            axes: self.axes.clone(),
            data: vec![0.0; self.data.len() / d0 * d1],
            z_max: self.z_max,
            constant: self.constant.clone(),
            constant_elsewhere: self.constant_elsewhere,
        };
        for (src, dst) in self.data.chunks(d0).zip(g.data.chunks_mut(d1)) {
            dst[..d0].copy_from_slice(src);
        }
        g
    }

    /// Repeats the samples along extra axes so that the result lives on
    /// `axes`, which must contain every axis of `self`.
    pub fn broadcast_to(&self, axes: &[Axis]) -> Result<GridFunction, GridError> {
        let mut map = Vec::with_capacity(self.axes.len());
        for a in &self.axes {
            let k = axes
                .iter()
                .position(|b| b.slot == a.slot && b.coord == a.coord && b.same_lattice(a))
                .ok_or_else(|| {
                    GridError::ShapeMismatch(format!("target lacks axis {}{}", a.slot, a.coord))
                })?;
            map.push(k);
        }
        let mut g = GridFunction::zeros(self.level, self.s, axes.to_vec())?;
        g.copy_declarations(self);
        let b = self.block_len();
        let mut idx = vec![0; axes.len()];
        let mut src = vec![0; self.axes.len()];
        for p in 0..g.len() {
            g.unflatten(p, &mut idx);
            for (k, &m) in map.iter().enumerate() {
                src[k] = idx[m];
            }
            let q = self.flatten(&src);
            g.data[p * b..(p + 1) * b].copy_from_slice(&self.data[q * b..(q + 1) * b]);
        }
        Ok(g)
    }

    /// Restriction to the diagonal of two axes; the second axis is removed.
    /// Every point of the kept axis must also be a point of the dropped one.
    pub fn diagonal(&self, keep: usize, drop: usize) -> Result<GridFunction, GridError> {
        if keep == drop || keep >= self.axes.len() || drop >= self.axes.len() {
            return Err(GridError::InvalidAxis("bad diagonal axes".into()));
        }
        let offset = lattice_offset(&self.axes[keep], &self.axes[drop]).ok_or_else(|| {
            GridError::ShapeMismatch("kept axis is not a sub-lattice of the dropped axis".into())
        })?;
        let axes: Vec<Axis> = self
            .axes
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != drop)
            .map(|(_, a)| *a)
            .collect();
        let mut g = GridFunction::zeros(self.level, self.s, axes)?;
        g.copy_declarations(self);
        let b = self.block_len();
        let mut idx = vec![0; g.axes.len()];
        let mut full = vec![0; self.axes.len()];
        for p in 0..g.len() {
            g.unflatten(p, &mut idx);
            let mut m = 0;
            for k in 0..self.axes.len() {
                if k == drop {
                    continue;
                }
                full[k] = idx[m];
                m += 1;
            }
            let keep_pos = if keep < drop { keep } else { keep - 1 };
            full[drop] = idx[keep_pos] + offset;
            let q = self.flatten(&full);
            g.data[p * b..(p + 1) * b].copy_from_slice(&self.data[q * b..(q + 1) * b]);
        }
        Ok(g)
    }

    /// Fixes one axis at an index and removes it.
    pub fn slice_axis(&self, axis: usize, index: usize) -> Result<GridFunction, GridError> {
        if axis >= self.axes.len() || index >= self.axes[axis].n {
            return Err(GridError::InvalidAxis("slice out of range".into()));
        }
        let axes: Vec<Axis> = self
            .axes
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != axis)
            .map(|(_, a)| *a)
            .collect();
        let mut g = GridFunction::zeros(self.level, self.s, axes)?;
        g.copy_declarations(self);
        let b = self.block_len();
        let mut idx = vec![0; g.axes.len()];
        let mut full = vec![0; self.axes.len()];
        for p in 0..g.len() {
            g.unflatten(p, &mut idx);
            let mut m = 0;
            for (k, f) in full.iter_mut().enumerate() {
                if k == axis {
                    *f = index;
                } else {
                    *f = idx[m];
                    m += 1;
                }
            }
            let q = self.flatten(&full);
            g.data[p * b..(p + 1) * b].copy_from_slice(&self.data[q * b..(q + 1) * b]);
        }
        Ok(g)
    }

    /// Index ranges covering points at least `margin` (physical units)
    /// away from every boundary of the given axes; other axes are taken whole.
    pub fn interior(&self, margins: &[(usize, f64)]) -> Vec<Range<usize>> {
        let mut r: Vec<Range<usize>> = self.axes.iter().map(|a| 0..a.n).collect();
        for &(k, m) in margins {
            let a = &self.axes[k];
            let skip = (m / a.h - 1e-9).ceil().max(0.0) as usize;
            let lo = skip.min(a.n);
            let hi = a.n.saturating_sub(skip).max(lo);
            r[k] = lo..hi;
        }
        r
    }

    fn for_each_in(&self, ranges: &[Range<usize>], mut f: impl FnMut(&[f64])) {
        let b = self.block_len();
        let mut idx = vec![0; self.axes.len()];
        for p in 0..self.len() {
            self.unflatten(p, &mut idx);
            if idx.iter().zip(ranges).all(|(i, r)| r.contains(i)) {
                f(&self.data[p * b..(p + 1) * b]);
            }
        }
    }

    /// Largest coefficient magnitude over the whole lattice.
    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Largest Euclidean norm of a sample block inside `ranges`.
    pub fn linf_on(&self, ranges: &[Range<usize>]) -> f64 {
        let mut m = 0.0f64;
        self.for_each_in(ranges, |blk| {
            m = m.max(blk.iter().map(|x| x * x).sum::<f64>().sqrt());
        });
        m
    }

    /// Discrete L2 norm inside `ranges`, weighted by the cell volume.
    pub fn l2_on(&self, ranges: &[Range<usize>]) -> f64 {
        let vol: f64 = self.axes.iter().map(|a| a.h).product();
        let mut acc = 0.0;
        self.for_each_in(ranges, |blk| {
            acc += blk.iter().map(|x| x * x).sum::<f64>();
        });
        (acc * vol).sqrt()
    }

    /// Largest magnitude of any imaginary coefficient.
    pub fn imag_leak(&self) -> f64 {
        let d = dim(self.level);
        self.data
            .chunks(d)
            .flat_map(|e| e[1..].iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Keeps only the index ranges given per axis.
    pub fn restrict(&self, ranges: &[Range<usize>]) -> Result<GridFunction, GridError> {
        let axes: Vec<Axis> = self
            .axes
            .iter()
            .zip(ranges)
            .map(|(a, r)| Axis {
                n: r.len(),
                origin: a.point(r.start),
                ..*a
            })
            .collect();
        let mut g = GridFunction::zeros(self.level, self.s, axes)?;
        g.copy_declarations(self);
        let b = self.block_len();
        let mut idx = vec![0; g.axes.len()];
        for p in 0..g.len() {
            g.unflatten(p, &mut idx);
            for (i, r) in idx.iter_mut().zip(ranges) {
                *i += r.start;
            }
            let q = self.flatten(&idx);
            g.data[p * b..(p + 1) * b].copy_from_slice(&self.data[q * b..(q + 1) * b]);
        }
        Ok(g)
    }
}
