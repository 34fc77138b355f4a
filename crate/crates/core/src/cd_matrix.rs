//! Square matrices with Cayley-Dickson entries.
//!
//! Products accumulate left to right over the inner index. Entries need not
//! associate, so the grouping is part of the definition.

use thiserror::Error;

use crate::cd_algebra::{basis_table, dim, CdNumber};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// An `s × s` matrix over `A_r`, row-major.
#[derive(Clone, PartialEq, Debug)]
pub struct CdMatrix {
    s: usize,
    level: u32,
    entries: Vec<CdNumber>,
}

impl CdMatrix {
    pub fn zeros(s: usize, level: u32) -> Self {
        assert!(s >= 1, "matrix size must be positive");
        CdMatrix {
            s,
            level,
            entries: vec![CdNumber::zero(level); s * s],
        }
    }

    pub fn identity(s: usize, level: u32) -> Self {
        let mut m = Self::zeros(s, level);
        for k in 0..s {
            m.entries[k * s + k] = CdNumber::one(level);
        }
        m
    }

    /// Matrix whose entries are the given real numbers.
    pub fn from_real(s: usize, level: u32, values: &[f64]) -> Result<Self, MatrixError> {
        if values.len() != s * s {
            return Err(MatrixError::ShapeMismatch(format!(
                "{} values for a {s}x{s} matrix",
                values.len()
            )));
        }
        Ok(CdMatrix {
            s,
            level,
            entries: values.iter().map(|&v| CdNumber::real(level, v)).collect(),
        })
    }

    pub fn from_entries(s: usize, entries: Vec<CdNumber>) -> Result<Self, MatrixError> {
        if s == 0 || entries.len() != s * s {
            return Err(MatrixError::ShapeMismatch(format!(
                "{} entries for size {s}",
                entries.len()
            )));
        }
        let level = entries[0].level();
        if entries.iter().any(|e| e.level() != level) {
            return Err(MatrixError::ShapeMismatch("entries of different levels".into()));
        }
        Ok(CdMatrix { s, level, entries })
    }

    /// Wraps a single number as a `1 × 1` matrix.
    pub fn scalar(a: CdNumber) -> Self {
        CdMatrix {
            s: 1,
            level: a.level(),
            entries: vec![a],
        }
    }

    pub fn size(&self) -> usize {
        self.s
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn get(&self, row: usize, col: usize) -> &CdNumber {
        &self.entries[row * self.s + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: CdNumber) {
        assert_eq!(value.level(), self.level, "entry level mismatch");
        self.entries[row * self.s + col] = value;
    }

    pub fn entries(&self) -> &[CdNumber] {
        &self.entries
    }

    /// Flat real layout `(row, col, coefficient)`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| e.coeffs().iter().copied())
            .collect()
    }

    pub fn from_flat(s: usize, level: u32, flat: &[f64]) -> Self {
        let d = dim(level);
        assert_eq!(flat.len(), s * s * d, "flat block length");
        CdMatrix {
            s,
            level,
            entries: flat
                .chunks(d)
                .map(|c| CdNumber::from_coeffs(level, c.to_vec()).expect("valid chunk"))
                .collect(),
        }
    }

    fn check_same(&self, other: &CdMatrix) -> Result<(), MatrixError> {
        if self.s != other.s || self.level != other.level {
            return Err(MatrixError::ShapeMismatch(format!(
                "{}x{} over level {} vs {}x{} over level {}",
                self.s, self.s, self.level, other.s, other.s, other.level
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &CdMatrix) -> Result<CdMatrix, MatrixError> {
        self.check_same(other)?;
        Ok(CdMatrix {
            s: self.s,
            level: self.level,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &CdMatrix) -> Result<CdMatrix, MatrixError> {
        self.check_same(other)?;
        Ok(CdMatrix {
            s: self.s,
            level: self.level,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `C_{jk} = Σ_m A_{jm} B_{mk}`, summed with `m` ascending.
    pub fn mul(&self, other: &CdMatrix) -> Result<CdMatrix, MatrixError> {
        self.check_same(other)?;
        let s = self.s;
        let mut out = CdMatrix::zeros(s, self.level);
        for j in 0..s {
            for k in 0..s {
                let mut acc = CdNumber::zero(self.level);
                for m in 0..s {
                    acc = &acc + &self.get(j, m).mul(other.get(m, k));
                }
                out.entries[j * s + k] = acc;
            }
        }
        Ok(out)
    }

    pub fn scale_left(&self, a: &CdNumber) -> CdMatrix {
        self.map(|e| a.mul(e))
    }

    pub fn scale_right(&self, a: &CdNumber) -> CdMatrix {
        self.map(|e| e.mul(a))
    }

    pub fn map(&self, f: impl Fn(&CdNumber) -> CdNumber) -> CdMatrix {
        let entries: Vec<CdNumber> = self.entries.iter().map(f).collect();
        let level = entries[0].level();
        CdMatrix {
            s: self.s,
            level,
            entries,
        }
    }

    /// True when every entry has all imaginary coefficients within `tol`.
    pub fn is_real_matrix(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.is_real(tol))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.coeffs().iter())
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn max_diff(&self, other: &CdMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.max_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Entrywise associator `(AB)C − A(BC)` of matrices.
pub fn mat_associator(
    a: &CdMatrix,
    b: &CdMatrix,
    c: &CdMatrix,
) -> Result<CdMatrix, MatrixError> {
    a.mul(b)?.mul(c)?.sub(&a.mul(&b.mul(c)?)?)
}

/// Product of flat matrix blocks (`s·s·2^r` reals each), `out = a · b`.
pub(crate) fn block_mul(a: &[f64], b: &[f64], out: &mut [f64], s: usize, level: u32) {
    let d = dim(level);
    let table = basis_table(level);
    out.iter_mut().for_each(|x| *x = 0.0);
    for j in 0..s {
        for k in 0..s {
            let o = &mut out[(j * s + k) * d..(j * s + k + 1) * d];
            for m in 0..s {
                let x = &a[(j * s + m) * d..(j * s + m + 1) * d];
                let y = &b[(m * s + k) * d..(m * s + k + 1) * d];
                table.mul_add_into(x, y, o);
            }
        }
    }
}

/// Left multiplication of every entry of a flat block by a constant.
pub(crate) fn block_left(c: &[f64], a: &[f64], out: &mut [f64], level: u32) {
    let d = dim(level);
    let table = basis_table(level);
    for (o, x) in out.chunks_mut(d).zip(a.chunks(d)) {
        table.mul_into(c, x, o);
    }
}

/// Right multiplication of every entry of a flat block by a constant.
pub(crate) fn block_right(a: &[f64], c: &[f64], out: &mut [f64], level: u32) {
    let d = dim(level);
    let table = basis_table(level);
    for (o, x) in out.chunks_mut(d).zip(a.chunks(d)) {
        table.mul_into(x, c, o);
    }
}
