//! Cayley-Dickson arithmetic, `σ`-operator calculus on sampled functions and
//! the dressing method for KdV-type equations over hypercomplex algebras.

pub mod cd_algebra;
pub mod cd_matrix;
pub mod diff_ops;
pub mod dressing;
pub mod grid;
pub mod line_integral;
pub mod linalg;
pub mod operator_algebra;
pub mod presets;
pub mod residual;
pub mod selftest;
