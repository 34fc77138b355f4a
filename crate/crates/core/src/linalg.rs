//! Dense LU factorizations with a reciprocal condition estimate, and a power
//! iteration for spectral radii.

use nalgebra::{ComplexField, DMatrix, DVector};

/// LU factors of a square matrix together with `1/(‖M‖₁ ‖M⁻¹‖₁)`, the
/// inverse norm estimated by Hager's method.
pub struct Factorized<T: ComplexField<RealField = f64>> {
    lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    l_adj: DMatrix<T>,
    u_adj: DMatrix<T>,
    pub rcond: f64,
}

fn norm1<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl<T: ComplexField<RealField = f64>> Factorized<T> {
    /// Factorizes `m`; returns `None` when a pivot is exactly zero.
    pub fn new(m: DMatrix<T>) -> Option<Self> {
        assert!(m.is_square());
        let anorm = norm1(&m);
        let lu = m.lu();
        if !lu.is_invertible() {
            return None;
        }
        let l_adj = lu.l().adjoint();
        let u_adj = lu.u().adjoint();
        let mut f = Factorized {
            lu,
            l_adj,
            u_adj,
            rcond: 0.0,
        };
        let inv_norm = f.inverse_norm1_estimate();
        f.rcond = if anorm == 0.0 || inv_norm == 0.0 || !inv_norm.is_finite() {
            0.0
        } else {
            1.0 / (anorm * inv_norm)
        };
        Some(f)
    }

    pub fn dim(&self) -> usize {
        self.u_adj.nrows()
    }

    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve(b).expect("factorization is invertible")
    }

    /// Solves `Mᴴ x = b`.
    pub fn solve_adjoint(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let w = self
            .u_adj
            .solve_lower_triangular(b)
            .expect("nonzero pivots");
        let mut y = self
            .l_adj
            .solve_upper_triangular(&w)
            .expect("unit diagonal");
        self.lu.p().inv_permute_rows(&mut y);
        y
    }

    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.dim();
        let mut x = DMatrix::from_element(n, 1, T::from_real(1.0 / n as f64));
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.clone().modulus()).sum::<f64>();
            let xi = y.map(|v| {
                let m = v.clone().modulus();
                if m == 0.0 {
                    T::one()
                } else {
                    v.unscale(m)
                }
            });
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(k, v)| (k, v.clone().modulus()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx = z.dot(&x).real();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = DMatrix::zeros(n, 1);
            x[(j, 0)] = T::one();
        }
        est
    }
}

/// Estimates the spectral radius of the linear map `apply` by power
/// iteration from a fixed start vector.
pub fn spectral_radius<T: ComplexField<RealField = f64>>(
    n: usize,
    iterations: usize,
    mut apply: impl FnMut(&DVector<T>) -> DVector<T>,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |k, _| T::from_real(1.0 + 0.1 * ((k * 7919) % 13) as f64));
    let nv = v.norm();
    v.unscale_mut(nv);
    let mut logs = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        logs.push(nw.ln());
        v = w.unscale(nw);
    }
    let tail = logs.len().min(10);
    (logs[logs.len() - tail..].iter().sum::<f64>() / tail as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn sample() -> DMatrix<Complex64> {
        DMatrix::from_fn(5, 5, |i, j| {
            Complex64::new(
                if i == j { 4.0 } else { 1.0 / (1 + i + 2 * j) as f64 },
                0.3 * (i as f64 - j as f64),
            )
        })
    }

    #[test]
    fn adjoint_solve_matches_direct() {
        let m = sample();
        let f = Factorized::new(m.clone()).unwrap();
        let b = DMatrix::from_fn(5, 2, |i, j| Complex64::new(i as f64 - 1.0, j as f64));
        let x = f.solve_adjoint(&b);
        assert!((m.adjoint() * x - b).norm() < 1e-12);
    }

    #[test]
    fn condition_estimate_is_close_to_exact() {
        let m = sample();
        let exact = 1.0 / (norm1(&m) * norm1(&m.clone().try_inverse().unwrap()));
        let f = Factorized::new(m).unwrap();
        assert!(f.rcond >= exact * 0.9999 && f.rcond <= 3.0 * exact);
    }

    #[test]
    fn singular_matrices_report_tiny_rcond() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(2, 2)] = 1e-14;
        let f = Factorized::new(m).unwrap();
        assert!(f.rcond < 1e-10);
        assert!(Factorized::new(DMatrix::<f64>::zeros(2, 2)).is_none());
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let d = DVector::from_vec(vec![0.5, -0.8, 0.1]);
        let r = spectral_radius::<f64>(3, 200, |v| d.component_mul(v));
        assert!((r - 0.8).abs() < 1e-6);
    }
}
