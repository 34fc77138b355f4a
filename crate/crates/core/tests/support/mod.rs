//! Complex one-soliton oracle for the KdV scenario in which every operator
//! is driven by a single generator, so values stay in the plane `1, i_1`
//! and `i_1` plays the part of the imaginary unit.
#![allow(dead_code)]

pub mod prop4;

use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct Soliton {
    pub beta: f64,
    pub kappa: f64,
    /// Time exponent of the mode.
    pub c: f64,
    /// Coupling in front of the integral: `p` times the inverse symbol.
    pub lambda: Complex64,
}

impl Soliton {
    /// `F = β e^{−κ(x+y) + 8κ³t}`, `₁σ = i_1^* ∂_x`, so `λ = p i`.
    pub fn kdv(beta: f64, kappa: f64, p: f64) -> Self {
        Soliton {
            beta,
            kappa,
            c: 8.0 * kappa.powi(3),
            lambda: Complex64::new(0.0, p),
        }
    }

    pub fn f(&self, x: f64, y: f64, t: f64) -> f64 {
        self.beta * (-self.kappa * (x + y) + self.c * t).exp()
    }

    fn amplitude(&self, x: f64, t: f64) -> f64 {
        self.f(x, x, t)
    }

    /// `K(x, x)` in closed form.
    pub fn diagonal(&self, x: f64, t: f64) -> Complex64 {
        let a = self.amplitude(x, t);
        a / (1.0 - self.lambda * a / (2.0 * self.kappa))
    }

    /// `u = 2 ₁σ_x K(x,x) = −2i d/dx K(x,x)` in closed form.
    pub fn u(&self, x: f64, t: f64) -> Complex64 {
        let a = self.amplitude(x, t);
        let den = 1.0 - self.lambda * a / (2.0 * self.kappa);
        let dk = -2.0 * self.kappa * a / (den * den);
        Complex64::new(0.0, -2.0) * dk
    }

    /// `K(x, x)` from a trapezoid Nyström solve with step `h` on a ray from
    /// `x` reaching at least `z_max`, refined once by Richardson extrapolation.
    pub fn nystrom_diagonal(&self, x: f64, t: f64, z_max: f64, h: f64) -> Complex64 {
        let coarse = self.nystrom_once(x, t, z_max, h);
        let fine = self.nystrom_once(x, t, z_max, h / 2.0);
        (4.0 * fine - coarse) / 3.0
    }

    fn nystrom_once(&self, x: f64, t: f64, z_max: f64, h: f64) -> Complex64 {
        let n = ((z_max - x) / h).ceil() as usize + 1;
        let z: Vec<f64> = (0..n).map(|k| x + k as f64 * h).collect();
        let w = |k: usize| if k == 0 || k == n - 1 { 0.5 * h } else { h };
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            rhs[j] = Complex64::new(self.f(x, z[j], t), 0.0);
            for k in 0..n {
                let v = -self.lambda * w(k) * self.f(z[k], z[j], t);
                a[j * n + k] = if j == k { v + 1.0 } else { v };
            }
        }
        solve(&mut a, &mut rhs, n);
        rhs[0]
    }

    /// `u` from the Nyström diagonal and a five-point stencil of width `d`.
    pub fn nystrom_u(&self, x: f64, t: f64, z_max: f64, h: f64, d: f64) -> Complex64 {
        let k = |s: f64| self.nystrom_diagonal(x + s * d, t, z_max, h);
        let dk = (k(-2.0) - 8.0 * k(-1.0) + 8.0 * k(1.0) - k(2.0)) / (12.0 * d);
        Complex64::new(0.0, -2.0) * dk
    }
}

/// Gaussian elimination with partial pivoting; the solution overwrites `b`.
fn solve(a: &mut [Complex64], b: &mut [Complex64], n: usize) {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .unwrap();
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let m = a[r * n + col] / d;
            if m == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= m * v;
            }
            let v = b[col];
            b[r] -= m * v;
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r * n + k] * b[k];
        }
        b[r] = s / a[r * n + r];
    }
}
