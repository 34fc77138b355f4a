//! Quaternion-valued `F` and `K` with exponential decay, for the identities
//! relating derivatives of `∫F K` to integrals of derivatives.

use hypercd::cd_algebra::CdNumber;
use hypercd::diff_ops::{apply_partial_sigma, partial_chain, Grouping, SigmaSpec};
use hypercd::grid::{Axis, GridFunction, Slot};
use hypercd::line_integral::QuadRule;
use hypercd::residual::{residual_prop4, Prop4Report};

pub const Z_MAX: f64 = 4.9;

fn q(c: [f64; 4]) -> CdNumber {
    CdNumber::from_coeffs(2, c.to_vec()).unwrap()
}

pub fn f_value(z: f64, y: f64) -> CdNumber {
    let a = (-2.0 * (z + y)).exp();
    let b = (-(2.5 * z + 2.0 * y)).exp();
    &q([a, 0.0, 0.5 * b, 0.0]) + &q([0.0, 0.0, 0.0, 0.2 * a * (y - z)])
}

pub fn k_value(x: f64, z: f64) -> CdNumber {
    let a = (-(x + 2.0 * z)).exp();
    let b = (-(0.5 * x + 2.2 * z)).exp();
    q([0.3 * a, a, 0.0, 0.2 * b])
}

pub fn n_points(len: f64, h: f64) -> usize {
    (len / h).round() as usize + 1
}

pub fn sampled(h: f64) -> (GridFunction, GridFunction) {
    let za = Axis::new(Slot::Z, 1, n_points(Z_MAX, h), h, 0.0);
    let ya = Axis::new(Slot::Y, 1, n_points(1.0, h), h, 0.0);
    let xa = Axis::new(Slot::X, 1, n_points(1.0, h), h, 0.0);
    let f = GridFunction::from_number_fn(2, vec![za, ya], |p| f_value(p[0], p[1]))
        .unwrap()
        .with_constant_elsewhere();
    let k = GridFunction::from_number_fn(2, vec![xa, za], |p| k_value(p[0], p[1]))
        .unwrap()
        .with_constant_elsewhere();
    (f, k)
}

pub fn sigma() -> SigmaSpec {
    SigmaSpec::single(2, 1, 1.0, 1, Slot::X).unwrap()
}

pub fn report(m: u32, h: f64) -> Prop4Report {
    let (f, k) = sampled(h);
    residual_prop4(&f, &k, &sigma(), m, QuadRule::Simpson, 1e-8, 0.2).unwrap()
}

/// `A₂ − B₂` assembled from the explicit second-order forms, against
/// `−2 ²σ_x[F(x,y)K(x,x)]`.
pub fn explicit_difference_gap(h: f64) -> f64 {
    let s = sigma();
    let (sx, sz) = (s.on(Slot::X), s.on(Slot::Z));
    let n = n_points(1.0, h);
    let xa = Axis::new(Slot::X, 1, n, h, 0.0);
    let ya = Axis::new(Slot::Y, 1, n, h, 0.0);
    let za = Axis::new(Slot::Z, 1, n, h, 0.0);
    let pair = Grouping::left_to_right(2);

    let f3 = GridFunction::from_number_fn(2, vec![xa, ya, za], |p| f_value(p[0], p[1]))
        .unwrap()
        .with_constant_elsewhere();
    let k3 = GridFunction::from_number_fn(2, vec![xa, ya, za], |p| k_value(p[0], p[2]))
        .unwrap()
        .with_constant_elsewhere();
    let on_diag = |g: GridFunction| g.diagonal(0, 2).unwrap();
    let d2x = on_diag(partial_chain(&[(&sx, 1)], &[&f3, &k3], &pair).unwrap());
    let d2z = on_diag(partial_chain(&[(&sz, 1)], &[&f3, &k3], &pair).unwrap());

    let f2 = GridFunction::from_number_fn(2, vec![xa, ya], |p| f_value(p[0], p[1]))
        .unwrap()
        .with_constant_elsewhere();
    let kd = GridFunction::from_number_fn(2, vec![xa, ya], |p| k_value(p[0], p[0]))
        .unwrap()
        .with_constant_elsewhere();
    let first = apply_partial_sigma(&sx, 0, &[&f2, &kd], &pair).unwrap();
    let second = apply_partial_sigma(&sx, 1, &[&f2, &kd], &pair).unwrap();
    let whole = first.add(&second).unwrap();

    // A₂ = −σ_x[FK(x,x)] − ²σ_x[FK(x,z)]|, B₂ = −¹σ_x[FK(x,x)] + ²σ_z[FK(x,z)]|.
    let a2 = whole.scale(-1.0).sub(&d2x).unwrap();
    let b2 = first.scale(-1.0).add(&d2z).unwrap();
    let gap = a2.sub(&b2).unwrap().add(&second.scale(2.0)).unwrap();
    gap.linf_on(&gap.interior(&[(0, 0.2), (1, 0.2)]))
}
