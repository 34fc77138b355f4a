//! Solves the quaternion KdV scenario at two grid spacings, prints the
//! residual orders and compares `u` with the closed-form one-soliton.
//!
//! `cargo run --release --example kdv_soliton`

use hypercd::dressing::{solve_dressing, SolveOptions};
use hypercd::presets::kdv_scalar;
use hypercd::residual::refine_and_estimate;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = kdv_scalar(0.1);
    for r in refine_and_estimate(&sc, 2, 1.0, &SolveOptions::default())? {
        let order = r.order_est.map_or("-".to_string(), |o| format!("{o:.2}"));
        println!("{:<16} h={:<5} Linf={:.3e} order={order}", r.equation_id, r.h, r.res_linf);
    }

    // With λ = i_1 the diagonal is K(x,x) = A/(1 − i_1 A/2), A = 2e^{−2x},
    // and u = −2 i_1 d/dx K(x,x).
    let sol = solve_dressing(&sc)?;
    let xa = sol.field.axes()[0];
    println!("\n     x     Re u (solved)  Im u (solved)  Re u (exact)  Im u (exact)");
    for ix in (0..xa.n).step_by(5) {
        let x = xa.point(ix);
        let v = sol.field.get_number(&[ix, 1]);
        let a = 2.0 * (-2.0 * x).exp();
        let den = Complex64::new(1.0, -a / 2.0);
        let exact = Complex64::new(0.0, -2.0) * (-2.0 * a / (den * den));
        println!(
            "{x:6.2} {:14.6} {:14.6} {:13.6} {:13.6}",
            v.coeff(0),
            v.coeff(1),
            exact.re,
            exact.im
        );
    }
    Ok(())
}
