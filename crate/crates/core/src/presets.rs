//! Ready-made scenarios used by the examples, the tests and the CLI.
//!
//! All of them place the soliton centre near `x = 0` at `t = 0` on the
//! window `[−2, 2]` with rays truncated at `z = 12`.

use crate::diff_ops::SigmaSpec;
use crate::dressing::{GridSpec, Mode, Scenario, ScenarioKind};
use crate::grid::Slot;
use crate::line_integral::QuadRule;

pub fn default_grid(h: f64) -> GridSpec {
    GridSpec {
        x_min: -2.0,
        x_max: 2.0,
        z_max: 12.0,
        h,
        t: 0.0,
        dt: Some(h / 4.0),
        rule: QuadRule::Simpson,
        eps_tail: 1e-8,
    }
}

fn single(j: usize, psi: f64, coord: usize, var: Slot) -> SigmaSpec {
    SigmaSpec::single(2, j, psi, coord, var).expect("valid operator")
}

/// Quaternion KdV in one real variable: `₁σ = ₂σ = i_1^* ∂/∂x_1`, time
/// driven by `−i_1^* ∂/∂t_0`, coupling `p = 1`.
pub fn kdv_scalar(h: f64) -> Scenario {
    Scenario {
        kind: ScenarioKind::Kdv,
        level: 2,
        s: 1,
        p: 1.0,
        sigmas: vec![
            single(1, 1.0, 1, Slot::X),
            single(1, 1.0, 1, Slot::Y),
            single(1, -1.0, 0, Slot::T),
        ],
        coord: 1,
        t_coord: 0,
        modes: vec![Mode { beta: 2.0, kappa: 1.0 }],
        grid: default_grid(h),
        heat_u: 2.0,
    }
}

/// KdV whose sampled coordinate `x_1` is driven by the generator `i_2`
/// through a non-identity permutation.
pub fn kdv_permuted(h: f64) -> Scenario {
    Scenario {
        sigmas: vec![
            single(2, 1.0, 1, Slot::X),
            single(2, 1.0, 1, Slot::Y),
            single(2, -1.0, 0, Slot::T),
        ],
        ..kdv_scalar(h)
    }
}

/// Quaternion mKdV with `σ = ₁σ = i_1^* ∂/∂x_1` and `p = 1`.
pub fn mkdv_scalar(h: f64) -> Scenario {
    Scenario {
        kind: ScenarioKind::Mkdv,
        ..kdv_scalar(h)
    }
}

/// The mKdV reduction with every operator `∂/∂x_0`; `p = −1` gives the
/// regular focusing soliton.
pub fn mkdv_classical(h: f64) -> Scenario {
    Scenario {
        kind: ScenarioKind::Mkdv,
        p: -1.0,
        sigmas: vec![
            SigmaSpec::real_derivative(2, Slot::X),
            SigmaSpec::real_derivative(2, Slot::Y),
            SigmaSpec::real_derivative(2, Slot::T),
        ],
        coord: 0,
        t_coord: 0,
        ..kdv_scalar(h)
    }
}

/// Heat-type scenario with `σ = i_1^* ∂/∂x_1`, `₁σ = ∂/∂t_0` and `u = 2`.
pub fn heat_scalar(h: f64) -> Scenario {
    Scenario {
        kind: ScenarioKind::Heat,
        sigmas: vec![single(1, 1.0, 1, Slot::X), SigmaSpec::real_derivative(2, Slot::T)],
        ..kdv_scalar(h)
    }
}
