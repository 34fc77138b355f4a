//! The dressing construction: a kernel `F` built from exponential modes, the
//! integral equation
//!
//! ```text
//! K(x,y) = F(x,y) + p S⁻¹ ∫_x^Z F(z,y) K(x,z) dz
//! ```
//!
//! solved on every ray that starts at a base point `x`, and the fields derived
//! from its diagonal. `S` is the symbol of the `x`-operator along the ray
//! coordinate, so `S⁻¹∫_x^Z` is the anti-derivative to infinity of that
//! operator. For mKdV the auxiliary kernel `K₂ = S⁻¹∫F(ζ,z)K(x,ζ)dζ` enters
//! `K = F + (p/4) S⁻¹∫F(z,y)K₂(x,z)dz`.
//!
//! `F` is a real scalar times the identity, so on each ray the unknown lives
//! in the span of one complex vector: left multiplication by `S⁻¹` acts as a
//! complex scalar on a complex structure of `A_r`. The fast path solves that
//! complex system; the dense path builds the full real matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cd_algebra::{dim, CdNumber};
use crate::cd_matrix::{block_right, CdMatrix};
use crate::diff_ops::{apply_sigma, DiffError, SigmaSpec};
use crate::grid::{Axis, GridError, GridFunction, Slot};
use crate::line_integral::{ray_weights, QuadRule};
use crate::linalg::{spectral_radius, Factorized};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DressingError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("no dispersion relation: {0}")]
    NoDispersionSolution(String),
    #[error("integral operator is numerically singular at base x = {base} (rcond {rcond:.3e})")]
    SingularOperator { base: f64, rcond: f64 },
    #[error("integrand at the truncation bound is {value:.3e}, above {tol:.1e}")]
    TailNotDecayed { value: f64, tol: f64 },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Kdv,
    Mkdv,
    Heat,
}

impl ScenarioKind {
    fn operator_count(self) -> usize {
        match self {
            ScenarioKind::Heat => 2,
            _ => 3,
        }
    }
}

/// One exponential mode `β e^{−κ(x+y) + c t}`; `c` is solved for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub beta: f64,
    pub kappa: f64,
}

fn default_eps_tail() -> f64 {
    1e-8
}

/// Lattice of the computation. Base points and output `y` share the window
/// `[x_min, x_max]`; rays run on the same lattice up to `z_max`. `K` is
/// produced at the three times `t − dt, t, t + dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub z_max: f64,
    pub h: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub rule: QuadRule,
    #[serde(default = "default_eps_tail")]
    pub eps_tail: f64,
}

impl GridSpec {
    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or(self.h)
    }

    pub fn with_h(&self, h: f64) -> GridSpec {
        GridSpec {
            h,
            dt: self.dt.map(|d| d * h / self.h),
            ..self.clone()
        }
    }
}

fn default_heat_u() -> f64 {
    2.0
}

/// Role of an operator inside the scenario's operator expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    X,
    Y,
    T,
}

/// `coef · σ_{ops[n−1]} ⋯ σ_{ops[0]}`, applied first to last.
#[derive(Debug, Clone, PartialEq)]
pub struct OpTerm {
    pub coef: f64,
    pub ops: Vec<Role>,
}

fn term(coef: f64, ops: &[Role]) -> OpTerm {
    OpTerm {
        coef,
        ops: ops.to_vec(),
    }
}

/// A complete dressing scenario.
///
/// `sigmas` holds, in order: for KdV `₁σ, ₂σ, ₃σ` acting on `x, y, t`; for
/// mKdV `σ, ₁σ, ₂σ` acting on `x, y, t`; for the heat case `σ, ₁σ` acting on
/// `x` (and `y`) and `t`. The slot stored inside each operator is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub level: u32,
    pub s: usize,
    pub p: f64,
    pub sigmas: Vec<SigmaSpec>,
    /// Real coordinate sampled for `x`, `y` and `z`.
    pub coord: usize,
    /// Real coordinate sampled for `t`.
    pub t_coord: usize,
    pub modes: Vec<Mode>,
    pub grid: GridSpec,
    #[serde(default = "default_heat_u")]
    pub heat_u: f64,
}

impl Scenario {
    pub fn sigma(&self, role: Role) -> SigmaSpec {
        match (self.kind, role) {
            (_, Role::X) => self.sigmas[0].on(Slot::X),
            (ScenarioKind::Heat, Role::Y) => self.sigmas[0].on(Slot::Y),
            (_, Role::Y) => self.sigmas[1].on(Slot::Y),
            (ScenarioKind::Heat, Role::T) => self.sigmas[1].on(Slot::T),
            (_, Role::T) => self.sigmas[2].on(Slot::T),
        }
    }

    /// The `x`-operator acting on the second argument of `K(x, z)`.
    pub fn x_on_second(&self) -> SigmaSpec {
        self.sigmas[0].on(Slot::Y)
    }

    /// Symbol `S` of the `x`-operator along the ray coordinate.
    pub fn ray_symbol(&self) -> CdNumber {
        self.sigmas[0].symbol(self.coord)
    }

    /// True for the mKdV reduction in which every operator is `∂/∂x_0`.
    pub fn is_classical(&self) -> bool {
        self.sigmas.iter().all(|s| s.is_real_derivative())
    }

    /// Constraint `L₁ F = 0`.
    pub fn l1_terms(&self) -> Vec<OpTerm> {
        use Role::*;
        match self.kind {
            ScenarioKind::Kdv => vec![term(1.0, &[X, X]), term(-1.0, &[Y, Y])],
            _ => vec![term(1.0, &[X]), term(-1.0, &[Y])],
        }
    }

    /// Evolution constraint `L₂ F = 0`.
    pub fn l2_terms(&self) -> Vec<OpTerm> {
        use Role::*;
        match self.kind {
            ScenarioKind::Heat => vec![
                term(1.0, &[T]),
                term(1.0, &[X, X]),
                term(self.heat_u, &[X, Y]),
                term(1.0, &[Y, Y]),
            ],
            _ => vec![
                term(1.0, &[T]),
                term(1.0, &[X, X, X]),
                term(3.0, &[X, X, Y]),
                term(3.0, &[X, Y, Y]),
                term(1.0, &[Y, Y, Y]),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), DressingError> {
        let bad = |m: String| Err(DressingError::Config(m));
        if !(1..=3).contains(&self.level) {
            return bad(format!("level {} is outside 1..=3", self.level));
        }
        if self.s == 0 {
            return bad("matrix size must be at least 1".into());
        }
        if self.level == 3 && self.s != 1 {
            return bad("octonion kernels must be 1 x 1".into());
        }
        if !self.p.is_finite() {
            return bad("coupling p must be finite".into());
        }
        let d = dim(self.level);
        if self.coord >= d || self.t_coord >= d {
            return bad(format!("coordinates must be below {d}"));
        }
        if self.sigmas.len() != self.kind.operator_count() {
            return bad(format!(
                "{:?} needs {} operators, got {}",
                self.kind,
                self.kind.operator_count(),
                self.sigmas.len()
            ));
        }
        if self.sigmas.iter().any(|s| s.level() != self.level) {
            return bad("every operator must live on the scenario level".into());
        }
        let real_xy = self.sigma(Role::X).psi0() != 0.0 || self.sigma(Role::Y).psi0() != 0.0;
        match self.kind {
            ScenarioKind::Kdv if real_xy => {
                return bad("the x- and y-operators of the KdV construction must have no real part".into())
            }
            ScenarioKind::Mkdv if real_xy && !self.is_classical() => {
                return bad(
                    "the mKdV construction needs x- and y-operators without a real part, \
                     unless every operator is the plain real derivative"
                        .into(),
                )
            }
            ScenarioKind::Heat if self.heat_u != 2.0 => {
                return bad(format!("the heat construction needs u = 2, got {}", self.heat_u))
            }
            _ => {}
        }
        for (role, c) in [(Role::X, self.coord), (Role::Y, self.coord), (Role::T, self.t_coord)] {
            if self.sigma(role).symbol(c).norm() == 0.0 {
                return bad(format!("the {role:?} operator does not act on coordinate {c}"));
            }
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required".into());
        }
        for m in &self.modes {
            if !(m.kappa > 0.0) || !m.kappa.is_finite() || !m.beta.is_finite() {
                return bad(format!("mode {m:?} needs finite beta and kappa > 0"));
            }
        }
        self.lattice().map(|_| ())
    }

    fn lattice(&self) -> Result<Lattice, DressingError> {
        let g = &self.grid;
        let bad = |m: &str| Err(DressingError::Config(m.into()));
        if !(g.h > 0.0) || !(g.time_step() > 0.0) {
            return bad("grid steps must be positive");
        }
        if !(g.x_min < g.x_max && g.x_max < g.z_max) {
            return bad("need x_min < x_max < z_max");
        }
        if !(g.eps_tail > 0.0) {
            return bad("eps_tail must be positive");
        }
        let on_lattice = |v: f64| {
            let k = (v - g.x_min) / g.h;
            ((k - k.round()).abs() < 1e-6).then(|| k.round() as usize)
        };
        let (Some(last_w), Some(last)) = (on_lattice(g.x_max), on_lattice(g.z_max)) else {
            return bad("x_max and z_max must lie on the lattice x_min + k h");
        };
        if last_w + 1 < 7 {
            return bad("the window needs at least 7 points");
        }
        Ok(Lattice {
            origin: g.x_min,
            h: g.h,
            n_window: last_w + 1,
            last,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Lattice {
    origin: f64,
    h: f64,
    n_window: usize,
    last: usize,
}

impl Lattice {
    fn point(&self, q: usize) -> f64 {
        self.origin + q as f64 * self.h
    }
}

/// A solved mode: `β e^{−κ(x+y) + c t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMode {
    pub beta: f64,
    pub kappa: f64,
    pub c: f64,
}

/// The scalar kernel `F = f · I_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FModel {
    pub level: u32,
    pub s: usize,
    pub modes: Vec<FMode>,
}

impl FModel {
    pub fn value(&self, x: f64, y: f64, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.beta * (-m.kappa * (x + y) + m.c * t).exp())
            .sum()
    }

    /// `∂f/∂x`, which equals `∂f/∂y`.
    pub fn dx(&self, x: f64, y: f64, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| -m.kappa * m.beta * (-m.kappa * (x + y) + m.c * t).exp())
            .sum()
    }

    /// Samples on axes `(x, y, t)` given in that order.
    pub fn grid(&self, axes: [Axis; 3]) -> Result<GridFunction, DressingError> {
        Ok(GridFunction::from_real_fn(self.level, self.s, axes.to_vec(), |p| {
            self.value(p[0], p[1], p[2])
        })?
        .with_constant_elsewhere())
    }
}

fn role_symbol(sc: &Scenario, role: Role, kappa: f64, c: f64) -> CdNumber {
    match role {
        Role::X | Role::Y => sc.sigma(role).symbol(sc.coord).scale(-kappa),
        Role::T => sc.sigma(role).symbol(sc.t_coord).scale(c),
    }
}

fn terms_symbol(sc: &Scenario, terms: &[OpTerm], kappa: f64, c: f64) -> CdNumber {
    let mut acc = CdNumber::zero(sc.level);
    for t in terms {
        let mut v = CdNumber::one(sc.level);
        for &r in &t.ops {
            v = role_symbol(sc, r, kappa, c).mul(&v);
        }
        acc = acc + v.scale(t.coef);
    }
    acc
}

/// Solves the dispersion relation of every mode and checks both constraints
/// on the symbols.
pub fn build_f(sc: &Scenario) -> Result<FModel, DressingError> {
    sc.validate()?;
    let st = sc.sigma(Role::T).symbol(sc.t_coord);
    let spatial: Vec<OpTerm> = sc
        .l2_terms()
        .into_iter()
        .filter(|t| !t.ops.contains(&Role::T))
        .collect();
    let mut modes = Vec::with_capacity(sc.modes.len());
    for m in &sc.modes {
        let l1 = terms_symbol(sc, &sc.l1_terms(), m.kappa, 0.0);
        if l1.norm() > 1e-10 * (1.0 + m.kappa * m.kappa) {
            return Err(DressingError::NoDispersionSolution(format!(
                "mode kappa = {} violates the first constraint (symbol residual {:.3e})",
                m.kappa,
                l1.norm()
            )));
        }
        let p = terms_symbol(sc, &spatial, m.kappa, 0.0);
        let inner: f64 = st.coeffs().iter().zip(p.coeffs()).map(|(a, b)| a * b).sum();
        let c = -inner / st.norm_sq();
        let res = (st.scale(c) + p.clone()).norm();
        if res > 1e-10 * (1.0 + p.norm()) {
            return Err(DressingError::NoDispersionSolution(format!(
                "no real time exponent for kappa = {}: the spatial symbol is not parallel \
                 to the time symbol (residual {res:.3e})",
                m.kappa
            )));
        }
        modes.push(FMode {
            beta: m.beta,
            kappa: m.kappa,
            c,
        });
    }
    Ok(FModel {
        level: sc.level,
        s: sc.s,
        modes,
    })
}

/// Finite-difference residuals of `L₁F` and `L₂F`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    /// `‖L F‖∞ / max_term ‖term‖∞` for `L₁` and `L₂`.
    pub l1_relative: f64,
    pub l2_relative: f64,
}

impl ConstraintReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.l1_relative <= tol && self.l2_relative <= tol
    }
}

/// Applies an operator expression to a grid function on `(x, y, t)` axes.
pub fn apply_terms(
    sc: &Scenario,
    terms: &[OpTerm],
    f: &GridFunction,
) -> Result<(GridFunction, Vec<GridFunction>), DressingError> {
    let mut parts = Vec::with_capacity(terms.len());
    let mut acc = f.zeros_like();
    for t in terms {
        let mut g = f.clone();
        for &r in &t.ops {
            g = apply_sigma(&sc.sigma(r), &g)?;
        }
        let g = g.scale(t.coef);
        acc = acc.add(&g)?;
        parts.push(g);
    }
    Ok((acc, parts))
}

/// Checks both constraints on the sampled `F` with finite differences,
/// away from the boundary and at the middle time slice.
pub fn check_constraints(sc: &Scenario, f: &GridFunction) -> Result<ConstraintReport, DressingError> {
    let margin = 3.0 * sc.grid.h;
    let mut ranges = f.interior(&[(0, margin), (1, margin)]);
    let nt = f.axes()[2].n;
    ranges[2] = nt / 2..nt / 2 + 1;
    let rel = |terms: &[OpTerm]| -> Result<f64, DressingError> {
        let (sum, parts) = apply_terms(sc, terms, f)?;
        let scale = parts.iter().map(|p| p.linf_on(&ranges)).fold(0.0, f64::max);
        let r = sum.linf_on(&ranges);
        Ok(if scale == 0.0 { r } else { r / scale })
    };
    Ok(ConstraintReport {
        l1_relative: rel(&sc.l1_terms())?,
        l2_relative: rel(&sc.l2_terms())?,
    })
}

/// How the partial derivatives of `K` on the diagonal are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagonalRule {
    /// From the differentiated integral equation, at quadrature accuracy.
    #[default]
    Integral,
    /// Second-order stencils on the sampled `K`.
    Stencil,
}

/// Options of [`solve_dressing_with`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Right factor `B` of the source: the equation is solved for `F·B`.
    pub rhs_right: Option<CdMatrix>,
    /// Skip the complex fast path.
    pub force_dense: bool,
    /// Cross-check with the Neumann series wherever it converges.
    pub neumann: bool,
    /// Wavenumber `k` of the Jost-type function `Φ` (KdV only).
    pub schroedinger_k: Option<f64>,
    pub rcond_min: f64,
    /// Source of `u = 2 ₁σ_x K(x,x)` in the KdV case.
    pub diagonal: DiagonalRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rhs_right: None,
            force_dense: false,
            neumann: true,
            schroedinger_k: None,
            rcond_min: 1e-10,
            diagonal: DiagonalRule::Integral,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub min_rcond: f64,
    pub max_spectral_radius: f64,
    /// Number of base points where the Neumann series was run.
    pub neumann_checked: usize,
    pub max_neumann_gap: f64,
    /// Largest `‖K − F·B − A K‖∞ / ‖F·B‖∞` over all rays.
    pub max_fixed_point_residual: f64,
    /// Largest integrand magnitude at the truncation bound.
    pub tail: f64,
    pub dense_path: bool,
}

/// `K` and its derived quantities on the window.
#[derive(Debug, Clone)]
pub struct DressingSolution {
    pub fmodel: FModel,
    /// `F·B` on axes `(x, y, t)`.
    pub f: GridFunction,
    /// `K(x, y)` on axes `(x, y, t)`.
    pub k: GridFunction,
    /// `K₂(x, y)` (mKdV only).
    pub k2: Option<GridFunction>,
    /// On axes `(x, t)`: `u = 2 ₁σ_x K(x,x)` for KdV, `g = K(x,x)` otherwise.
    pub field: GridFunction,
    /// `Φ(x)` on axes `(x, t)`.
    pub phi: Option<GridFunction>,
    pub diagnostics: Diagnostics,
}

/// A complex structure `J = L_u` on `A_r` with an orthonormal basis
/// `{e_m, J e_m}`.
#[derive(Debug, Clone)]
struct ComplexStructure {
    level: u32,
    u: CdNumber,
    e: Vec<Vec<f64>>,
    je: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ComplexStructure {
    fn new(level: u32, c: &CdNumber) -> Option<Self> {
        let d = dim(level);
        if d < 2 {
            return None;
        }
        let mut im = c.clone();
        im = im - CdNumber::real(level, c.re());
        let u = if im.norm() > 1e-14 * c.norm().max(1e-300) {
            im.scale(1.0 / im.norm())
        } else {
            CdNumber::basis(level, 1).ok()?
        };
        let mut e: Vec<Vec<f64>> = Vec::new();
        let mut je: Vec<Vec<f64>> = Vec::new();
        for cand in 0..d {
            if e.len() == d / 2 {
                break;
            }
            let mut v = vec![0.0; d];
            v[cand] = 1.0;
            for b in e.iter().chain(je.iter()) {
                let a = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= a * y;
                }
            }
            let n = dot(&v, &v).sqrt();
            if n < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= n);
            let vn = CdNumber::from_coeffs(level, v.clone()).ok()?;
            je.push(u.mul(&vn).coeffs().to_vec());
            e.push(v);
        }
        let cs = ComplexStructure { level, u, e, je };
        cs.verify().then_some(cs)
    }

    fn verify(&self) -> bool {
        let d = dim(self.level);
        if self.e.len() * 2 != d {
            return false;
        }
        let all: Vec<&Vec<f64>> = self.e.iter().chain(self.je.iter()).collect();
        for (a, x) in all.iter().enumerate() {
            for (b, y) in all.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot(x, y) - want).abs() > 1e-12 {
                    return false;
                }
            }
        }
        self.e.iter().zip(&self.je).all(|(e, je)| {
            let j = CdNumber::from_coeffs(self.level, je.clone()).expect("length");
            let jj = self.u.mul(&j);
            jj.coeffs().iter().zip(e).all(|(a, b)| (a + b).abs() < 1e-12)
        })
    }

    /// `c = α + β u` as `α + iβ`, when `c` lies in that plane.
    fn scalar(&self, c: &CdNumber) -> Option<Complex64> {
        let alpha = c.re();
        let beta = dot(c.coeffs(), self.u.coeffs());
        let rebuilt = CdNumber::real(self.level, alpha) + self.u.scale(beta);
        (rebuilt.max_diff(c) <= 1e-13 * (1.0 + c.norm())).then_some(Complex64::new(alpha, beta))
    }

    fn coords(&self, x: &[f64]) -> Vec<Complex64> {
        self.e
            .iter()
            .zip(&self.je)
            .map(|(e, je)| Complex64::new(dot(x, e), dot(x, je)))
            .collect()
    }

    fn expand_into(&self, z: &[Complex64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for ((c, e), je) in z.iter().zip(&self.e).zip(&self.je) {
            for k in 0..out.len() {
                out[k] += c.re * e[k] + c.im * je[k];
            }
        }
    }
}

/// Real `d × d` matrix of left multiplication by `c`.
fn left_matrix(c: &CdNumber) -> DMatrix<f64> {
    let d = c.dim();
    let mut m = DMatrix::zeros(d, d);
    for k in 0..d {
        let e = CdNumber::basis(c.level(), k).expect("in range");
        let col = c.mul(&e);
        for (r, v) in col.coeffs().iter().enumerate() {
            m[(r, k)] = *v;
        }
    }
    m
}

/// Left-multiplies every `A_r` chunk of the rows of `m` by `l`.
fn left_apply(l: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = l.nrows();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let lt = l.transpose();
    for e in 0..m.ncols() / d {
        let prod = m.columns(e * d, d) * &lt;
        out.columns_mut(e * d, d).copy_from(&prod);
    }
    out
}

struct Ctx<'a> {
    sc: &'a Scenario,
    fm: &'a FModel,
    lat: Lattice,
    d: usize,
    block: usize,
    /// `F·B` per unit of `f`, flat.
    b_flat: Vec<f64>,
    mkdv: bool,
    /// Left multiplication by `λ = p S⁻¹` for KdV and heat, by `μ = S⁻¹` for mKdV.
    l_mult: DMatrix<f64>,
    /// Left factor of the outer integral: `λ`, or `(p/4) μ`.
    l_outer: DMatrix<f64>,
    fast: Option<(ComplexStructure, Complex64, Vec<Complex64>)>,
    opts: &'a SolveOptions,
}

struct BaseOut {
    k: DMatrix<f64>,
    k2: Option<DMatrix<f64>>,
    phi: Option<Vec<f64>>,
    rcond: f64,
    spectral: f64,
    neumann_gap: Option<f64>,
    fixed_point: f64,
    tail: f64,
    slope: Option<Vec<f64>>,
}

enum RaySolver {
    Fast(Factorized<Complex64>),
    Dense(Factorized<f64>),
}

impl RaySolver {
    fn rcond(&self) -> f64 {
        match self {
            RaySolver::Fast(f) => f.rcond,
            RaySolver::Dense(f) => f.rcond,
        }
    }
}

impl Ctx<'_> {
    fn ray_g(&self, t: f64, base: usize, rows: &[f64]) -> DMatrix<f64> {
        let n = self.lat.last - base + 1;
        let w = ray_weights(n, self.lat.h, self.sc.grid.rule);
        DMatrix::from_fn(rows.len(), n, |j, k| {
            w[k] * self.fm.value(self.lat.point(base + k), rows[j], t)
        })
    }

    fn ray_points(&self, base: usize) -> Vec<f64> {
        (base..=self.lat.last).map(|q| self.lat.point(q)).collect()
    }

    /// `F(x_base, y)·B` stacked over `ys`.
    fn source(&self, t: f64, base: usize, ys: &[f64]) -> DMatrix<f64> {
        let x = self.lat.point(base);
        DMatrix::from_fn(ys.len(), self.block, |j, c| {
            self.fm.value(x, ys[j], t) * self.b_flat[c]
        })
    }

    /// Quadrature matrix of the full operator: `G`, or `G²` for mKdV.
    fn ray_operator(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        if self.mkdv {
            g * g
        } else {
            g.clone()
        }
    }

    fn check_rcond<T: nalgebra::ComplexField<RealField = f64>>(
        &self,
        m: DMatrix<T>,
        base: usize,
    ) -> Result<Factorized<T>, DressingError> {
        let x = self.lat.point(base);
        let fac = Factorized::new(m).ok_or(DressingError::SingularOperator { base: x, rcond: 0.0 })?;
        if fac.rcond < self.opts.rcond_min {
            return Err(DressingError::SingularOperator {
                base: x,
                rcond: fac.rcond,
            });
        }
        Ok(fac)
    }

    /// Factorizes `I − A` on the ray of `base`, returning the solver, the
    /// spectral estimate of `A` and the relative Neumann gap for the source.
    fn factor(
        &self,
        t: f64,
        base: usize,
        g: &DMatrix<f64>,
    ) -> Result<(RaySolver, f64, Option<f64>), DressingError> {
        let x = self.lat.point(base);
        let pts = self.ray_points(base);
        let n = g.nrows();
        if let Some((_, lam, _)) = &self.fast {
            let a: DMatrix<Complex64> = self.ray_operator(g).map(|v| lam * v);
            let fac = self.check_rcond(DMatrix::<Complex64>::identity(n, n) - &a, base)?;
            let f = DMatrix::from_fn(n, 1, |j, _| Complex64::new(self.fm.value(x, pts[j], t), 0.0));
            let (spectral, gap) = self.neumann(n, |v| &a * v, &f, &fac.solve(&f));
            Ok((RaySolver::Fast(fac), spectral, gap))
        } else {
            let a = self.dense_operator(g);
            let size = a.nrows();
            let fac = self.check_rcond(DMatrix::<f64>::identity(size, size) - &a, base)?;
            let src = self.source(t, base, &pts);
            let f = DMatrix::from_fn(size, 1, |q, _| src[(q / self.block, q % self.block)]);
            let (spectral, gap) = self.neumann(size, |v| &a * v, &f, &fac.solve(&f));
            Ok((RaySolver::Dense(fac), spectral, gap))
        }
    }

    /// Solution on the ray for the source `v(z_j) · P` with a constant block `P`.
    fn solve_pattern(&self, solver: &RaySolver, v: &[f64], pattern: &[f64]) -> DMatrix<f64> {
        let n = v.len();
        match solver {
            RaySolver::Fast(fac) => {
                let (cs, _, _) = self.fast.as_ref().expect("fast path");
                let rhs = DMatrix::from_fn(n, 1, |j, _| Complex64::new(v[j], 0.0));
                let zeta = fac.solve(&rhs);
                let coords: Vec<Complex64> = pattern.chunks(self.d).flat_map(|e| cs.coords(e)).collect();
                let half = self.d / 2;
                let mut z = DMatrix::zeros(n, self.block);
                let mut buf = vec![0.0; self.d];
                let mut scaled = vec![Complex64::new(0.0, 0.0); half];
                for j in 0..n {
                    for (e, c) in coords.chunks(half).enumerate() {
                        for (s, c) in scaled.iter_mut().zip(c) {
                            *s = zeta[(j, 0)] * c;
                        }
                        cs.expand_into(&scaled, &mut buf);
                        for (k, x) in buf.iter().enumerate() {
                            z[(j, e * self.d + k)] = *x;
                        }
                    }
                }
                z
            }
            RaySolver::Dense(fac) => {
                let size = n * self.block;
                let rhs = DMatrix::from_fn(size, 1, |q, _| v[q / self.block] * pattern[q % self.block]);
                let sol = fac.solve(&rhs);
                DMatrix::from_fn(n, self.block, |j, c| sol[(j * self.block + c, 0)])
            }
        }
    }

    /// `∂K(x,y)/∂x + ∂K(x,y)/∂y` at `y = x` from the differentiated equation
    /// `K_x = F_x B − λ F(x,·) K(x,x) + λ∫F K_x` and
    /// `K_y = F_y B + λ∫F_y K`.
    fn diagonal_slope(
        &self,
        t: f64,
        solver: &RaySolver,
        z: &DMatrix<f64>,
        pts: &[f64],
    ) -> Vec<f64> {
        let x = pts[0];
        let fx: Vec<f64> = pts.iter().map(|&y| self.fm.dx(x, y, t)).collect();
        let fv: Vec<f64> = pts.iter().map(|&y| self.fm.value(x, y, t)).collect();
        let kxx = DMatrix::from_row_slice(1, self.block, &z.row(0).iter().copied().collect::<Vec<_>>());
        let lk: Vec<f64> = left_apply(&self.l_mult, &kxx).iter().copied().collect();
        let kx = self.solve_pattern(solver, &fx, &self.b_flat) - self.solve_pattern(solver, &fv, &lk);
        let w = ray_weights(pts.len(), self.lat.h, self.sc.grid.rule);
        let gy = DMatrix::from_fn(1, pts.len(), |_, k| w[k] * self.fm.dx(pts[k], x, t));
        let ky = DMatrix::from_fn(1, self.block, |_, c| self.fm.dx(x, x, t) * self.b_flat[c])
            + left_apply(&self.l_outer, &(gy * z));
        (kx.row(0) + ky.row(0)).iter().copied().collect()
    }

    /// `A = G_op ⊗ L_Λ` with rows `(ray point, entry, coefficient)`.
    fn dense_operator(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let gm = self.ray_operator(g);
        let l = if self.mkdv {
            &self.l_outer * &self.l_mult
        } else {
            self.l_mult.clone()
        };
        let n = g.nrows();
        let d = self.d;
        let entries = self.block / d;
        let size = n * self.block;
        let mut a = DMatrix::zeros(size, size);
        for j in 0..n {
            for k in 0..n {
                let gjk = gm[(j, k)];
                if gjk == 0.0 {
                    continue;
                }
                for e in 0..entries {
                    let r0 = j * self.block + e * d;
                    let c0 = k * self.block + e * d;
                    for r in 0..d {
                        for c in 0..d {
                            a[(r0 + r, c0 + c)] = gjk * l[(r, c)];
                        }
                    }
                }
            }
        }
        a
    }

    fn neumann<T: nalgebra::ComplexField<RealField = f64> + Copy>(
        &self,
        n: usize,
        apply: impl Fn(&DMatrix<T>) -> DMatrix<T>,
        f: &DMatrix<T>,
        direct: &DMatrix<T>,
    ) -> (f64, Option<f64>) {
        if !self.opts.neumann {
            return (f64::NAN, None);
        }
        let rho = spectral_radius::<T>(n, 40, |v| {
            let m = DMatrix::from_column_slice(n, 1, v.as_slice());
            DVector::from_column_slice(apply(&m).as_slice())
        });
        if rho >= 0.9 {
            return (rho, None);
        }
        let fnorm = f.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        let mut x = f.clone();
        for _ in 0..5000 {
            let next = f + apply(&x);
            let delta = (&next - &x).iter().map(|v| v.modulus()).fold(0.0, f64::max);
            x = next;
            if delta <= 1e-15 * fnorm.max(1e-300) {
                break;
            }
        }
        let gap = (&x - direct).iter().map(|v| v.modulus()).fold(0.0, f64::max);
        (rho, Some(if fnorm > 0.0 { gap / fnorm } else { gap }))
    }

    fn run(&self, t: f64, base: usize) -> Result<BaseOut, DressingError> {
        let pts = self.ray_points(base);
        let g = self.ray_g(t, base, &pts);
        let (solver, spectral, neumann_gap) = self.factor(t, base, &g)?;
        let fv: Vec<f64> = pts.iter().map(|&y| self.fm.value(pts[0], y, t)).collect();
        let z = self.solve_pattern(&solver, &fv, &self.b_flat);
        let rcond = solver.rcond();
        let slope = (self.sc.kind == ScenarioKind::Kdv && self.opts.diagonal == DiagonalRule::Integral)
            .then(|| self.diagonal_slope(t, &solver, &z, &pts));
        let ys: Vec<f64> = (0..self.lat.n_window).map(|q| self.lat.point(q)).collect();
        let gy = self.ray_g(t, base, &ys);
        let src_ray = self.source(t, base, &pts);
        let (k, k2, applied) = if self.mkdv {
            let k2_ray = left_apply(&self.l_mult, &(&g * &z));
            let k = self.source(t, base, &ys) + left_apply(&self.l_outer, &(&gy * &k2_ray));
            let k2 = left_apply(&self.l_mult, &(&gy * &z));
            (k, Some(k2), left_apply(&self.l_outer, &(&g * &k2_ray)))
        } else {
            let k = self.source(t, base, &ys) + left_apply(&self.l_outer, &(&gy * &z));
            (k, None, left_apply(&self.l_outer, &(&g * &z)))
        };
        let resid = (&z - &src_ray - applied).amax();
        let fnorm = src_ray.amax();
        let fixed_point = if fnorm > 0.0 { resid / fnorm } else { resid };
        let last = pts.len() - 1;
        let z_last = z.row(last).norm();
        let f_tail = ys
            .iter()
            .map(|&y| self.fm.value(pts[last], y, t).abs())
            .fold(0.0, f64::max);
        let phi = self.opts.schroedinger_k.map(|kw| self.phi(base, kw, &z, &pts));
        Ok(BaseOut {
            k,
            k2,
            phi,
            rcond,
            spectral,
            neumann_gap,
            fixed_point,
            tail: f_tail * z_last,
            slope,
        })
    }

    /// `Φ(x) = e(x) + p S⁻¹ Σ_k w_k K(x, z_k) e(z_k)` with `e(y) = exp(i_j^* k y)`.
    fn phi(&self, base: usize, kw: f64, z: &DMatrix<f64>, pts: &[f64]) -> Vec<f64> {
        let level = self.sc.level;
        let j = self.sc.sigma(Role::Y).generator_for(self.sc.coord);
        let e = |y: f64| -> CdNumber {
            if j == 0 {
                CdNumber::real(level, (kw * y).exp())
            } else {
                let g = crate::diff_ops::conj_generator(level, j);
                CdNumber::real(level, (kw * y).cos()) + g.scale((kw * y).sin())
            }
        };
        let n = pts.len();
        let w = ray_weights(n, self.lat.h, self.sc.grid.rule);
        let mut acc = vec![0.0; self.block];
        let mut tmp = vec![0.0; self.block];
        for k in 0..n {
            let row: Vec<f64> = z.row(k).iter().copied().collect();
            let ek = e(pts[k]);
            for (chunk_in, chunk_out) in row.chunks(self.d).zip(tmp.chunks_mut(self.d)) {
                block_right(chunk_in, ek.coeffs(), chunk_out, level);
            }
            for (a, b) in acc.iter_mut().zip(&tmp) {
                *a += w[k] * b;
            }
        }
        let sum = DMatrix::from_row_slice(1, self.block, &acc);
        let mut out: Vec<f64> = left_apply(&self.l_mult, &sum).iter().copied().collect();
        let ex = e(self.lat.point(base));
        for r in 0..self.sc.s {
            let off = (r * self.sc.s + r) * self.d;
            for (o, v) in out[off..off + self.d].iter_mut().zip(ex.coeffs()) {
                *o += v;
            }
        }
        out
    }
}

pub fn solve_dressing(sc: &Scenario) -> Result<DressingSolution, DressingError> {
    solve_dressing_with(sc, &SolveOptions::default())
}

pub fn solve_dressing_with(sc: &Scenario, opts: &SolveOptions) -> Result<DressingSolution, DressingError> {
    let fm = build_f(sc)?;
    let lat = sc.lattice()?;
    let level = sc.level;
    let d = dim(level);
    let b = match &opts.rhs_right {
        Some(b) if b.size() != sc.s || b.level() != level => {
            return Err(DressingError::Config("right factor has the wrong shape".into()))
        }
        Some(b) => b.clone(),
        None => CdMatrix::identity(sc.s, level),
    };
    if opts.schroedinger_k.is_some() && sc.kind != ScenarioKind::Kdv {
        return Err(DressingError::Config("the Jost-type function is defined for KdV only".into()));
    }
    let s_inv = sc
        .ray_symbol()
        .inv()
        .map_err(|_| DressingError::Config("ray symbol is not invertible".into()))?;
    let mkdv = sc.kind == ScenarioKind::Mkdv;
    let mult = if mkdv { s_inv.clone() } else { s_inv.scale(sc.p) };
    let l_mult = left_matrix(&mult);
    let l_outer = if mkdv {
        left_matrix(&s_inv.scale(sc.p / 4.0))
    } else {
        l_mult.clone()
    };
    let b_flat = b.to_flat();
    let fast = if opts.force_dense {
        None
    } else {
        ComplexStructure::new(level, &mult).and_then(|cs| {
            let c = cs.scalar(&mult)?;
            let lam = if mkdv { c * c * (sc.p / 4.0) } else { c };
            let coords: Vec<Complex64> = b_flat.chunks(d).flat_map(|e| cs.coords(e)).collect();
            Some((cs, lam, coords))
        })
    };
    let ctx = Ctx {
        sc,
        fm: &fm,
        lat,
        d,
        block: sc.s * sc.s * d,
        b_flat,
        mkdv,
        l_mult,
        l_outer,
        fast,
        opts,
    };
    let dt = sc.grid.time_step();
    let times = [sc.grid.t - dt, sc.grid.t, sc.grid.t + dt];
    let jobs: Vec<(usize, usize)> = (0..3)
        .flat_map(|ti| (0..lat.n_window).map(move |i| (ti, i)))
        .collect();
    let outs: Vec<BaseOut> = jobs
        .par_iter()
        .map(|&(ti, i)| ctx.run(times[ti], i))
        .collect::<Result<_, _>>()?;

    let x_axis = Axis::new(Slot::X, sc.coord, lat.n_window, lat.h, lat.origin);
    let y_axis = Axis::new(Slot::Y, sc.coord, lat.n_window, lat.h, lat.origin);
    let t_axis = Axis::new(Slot::T, sc.t_coord, 3, dt, times[0]);
    let axes = vec![x_axis, y_axis, t_axis];
    let mut k = GridFunction::zeros(level, sc.s, axes.clone())?.with_constant_elsewhere();
    let mut k2 = mkdv.then(|| k.clone());
    let mut phi = opts
        .schroedinger_k
        .map(|_| GridFunction::zeros(level, sc.s, vec![x_axis, t_axis]).map(|g| g.with_constant_elsewhere()))
        .transpose()?;
    let mut slope = (sc.kind == ScenarioKind::Kdv && opts.diagonal == DiagonalRule::Integral)
        .then(|| GridFunction::zeros(level, sc.s, vec![x_axis, t_axis]).map(|g| g.with_constant_elsewhere()))
        .transpose()?;
    let mut diag = Diagnostics {
        min_rcond: f64::INFINITY,
        dense_path: ctx.fast.is_none(),
        ..Default::default()
    };
    for (&(ti, i), out) in jobs.iter().zip(&outs) {
        for j in 0..lat.n_window {
            let p = k.flatten(&[i, j, ti]);
            for (dst, src) in k.block_mut(p).iter_mut().zip(out.k.row(j).iter()) {
                *dst = *src;
            }
            if let (Some(k2g), Some(k2o)) = (k2.as_mut(), out.k2.as_ref()) {
                for (dst, src) in k2g.block_mut(p).iter_mut().zip(k2o.row(j).iter()) {
                    *dst = *src;
                }
            }
        }
        if let (Some(sg), Some(so)) = (slope.as_mut(), out.slope.as_ref()) {
            let p = sg.flatten(&[i, ti]);
            sg.block_mut(p).copy_from_slice(so);
        }
        if let (Some(pg), Some(po)) = (phi.as_mut(), out.phi.as_ref()) {
            let p = pg.flatten(&[i, ti]);
            pg.block_mut(p).copy_from_slice(po);
        }
        diag.min_rcond = diag.min_rcond.min(out.rcond);
        if out.spectral.is_finite() {
            diag.max_spectral_radius = diag.max_spectral_radius.max(out.spectral);
        }
        if let Some(gap) = out.neumann_gap {
            diag.neumann_checked += 1;
            diag.max_neumann_gap = diag.max_neumann_gap.max(gap);
        }
        diag.max_fixed_point_residual = diag.max_fixed_point_residual.max(out.fixed_point);
        diag.tail = diag.tail.max(out.tail);
    }
    if diag.tail > sc.grid.eps_tail {
        return Err(DressingError::TailNotDecayed {
            value: diag.tail,
            tol: sc.grid.eps_tail,
        });
    }
    let z_max = lat.point(lat.last);
    k.z_max = Some(z_max);
    if let Some(k2) = k2.as_mut() {
        k2.z_max = Some(z_max);
    }
    let f = fm.grid([x_axis, y_axis, t_axis])?;
    let f = f.right_mul_matrix(&b)?;
    let field = match slope {
        Some(sl) => sl.left_mul(&sc.ray_symbol()).scale(2.0),
        None => derived_field(sc, &k)?,
    };
    Ok(DressingSolution {
        fmodel: fm,
        f,
        k,
        k2,
        field,
        phi,
        diagnostics: diag,
    })
}

/// `2 ₁σ_x K(x,x)` for KdV and `K(x,x)` otherwise, from `K` on `(x, y, t)`.
pub fn derived_field(sc: &Scenario, k: &GridFunction) -> Result<GridFunction, DressingError> {
    match sc.kind {
        ScenarioKind::Kdv => Ok(total_diagonal_derivative(sc, k)?.scale(2.0)),
        _ => Ok(k.diagonal(0, 1)?),
    }
}

/// `[(σ_x + σ_z) K(x, z)]|_{z=x}` with the `x`-operator on both arguments.
pub fn total_diagonal_derivative(sc: &Scenario, k: &GridFunction) -> Result<GridFunction, DressingError> {
    let dx = apply_sigma(&sc.sigma(Role::X), k)?;
    let dz = apply_sigma(&sc.x_on_second(), k)?;
    Ok(dx.add(&dz)?.diagonal(0, 1)?)
}

/// The real matrix of `K ↦ p S⁻¹∫F K` on the ray of one base point, rows
/// ordered `(ray point, matrix entry, coefficient)`. For mKdV it is the
/// composite operator `(p/4) S⁻¹∫F S⁻¹∫F`.
pub fn assemble_a(sc: &Scenario, t: f64, base: usize) -> Result<DMatrix<f64>, DressingError> {
    let fm = build_f(sc)?;
    let lat = sc.lattice()?;
    if base > lat.last {
        return Err(DressingError::Config(format!("base index {base} is beyond the lattice")));
    }
    let s_inv = sc
        .ray_symbol()
        .inv()
        .map_err(|_| DressingError::Config("ray symbol is not invertible".into()))?;
    let mkdv = sc.kind == ScenarioKind::Mkdv;
    let mult = if mkdv { s_inv.clone() } else { s_inv.scale(sc.p) };
    let opts = SolveOptions::default();
    let ctx = Ctx {
        sc,
        fm: &fm,
        lat,
        d: dim(sc.level),
        block: sc.s * sc.s * dim(sc.level),
        b_flat: CdMatrix::identity(sc.s, sc.level).to_flat(),
        mkdv,
        l_mult: left_matrix(&mult),
        l_outer: if mkdv {
            left_matrix(&s_inv.scale(sc.p / 4.0))
        } else {
            left_matrix(&mult)
        },
        fast: None,
        opts: &opts,
    };
    let g = ctx.ray_g(t, base, &ctx.ray_points(base));
    Ok(ctx.dense_operator(&g))
}

/// Largest relative gap between the solution for `F·b` and `K·b`.
pub fn right_linearity_check(sc: &Scenario, b: &CdNumber) -> Result<f64, DressingError> {
    let plain = solve_dressing(sc)?;
    let mut bm = CdMatrix::zeros(sc.s, sc.level);
    for r in 0..sc.s {
        bm.set(r, r, b.embed(sc.level));
    }
    let opts = SolveOptions {
        rhs_right: Some(bm.clone()),
        neumann: false,
        ..Default::default()
    };
    let twisted = solve_dressing_with(sc, &opts)?;
    let expected = plain.k.right_mul_matrix(&bm)?;
    let gap = twisted.k.sub(&expected)?.linf();
    let scale = expected.linf();
    Ok(if scale > 0.0 { gap / scale } else { gap })
}

/// `−v² − σv`.
pub fn miura_transform(v: &GridFunction, sigma: &SigmaSpec) -> Result<GridFunction, DressingError> {
    let sq = v.mul(v)?;
    let dv = apply_sigma(sigma, v)?;
    Ok(sq.add(&dv)?.scale(-1.0))
}

fn trapezoid_weight(a: &Axis, k: usize) -> f64 {
    if a.n == 1 {
        1.0
    } else if k == 0 || k + 1 == a.n {
        0.5 * a.h
    } else {
        a.h
    }
}

/// `∫ Σ_{ab} conj(f_ab) g_ab` by the product trapezoid rule.
pub fn scalar_product(f: &GridFunction, g: &GridFunction) -> Result<CdNumber, DressingError> {
    if !f.same_shape(g) {
        return Err(GridError::ShapeMismatch("scalar product of different lattices".into()).into());
    }
    let level = f.level();
    let d = dim(level);
    let mut acc = CdNumber::zero(level);
    let mut idx = vec![0; f.axes().len()];
    for p in 0..f.len() {
        f.unflatten(p, &mut idx);
        let w: f64 = f
            .axes()
            .iter()
            .zip(&idx)
            .map(|(a, &k)| trapezoid_weight(a, k))
            .product();
        for (a, b) in f.block(p).chunks(d).zip(g.block(p).chunks(d)) {
            let a = CdNumber::from_slice(a).expect("block chunk").conj();
            let b = CdNumber::from_slice(b).expect("block chunk");
            acc = acc + a.mul(&b).scale(w);
        }
    }
    Ok(acc)
}

pub fn hilbert_norm(f: &GridFunction) -> Result<f64, DressingError> {
    Ok(scalar_product(f, f)?.re().max(0.0).sqrt())
}
