//! Constrained Lagrangian dynamics: `M q̈ + h = J_cᵀ λ_c + S u`, `J_c q̇ = 0`.
//!
//! The mass matrix is constant and diagonal in the chosen coordinates; all
//! configuration dependence lives in the bias vector `h` (gravity, springs,
//! dampers) and in the constraint Jacobian.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, VcrwError};
use crate::model::{
    spring_geometry, theta_index, upper_body_axis, x_index, z_index, ContactMode, Foot,
    GeneralizedState, ModelParams, SpringState, LIMBS, SPRINGS, SPRING_RING, UPPER_BODY,
    UPPER_BODY_ANGLE,
};

/// Largest accepted condition estimate of `J M⁻¹ Jᵀ`.
pub const MAX_CONDITION: f64 = 1e12;

/// Smallest accepted magnitude of the input gain `A` in `θ̈5 = A u − B`.
pub const MIN_INPUT_GAIN: f64 = 1e-9;

/// Diagonal of `M`: `(m_i, m_i, m_i a_i²)` per limb, then `(m5, m5, I5)`.
pub fn mass_diagonal(params: &ModelParams) -> DVector<f64> {
    let mut diag = DVector::zeros(params.dim());
    for limb in 0..LIMBS {
        let m = params.mass[limb];
        let a = params.gyration_radius[limb];
        diag[x_index(limb)] = m;
        diag[z_index(limb)] = m;
        diag[theta_index(limb)] = m * a * a;
    }
    if params.variant.has_upper_body() {
        let ub = params.upper_body;
        diag[x_index(UPPER_BODY)] = ub.mass;
        diag[z_index(UPPER_BODY)] = ub.mass;
        diag[UPPER_BODY_ANGLE] = ub.inertia;
    }
    diag
}

pub fn mass_matrix(params: &ModelParams) -> DMatrix<f64> {
    DMatrix::from_diagonal(&mass_diagonal(params))
}

fn body_masses(params: &ModelParams) -> impl Iterator<Item = (usize, f64)> + '_ {
    let upper = params
        .variant
        .has_upper_body()
        .then_some((UPPER_BODY, params.upper_body.mass));
    params.mass.iter().copied().enumerate().chain(upper)
}

/// `P_g = Σ m g (z cos φ − x sin φ)` over every body center of mass.
pub fn gravity_potential(state: &GeneralizedState, params: &ModelParams) -> f64 {
    let (s, c) = params.slope.sin_cos();
    body_masses(params)
        .map(|(body, m)| m * params.gravity * (state.q[z_index(body)] * c - state.q[x_index(body)] * s))
        .sum()
}

pub fn gravity_gradient(state: &GeneralizedState, params: &ModelParams) -> Result<DVector<f64>> {
    state.check_dim(params.variant)?;
    let (s, c) = params.slope.sin_cos();
    let mut grad = DVector::zeros(params.dim());
    for (body, m) in body_masses(params) {
        grad[x_index(body)] = -m * params.gravity * s;
        grad[z_index(body)] = m * params.gravity * c;
    }
    Ok(grad)
}

pub fn elastic_potential(state: &GeneralizedState, params: &ModelParams) -> Result<f64> {
    let geometry = spring_geometry(state, params)?;
    Ok(geometry
        .iter()
        .map(|g| 0.5 * params.stiffness * (g.length - params.natural_length).powi(2))
        .sum())
}

/// Rayleigh dissipation function `R = Σ (c/2) ℓ̇²`.
pub fn rayleigh_dissipation(state: &GeneralizedState, params: &ModelParams) -> Result<f64> {
    let geometry = spring_geometry(state, params)?;
    Ok(geometry
        .iter()
        .map(|g| 0.5 * params.damping * g.length_rate.powi(2))
        .sum())
}

pub fn kinetic_energy(state: &GeneralizedState, params: &ModelParams) -> f64 {
    let diag = mass_diagonal(params);
    0.5 * state.qd.iter().zip(diag.iter()).map(|(v, m)| m * v * v).sum::<f64>()
}

/// Kinetic plus gravitational plus elastic energy.
pub fn total_energy(state: &GeneralizedState, params: &ModelParams) -> Result<f64> {
    Ok(kinetic_energy(state, params) + gravity_potential(state, params) + elastic_potential(state, params)?)
}

/// Accumulates `scale · ∂ℓ_j/∂q` for every spring into `out`.
fn accumulate_spring_gradient(
    state: &GeneralizedState,
    params: &ModelParams,
    geometry: &[SpringState; SPRINGS],
    scale: impl Fn(&SpringState) -> f64,
    out: &mut DVector<f64>,
) {
    for (el, g) in SPRING_RING.iter().zip(geometry) {
        let f = scale(g);
        if f == 0.0 {
            continue;
        }
        for (end, sign) in [(el.endpoint_b, 1.0), (el.endpoint_a, -1.0)] {
            let u = sign * f * g.direction;
            out[x_index(end.limb)] += u.x;
            out[z_index(end.limb)] += u.y;
            out[theta_index(end.limb)] += u.dot(&end.angle_derivative(state, params));
        }
    }
}

pub fn elastic_gradient(state: &GeneralizedState, params: &ModelParams) -> Result<DVector<f64>> {
    let geometry = spring_geometry(state, params)?;
    let mut grad = DVector::zeros(params.dim());
    accumulate_spring_gradient(
        state,
        params,
        &geometry,
        |g| params.stiffness * (g.length - params.natural_length),
        &mut grad,
    );
    Ok(grad)
}

pub fn damping_gradient(state: &GeneralizedState, params: &ModelParams) -> Result<DVector<f64>> {
    let geometry = spring_geometry(state, params)?;
    let mut grad = DVector::zeros(params.dim());
    accumulate_spring_gradient(state, params, &geometry, |g| params.damping * g.length_rate, &mut grad);
    Ok(grad)
}

/// `h = ∂P_g/∂qᵀ + ∂P_e/∂qᵀ + ∂R/∂q̇ᵀ`, kept split by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVector {
    pub gravity: DVector<f64>,
    pub elastic: DVector<f64>,
    pub damping: DVector<f64>,
}

impl BiasVector {
    pub fn total(&self) -> DVector<f64> {
        &self.gravity + &self.elastic + &self.damping
    }
}

pub fn bias_vector(state: &GeneralizedState, params: &ModelParams) -> Result<BiasVector> {
    let gravity = gravity_gradient(state, params)?;
    let geometry = spring_geometry(state, params)?;
    let mut elastic = DVector::zeros(params.dim());
    accumulate_spring_gradient(
        state,
        params,
        &geometry,
        |g| params.stiffness * (g.length - params.natural_length),
        &mut elastic,
    );
    let mut damping = DVector::zeros(params.dim());
    accumulate_spring_gradient(state, params, &geometry, |g| params.damping * g.length_rate, &mut damping);
    Ok(BiasVector {
        gravity,
        elastic,
        damping,
    })
}

fn total_bias(state: &GeneralizedState, params: &ModelParams) -> Result<DVector<f64>> {
    let geometry = spring_geometry(state, params)?;
    let mut h = gravity_gradient(state, params)?;
    let (k, c, l0) = (params.stiffness, params.damping, params.natural_length);
    accumulate_spring_gradient(
        state,
        params,
        &geometry,
        |g| k * (g.length - l0) + c * g.length_rate,
        &mut h,
    );
    Ok(h)
}

/// Generalized force of a unit torque applied clockwise from the upper body
/// to limb 1: `+1` on `θ1`, `−1` on `θ5`. Zero for the passive walkers.
pub fn actuation_map(params: &ModelParams) -> DVector<f64> {
    let mut s = DVector::zeros(params.dim());
    if params.variant.has_upper_body() {
        s[theta_index(0)] = 1.0;
        s[UPPER_BODY_ANGLE] = -1.0;
    }
    s
}

/// Relative rate `θ̇1 − θ̇5` across the actuated joint.
pub fn actuator_rate(state: &GeneralizedState, params: &ModelParams) -> f64 {
    if params.variant.has_upper_body() {
        state.qd[theta_index(0)] - state.qd[UPPER_BODY_ANGLE]
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cross {
    /// Limbs 1 and 3.
    First,
    /// Limbs 2 and 4.
    Second,
}

impl Cross {
    pub const fn limbs(self) -> (usize, usize) {
        match self {
            Cross::First => (0, 2),
            Cross::Second => (1, 3),
        }
    }
}

impl fmt::Display for Cross {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.limbs();
        write!(f, "{}-{}", a + 1, b + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowTag {
    ContactX(Foot),
    ContactZ(Foot),
    WeldX(Cross),
    WeldZ(Cross),
    RotationLock(Cross),
    PinX,
    PinZ,
}

/// Velocity-level constraint rows for one contact mode.
///
/// Row order: rear (or only) contact foot x then z, fore foot x then z in
/// double support, center welds (1–3 x, 1–3 z, 2–4 x, 2–4 z), rotation locks
/// (1–3, 2–4) for the locked walker, then the upper-body pin (x, z).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub rows: Vec<RowTag>,
    pub jacobian: DMatrix<f64>,
    pub jacobian_rate: DMatrix<f64>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_of(&self, tag: RowTag) -> Option<usize> {
        self.rows.iter().position(|&r| r == tag)
    }

    /// `J q̇`.
    pub fn velocity_residual(&self, qd: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * qd
    }

    /// `J̇ q̇`.
    pub fn rate_term(&self, qd: &DVector<f64>) -> DVector<f64> {
        &self.jacobian_rate * qd
    }
}

pub fn row_tags(mode: ContactMode, params: &ModelParams) -> Vec<RowTag> {
    let mut rows = Vec::with_capacity(12);
    for foot in mode.feet() {
        rows.push(RowTag::ContactX(foot));
        rows.push(RowTag::ContactZ(foot));
    }
    for cross in [Cross::First, Cross::Second] {
        rows.push(RowTag::WeldX(cross));
        rows.push(RowTag::WeldZ(cross));
    }
    if params.variant.has_rotation_lock() {
        rows.push(RowTag::RotationLock(Cross::First));
        rows.push(RowTag::RotationLock(Cross::Second));
    }
    if params.variant.has_upper_body() {
        rows.push(RowTag::PinX);
        rows.push(RowTag::PinZ);
    }
    rows
}

pub fn constraint_set(
    mode: ContactMode,
    state: &GeneralizedState,
    params: &ModelParams,
) -> Result<ConstraintSet> {
    state.check_dim(params.variant)?;
    if !mode.is_consistent() {
        return Err(VcrwError::IllegalMode {
            mode,
            variant: params.variant,
        });
    }
    let rows = row_tags(mode, params);
    let dim = params.dim();
    let mut j = DMatrix::zeros(rows.len(), dim);
    let mut jd = DMatrix::zeros(rows.len(), dim);
    for (r, tag) in rows.iter().enumerate() {
        match *tag {
            RowTag::ContactX(foot) | RowTag::ContactZ(foot) => {
                let limb = foot.limb;
                let s = foot.side.sign() * params.half_length[limb];
                let (sin, cos) = state.theta(limb).sin_cos();
                let w = state.theta_rate(limb);
                if matches!(tag, RowTag::ContactX(_)) {
                    j[(r, x_index(limb))] = 1.0;
                    j[(r, theta_index(limb))] = -s * cos;
                    jd[(r, theta_index(limb))] = s * w * sin;
                } else {
                    j[(r, z_index(limb))] = 1.0;
                    j[(r, theta_index(limb))] = s * sin;
                    jd[(r, theta_index(limb))] = s * w * cos;
                }
            }
            RowTag::WeldX(cross) => {
                let (a, b) = cross.limbs();
                j[(r, x_index(a))] = 1.0;
                j[(r, x_index(b))] = -1.0;
            }
            RowTag::WeldZ(cross) => {
                let (a, b) = cross.limbs();
                j[(r, z_index(a))] = 1.0;
                j[(r, z_index(b))] = -1.0;
            }
            RowTag::RotationLock(cross) => {
                let (a, b) = cross.limbs();
                j[(r, theta_index(a))] = 1.0;
                j[(r, theta_index(b))] = -1.0;
            }
            RowTag::PinX | RowTag::PinZ => {
                // x5 = x1 + l sin θ5, z5 = z1 + l cos θ5
                let l = params.upper_body_com_offset();
                let th = state.q[UPPER_BODY_ANGLE];
                let w = state.qd[UPPER_BODY_ANGLE];
                let (sin, cos) = th.sin_cos();
                if matches!(tag, RowTag::PinX) {
                    j[(r, x_index(UPPER_BODY))] = 1.0;
                    j[(r, x_index(0))] = -1.0;
                    j[(r, UPPER_BODY_ANGLE)] = -l * cos;
                    jd[(r, UPPER_BODY_ANGLE)] = l * w * sin;
                } else {
                    j[(r, z_index(UPPER_BODY))] = 1.0;
                    j[(r, z_index(0))] = -1.0;
                    j[(r, UPPER_BODY_ANGLE)] = l * sin;
                    jd[(r, UPPER_BODY_ANGLE)] = l * w * cos;
                }
            }
        }
    }
    Ok(ConstraintSet {
        rows,
        jacobian: j,
        jacobian_rate: jd,
    })
}

/// Position-level residual of the welds and the upper-body pin (contacts
/// excluded). Velocity constraints do not pin these, so drift is measured.
pub fn holonomic_drift(state: &GeneralizedState, params: &ModelParams) -> f64 {
    let mut drift: f64 = 0.0;
    for cross in [Cross::First, Cross::Second] {
        let (a, b) = cross.limbs();
        drift = drift.max((state.center(a) - state.center(b)).amax());
    }
    if params.variant.has_upper_body() {
        let expected = state.center(0)
            + params.upper_body_com_offset() * upper_body_axis(state.q[UPPER_BODY_ANGLE]);
        drift = drift.max((state.center(UPPER_BODY) - expected).amax());
    }
    drift
}

/// Factorization of `J M⁻¹ Jᵀ` shared by the multiplier, impact and
/// projection solves.
pub struct ConstraintSolver<'a> {
    constraints: &'a ConstraintSet,
    inv_mass: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> ConstraintSolver<'a> {
    pub fn new(constraints: &'a ConstraintSet, params: &ModelParams) -> Result<Self> {
        let inv_mass = mass_diagonal(params).map(|m| 1.0 / m);
        let j = &constraints.jacobian;
        let mut jm = j.clone();
        for (mut col, w) in jm.column_iter_mut().zip(inv_mass.iter()) {
            col *= *w;
        }
        let a = &jm * j.transpose();
        let chol = Cholesky::new(a).ok_or(VcrwError::SingularConstraints {
            condition: f64::INFINITY,
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let condition = (hi / lo).powi(2);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(VcrwError::SingularConstraints { condition });
        }
        Ok(ConstraintSolver {
            constraints,
            inv_mass,
            chol,
        })
    }

    pub fn inv_mass(&self) -> &DVector<f64> {
        &self.inv_mass
    }

    /// `λ = (J M⁻¹ Jᵀ)⁻¹ (J M⁻¹ f − J̇ q̇)` for the net applied force `−f`.
    pub fn multipliers(&self, f: &DVector<f64>, rate_term: &DVector<f64>) -> DVector<f64> {
        let minv_f = f.component_mul(&self.inv_mass);
        let rhs = &self.constraints.jacobian * minv_f - rate_term;
        self.chol.solve(&rhs)
    }

    /// `q̈ = M⁻¹ (Jᵀ λ − f)`.
    pub fn acceleration(&self, f: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        (self.constraints.jacobian.tr_mul(lambda) - f).component_mul(&self.inv_mass)
    }

    /// M-weighted projection of `qd` onto `ker J`. Returns the projected
    /// velocity and the impulse `λ` with `M (q̇⁺ − q̇) = Jᵀ λ`.
    pub fn project(&self, qd: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let impulse = -self.chol.solve(&(&self.constraints.jacobian * qd));
        let plus = qd + self.constraints.jacobian.tr_mul(&impulse).component_mul(&self.inv_mass);
        (plus, impulse)
    }
}

/// Accelerations and multipliers of one constrained solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedAcceleration {
    pub qdd: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Applied actuator torque (zero for the passive walkers).
    pub torque: f64,
}

fn solve_with_torque(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
    u: f64,
) -> Result<ConstrainedAcceleration> {
    let cs = constraint_set(mode, state, params)?;
    let solver = ConstraintSolver::new(&cs, params)?;
    let mut f = total_bias(state, params)?;
    if u != 0.0 {
        f -= actuation_map(params) * u;
    }
    let lambda = solver.multipliers(&f, &cs.rate_term(&state.qd));
    let qdd = solver.acceleration(&f, &lambda);
    Ok(ConstrainedAcceleration {
        qdd,
        lambda,
        torque: u,
    })
}

/// Contact and internal constraint multipliers at applied torque `u`.
///
/// The entry aligned with a `ContactZ` row is that foot's vertical ground
/// reaction force.
pub fn contact_forces(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
    u: f64,
) -> Result<DVector<f64>> {
    Ok(solve_with_torque(state, mode, params, u)?.lambda)
}

pub fn forward_dynamics(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
    u: f64,
) -> Result<DVector<f64>> {
    Ok(solve_with_torque(state, mode, params, u)?.qdd)
}

/// Input-output linearization of the upper-body angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputLinearization {
    /// Input gain in `θ̈5 = A u − B`.
    pub a: f64,
    pub b: f64,
    /// Commanded upper-body acceleration.
    pub v: f64,
    /// Torque realizing `θ̈5 = v`.
    pub u: f64,
}

/// Stabilizing PD command `v = −K_D θ̇5 − K_P (θ5 − θ5d)`.
pub fn commanded_acceleration(state: &GeneralizedState, params: &ModelParams) -> f64 {
    let gains = params.controller;
    let th5 = state.q[UPPER_BODY_ANGLE];
    let w5 = state.qd[UPPER_BODY_ANGLE];
    -gains.kd * w5 - gains.kp * (th5 - gains.target)
}

fn require_upper_body(params: &ModelParams) -> Result<()> {
    if params.variant.has_upper_body() {
        Ok(())
    } else {
        Err(VcrwError::Contract(format!(
            "{} has no actuated upper body",
            params.variant
        )))
    }
}

/// Closed-loop solve: one factorization, two right-hand sides (bias and
/// actuation), combined at the feedback-linearizing torque.
fn closed_loop_solve(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
) -> Result<(ConstrainedAcceleration, OutputLinearization)> {
    let cs = constraint_set(mode, state, params)?;
    let solver = ConstraintSolver::new(&cs, params)?;
    let f = total_bias(state, params)?;
    let lambda0 = solver.multipliers(&f, &cs.rate_term(&state.qd));
    let qdd0 = solver.acceleration(&f, &lambda0);
    // Response to a unit torque, with the velocity terms already in the free part.
    let s = -actuation_map(params);
    let lambda_s = solver.multipliers(&s, &DVector::zeros(cs.len()));
    let qdd_s = solver.acceleration(&s, &lambda_s);

    let a = qdd_s[UPPER_BODY_ANGLE];
    let b = -qdd0[UPPER_BODY_ANGLE];
    if a.abs() < MIN_INPUT_GAIN {
        return Err(VcrwError::Uncontrollable { gain: a.abs() });
    }
    let v = commanded_acceleration(state, params);
    let u = (v + b) / a;
    let acc = ConstrainedAcceleration {
        qdd: qdd0 + qdd_s * u,
        lambda: lambda0 + lambda_s * u,
        torque: u,
    };
    Ok((acc, OutputLinearization { a, b, v, u }))
}

/// `(A, B)` with `θ̈5 = A u − B` at this state.
pub fn linearization_coefficients(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
) -> Result<(f64, f64)> {
    require_upper_body(params)?;
    let b = -forward_dynamics(state, mode, params, 0.0)?[UPPER_BODY_ANGLE];
    let a = forward_dynamics(state, mode, params, 1.0)?[UPPER_BODY_ANGLE] + b;
    if a.abs() < MIN_INPUT_GAIN {
        return Err(VcrwError::Uncontrollable { gain: a.abs() });
    }
    Ok((a, b))
}

pub fn control_law(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
) -> Result<OutputLinearization> {
    require_upper_body(params)?;
    Ok(closed_loop_solve(state, mode, params)?.1)
}

/// `u = A⁻¹ (v + B)`.
pub fn control_torque(state: &GeneralizedState, mode: ContactMode, params: &ModelParams) -> Result<f64> {
    Ok(control_law(state, mode, params)?.u)
}

/// Dynamics as simulated: passive walkers at zero torque, the actuated one
/// under its feedback-linearizing controller.
pub fn closed_loop_dynamics(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
) -> Result<ConstrainedAcceleration> {
    if params.variant.has_upper_body() {
        Ok(closed_loop_solve(state, mode, params)?.0)
    } else {
        solve_with_torque(state, mode, params, 0.0)
    }
}
