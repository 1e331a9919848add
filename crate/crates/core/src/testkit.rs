//! Random feasible states for property tests and the acceptance suite.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dynamics::{constraint_set, ConstraintSolver};
use crate::error::Result;
use crate::model::{
    limb_axis, set_upper_body, theta_index, x_index, z_index, ContactMode, Foot, GeneralizedState,
    ModelParams, Side, Vec2, LIMBS,
};

fn cross_mate(limb: usize) -> usize {
    (limb + 2) % LIMBS
}

/// Angle nearest `near` whose cosine is `c`.
fn nearest_acos(c: f64, near: f64) -> f64 {
    let base = c.clamp(-1.0, 1.0).acos();
    [base, -base]
        .into_iter()
        .map(|a| a + (2.0 * PI) * ((near - a) / (2.0 * PI)).round())
        .min_by(|a, b| (a - near).abs().total_cmp(&(b - near).abs()))
        .unwrap()
}

/// Sets the angle of `limb` and keeps its cross mate locked a quarter turn
/// away (mate index `limb ± 2`), or perturbs the mate freely for VCRW2.
fn set_cross<R: Rng>(rng: &mut R, state: &mut GeneralizedState, params: &ModelParams, limb: usize, theta: f64) {
    let mate = cross_mate(limb);
    let offset = (limb as f64 - mate as f64) * FRAC_PI_4;
    let jitter = if params.variant.has_rotation_lock() {
        0.0
    } else {
        rng.gen_range(-0.05..0.05)
    };
    state.q[theta_index(limb)] = theta;
    state.q[theta_index(mate)] = theta + offset + jitter;
}

fn set_center(state: &mut GeneralizedState, limb: usize, g: Vec2) {
    for l in [limb, cross_mate(limb)] {
        state.q[x_index(l)] = g.x;
        state.q[z_index(l)] = g.y;
    }
}

/// A state satisfying every position constraint of `mode` (stance tips on
/// the floor, welds, locks, pin) with random velocities projected onto the
/// velocity constraints of `velocity_mode`.
pub fn random_state_with<R: Rng>(
    rng: &mut R,
    params: &ModelParams,
    mode: ContactMode,
    velocity_mode: ContactMode,
) -> Result<GeneralizedState> {
    let rear = match mode {
        ContactMode::Single(f) => f,
        ContactMode::Double { rear, .. } => rear,
    };
    let l = params.half_length[rear.limb];
    // in double support the rear leg trails the center
    let lean = if mode.is_double() {
        rng.gen_range(FRAC_PI_8 - 0.2..FRAC_PI_8 + 0.2)
    } else {
        rng.gen_range(-FRAC_PI_8 - 0.1..FRAC_PI_8 + 0.1)
    };
    let theta_rear = match rear.side {
        Side::A => lean,
        Side::B => lean + PI,
    };
    let mut state = GeneralizedState::zeros(params.variant);
    let tip = Vec2::new(rng.gen_range(-1.0..1.0), 0.0);
    let g_rear = tip - rear.side.sign() * l * limb_axis(theta_rear);
    set_center(&mut state, rear.limb, g_rear);
    set_cross(rng, &mut state, params, rear.limb, theta_rear);

    let other = (rear.limb + 1) % LIMBS;
    // keep the other center low enough for its fore tip to reach the floor
    let reach = 0.98 * params.half_length[other] - g_rear.y;
    let dz = rng.gen_range(-0.02..0.02_f64.min(reach).max(-0.019));
    let g_other = g_rear + Vec2::new(rng.gen_range(-0.02..0.02), dz);
    set_center(&mut state, other, g_other);
    let nominal = |limb: usize| theta_rear + (rear.limb as f64 - limb as f64) * FRAC_PI_4;
    match mode {
        ContactMode::Double { fore, .. } => {
            let lf = params.half_length[fore.limb];
            let c = fore.side.sign() * g_other.y / lf;
            let theta = nearest_acos(c, nominal(fore.limb));
            set_cross(rng, &mut state, params, fore.limb, theta);
        }
        ContactMode::Single(_) => {
            let theta = nominal(other) + rng.gen_range(-0.05..0.05);
            set_cross(rng, &mut state, params, other, theta);
        }
    }

    for v in state.qd.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    if params.variant.has_upper_body() {
        let th5 = rng.gen_range(-0.2..0.6);
        let w5 = rng.gen_range(-1.0..1.0);
        set_upper_body(&mut state, params, th5, w5);
    }
    let cs = constraint_set(velocity_mode, &state, params)?;
    let (qd, _) = ConstraintSolver::new(&cs, params)?.project(&state.qd);
    state.qd = qd;
    Ok(state)
}

/// Feasible positions and velocities for `mode`.
pub fn random_state<R: Rng>(rng: &mut R, params: &ModelParams, mode: ContactMode) -> Result<GeneralizedState> {
    random_state_with(rng, params, mode, mode)
}

/// Both feet of the double-support mode on the floor, velocities consistent
/// with single support on `rear` only (the instant before the fore foot lands).
pub fn random_pre_impact<R: Rng>(rng: &mut R, params: &ModelParams, rear: Foot) -> Result<GeneralizedState> {
    random_state_with(rng, params, ContactMode::double(rear), ContactMode::Single(rear))
}

/// Reference solve of the full block system
/// `[M −Jᵀ; J 0] [q̈; λ] = [−f; −J̇ q̇]` by dense LU, independent of the
/// Cholesky-based closed form. Returns `(q̈, λ)`.
pub fn dense_kkt_solve(
    mass: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    f: &DVector<f64>,
    rate_term: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (mass.nrows(), jacobian.nrows());
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(mass);
    k.view_mut((0, n), (n, m)).copy_from(&(-jacobian.transpose()));
    k.view_mut((n, 0), (m, n)).copy_from(jacobian);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-f));
    rhs.rows_mut(n, m).copy_from(&(-rate_term));
    let x = k.lu().solve(&rhs)?;
    Some((x.rows(0, n).into_owned(), x.rows(n, m).into_owned()))
}

/// Reference impact: `[M −Jᵀ; J 0] [q̇⁺; Λ] = [M q̇⁻; 0]` by dense LU.
pub fn dense_impact_solve(
    mass: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    qd_minus: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let zero = DVector::zeros(jacobian.nrows());
    dense_kkt_solve(mass, jacobian, &(-(mass * qd_minus)), &zero)
}
