//! Stance-cycle automaton: guards, the touchdown impact map and failure checks.

use std::fmt;

use nalgebra::DVector;

use crate::dynamics::{constraint_set, ConstraintSet, ConstraintSolver, RowTag};
use crate::error::{Result, VcrwError};
use crate::model::{tip_position, tip_velocity, ContactMode, Foot, GeneralizedState, ModelParams};

/// Tolerated negative vertical reaction before support counts as pulling, N.
pub const FORCE_TOL: f64 = 1e-9;
/// Tolerated floor penetration of a swing tip, m.
pub const PENETRATION_TOL: f64 = 1e-6;
/// Deepest dip tolerated for a foot that has just lifted off, m. Releasing
/// the rear contact drops its tangential multiplier too, so the tip can
/// scuff slightly below the floor before it rises.
pub const SCUFF_TOL: f64 = 1e-3;
/// Angular rate treated as numerical blow-up, rad/s.
pub const MAX_ANGULAR_RATE: f64 = 1e3;

/// Successor in the stance cycle F1A → F2A → … → F4B → F1A.
pub fn next_foot(foot: Foot) -> Foot {
    Foot::from_cycle_index(foot.cycle_index() + 1)
}

/// Height of the next foot to land. Touchdown fires when it crosses zero
/// from above while moving down.
pub fn touchdown_guard(state: &GeneralizedState, mode: ContactMode, params: &ModelParams) -> Result<f64> {
    match mode {
        ContactMode::Single(stance) => Ok(tip_position(state, params, next_foot(stance)).y),
        ContactMode::Double { .. } => Err(VcrwError::Contract(format!(
            "touchdown guard is defined in single support only, not {mode}"
        ))),
    }
}

/// Rear-foot vertical reaction in double support. Liftoff fires when it
/// crosses zero from above.
pub fn liftoff_guard(lambda: &DVector<f64>, constraints: &ConstraintSet, mode: ContactMode) -> Result<f64> {
    let ContactMode::Double { rear, .. } = mode else {
        return Err(VcrwError::Contract(format!(
            "liftoff guard is defined in double support only, not {mode}"
        )));
    };
    vertical_reaction(lambda, &constraints.rows, rear)
}

/// Multiplier on the contact-z row of `foot`.
pub fn vertical_reaction(lambda: &DVector<f64>, rows: &[RowTag], foot: Foot) -> Result<f64> {
    if lambda.len() != rows.len() {
        return Err(VcrwError::Contract(format!(
            "{} multipliers for {} constraint rows",
            lambda.len(),
            rows.len()
        )));
    }
    rows.iter()
        .position(|&r| r == RowTag::ContactZ(foot))
        .map(|r| lambda[r])
        .ok_or_else(|| VcrwError::Contract(format!("{foot} is not in contact")))
}

/// Constraint rows holding immediately after `next_foot(rear)` lands while
/// `rear` stays down: the double-support Jacobian at the impact pose.
pub fn impact_jacobian(state: &GeneralizedState, rear: Foot, params: &ModelParams) -> Result<ConstraintSet> {
    constraint_set(ContactMode::double(rear), state, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactResult {
    pub qd_plus: DVector<f64>,
    /// Impulse with `M (q̇⁺ − q̇⁻) = J_Iᵀ λ_I`.
    pub impulse: DVector<f64>,
}

/// Completely inelastic touchdown of `next_foot(rear)`:
/// `q̇⁺ = (I − M⁻¹ J_Iᵀ (J_I M⁻¹ J_Iᵀ)⁻¹ J_I) q̇⁻`. Positions are unchanged.
pub fn impact_map(
    state: &GeneralizedState,
    qd_minus: &DVector<f64>,
    rear: Foot,
    params: &ModelParams,
) -> Result<ImpactResult> {
    let ji = impact_jacobian(state, rear, params)?;
    if qd_minus.len() != params.dim() {
        return Err(VcrwError::DimensionMismatch {
            variant: params.variant,
            expected: params.dim(),
            got: qd_minus.len(),
        });
    }
    let solver = ConstraintSolver::new(&ji, params)?;
    let (qd_plus, impulse) = solver.project(qd_minus);
    Ok(ImpactResult { qd_plus, impulse })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureReason {
    /// The single stance foot would have to pull on the floor.
    StanceLiftoff { foot: Foot, force: f64 },
    /// The fore foot of a double support would have to pull on the floor.
    ForeLiftoff { foot: Foot, force: f64 },
    /// A swing tip went through the floor outside its touchdown event.
    Penetration { foot: Foot, depth: f64 },
    /// A foot landed out of the stance-cycle order.
    UnexpectedTouchdown { foot: Foot },
    Divergence { rate: f64 },
    Dynamics(String),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::StanceLiftoff { foot, force } => {
                write!(f, "stance foot {foot} vertical reaction {force:.3e} N < 0")
            }
            FailureReason::ForeLiftoff { foot, force } => {
                write!(f, "fore foot {foot} vertical reaction {force:.3e} N < 0")
            }
            FailureReason::Penetration { foot, depth } => {
                write!(f, "swing foot {foot} penetrated the floor by {depth:.3e} m")
            }
            FailureReason::UnexpectedTouchdown { foot } => {
                write!(f, "foot {foot} landed out of sequence")
            }
            FailureReason::Divergence { rate } => write!(f, "angular rate {rate:.3e} rad/s diverged"),
            FailureReason::Dynamics(msg) => write!(f, "dynamics error: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKind {
    Touchdown,
    Liftoff,
    Failure(FailureReason),
}

impl TransitionKind {
    pub fn label(&self) -> &'static str {
        match self {
            TransitionKind::Touchdown => "touchdown",
            TransitionKind::Liftoff => "liftoff",
            TransitionKind::Failure(_) => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEvent {
    pub kind: TransitionKind,
    pub time: f64,
    pub pre_state: GeneralizedState,
    pub post_state: GeneralizedState,
    pub pre_mode: ContactMode,
    pub post_mode: ContactMode,
    /// Touchdown impulse; empty for other kinds.
    pub impulse: DVector<f64>,
    /// Cumulative positive actuator work at the event, J.
    pub actuator_work: f64,
    /// Weld/pin position residual at the event, m.
    pub position_drift: f64,
}

impl TransitionEvent {
    /// Foot that landed (touchdown) or left the floor (liftoff).
    pub fn foot(&self) -> Option<Foot> {
        match (&self.kind, self.pre_mode, self.post_mode) {
            (TransitionKind::Touchdown, _, ContactMode::Double { fore, .. }) => Some(fore),
            (TransitionKind::Liftoff, ContactMode::Double { rear, .. }, _) => Some(rear),
            _ => None,
        }
    }
}

/// Checks the accepted state against the failure rules. `pending` is the tip
/// whose touchdown guard is being tracked (exempt from the penetration
/// check); `scuffing` is a just-lifted rear foot that has not yet cleared the
/// floor (held to `SCUFF_TOL` instead of `PENETRATION_TOL`).
pub fn check_failure(
    state: &GeneralizedState,
    mode: ContactMode,
    lambda: &DVector<f64>,
    constraints: &ConstraintSet,
    params: &ModelParams,
    pending: Option<Foot>,
    scuffing: Option<Foot>,
) -> Result<Option<FailureReason>> {
    let rate = (0..state.qd.len())
        .filter(|&i| i % 3 == 2)
        .map(|i| state.qd[i].abs())
        .fold(0.0, f64::max);
    if !rate.is_finite() || rate > MAX_ANGULAR_RATE {
        return Ok(Some(FailureReason::Divergence { rate }));
    }
    match mode {
        ContactMode::Single(foot) => {
            let force = vertical_reaction(lambda, &constraints.rows, foot)?;
            if force < -FORCE_TOL {
                return Ok(Some(FailureReason::StanceLiftoff { foot, force }));
            }
        }
        ContactMode::Double { fore, .. } => {
            let force = vertical_reaction(lambda, &constraints.rows, fore)?;
            if force < -FORCE_TOL {
                return Ok(Some(FailureReason::ForeLiftoff { foot: fore, force }));
            }
        }
    }
    for foot in Foot::all() {
        if mode.in_contact(foot) || Some(foot) == pending {
            continue;
        }
        let tip = tip_position(state, params, foot);
        let tol = if Some(foot) == scuffing { SCUFF_TOL } else { PENETRATION_TOL };
        if tip.y < -tol {
            let landing = tip_velocity(state, params, foot).y < 0.0;
            return Ok(Some(if landing && is_out_of_order(mode, foot) {
                FailureReason::UnexpectedTouchdown { foot }
            } else {
                FailureReason::Penetration { foot, depth: -tip.y }
            }));
        }
    }
    Ok(None)
}

fn is_out_of_order(mode: ContactMode, foot: Foot) -> bool {
    match mode {
        ContactMode::Single(stance) => foot != next_foot(stance),
        ContactMode::Double { .. } => true,
    }
}
