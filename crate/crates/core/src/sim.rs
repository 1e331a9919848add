//! Fixed-step RK4 integration of the hybrid dynamics with bisection event
//! localization and velocity-level constraint projection.

use std::f64::consts::FRAC_PI_8;

use nalgebra::DVector;

use crate::dynamics::{
    actuator_rate, closed_loop_dynamics, constraint_set, holonomic_drift, row_tags,
    ConstrainedAcceleration, ConstraintSolver,
};
use crate::error::{Result, VcrwError};
use crate::hybrid::{
    check_failure, impact_map, next_foot, vertical_reaction, FailureReason, TransitionEvent,
    TransitionKind,
};
use crate::model::{
    limb_axis, nominal_pose, set_upper_body, tip_position, ContactMode, Foot, GeneralizedState,
    ModelParams, Vec2, LIMBS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    /// Width of the final bisection bracket around an event, s.
    pub event_tol: f64,
    pub duration: f64,
    /// Keep every k-th accepted step as a sample (event states are always kept).
    pub record_stride: usize,
    /// `‖J q̇‖∞` above which velocities are projected back onto the constraints.
    pub projection_tol: f64,
    /// End the run early once enough touchdowns have been seen.
    pub stop: Option<StopRule>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-4,
            event_tol: 1e-10,
            duration: 3.0,
            record_stride: 1,
            projection_tol: 1e-9,
            stop: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(VcrwError::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if !(self.event_tol > 0.0 && self.event_tol < self.dt) {
            return bad("event_tol", "must be positive and smaller than dt");
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration", "must be positive");
        }
        if self.record_stride == 0 {
            return bad("record_stride", "must be at least 1");
        }
        if !(self.projection_tol > 0.0) {
            return bad("projection_tol", "must be positive");
        }
        Ok(())
    }
}

/// Stop after `touchdowns` landings occurring at or after `after_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub after_time: f64,
    pub touchdowns: usize,
}

/// Knobs of the default starting pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConditions {
    /// Forward angular rate of every limb, rad/s.
    pub omega0: f64,
    /// Stance angle is `−(π/8 − stance_offset)`, i.e. `stance_offset` past the
    /// symmetric double-support pose.
    pub stance_offset: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        InitialConditions {
            omega0: 1.5,
            stance_offset: 0.05,
        }
    }
}

/// Symmetric eight-legged pose standing on F1A at the origin, rolling forward
/// at `omega0`, with velocities projected onto the single-support constraints.
pub fn default_initial_state(
    params: &ModelParams,
    ic: &InitialConditions,
) -> Result<(GeneralizedState, ContactMode)> {
    params.validate()?;
    let theta1 = -(FRAC_PI_8 - ic.stance_offset);
    let l = params.half_length[0];
    // F1A = G − L (sin θ1, cos θ1) sits at the origin.
    let center = -l * limb_axis(theta1);
    let mut state = nominal_pose(params, center, theta1);
    let center_velocity = l * ic.omega0 * Vec2::new(theta1.cos(), -theta1.sin());
    for limb in 0..LIMBS {
        state.qd[3 * limb] = center_velocity.x;
        state.qd[3 * limb + 1] = center_velocity.y;
        state.qd[3 * limb + 2] = ic.omega0;
    }
    if params.variant.has_upper_body() {
        set_upper_body(&mut state, params, params.controller.target, 0.0);
    }
    let mode = ContactMode::Single(Foot::F1A);
    let state = project_velocities(&state, mode, params)?;
    Ok((state, mode))
}

/// Classical RK4 step of `q̈ = accel(state)` over `h`.
pub fn rk4_step<F>(state: &GeneralizedState, h: f64, mut accel: F) -> Result<GeneralizedState>
where
    F: FnMut(&GeneralizedState) -> Result<DVector<f64>>,
{
    let k1 = accel(state)?;
    Ok(rk4_with_first_stage(state, h, &k1, |s| Ok((accel(s)?, 0.0)))?.0)
}

/// RK4 with a precomputed first-stage acceleration. `stage` returns the
/// acceleration and a scalar rate that is integrated alongside (actuator
/// power); the integral over the step is returned with the new state.
fn rk4_with_first_stage<F>(
    state: &GeneralizedState,
    h: f64,
    k1: &DVector<f64>,
    mut stage: F,
) -> Result<(GeneralizedState, f64)>
where
    F: FnMut(&GeneralizedState) -> Result<(DVector<f64>, f64)>,
{
    rk4_core(state, h, (k1.clone(), f64::NAN), &mut stage)
}

fn rk4_core<F>(
    state: &GeneralizedState,
    h: f64,
    first: (DVector<f64>, f64),
    stage: &mut F,
) -> Result<(GeneralizedState, f64)>
where
    F: FnMut(&GeneralizedState) -> Result<(DVector<f64>, f64)>,
{
    let (a1, p1) = first;
    let q = &state.q;
    let v = &state.qd;
    let at = |dq: &DVector<f64>, dv: &DVector<f64>, dt: f64| GeneralizedState {
        t: state.t + dt,
        q: q + dq,
        qd: v + dv,
    };

    let v1 = v.clone();
    let (a2, p2) = stage(&at(&(&v1 * (0.5 * h)), &(&a1 * (0.5 * h)), 0.5 * h))?;
    let v2 = v + &a1 * (0.5 * h);
    let (a3, p3) = stage(&at(&(&v2 * (0.5 * h)), &(&a2 * (0.5 * h)), 0.5 * h))?;
    let v3 = v + &a2 * (0.5 * h);
    let (a4, p4) = stage(&at(&(&v3 * h), &(&a3 * h), h))?;
    let v4 = v + &a3 * h;

    let w = h / 6.0;
    let next = GeneralizedState {
        t: state.t + h,
        q: q + (&v1 + &v2 * 2.0 + &v3 * 2.0 + &v4) * w,
        qd: v + (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * w,
    };
    let work = if p1.is_nan() {
        0.0
    } else {
        (p1 + 2.0 * p2 + 2.0 * p3 + p4) * w
    };
    Ok((next, work))
}

/// M-weighted projection of the velocities onto `ker J` for `mode`.
pub fn project_velocities(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
) -> Result<GeneralizedState> {
    let cs = constraint_set(mode, state, params)?;
    let solver = ConstraintSolver::new(&cs, params)?;
    let (qd, _) = solver.project(&state.qd);
    Ok(GeneralizedState {
        t: state.t,
        q: state.q.clone(),
        qd,
    })
}

fn project_if_needed(
    state: GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
    tol: f64,
) -> Result<GeneralizedState> {
    let cs = constraint_set(mode, &state, params)?;
    if cs.velocity_residual(&state.qd).amax() > tol {
        let solver = ConstraintSolver::new(&cs, params)?;
        let (qd, _) = solver.project(&state.qd);
        Ok(GeneralizedState { qd, ..state })
    } else {
        Ok(state)
    }
}

/// One RK4 step of the closed-loop constrained dynamics followed by velocity
/// projection when `‖J q̇‖∞` exceeds `projection_tol`.
pub fn integrate_step(
    state: &GeneralizedState,
    mode: ContactMode,
    params: &ModelParams,
    dt: f64,
    projection_tol: f64,
) -> Result<GeneralizedState> {
    let next = rk4_step(state, dt, |s| Ok(closed_loop_dynamics(s, mode, params)?.qdd))?;
    project_if_needed(next, mode, params, projection_tol)
}

/// Bisects `[lo, hi]` on a guard that changes sign, to width `tol`. Returns the
/// end of the final bracket on the far side of the crossing.
pub fn locate_event<G>(lo: f64, hi: f64, tol: f64, mut guard: G) -> Result<f64>
where
    G: FnMut(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = (lo, hi);
    let side_lo = guard(lo)? > 0.0;
    if (guard(hi)? > 0.0) == side_lo {
        return Err(VcrwError::NoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (guard(mid)? > 0.0) == side_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub mode: ContactMode,
    /// Constraint multipliers in `ConstraintSet` row order.
    pub lambda: DVector<f64>,
    pub torque: f64,
}

impl Sample {
    /// Vertical reaction of the rear (or only) stance foot, and of the fore
    /// foot in double support. Contact-z rows are rows 1 and 3.
    pub fn vertical_reactions(&self) -> (f64, Option<f64>) {
        match self.mode {
            ContactMode::Single(_) => (self.lambda[1], None),
            ContactMode::Double { .. } => (self.lambda[1], Some(self.lambda[3])),
        }
    }

    pub fn state(&self) -> GeneralizedState {
        GeneralizedState {
            t: self.t,
            q: self.q.clone(),
            qd: self.qd.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    Failed { reason: FailureReason, time: f64 },
}

impl Outcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<TransitionEvent>,
    pub outcome: Outcome,
    pub final_state: GeneralizedState,
    pub final_mode: ContactMode,
    /// Total positive actuator work, J.
    pub actuator_work: f64,
}

impl Trajectory {
    pub fn touchdowns(&self) -> impl Iterator<Item = &TransitionEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == TransitionKind::Touchdown)
    }
}

struct Eval {
    acc: ConstrainedAcceleration,
    power: f64,
}

fn evaluate(state: &GeneralizedState, mode: ContactMode, params: &ModelParams) -> Result<Eval> {
    let acc = closed_loop_dynamics(state, mode, params)?;
    let power = (acc.torque * actuator_rate(state, params)).max(0.0);
    Ok(Eval { acc, power })
}

fn step_from(
    state: &GeneralizedState,
    eval: &Eval,
    mode: ContactMode,
    params: &ModelParams,
    h: f64,
    projection_tol: f64,
) -> Result<(GeneralizedState, f64)> {
    let (next, work) = rk4_core(
        state,
        h,
        (eval.acc.qdd.clone(), eval.power),
        &mut |s: &GeneralizedState| {
            let e = evaluate(s, mode, params)?;
            Ok((e.acc.qdd, e.power))
        },
    )?;
    Ok((project_if_needed(next, mode, params, projection_tol)?, work))
}

fn rear_reaction(eval: &Eval, mode: ContactMode) -> f64 {
    // rear contact-z is always row 1
    debug_assert!(mode.is_double());
    eval.acc.lambda[1]
}

struct Recorder {
    samples: Vec<Sample>,
}

impl Recorder {
    fn push(&mut self, state: &GeneralizedState, mode: ContactMode, eval: &Eval) {
        self.samples.push(Sample {
            t: state.t,
            q: state.q.clone(),
            qd: state.qd.clone(),
            mode,
            lambda: eval.acc.lambda.clone(),
            torque: eval.acc.torque,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Guard {
    Touchdown,
    Liftoff,
}

/// Runs the hybrid loop (integrate, check guards, localize, reset, switch
/// mode) until `config.duration`, the stop rule, or a failure. Failures end
/// the run and are reported in `outcome`; only invalid inputs are errors.
pub fn simulate(
    params: &ModelParams,
    initial: &GeneralizedState,
    mode0: ContactMode,
    config: &SimConfig,
) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    initial.check_dim(params.variant)?;
    let cs0 = constraint_set(mode0, initial, params)?;
    let residual = cs0.velocity_residual(&initial.qd).amax();
    if residual > 1e-8 {
        return Err(VcrwError::Contract(format!(
            "initial velocities violate the {mode0} constraints (‖J q̇‖∞ = {residual:e})"
        )));
    }

    let mut state = initial.clone();
    let mut mode = mode0;
    let mut work = 0.0;
    let mut events: Vec<TransitionEvent> = Vec::new();
    let mut rec = Recorder {
        samples: Vec::new(),
    };
    let mut steps: usize = 0;
    let mut late_touchdowns = 0usize;
    let mut scuffing: Option<Foot> = None;

    let finish = |outcome, state: GeneralizedState, mode, rec: Recorder, events, work| {
        Ok(Trajectory {
            samples: rec.samples,
            events,
            outcome,
            final_state: state,
            final_mode: mode,
            actuator_work: work,
        })
    };
    macro_rules! fail {
        ($reason:expr, $state:expr) => {{
            let reason: FailureReason = $reason;
            let s: GeneralizedState = $state;
            events.push(TransitionEvent {
                kind: TransitionKind::Failure(reason.clone()),
                time: s.t,
                pre_state: s.clone(),
                post_state: s.clone(),
                pre_mode: mode,
                post_mode: mode,
                impulse: DVector::zeros(0),
                actuator_work: work,
                position_drift: holonomic_drift(&s, params),
            });
            return finish(
                Outcome::Failed {
                    reason,
                    time: s.t,
                },
                s,
                mode,
                rec,
                events,
                work,
            );
        }};
    }
    macro_rules! attempt {
        ($e:expr, $state:expr) => {
            match $e {
                Ok(v) => v,
                Err(err) => fail!(FailureReason::Dynamics(err.to_string()), $state.clone()),
            }
        };
    }

    let mut eval = attempt!(evaluate(&state, mode, params), state);
    {
        let cs = constraint_set(mode, &state, params)?;
        let pending = pending_foot(mode);
        if let Some(reason) = check_failure(&state, mode, &eval.acc.lambda, &cs, params, pending, None)? {
            fail!(reason, state.clone());
        }
    }
    rec.push(&state, mode, &eval);

    let end = config.duration;
    while state.t < end - 1e-12 {
        let h = config.dt.min(end - state.t);
        let (next, step_work) = attempt!(
            step_from(&state, &eval, mode, params, h, config.projection_tol),
            state
        );
        let next_eval = attempt!(evaluate(&next, mode, params), next);

        // Guard crossings over the step, as (guard, time).
        let mut crossings: Vec<(Guard, f64)> = Vec::new();
        match mode {
            ContactMode::Single(stance) => {
                let foot = next_foot(stance);
                let g0 = tip_position(&state, params, foot).y;
                let g1 = tip_position(&next, params, foot).y;
                if g0 > 0.0 && g1 <= 0.0 {
                    let tau = attempt!(
                        locate_event(0.0, h, config.event_tol, |tau| {
                            let (s, _) = step_from(&state, &eval, mode, params, tau, config.projection_tol)?;
                            Ok(tip_position(&s, params, foot).y)
                        }),
                        state
                    );
                    crossings.push((Guard::Touchdown, tau));
                }
            }
            ContactMode::Double { .. } => {
                let l0 = rear_reaction(&eval, mode);
                let l1 = rear_reaction(&next_eval, mode);
                if l0 > 0.0 && l1 <= 0.0 {
                    let tau = attempt!(
                        locate_event(0.0, h, config.event_tol, |tau| {
                            let (s, _) = step_from(&state, &eval, mode, params, tau, config.projection_tol)?;
                            Ok(rear_reaction(&evaluate(&s, mode, params)?, mode))
                        }),
                        state
                    );
                    crossings.push((Guard::Liftoff, tau));
                }
            }
        }
        // Earliest first; near-ties resolve touchdown first.
        crossings.sort_by(|a, b| {
            if (a.1 - b.1).abs() < 1e-12 {
                (a.0 == Guard::Liftoff).cmp(&(b.0 == Guard::Liftoff))
            } else {
                a.1.total_cmp(&b.1)
            }
        });

        if let Some(&(guard, tau)) = crossings.first() {
            let (at_event, event_work) = attempt!(
                step_from(&state, &eval, mode, params, tau, config.projection_tol),
                state
            );
            work += event_work;
            steps += 1;
            let drift = holonomic_drift(&at_event, params);
            match (guard, mode) {
                (Guard::Touchdown, ContactMode::Single(stance)) => {
                    let impact = attempt!(impact_map(&at_event, &at_event.qd, stance, params), at_event);
                    let post = GeneralizedState {
                        qd: impact.qd_plus,
                        ..at_event.clone()
                    };
                    let new_mode = ContactMode::double(stance);
                    events.push(TransitionEvent {
                        kind: TransitionKind::Touchdown,
                        time: at_event.t,
                        pre_state: at_event,
                        post_state: post.clone(),
                        pre_mode: mode,
                        post_mode: new_mode,
                        impulse: impact.impulse,
                        actuator_work: work,
                        position_drift: drift,
                    });
                    if let Some(rule) = config.stop {
                        if post.t >= rule.after_time {
                            late_touchdowns += 1;
                        }
                    }
                    mode = new_mode;
                    state = post;
                    eval = attempt!(evaluate(&state, mode, params), state);
                    // Rear foot already unloaded: zero-length double support.
                    if rear_reaction(&eval, mode) <= 0.0 {
                        let ContactMode::Double { fore, .. } = mode else { unreachable!() };
                        let new_mode = ContactMode::Single(fore);
                        events.push(TransitionEvent {
                            kind: TransitionKind::Liftoff,
                            time: state.t,
                            pre_state: state.clone(),
                            post_state: state.clone(),
                            pre_mode: mode,
                            post_mode: new_mode,
                            impulse: DVector::zeros(0),
                            actuator_work: work,
                            position_drift: drift,
                        });
                        scuffing = Some(stance);
                        mode = new_mode;
                        eval = attempt!(evaluate(&state, mode, params), state);
                    }
                }
                (Guard::Liftoff, ContactMode::Double { fore, .. }) => {
                    let new_mode = ContactMode::Single(fore);
                    events.push(TransitionEvent {
                        kind: TransitionKind::Liftoff,
                        time: at_event.t,
                        pre_state: at_event.clone(),
                        post_state: at_event.clone(),
                        pre_mode: mode,
                        post_mode: new_mode,
                        impulse: DVector::zeros(0),
                        actuator_work: work,
                        position_drift: drift,
                    });
                    scuffing = Some(fore_rear(mode));
                    mode = new_mode;
                    state = at_event;
                    eval = attempt!(evaluate(&state, mode, params), state);
                }
                _ => unreachable!("guard {guard:?} armed in {mode}"),
            }
            let cs = constraint_set(mode, &state, params)?;
            if let Some(reason) = check_failure(
                &state,
                mode,
                &eval.acc.lambda,
                &cs,
                params,
                pending_foot(mode),
                scuffing,
            )? {
                fail!(reason, state.clone());
            }
            rec.push(&state, mode, &eval);
        } else {
            let cs = constraint_set(mode, &next, params)?;
            if let Some(reason) = check_failure(
                &next,
                mode,
                &next_eval.acc.lambda,
                &cs,
                params,
                pending_foot(mode),
                scuffing,
            )? {
                fail!(reason, next);
            }
            if let Some(foot) = scuffing {
                if tip_position(&next, params, foot).y > 0.0 {
                    scuffing = None;
                }
            }
            state = next;
            eval = next_eval;
            work += step_work;
            steps += 1;
            if steps % config.record_stride == 0 {
                rec.push(&state, mode, &eval);
            }
        }

        if let Some(rule) = config.stop {
            if late_touchdowns >= rule.touchdowns {
                break;
            }
        }
    }
    finish(Outcome::Completed, state, mode, rec, events, work)
}

fn fore_rear(mode: ContactMode) -> Foot {
    match mode {
        ContactMode::Double { rear, .. } => rear,
        ContactMode::Single(foot) => foot,
    }
}

fn pending_foot(mode: ContactMode) -> Option<Foot> {
    match mode {
        ContactMode::Single(stance) => Some(next_foot(stance)),
        ContactMode::Double { .. } => None,
    }
}

/// Vertical reaction of `foot` in a recorded sample, if it is in contact.
pub fn sample_reaction(sample: &Sample, params: &ModelParams, foot: Foot) -> Option<f64> {
    let rows = row_tags(sample.mode, params);
    vertical_reaction(&sample.lambda, &rows, foot).ok()
}
