//! Domain types and frame kinematics shared by every walker variant.
//!
//! Coordinates are slope-aligned: `x` runs along the walking surface (downhill
//! positive), `z` is the surface normal and the floor is `z = 0`. Limb `i`
//! (zero-based here, one-based in user-facing labels) contributes
//! `(x_i, z_i, theta_i)` to the generalized coordinates; limbs 1 and 3 form
//! the first cross-shaped frame, limbs 2 and 4 the second. The actuated
//! variant appends the upper-body link's `(x_5, z_5, theta_5)`, where
//! `(x_5, z_5)` is its center of mass, pinned to the first cross by two
//! constraint rows.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Vector2};

use crate::error::{Result, VcrwError};

pub type Vec2 = Vector2<f64>;

pub const LIMBS: usize = 4;
pub const SPRINGS: usize = 8;

/// Limb slot occupied by the upper body in the coordinate layout.
pub const UPPER_BODY: usize = 4;
pub const UPPER_BODY_ANGLE: usize = 3 * UPPER_BODY + 2;

#[inline]
pub const fn x_index(limb: usize) -> usize {
    3 * limb
}

#[inline]
pub const fn z_index(limb: usize) -> usize {
    3 * limb + 1
}

#[inline]
pub const fn theta_index(limb: usize) -> usize {
    3 * limb + 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Two Greek-cross frames, each locked orthogonal.
    Vcrw1,
    /// Two-link crosses whose limbs rotate freely about the shared pin.
    Vcrw2,
    /// `Vcrw2` plus an actuated upper-body link on the first cross.
    Vcrw3,
}

impl Variant {
    pub const fn dim(self) -> usize {
        match self {
            Variant::Vcrw1 | Variant::Vcrw2 => 12,
            Variant::Vcrw3 => 15,
        }
    }

    pub const fn has_rotation_lock(self) -> bool {
        matches!(self, Variant::Vcrw1)
    }

    pub const fn has_upper_body(self) -> bool {
        matches!(self, Variant::Vcrw3)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Vcrw1 => "VCRW1",
            Variant::Vcrw2 => "VCRW2",
            Variant::Vcrw3 => "VCRW3",
        })
    }
}

impl FromStr for Variant {
    type Err = VcrwError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VCRW1" => Ok(Variant::Vcrw1),
            "VCRW2" => Ok(Variant::Vcrw2),
            "VCRW3" => Ok(Variant::Vcrw3),
            other => Err(VcrwError::InvalidParameter {
                name: "variant",
                reason: format!("unknown variant `{other}` (expected VCRW1, VCRW2 or VCRW3)"),
            }),
        }
    }
}

/// Upper-body link carried by the first cross of the actuated walker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperBody {
    pub length: f64,
    pub mass: f64,
    /// Rotational inertia about the link's center of mass, kg·m².
    pub inertia: f64,
}

/// PD gains and setpoint of the upper-body angle controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub mass: [f64; LIMBS],
    pub gyration_radius: [f64; LIMBS],
    /// Distance from a limb's center to its spring attachment points.
    pub attach_offset: [f64; LIMBS],
    /// Center-to-tip length of each limb.
    pub half_length: [f64; LIMBS],
    pub stiffness: f64,
    pub damping: f64,
    pub natural_length: f64,
    /// Downhill slope angle, rad.
    pub slope: f64,
    pub gravity: f64,
    pub upper_body: UpperBody,
    pub controller: PdGains,
}

impl ModelParams {
    /// Frame and spring constants of the passive walkers, on a 0.1 rad slope.
    pub fn table_one(variant: Variant) -> Self {
        ModelParams {
            variant,
            mass: [1.0; LIMBS],
            gyration_radius: [0.15; LIMBS],
            attach_offset: [0.25; LIMBS],
            half_length: [0.3; LIMBS],
            stiffness: 200.0,
            damping: 10.0,
            natural_length: 0.1,
            slope: 0.1,
            gravity: 9.8,
            upper_body: UpperBody {
                length: 0.3,
                mass: 1.0,
                inertia: 0.0225,
            },
            controller: PdGains {
                kp: 100.0,
                kd: 20.0,
                target: 0.3,
            },
        }
    }

    /// The actuated walker on level ground.
    pub fn level_assisted() -> Self {
        ModelParams {
            slope: 0.0,
            ..Self::table_one(Variant::Vcrw3)
        }
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.slope = slope;
        self
    }

    pub fn with_attach_offset(mut self, b: f64) -> Self {
        self.attach_offset = [b; LIMBS];
        self
    }

    pub fn dim(&self) -> usize {
        self.variant.dim()
    }

    /// Distance from the pin at the first cross's center to the upper-body
    /// center of mass (mid-link).
    pub fn upper_body_com_offset(&self) -> f64 {
        0.5 * self.upper_body.length
    }

    pub fn total_mass(&self) -> f64 {
        let frames: f64 = self.mass.iter().sum();
        if self.variant.has_upper_body() {
            frames + self.upper_body.mass
        } else {
            frames
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(VcrwError::InvalidParameter {
                    name,
                    reason: format!("must be strictly positive, got {v}"),
                })
            }
        }
        for i in 0..LIMBS {
            positive("m", self.mass[i])?;
            positive("a", self.gyration_radius[i])?;
            positive("b", self.attach_offset[i])?;
            positive("L", self.half_length[i])?;
            if self.attach_offset[i] > self.half_length[i] {
                return Err(VcrwError::InvalidParameter {
                    name: "b",
                    reason: format!(
                        "attachment offset {} exceeds limb half-length {}",
                        self.attach_offset[i], self.half_length[i]
                    ),
                });
            }
        }
        positive("k", self.stiffness)?;
        positive("L0", self.natural_length)?;
        positive("g", self.gravity)?;
        // c = 0 is allowed for conservative checks
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(VcrwError::InvalidParameter {
                name: "c",
                reason: format!("must be non-negative, got {}", self.damping),
            });
        }
        if !(self.slope.is_finite() && (0.0..PI / 2.0).contains(&self.slope)) {
            return Err(VcrwError::InvalidParameter {
                name: "phi",
                reason: format!("must lie in [0, pi/2), got {}", self.slope),
            });
        }
        if self.variant.has_upper_body() {
            positive("L5", self.upper_body.length)?;
            positive("m5", self.upper_body.mass)?;
            positive("I5", self.upper_body.inertia)?;
            positive("KP", self.controller.kp)?;
            positive("KD", self.controller.kd)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl GeneralizedState {
    pub fn zeros(variant: Variant) -> Self {
        GeneralizedState {
            t: 0.0,
            q: DVector::zeros(variant.dim()),
            qd: DVector::zeros(variant.dim()),
        }
    }

    pub fn check_dim(&self, variant: Variant) -> Result<()> {
        let expected = variant.dim();
        for got in [self.q.len(), self.qd.len()] {
            if got != expected {
                return Err(VcrwError::DimensionMismatch {
                    variant,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    pub fn center(&self, limb: usize) -> Vec2 {
        Vec2::new(self.q[x_index(limb)], self.q[z_index(limb)])
    }

    pub fn center_velocity(&self, limb: usize) -> Vec2 {
        Vec2::new(self.qd[x_index(limb)], self.qd[z_index(limb)])
    }

    pub fn theta(&self, limb: usize) -> f64 {
        self.q[theta_index(limb)]
    }

    pub fn theta_rate(&self, limb: usize) -> f64 {
        self.qd[theta_index(limb)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    /// +1 for the A tip, -1 for its antipode.
    pub const fn sign(self) -> f64 {
        match self {
            Side::A => 1.0,
            Side::B => -1.0,
        }
    }
}

/// One of the eight foot tips, `F{limb+1}{side}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Foot {
    pub limb: usize,
    pub side: Side,
}

impl Foot {
    pub const F1A: Foot = Foot::new(0, Side::A);
    pub const F2A: Foot = Foot::new(1, Side::A);
    pub const F3A: Foot = Foot::new(2, Side::A);
    pub const F4A: Foot = Foot::new(3, Side::A);
    pub const F1B: Foot = Foot::new(0, Side::B);
    pub const F2B: Foot = Foot::new(1, Side::B);
    pub const F3B: Foot = Foot::new(2, Side::B);
    pub const F4B: Foot = Foot::new(3, Side::B);

    pub const fn new(limb: usize, side: Side) -> Self {
        Foot { limb, side }
    }

    /// Position in the stance cycle F1A, F2A, F3A, F4A, F1B, ..., F4B.
    pub const fn cycle_index(self) -> usize {
        match self.side {
            Side::A => self.limb,
            Side::B => self.limb + LIMBS,
        }
    }

    pub fn from_cycle_index(index: usize) -> Self {
        let index = index % (2 * LIMBS);
        if index < LIMBS {
            Foot::new(index, Side::A)
        } else {
            Foot::new(index - LIMBS, Side::B)
        }
    }

    pub fn all() -> impl Iterator<Item = Foot> {
        (0..2 * LIMBS).map(Foot::from_cycle_index)
    }
}

impl fmt::Display for Foot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::A => 'A',
            Side::B => 'B',
        };
        write!(f, "F{}{}", self.limb + 1, side)
    }
}

impl FromStr for Foot {
    type Err = VcrwError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || VcrwError::Contract(format!("`{s}` is not a foot label"));
        let bytes = s.trim().as_bytes();
        if bytes.len() != 3 || !bytes[0].eq_ignore_ascii_case(&b'F') {
            return Err(bad());
        }
        let limb = match bytes[1] {
            b'1'..=b'4' => (bytes[1] - b'1') as usize,
            _ => return Err(bad()),
        };
        let side = match bytes[2].to_ascii_uppercase() {
            b'A' => Side::A,
            b'B' => Side::B,
            _ => return Err(bad()),
        };
        Ok(Foot::new(limb, side))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContactMode {
    Single(Foot),
    Double { rear: Foot, fore: Foot },
}

impl ContactMode {
    pub fn double(rear: Foot) -> Self {
        ContactMode::Double {
            rear,
            fore: Foot::from_cycle_index(rear.cycle_index() + 1),
        }
    }

    pub fn is_double(self) -> bool {
        matches!(self, ContactMode::Double { .. })
    }

    /// Feet in contact, rear first.
    pub fn feet(self) -> impl Iterator<Item = Foot> {
        let (first, second) = match self {
            ContactMode::Single(f) => (f, None),
            ContactMode::Double { rear, fore } => (rear, Some(fore)),
        };
        std::iter::once(first).chain(second)
    }

    pub fn in_contact(self, foot: Foot) -> bool {
        self.feet().any(|f| f == foot)
    }

    /// Position in the 16-entry SLS/DLS cycle starting at SLS(F1A).
    pub fn cycle_position(self) -> usize {
        match self {
            ContactMode::Single(f) => 2 * f.cycle_index(),
            ContactMode::Double { rear, .. } => 2 * rear.cycle_index() + 1,
        }
    }

    /// DLS pairs must be consecutive feet of the stance cycle.
    pub fn is_consistent(self) -> bool {
        match self {
            ContactMode::Single(_) => true,
            ContactMode::Double { rear, fore } => {
                fore.cycle_index() == (rear.cycle_index() + 1) % (2 * LIMBS)
            }
        }
    }
}

impl fmt::Display for ContactMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContactMode::Single(foot) => write!(f, "SLS:{foot}"),
            ContactMode::Double { rear, fore } => write!(f, "DLS:{rear}-{fore}"),
        }
    }
}

impl FromStr for ContactMode {
    type Err = VcrwError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(foot) = s.strip_prefix("SLS:") {
            return Ok(ContactMode::Single(foot.parse()?));
        }
        if let Some(pair) = s.strip_prefix("DLS:") {
            if let Some((rear, fore)) = pair.split_once('-') {
                return Ok(ContactMode::Double {
                    rear: rear.parse()?,
                    fore: fore.parse()?,
                });
            }
        }
        Err(VcrwError::Contract(format!("`{s}` is not a contact mode")))
    }
}

/// Unit vector from a limb center toward its A tip.
#[inline]
pub fn limb_axis(theta: f64) -> Vec2 {
    Vec2::new(-theta.sin(), -theta.cos())
}

pub fn tip_position(state: &GeneralizedState, params: &ModelParams, foot: Foot) -> Vec2 {
    let limb = foot.limb;
    state.center(limb) + foot.side.sign() * params.half_length[limb] * limb_axis(state.theta(limb))
}

pub fn tip_velocity(state: &GeneralizedState, params: &ModelParams, foot: Foot) -> Vec2 {
    let limb = foot.limb;
    let th = state.theta(limb);
    let s = foot.side.sign() * params.half_length[limb];
    state.center_velocity(limb) + s * state.theta_rate(limb) * Vec2::new(-th.cos(), th.sin())
}

/// All eight tips in stance-cycle order (F1A..F4A, F1B..F4B).
pub fn tip_positions(state: &GeneralizedState, params: &ModelParams) -> Result<[Vec2; 8]> {
    state.check_dim(params.variant)?;
    Ok(std::array::from_fn(|i| {
        tip_position(state, params, Foot::from_cycle_index(i))
    }))
}

/// Spring attachment point: limb `limb`, on the A side (`sign = +1`) or B side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attachment {
    pub limb: usize,
    pub sign: i8,
}

impl Attachment {
    const fn new(limb: usize, sign: i8) -> Self {
        Attachment { limb, sign }
    }

    pub fn position(self, state: &GeneralizedState, params: &ModelParams) -> Vec2 {
        state.center(self.limb)
            + f64::from(self.sign) * params.attach_offset[self.limb] * limb_axis(state.theta(self.limb))
    }

    pub fn velocity(self, state: &GeneralizedState, params: &ModelParams) -> Vec2 {
        let th = state.theta(self.limb);
        let s = f64::from(self.sign) * params.attach_offset[self.limb];
        state.center_velocity(self.limb)
            + s * state.theta_rate(self.limb) * Vec2::new(-th.cos(), th.sin())
    }

    /// Derivative of the position with respect to the limb angle.
    pub fn angle_derivative(self, state: &GeneralizedState, params: &ModelParams) -> Vec2 {
        let th = state.theta(self.limb);
        f64::from(self.sign) * params.attach_offset[self.limb] * Vec2::new(-th.cos(), th.sin())
    }
}

/// Viscoelastic element between a first-cross attachment and a second-cross one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpringElement {
    pub endpoint_a: Attachment,
    pub endpoint_b: Attachment,
}

/// Ring of eight elements joining each first-cross attachment point to its two
/// angular neighbours on the second cross in the nominal pose.
pub const SPRING_RING: [SpringElement; SPRINGS] = {
    const fn el(a: (usize, i8), b: (usize, i8)) -> SpringElement {
        SpringElement {
            endpoint_a: Attachment::new(a.0, a.1),
            endpoint_b: Attachment::new(b.0, b.1),
        }
    }
    [
        el((0, 1), (3, -1)),
        el((2, -1), (3, -1)),
        el((2, -1), (1, -1)),
        el((0, -1), (1, -1)),
        el((0, -1), (3, 1)),
        el((2, 1), (3, 1)),
        el((2, 1), (1, 1)),
        el((0, 1), (1, 1)),
    ]
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringState {
    pub length: f64,
    /// Unit vector from `endpoint_a` toward `endpoint_b`.
    pub direction: Vec2,
    pub length_rate: f64,
}

pub fn spring_geometry(
    state: &GeneralizedState,
    params: &ModelParams,
) -> Result<[SpringState; SPRINGS]> {
    state.check_dim(params.variant)?;
    let mut out = [SpringState {
        length: 0.0,
        direction: Vec2::zeros(),
        length_rate: 0.0,
    }; SPRINGS];
    for (index, (el, slot)) in SPRING_RING.iter().zip(out.iter_mut()).enumerate() {
        let d = el.endpoint_b.position(state, params) - el.endpoint_a.position(state, params);
        let length = d.norm();
        if length < 1e-12 {
            return Err(VcrwError::SingularDirection { index, length });
        }
        let direction = d / length;
        let rel = el.endpoint_b.velocity(state, params) - el.endpoint_a.velocity(state, params);
        *slot = SpringState {
            length,
            direction,
            length_rate: direction.dot(&rel),
        };
    }
    Ok(out)
}

/// Symmetric pose: both crosses concentric at `center`, limb `i` at
/// `theta1 - i*pi/4` (so the stance cycle order matches the tip order).
pub fn nominal_pose(params: &ModelParams, center: Vec2, theta1: f64) -> GeneralizedState {
    let mut state = GeneralizedState::zeros(params.variant);
    for limb in 0..LIMBS {
        state.q[x_index(limb)] = center.x;
        state.q[z_index(limb)] = center.y;
        state.q[theta_index(limb)] = theta1 - limb as f64 * FRAC_PI_4;
    }
    if params.variant.has_upper_body() {
        set_upper_body(&mut state, params, params.controller.target, 0.0);
    }
    state
}

/// Unit vector along the upper-body link, from the pin toward its free end.
#[inline]
pub fn upper_body_axis(theta5: f64) -> Vec2 {
    Vec2::new(theta5.sin(), theta5.cos())
}

/// Places the upper body at angle `theta5` with rate `rate`, consistent with
/// the pin at the first cross's center.
pub fn set_upper_body(state: &mut GeneralizedState, params: &ModelParams, theta5: f64, rate: f64) {
    let l = params.upper_body_com_offset();
    let pin = state.center(0);
    let pin_velocity = state.center_velocity(0);
    let com = pin + l * upper_body_axis(theta5);
    let com_velocity = pin_velocity + l * rate * Vec2::new(theta5.cos(), -theta5.sin());
    state.q[x_index(UPPER_BODY)] = com.x;
    state.q[z_index(UPPER_BODY)] = com.y;
    state.q[UPPER_BODY_ANGLE] = theta5;
    state.qd[x_index(UPPER_BODY)] = com_velocity.x;
    state.qd[z_index(UPPER_BODY)] = com_velocity.y;
    state.qd[UPPER_BODY_ANGLE] = rate;
}
