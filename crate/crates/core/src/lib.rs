//! Planar hybrid simulation of viscoelastically-combined rimless wheels: two
//! four-legged cross frames coupled by a ring of eight spring-damper elements,
//! walking passively down a slope or, with an actuated upper body, on level
//! ground.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod hybrid;
pub mod model;
pub mod sim;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use error::{Result, VcrwError};
pub use model::{ContactMode, Foot, GeneralizedState, ModelParams, Side, Variant};
pub use sim::{default_initial_state, simulate, InitialConditions, Outcome, SimConfig, Trajectory};
