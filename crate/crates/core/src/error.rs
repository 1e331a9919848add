use thiserror::Error;

use crate::model::{ContactMode, Variant};

pub type Result<T> = std::result::Result<T, VcrwError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VcrwError {
    #[error("{variant} expects a {expected}-dimensional state, got {got}")]
    DimensionMismatch {
        variant: Variant,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("spring element {index} has coincident endpoints (length {length:e})")]
    SingularDirection { index: usize, length: f64 },

    #[error("contact mode {mode} is not legal for {variant}")]
    IllegalMode { mode: ContactMode, variant: Variant },

    #[error("constraint matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularConstraints { condition: f64 },

    #[error("upper-body angle is uncontrollable at this pose (|A| = {gain:e})")]
    Uncontrollable { gain: f64 },

    #[error("guard does not change sign over [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("need at least {needed} touchdown events, found {found}")]
    TooFewEvents { needed: usize, found: usize },

    #[error("time range [{t0}, {t1}] selects no samples")]
    EmptyRange { t0: f64, t1: f64 },

    #[error("contract violation: {0}")]
    Contract(String),
}
