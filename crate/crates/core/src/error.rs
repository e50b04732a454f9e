use thiserror::Error;

use crate::tensor::{SlotKind, SpaceKind};

/// Errors raised by the jet, tensor and connection layers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },

    #[error("variable index {var} out of range for {nvars} variables")]
    VarOutOfRange { var: usize, nvars: usize },

    #[error("insufficient truncation order: need at least {needed}, have {available}")]
    InsufficientOrder { needed: u32, available: u32 },

    #[error("point has {got} coordinates, expected {expected}")]
    PointLength { expected: usize, got: usize },

    #[error("inner jet {index} has a nonzero constant term")]
    NonCenteredJet { index: usize },

    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("linear part is singular")]
    Singular,

    #[error("space mismatch: {left:?} vs {right:?}")]
    SpaceMismatch { left: SpaceKind, right: SpaceKind },

    #[error("expected a field over {expected:?}, got {got:?}")]
    WrongSpace { expected: SpaceKind, got: SpaceKind },

    #[error("slot {slot} out of range for a rank-{rank} tensor")]
    SlotOutOfRange { slot: usize, rank: usize },

    #[error("slots {first} and {second} must have opposite variance")]
    VarianceMismatch { first: usize, second: usize },

    #[error("slots {first} and {second} have different index classes or dimensions")]
    DimensionMismatch { first: usize, second: usize },

    #[error("slot kinds differ: {first:?} vs {second:?}")]
    SlotKindMismatch { first: SlotKind, second: SlotKind },

    #[error("wrong signature: {0}")]
    Signature(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("classical connection is not symmetric")]
    NotSymmetric,

    #[error("empty basis")]
    EmptyBasis,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
