#![allow(clippy::needless_range_loop)]

pub mod connections;
pub mod equivariance;
pub mod error;
pub mod jet;
pub mod linalg;
pub mod natural;
pub mod random;
pub mod scene;
pub mod suites;
pub mod tensor;

pub use error::{Error, Result};
pub use jet::{JetPoly, MultiIndex, Rational};
