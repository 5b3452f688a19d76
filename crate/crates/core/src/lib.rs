//! Machine-learning tests of the positive correlation between insurance
//! coverage and claims.

pub mod data;
pub mod error;
pub mod functionals;
pub mod inference;
pub mod learners;
pub mod quad;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use quad::ProbQuad;
