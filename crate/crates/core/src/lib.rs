pub mod bloch;
pub mod classical;
pub mod error;
pub mod harness;
pub mod integrate;
pub mod quantum;
pub mod scaling;
pub mod series;
pub mod wigner;

pub use error::{Error, Result};
