pub mod error;
pub mod measurement;
pub mod metrics;
pub mod reversal;
pub mod scenarios;
pub mod states;
pub mod sweep;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
