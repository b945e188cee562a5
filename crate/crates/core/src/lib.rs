pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
pub use trainer::sha256_hex;

/// Version string embedded in every emitted artifact.
pub const CODE_VERSION: &str = concat!("asymdiff ", env!("CARGO_PKG_VERSION"));
