pub mod error;
pub mod fdtd;
pub mod geometry;
pub mod modes;
pub mod cavity;
pub mod fit;
pub mod coupling;
pub mod farfield;
pub mod gridio;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
