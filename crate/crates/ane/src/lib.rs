//! File formats, run manifests and the experiment pipeline for adversarial
//! network embedding. The numerical work lives in `ane-core`.

pub mod checkpoint;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;

pub use ane_core as core;
pub use error::{Error, Result, Stage};

/// Environment variable naming the dataset root.
pub const DATA_DIR_ENV: &str = "ANE_DATA_DIR";
