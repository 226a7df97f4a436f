//! Cross-modality MRI-to-PET slice synthesis: a vector-quantized adversarial
//! generator with multi-scale convolutions, residual stacks and CBAM
//! attention, plus the full training pipeline, image-quality metrics and the
//! downstream diagnosis classifier. Everything runs at desk scale on
//! deterministic synthetic phantom data.

pub mod config;
pub mod datamodel;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod seeds;
pub mod trainer;

pub use error::{Error, Result};
