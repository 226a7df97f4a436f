//! File formats: NIfTI volumes, binary checkpoints, PNG rendering.

pub mod checkpoint;
pub mod nifti;
pub mod png;

pub use checkpoint::{load_checkpoint, save_checkpoint, verify_compat, Checkpoint};
pub use nifti::{load_volume, load_volume_with_meta, read_nifti, write_nifti, write_sidecar};
pub use png::{write_gray_png, write_panel_png};
