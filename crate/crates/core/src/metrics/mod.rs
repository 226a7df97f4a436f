//! Image-quality metrics, per-group aggregation and evaluation protocols.

pub mod evaluate;
pub mod image;
pub mod report;

pub use evaluate::{
    evaluate_classifier, evaluate_synthesis, group_sizes, render_difference_map, EvalSlice,
    SubjectSlices,
};
pub use image::{mse, psnr, psnr_from_mse, ssim, ssim_direct_oracle, to_unit_range, PSNR_CAP_DB};
pub use report::{
    aggregate, mean_std, validate_against_schema, ClassificationTallies, GroupAggregate, MeanStd,
    MetricsReport, SliceRecord, Tally, REPORT_SCHEMA_VERSION,
};
