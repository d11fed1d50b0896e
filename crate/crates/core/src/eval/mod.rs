//! Evaluation: the affine depth correction, point-depth correlation and the
//! binned table, the three-arm ablation, and the depth-augmented location
//! classifier.

pub mod ablation;
pub mod classify;
pub mod correction;
pub mod metrics;

pub use ablation::{ablation_run, AblationConfig, AblationModels, AblationOutcome, AblationReport, ArmMetrics};
pub use classify::{
    downstream_classification, labeled_views, ClassificationResult, ClassifyConfig, DepthSource, LabeledView,
};
pub use correction::{correct_depth, fit_correction, CorrectedDepth, CorrectionFit, CorrectionParams};
pub use metrics::{
    binned_table, clinical_bins, masked_rmse, pearson, pearson_xy, sample_point_depths, uniform_bins, BinnedTable,
    DepthBin, PointDepthSample,
};
