//! The trainable surrogate: radial descriptors, a per-species linear model,
//! ridge training and residual outliers.

mod descriptors;
mod model;
mod outliers;
mod train;

pub use descriptors::{compute_descriptors, BasisSettings, DescriptorBasis, Descriptors};
pub use model::{predict, Metrics, SurrogateCalculator, SurrogateModel, TrainMode};
pub use outliers::{
    detect_outliers, frame_residuals, outliers_from_residuals, FrameResidual, Outlier, OutlierError,
    OutlierReason, SIGMA_FLOOR,
};
pub use train::{
    accumulate, design_rows, evaluate_metrics, metrics_from, solve_ridge, train, TrainError, TrainOutput,
    TrainRequest, TrainTimeModel, DEFAULT_BETA, DEFAULT_LAMBDA,
};
