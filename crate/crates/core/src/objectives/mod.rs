//! Training losses, image-quality metrics and set evaluation.

mod eval;
mod loss;
pub mod metrics;

pub use eval::{
    evaluate_predictions, evaluate_set, predict_set, LastFramePredictor, MetricsReport, Predictor, SampleMetrics,
};
pub use loss::{forecaster_loss, forecaster_loss_mean, mse_loss, multiscale_loss, LossKind};
pub use metrics::{eccr, mse, psnr, psnr_from_mse, ssim};
