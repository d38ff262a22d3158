//! Impression construction, loss, gradients, optimization and checkpoints.
mod data;
mod gradcheck;
mod loss;
mod model;
mod params;
mod trainer;

pub use data::{build_impressions, Dataset, Impression, ImpressionBuild, NegativeCount, NewsKey, Portion};
pub use gradcheck::{check_gradients, model_gradient_check, GradCheckReport, TensorCheck};
pub use loss::{impression_loss, impression_probability, loss, score};
pub use model::{BatchOutput, ImpressionOutput, Recommender};
pub use params::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams, Precision};
pub use trainer::{EpochLog, Optimizer, TrainConfig, TrainOutcome, Trainer};
