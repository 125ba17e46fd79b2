//! Losses, optimization, evaluation protocol and the grade application.

mod grade;
mod loss;
mod metrics;
mod protocol;
mod split;
mod train;

pub use grade::{grade_regression, knn_loo, standardize, GradeComparison, GradeReport};
pub use loss::{cross_entropy, node_variance_loss, total_loss, LossParts};
pub use metrics::{ConfusionMatrix, EvalReport, Metrics, TaskReport};
pub use protocol::{run_protocol, ProtocolOutcome};
pub use split::{holdout, split_protocol, SplitTask};
pub use train::{evaluate, history_csv, train, EpochRecord, TrainConfig, TrainOutcome};
