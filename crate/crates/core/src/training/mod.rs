//! Minibatching, the three-view optimization loop, optimizer state and
//! metric traces.

mod batches;
mod config;
mod optim;
mod trace;
mod trainer;

pub use batches::{epoch_batches, make_batches};
pub use config::{OptimizerKind, TrainConfig, CONFIG_KEYS};
pub use optim::OptimizerState;
pub(crate) use trace::write_atomic;
pub use trace::{EvalRecord, MetricTrace, StepRecord};
pub use trainer::{train, train_step, StepOutcome, TrainOutcome, Trainer};
