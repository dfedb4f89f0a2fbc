//! Robust regression losses and small dense networks for one-step-ahead
//! time-series forecasting.
//!
//! The crate bundles everything an outlier-contamination benchmark needs:
//!
//! - [`loss`]: five pointwise regression losses (square, absolute, Huber,
//!   log-cosh, and the bounded non-convex `robos` loss) with analytic
//!   gradients.
//! - [`nn`]: dense feedforward networks with exact reverse-mode gradients.
//! - [`optim`]: Adam and a mini-batch training loop with early stopping.
//! - [`data`]: CSV ingestion, seeded outlier injection, sliding windows,
//!   and chronological train/test splitting.
//! - [`metrics`]: MAE / RMSE / MASE in original units.
//! - [`search`]: seeded random search and a univariate TPE over the robos
//!   loss hyperparameters.
//! - [`theory`]: a generalization-gap bound calculator for trained networks.
//!
//! Batch evaluation is data-parallel via rayon when the default `parallel`
//! feature is enabled. The sequential fallback produces bit-identical
//! numbers: per-item work is independent and reductions always run in index
//! order.

pub mod data;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod search;
pub mod seeds;
pub mod theory;

pub(crate) mod par;

pub use data::{ContaminationSpec, Series, WindowedDataset};
pub use loss::LossSpec;
pub use metrics::MetricReport;
pub use nn::{Activation, DenseLayer, GradientBuffer, Network};
pub use optim::{AdamState, TrainConfig, TrainingHistory};
pub use search::{RobosParams, SearchSpace, TrialResult};
pub use theory::BoundReport;
