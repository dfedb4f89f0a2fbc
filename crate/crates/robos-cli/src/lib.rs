//! Library side of the `robos` experiment CLI.
//!
//! The binary in `main.rs` is a thin clap dispatcher over these modules, so
//! integration tests can drive the same pipeline directly.

pub mod commands;
pub mod config;
pub mod lossarg;
pub mod pipeline;
pub mod table;

/// Flag-level problems that should exit with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// Partial sweep failure: some cells errored but the sweep finished and its
/// outputs were written.
#[derive(Debug)]
pub struct SweepFailures {
    pub failed: usize,
    pub total: usize,
    pub divergences: usize,
}

impl std::fmt::Display for SweepFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} of {} sweep cells failed ({} by divergence)",
            self.failed, self.total, self.divergences
        )
    }
}

impl std::error::Error for SweepFailures {}

/// Maps an error chain onto the documented exit codes: 1 usage, 2 data,
/// 3 training divergence.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use robos::loss::LossError;
    use robos::optim::TrainError;
    use robos::search::SearchError;
    use robos::theory::TheoryError;

    for cause in err.chain() {
        if matches!(
            cause.downcast_ref::<TrainError>(),
            Some(TrainError::Diverged { .. })
        ) {
            return 3;
        }
        if let Some(sweep) = cause.downcast_ref::<SweepFailures>() {
            return if sweep.divergences > 0 { 3 } else { 2 };
        }
    }
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some()
            || cause.downcast_ref::<LossError>().is_some()
            || cause.downcast_ref::<TheoryError>().is_some()
            || cause.downcast_ref::<SearchError>().is_some()
            || matches!(
                cause.downcast_ref::<TrainError>(),
                Some(TrainError::InvalidConfig(_))
            )
        {
            return 1;
        }
    }
    2
}
