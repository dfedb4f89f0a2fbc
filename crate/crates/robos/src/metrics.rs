//! Forecast-accuracy metrics: MAE, RMSE, and MASE.
//!
//! All three are computed in original target units; callers denormalize
//! predictions first. MASE uses the non-seasonal naive scaling: test MAE
//! divided by the in-sample lag-1 MAE of the training series the model was
//! actually fitted on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {y} actuals vs {yhat} predictions")]
    LengthMismatch { y: usize, yhat: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("training series too short for MASE (need >= 2 values)")]
    TrainTooShort,
    #[error("constant training series: MASE denominator is zero")]
    ConstantTrainingSeries,
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<(), MetricsError> {
    if y.len() != yhat.len() {
        return Err(MetricsError::LengthMismatch {
            y: y.len(),
            yhat: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, yhat)?;
    Ok(y.iter()
        .zip(yhat)
        .map(|(a, p)| (a - p).abs())
        .sum::<f64>()
        / y.len() as f64)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, yhat)?;
    let mse = y
        .iter()
        .zip(yhat)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        / y.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute scaled error: `mae(y_test, yhat_test)` divided by the
/// training series' lag-1 naive MAE.
pub fn mase(y_test: &[f64], yhat_test: &[f64], y_train: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y_test, yhat_test)?;
    if y_train.len() < 2 {
        return Err(MetricsError::TrainTooShort);
    }
    let naive_mae = y_train
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .sum::<f64>()
        / (y_train.len() - 1) as f64;
    if naive_mae == 0.0 {
        return Err(MetricsError::ConstantTrainingSeries);
    }
    Ok(mae(y_test, yhat_test)? / naive_mae)
}

/// The three metrics for one evaluation, serializable as a JSON object or
/// one CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub mase: f64,
    pub n_test: usize,
}

impl MetricReport {
    pub fn compute(
        y_test: &[f64],
        yhat_test: &[f64],
        y_train: &[f64],
    ) -> Result<MetricReport, MetricsError> {
        Ok(MetricReport {
            mae: mae(y_test, yhat_test)?,
            rmse: rmse(y_test, yhat_test)?,
            mase: mase(y_test, yhat_test, y_train)?,
            n_test: y_test.len(),
        })
    }

    pub fn csv_header() -> &'static str {
        "mae,rmse,mase,n_test"
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{}", self.mae, self.rmse, self.mase, self.n_test)
    }
}
