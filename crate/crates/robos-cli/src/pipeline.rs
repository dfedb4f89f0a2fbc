//! The end-to-end training cell: inject outliers, window, train, score.

use anyhow::Context;

use robos::data::{self, ContaminationSpec, Series, WindowedDataset};
use robos::metrics::{self, MetricReport};
use robos::nn::Network;
use robos::optim::{train, validation_split, TrainConfig, TrainingHistory};
use robos::seeds;
use robos::LossSpec;

use crate::config::ExperimentConfig;

/// Everything one `(loss, contamination, seed)` cell produces.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub metrics: MetricReport,
    pub history: TrainingHistory,
    pub network: Network,
    /// Denormalized MAE over the early-stopping validation slice; the
    /// hyperparameter-search objective.
    pub val_mae: f64,
}

/// Denormalized predictions for a slice of normalized windows.
pub fn predict_original_units(
    net: &Network,
    data: &WindowedDataset,
    windows: &[Vec<f64>],
) -> anyhow::Result<Vec<f64>> {
    windows
        .iter()
        .map(|x| {
            let yhat = net.forward(x)?;
            Ok(data.denormalize(yhat))
        })
        .collect()
}

/// Runs one cell on an already-ingested series: inject outliers into the
/// train region, window and split, train from a seed-derived init, and
/// score the test windows in original units.
pub fn run_cell(
    series: &Series,
    cfg: &ExperimentConfig,
    loss: &LossSpec,
    contamination: f64,
    seed: u64,
) -> anyhow::Result<CellResult> {
    let region = data::train_region(series.len(), cfg.seq_size, cfg.train_frac);
    let spec = ContaminationSpec {
        fraction: contamination,
        magnitude_lo: cfg.magnitude_lo,
        magnitude_hi: cfg.magnitude_hi,
        seed: seeds::derive(seed, "inject"),
    };
    let contaminated =
        data::inject_outliers(series, &spec, region).context("outlier injection failed")?;
    let windowed = WindowedDataset::from_series(&contaminated, cfg.seq_size, cfg.train_frac)
        .with_context(|| format!("windowing {} at seq_size {}", series.name, cfg.seq_size))?;

    let net = Network::init(&cfg.network_dims(), seeds::derive(seed, "init"))
        .context("network init failed")?;
    let train_cfg = TrainConfig {
        loss: *loss,
        max_epochs: cfg.max_epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        patience: cfg.patience,
        l2_coeff: cfg.l2_coeff,
        seed: seeds::derive(seed, "train"),
    };
    let (trained, history) = train(net, &windowed, &train_cfg).context("training failed")?;

    let (test_inputs, _) = windowed.test_slices();
    let predictions = predict_original_units(&trained, &windowed, test_inputs)?;
    let report = MetricReport::compute(
        windowed.test_targets_original(),
        &predictions,
        windowed.train_values_original(),
    )
    .context("metric computation failed")?;

    // Validation MAE in original units, over the slice train() used for
    // early stopping.
    let (train_inputs, train_targets) = windowed.train_slices();
    let (n_fit, _) = validation_split(train_inputs.len());
    let val_pred = predict_original_units(&trained, &windowed, &train_inputs[n_fit..])?;
    let val_actual: Vec<f64> = train_targets[n_fit..]
        .iter()
        .map(|&t| windowed.denormalize(t))
        .collect();
    let val_mae = metrics::mae(&val_actual, &val_pred).context("validation MAE failed")?;

    Ok(CellResult {
        metrics: report,
        history,
        network: trained,
        val_mae,
    })
}
