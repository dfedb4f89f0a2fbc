//! Time-series ingestion, outlier injection, windowing, and splitting.
//!
//! The pipeline is: ingest a CSV into a [`Series`], optionally inject
//! outliers into the stretch of the raw series that only training windows
//! will see, then build a [`WindowedDataset`] of `seq_size`-long inputs with
//! scalar one-step-ahead targets. The 80:20 split is over windows and
//! chronological; z-score normalization is fit on the training span only and
//! applied everywhere.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest normalization std; guards constant series.
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("column {0:?} not found in header")]
    ColumnMissing(String),
    #[error("no usable rows in {0}")]
    NoUsableRows(String),
    #[error("series too short: {len} values cannot fill windows of {seq_size} plus a target on both splits")]
    SeriesTooShort { len: usize, seq_size: usize },
    #[error("contamination fraction {0} outside [0, 0.5)")]
    InvalidFraction(f64),
    #[error("contamination magnitudes must satisfy 0 < lo <= hi, got [{lo}, {hi}]")]
    InvalidMagnitudes { lo: f64, hi: f64 },
    #[error("train fraction {0} outside (0, 1)")]
    InvalidTrainFraction(f64),
    #[error("train region {region} exceeds series length {len}")]
    RegionTooLarge { region: usize, len: usize },
    #[error("inconsistent window parts: {0}")]
    BadParts(String),
}

/// A univariate series in target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        let var = self
            .values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.len() as f64;
        var.sqrt()
    }
}

/// Result of CSV ingestion: the cleaned series plus how many rows were
/// dropped as unparseable, missing, or non-finite.
#[derive(Debug, Clone)]
pub struct CsvIngest {
    pub series: Series,
    pub dropped_rows: usize,
}

/// Reads a univariate series from a CSV file.
///
/// The header row is auto-detected (present when the value field of the
/// first row does not parse as a number). `value_column` picks the column by
/// header name; without it, single-column files use that column and
/// multi-column files (e.g. `timestamp,value`) use the last one. Rows whose
/// value is missing or does not parse are dropped and counted.
pub fn ingest_csv(path: &Path, value_column: Option<&str>) -> Result<CsvIngest, DataError> {
    let display = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(raw.as_bytes());

    // The csv reader silently skips blank lines; count them as dropped rows.
    let blank_rows = raw.lines().filter(|l| l.trim().is_empty()).count();

    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| DataError::Csv {
            path: display.clone(),
            source,
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(DataError::NoUsableRows(display));
    }

    let width = records.iter().map(|r| r.len()).max().unwrap_or(1);
    let default_col = width.saturating_sub(1);
    let first_default = records[0].get(default_col).unwrap_or("");
    let first_row_is_numeric = parse_value(first_default).is_some();

    let (col, data_start) = match value_column {
        Some(name) => {
            if first_row_is_numeric {
                // A named column needs a header row to resolve against.
                return Err(DataError::ColumnMissing(name.to_string()));
            }
            let header = &records[0];
            let idx = header
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
                .ok_or_else(|| DataError::ColumnMissing(name.to_string()))?;
            (idx, 1)
        }
        None => (default_col, usize::from(!first_row_is_numeric)),
    };

    let mut values = Vec::with_capacity(records.len());
    let mut dropped = blank_rows;
    for rec in &records[data_start..] {
        match rec.get(col).and_then(parse_value) {
            Some(v) => values.push(v),
            None => dropped += 1,
        }
    }
    if values.is_empty() {
        return Err(DataError::NoUsableRows(display));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());
    Ok(CsvIngest {
        series: Series::new(name, values),
        dropped_rows: dropped,
    })
}

fn parse_value(field: &str) -> Option<f64> {
    let trimmed = field.trim().trim_matches('"');
    if trimmed.is_empty() {
        return None;
    }
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Seeded additive outlier contamination.
///
/// `fraction` of the train-region values get `+- k * sigma` added, with the
/// sign equiprobable, `k ~ U[magnitude_lo, magnitude_hi]`, and `sigma` the
/// standard deviation of the clean series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub fraction: f64,
    pub magnitude_lo: f64,
    pub magnitude_hi: f64,
    pub seed: u64,
}

impl ContaminationSpec {
    /// The standard protocol: magnitudes uniform in [3, 5] training sigmas.
    pub fn new(fraction: f64, seed: u64) -> Self {
        ContaminationSpec {
            fraction,
            magnitude_lo: 3.0,
            magnitude_hi: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.fraction.is_finite() && (0.0..0.5).contains(&self.fraction)) {
            return Err(DataError::InvalidFraction(self.fraction));
        }
        if !(self.magnitude_lo.is_finite()
            && self.magnitude_hi.is_finite()
            && self.magnitude_lo > 0.0
            && self.magnitude_lo <= self.magnitude_hi)
        {
            return Err(DataError::InvalidMagnitudes {
                lo: self.magnitude_lo,
                hi: self.magnitude_hi,
            });
        }
        Ok(())
    }
}

/// Number of leading raw values that only training windows touch, for a
/// series of `len` values windowed at `seq_size` and split at `train_frac`.
/// Contaminating below this index cannot perturb any test input or target.
pub fn train_region(len: usize, seq_size: usize, train_frac: f64) -> usize {
    if len <= seq_size {
        return 0;
    }
    let windows = len - seq_size;
    (train_frac * windows as f64).floor() as usize
}

/// Adds seeded outliers to `floor(fraction * train_region)` distinct indices
/// chosen uniformly from `[0, train_region)`. Values at or past
/// `train_region` are never modified.
pub fn inject_outliers(
    series: &Series,
    spec: &ContaminationSpec,
    train_region: usize,
) -> Result<Series, DataError> {
    spec.validate()?;
    if train_region > series.len() {
        return Err(DataError::RegionTooLarge {
            region: train_region,
            len: series.len(),
        });
    }
    let mut out = series.clone();
    let n_outliers = (spec.fraction * train_region as f64).floor() as usize;
    if n_outliers == 0 {
        return Ok(out);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Partial Fisher-Yates: the first n_outliers entries are a uniform
    // sample without replacement.
    let mut pool: Vec<usize> = (0..train_region).collect();
    for i in 0..n_outliers {
        let j = i + rng.random_range(0..pool.len() - i);
        pool.swap(i, j);
    }
    let mut picked = pool[..n_outliers].to_vec();
    picked.sort_unstable();

    let sigma = series.std();
    for idx in picked {
        let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
        let k = spec.magnitude_lo + (spec.magnitude_hi - spec.magnitude_lo) * rng.random::<f64>();
        out.values[idx] += sign * k * sigma;
    }
    Ok(out)
}

/// Sliding windows with scalar targets, normalized by training statistics,
/// split chronologically into train and test.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    split_index: usize,
    norm_mean: f64,
    norm_std: f64,
    seq_size: usize,
    /// Raw (possibly contaminated) values spanned by the training windows,
    /// in original units; feeds the MASE denominator.
    train_values_raw: Vec<f64>,
    /// Raw test targets in original units.
    test_targets_raw: Vec<f64>,
}

impl WindowedDataset {
    /// Windows `series` into `len - seq_size` input/target pairs and splits
    /// at `floor(train_frac * windows)`. Normalization statistics come from
    /// the raw values spanned by the training windows only.
    pub fn from_series(
        series: &Series,
        seq_size: usize,
        train_frac: f64,
    ) -> Result<WindowedDataset, DataError> {
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(DataError::InvalidTrainFraction(train_frac));
        }
        let len = series.len();
        if seq_size == 0 || len < seq_size + 2 {
            return Err(DataError::SeriesTooShort { len, seq_size });
        }
        let windows = len - seq_size;
        let split_index = (train_frac * windows as f64).floor() as usize;
        if split_index == 0 || split_index >= windows {
            return Err(DataError::SeriesTooShort { len, seq_size });
        }

        // Train windows collectively cover values[0 .. split + seq).
        let train_span = &series.values[..split_index + seq_size];
        let mean = train_span.iter().sum::<f64>() / train_span.len() as f64;
        let var = train_span
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / train_span.len() as f64;
        let std = var.sqrt().max(STD_FLOOR);

        let norm = |v: f64| (v - mean) / std;
        let mut inputs = Vec::with_capacity(windows);
        let mut targets = Vec::with_capacity(windows);
        for i in 0..windows {
            inputs.push(series.values[i..i + seq_size].iter().map(|&v| norm(v)).collect());
            targets.push(norm(series.values[i + seq_size]));
        }

        Ok(WindowedDataset {
            inputs,
            targets,
            split_index,
            norm_mean: mean,
            norm_std: std,
            seq_size,
            train_values_raw: train_span.to_vec(),
            test_targets_raw: series.values[split_index + seq_size..].to_vec(),
        })
    }

    /// Builds a dataset from already-normalized windows, for synthetic
    /// experiments and tests. Raw-unit views are reconstructed through the
    /// given statistics, assuming the windows slid over one contiguous
    /// series (first input window, then the train targets).
    pub fn from_parts(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        split_index: usize,
        norm_mean: f64,
        norm_std: f64,
    ) -> Result<WindowedDataset, DataError> {
        if inputs.len() != targets.len() {
            return Err(DataError::BadParts(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.is_empty() || split_index == 0 || split_index >= inputs.len() {
            return Err(DataError::BadParts(format!(
                "split {split_index} of {} windows leaves an empty side",
                inputs.len()
            )));
        }
        let seq_size = inputs[0].len();
        if seq_size == 0 || inputs.iter().any(|w| w.len() != seq_size) {
            return Err(DataError::BadParts("ragged input windows".into()));
        }
        if !(norm_std > 0.0 && norm_std.is_finite() && norm_mean.is_finite()) {
            return Err(DataError::BadParts(format!(
                "bad normalization stats mean={norm_mean} std={norm_std}"
            )));
        }
        let denorm = |v: f64| v * norm_std + norm_mean;
        let train_values_raw: Vec<f64> = inputs[0]
            .iter()
            .chain(&targets[..split_index])
            .map(|&t| denorm(t))
            .collect();
        let test_targets_raw: Vec<f64> = targets[split_index..].iter().map(|&t| denorm(t)).collect();
        Ok(WindowedDataset {
            inputs,
            targets,
            split_index,
            norm_mean,
            norm_std,
            seq_size,
            train_values_raw,
            test_targets_raw,
        })
    }

    pub fn n_windows(&self) -> usize {
        self.inputs.len()
    }

    pub fn seq_size(&self) -> usize {
        self.seq_size
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn norm_mean(&self) -> f64 {
        self.norm_mean
    }

    pub fn norm_std(&self) -> f64 {
        self.norm_std
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Normalized training windows: `(inputs, targets)` before the split.
    pub fn train_slices(&self) -> (&[Vec<f64>], &[f64]) {
        (
            &self.inputs[..self.split_index],
            &self.targets[..self.split_index],
        )
    }

    /// Normalized test windows: `(inputs, targets)` at and after the split.
    pub fn test_slices(&self) -> (&[Vec<f64>], &[f64]) {
        (
            &self.inputs[self.split_index..],
            &self.targets[self.split_index..],
        )
    }

    /// Raw values the training windows were built from, in original units.
    pub fn train_values_original(&self) -> &[f64] {
        &self.train_values_raw
    }

    /// Test targets in original units.
    pub fn test_targets_original(&self) -> &[f64] {
        &self.test_targets_raw
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.norm_mean) / self.norm_std
    }

    /// Maps a normalized prediction back to original units.
    pub fn denormalize(&self, yhat_normalized: f64) -> f64 {
        yhat_normalized * self.norm_std + self.norm_mean
    }
}
