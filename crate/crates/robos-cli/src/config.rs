//! Experiment configuration, dataset presets, and provenance headers.

use serde::{Deserialize, Serialize};

use robos::LossSpec;

/// Architecture, training, and contamination settings for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_path: String,
    pub dataset_name: String,
    pub value_column: Option<String>,
    pub seq_size: usize,
    pub dense_layers: usize,
    pub units: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub l2_coeff: f64,
    pub train_frac: f64,
    pub magnitude_lo: f64,
    pub magnitude_hi: f64,
}

impl ExperimentConfig {
    /// Layer widths for this config: `[seq_size, units repeated, 1]`.
    pub fn network_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.dense_layers + 2);
        dims.push(self.seq_size);
        dims.extend(std::iter::repeat(self.units).take(self.dense_layers));
        dims.push(1);
        dims
    }
}

/// Architecture and training hyperparameters for a named dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub seq_size: usize,
    pub dense_layers: usize,
    pub batch_size: usize,
    pub units: usize,
    pub learning_rate: f64,
    pub patience: usize,
}

/// Looks up the built-in per-dataset defaults. Names are matched
/// case-insensitively with `-`/` ` treated as `_`.
pub fn preset(name: &str) -> Option<Preset> {
    let key = name.trim().to_ascii_lowercase().replace(['-', ' '], "_");
    let p = |seq_size, dense_layers, batch_size, units| Preset {
        seq_size,
        dense_layers,
        batch_size,
        units,
        learning_rate: 0.001,
        patience: 5,
    };
    match key.as_str() {
        "daily_min_temperature" => Some(p(30, 2, 32, 64)),
        "electricity_load" => Some(p(96, 3, 256, 64)),
        "monthly_sunspots" => Some(p(132, 3, 32, 64)),
        "daily_gold_price" => Some(p(30, 2, 16, 32)),
        _ => None,
    }
}

pub fn preset_names() -> [&'static str; 4] {
    [
        "daily_min_temperature",
        "electricity_load",
        "monthly_sunspots",
        "daily_gold_price",
    ]
}

/// Everything that determines one training cell; embedded in every output
/// file so that re-running the header reproduces the file byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub config: ExperimentConfig,
    pub loss: LossSpec,
    pub contamination: f64,
    pub seed: u64,
}

/// Provenance for whole-sweep outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepProvenance {
    pub config: ExperimentConfig,
    pub losses: Vec<LossSpec>,
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// One-line `# provenance: {...}` header for CSV-ish outputs.
pub fn provenance_line<T: Serialize>(p: &T) -> String {
    format!(
        "# provenance: {}\n",
        serde_json::to_string(p).expect("provenance serialization cannot fail")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_hyperparameters() {
        let t = preset("daily_min_temperature").unwrap();
        assert_eq!(
            (t.seq_size, t.dense_layers, t.batch_size, t.units, t.learning_rate, t.patience),
            (30, 2, 32, 64, 0.001, 5)
        );
        let e = preset("electricity_load").unwrap();
        assert_eq!(
            (e.seq_size, e.dense_layers, e.batch_size, e.units, e.learning_rate, e.patience),
            (96, 3, 256, 64, 0.001, 5)
        );
        let s = preset("monthly_sunspots").unwrap();
        assert_eq!(
            (s.seq_size, s.dense_layers, s.batch_size, s.units, s.learning_rate, s.patience),
            (132, 3, 32, 64, 0.001, 5)
        );
        let g = preset("Daily_Gold_Price").unwrap();
        assert_eq!(
            (g.seq_size, g.dense_layers, g.batch_size, g.units, g.learning_rate, g.patience),
            (30, 2, 16, 32, 0.001, 5)
        );
        assert!(preset("unknown").is_none());
    }

    #[test]
    fn network_dims_expand_hidden_layers() {
        let cfg = ExperimentConfig {
            dataset_path: "x.csv".into(),
            dataset_name: "x".into(),
            value_column: None,
            seq_size: 30,
            dense_layers: 2,
            units: 64,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 5,
            max_epochs: 200,
            l2_coeff: 0.0,
            train_frac: 0.8,
            magnitude_lo: 3.0,
            magnitude_hi: 5.0,
        };
        assert_eq!(cfg.network_dims(), vec![30, 64, 64, 1]);
    }
}
