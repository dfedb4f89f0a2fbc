//! Sweep result assembly: per-seed rows, per-level means, total averages,
//! and the rendered comparison table.

use robos::metrics::MetricReport;

/// One completed sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub dataset: String,
    pub loss_label: String,
    pub level: f64,
    pub seed: u64,
    pub metrics: MetricReport,
    pub epochs_run: usize,
}

/// A failed cell, kept for the partial-failure report.
#[derive(Debug, Clone)]
pub struct CellFailure {
    pub loss_label: String,
    pub level: f64,
    pub seed: u64,
    pub message: String,
    pub divergence: bool,
}

/// All sweep outcomes keyed by `(loss, level, seed)`, in deterministic
/// cell order.
#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    pub dataset: String,
    pub loss_labels: Vec<String>,
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellRecord>,
    pub failures: Vec<CellFailure>,
}

/// Mean MAE/RMSE/MASE over a set of reports.
fn mean_metrics(reports: &[&MetricReport]) -> Option<(f64, f64, f64)> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    Some((
        reports.iter().map(|r| r.mae).sum::<f64>() / n,
        reports.iter().map(|r| r.rmse).sum::<f64>() / n,
        reports.iter().map(|r| r.mase).sum::<f64>() / n,
    ))
}

pub fn format_level(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct}%")
    }
}

impl SweepTable {
    fn reports_for(&self, loss_label: &str, level: f64) -> Vec<&MetricReport> {
        self.cells
            .iter()
            .filter(|c| c.loss_label == loss_label && c.level == level)
            .map(|c| &c.metrics)
            .collect()
    }

    /// Per-level mean over seeds.
    pub fn level_mean(&self, loss_label: &str, level: f64) -> Option<(f64, f64, f64)> {
        mean_metrics(&self.reports_for(loss_label, level))
    }

    /// Arithmetic mean of the per-level means (the "Total Avg." row).
    pub fn total_avg(&self, loss_label: &str) -> Option<(f64, f64, f64)> {
        let per_level: Vec<(f64, f64, f64)> = self
            .levels
            .iter()
            .filter_map(|&lv| self.level_mean(loss_label, lv))
            .collect();
        if per_level.len() != self.levels.len() {
            return None;
        }
        let n = per_level.len() as f64;
        Some((
            per_level.iter().map(|m| m.0).sum::<f64>() / n,
            per_level.iter().map(|m| m.1).sum::<f64>() / n,
            per_level.iter().map(|m| m.2).sum::<f64>() / n,
        ))
    }

    /// One row per completed `(loss, level, seed)` cell.
    pub fn to_wide_csv(&self) -> String {
        let mut out = String::from("dataset,loss,level,seed,mae,rmse,mase,n_test,epochs\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.dataset,
                c.loss_label,
                c.level,
                c.seed,
                c.metrics.mae,
                c.metrics.rmse,
                c.metrics.mase,
                c.metrics.n_test,
                c.epochs_run
            ));
        }
        out
    }

    /// Seed-averaged rows plus `total_avg` rows per loss.
    pub fn to_summary_csv(&self) -> String {
        let mut out = String::from("dataset,loss,level,mae,rmse,mase\n");
        for label in &self.loss_labels {
            for &lv in &self.levels {
                if let Some((mae, rmse, mase)) = self.level_mean(label, lv) {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        self.dataset, label, lv, mae, rmse, mase
                    ));
                }
            }
            if let Some((mae, rmse, mase)) = self.total_avg(label) {
                out.push_str(&format!(
                    "{},{},total_avg,{},{},{}\n",
                    self.dataset, label, mae, rmse, mase
                ));
            }
        }
        out
    }

    /// Fixed-width comparison table: one block of MAE/RMSE/MASE rows per
    /// contamination level, losses as columns, 3-decimal values.
    pub fn render_text(&self) -> String {
        let metric_names = ["MAE", "RMSE", "MASE"];
        let mut out = format!(
            "Dataset: {}  (seeds per cell: {})\n",
            self.dataset,
            self.seeds.len()
        );
        out.push_str(&format!("{:<10} {:<7}", "Outliers", "Metric"));
        for label in &self.loss_labels {
            out.push_str(&format!(" {label:>12}"));
        }
        out.push('\n');

        let mut block = |tag: &str, rows: Vec<Option<(f64, f64, f64)>>| {
            for (mi, name) in metric_names.iter().enumerate() {
                let lead = if mi == 0 { tag } else { "" };
                let mut line = format!("{lead:<10} {name:<7}");
                for row in &rows {
                    match row {
                        Some(m) => {
                            let v = [m.0, m.1, m.2][mi];
                            line.push_str(&format!(" {v:>12.3}"));
                        }
                        None => line.push_str(&format!(" {:>12}", "-")),
                    }
                }
                out.push_str(&line);
                out.push('\n');
            }
        };

        for &lv in &self.levels {
            let rows: Vec<Option<(f64, f64, f64)>> = self
                .loss_labels
                .iter()
                .map(|l| self.level_mean(l, lv))
                .collect();
            block(&format_level(lv), rows);
        }
        let totals: Vec<Option<(f64, f64, f64)>> = self
            .loss_labels
            .iter()
            .map(|l| self.total_avg(l))
            .collect();
        block("Total Avg.", totals);

        if !self.failures.is_empty() {
            out.push_str(&format!("\nfailed cells: {}\n", self.failures.len()));
            for f in &self.failures {
                out.push_str(&format!(
                    "  loss={} level={} seed={}: {}\n",
                    f.loss_label, f.level, f.seed, f.message
                ));
            }
        }
        out
    }
}
