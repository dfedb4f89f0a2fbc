//! Subcommand implementations. Each takes resolved arguments, does the file
//! IO, and returns what the binary prints. Output files carry a provenance
//! header (full config plus seed) and contain nothing non-deterministic, so
//! re-running an invocation reproduces every byte.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use robos::data::{self, ContaminationSpec, Series, WindowedDataset};
use robos::metrics::MetricReport;
use robos::nn::Network;
use robos::optim::TrainError;
use robos::search::{self, SearchOutcome, SearchSpace, TrialOutcome};
use robos::seeds;
use robos::theory::{bound_report, BoundReport};
use robos::LossSpec;

use crate::config::{provenance_line, ExperimentConfig, RunProvenance, SweepProvenance};
use crate::lossarg;
use crate::pipeline::{run_cell, CellResult};
use crate::table::{CellFailure, CellRecord, SweepTable};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Random,
    Tpe,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Tpe => "tpe",
        }
    }
}

fn ingest(cfg: &ExperimentConfig) -> anyhow::Result<Series> {
    let got = data::ingest_csv(Path::new(&cfg.dataset_path), cfg.value_column.as_deref())
        .with_context(|| format!("ingesting {}", cfg.dataset_path))?;
    if got.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} unusable row(s) from {}",
            got.dropped_rows, cfg.dataset_path
        );
    }
    let mut series = got.series;
    series.name = cfg.dataset_name.clone();
    Ok(series)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating directory {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serialization cannot fail");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    provenance: &'a RunProvenance,
    metrics: &'a MetricReport,
    val_mae: f64,
    epochs_run: usize,
    best_epoch: usize,
    stopped_early: bool,
}

#[derive(Serialize)]
struct CheckpointDoc<'a> {
    provenance: &'a RunProvenance,
    network: serde_json::Value,
}

fn write_cell_outputs(
    out_dir: &Path,
    prov: &RunProvenance,
    cell: &CellResult,
) -> anyhow::Result<()> {
    let metrics = MetricsDoc {
        provenance: prov,
        metrics: &cell.metrics,
        val_mae: cell.val_mae,
        epochs_run: cell.history.epochs_run(),
        best_epoch: cell.history.best_epoch,
        stopped_early: cell.history.stopped_early,
    };
    write_file(&out_dir.join("metrics.json"), &pretty_json(&metrics))?;

    let mut history = provenance_line(prov);
    history.push_str(&cell.history.to_csv());
    write_file(&out_dir.join("history.csv"), &history)?;

    let network: serde_json::Value =
        serde_json::from_str(&cell.network.to_json()).expect("checkpoint json is valid");
    let checkpoint = CheckpointDoc {
        provenance: prov,
        network,
    };
    write_file(&out_dir.join("checkpoint.json"), &pretty_json(&checkpoint))
}

/// `train`: one cell end to end; writes metrics.json, history.csv, and
/// checkpoint.json into `out_dir`.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    loss: &LossSpec,
    level: f64,
    seed: u64,
    out_dir: &Path,
) -> anyhow::Result<MetricReport> {
    let series = ingest(cfg)?;
    let cell = run_cell(&series, cfg, loss, level, seed)?;
    let prov = RunProvenance {
        config: cfg.clone(),
        loss: *loss,
        contamination: level,
        seed,
    };
    write_cell_outputs(out_dir, &prov, &cell)?;
    println!(
        "{} loss={} level={} seed={}: mae={:.3} rmse={:.3} mase={:.3} (epochs {}, best {})",
        cfg.dataset_name,
        lossarg::label(loss),
        level,
        seed,
        cell.metrics.mae,
        cell.metrics.rmse,
        cell.metrics.mase,
        cell.history.epochs_run(),
        cell.history.best_epoch,
    );
    Ok(cell.metrics)
}

/// Distinct table labels for the sweep losses (`kind`, suffixed on repeats).
fn sweep_labels(losses: &[LossSpec]) -> Vec<String> {
    let mut labels = Vec::with_capacity(losses.len());
    for spec in losses {
        let base = lossarg::label(spec);
        let mut label = base.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{base}#{k}");
            k += 1;
        }
        labels.push(label);
    }
    labels
}

/// `sweep`: the full losses x levels x seeds Cartesian product. Cells run
/// in parallel (bounded by `jobs` when given); failures are reported and
/// skipped, never silently dropped. Writes results_wide.csv,
/// results_summary.csv, and results_table.txt.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    losses: &[LossSpec],
    levels: &[f64],
    seeds: &[u64],
    jobs: Option<usize>,
    out_dir: &Path,
) -> anyhow::Result<SweepTable> {
    if losses.is_empty() || levels.is_empty() || seeds.is_empty() {
        return Err(UsageError("sweep needs at least one loss, level, and seed".into()).into());
    }
    let series = ingest(cfg)?;
    let labels = sweep_labels(losses);

    let mut cell_defs = Vec::new();
    for (li, loss) in losses.iter().enumerate() {
        for &level in levels {
            for &seed in seeds {
                cell_defs.push((li, *loss, level, seed));
            }
        }
    }

    let run_all = || -> Vec<Result<CellRecord, CellFailure>> {
        cell_defs
            .par_iter()
            .map(|&(li, loss, level, seed)| {
                match run_cell(&series, cfg, &loss, level, seed) {
                    Ok(cell) => Ok(CellRecord {
                        dataset: cfg.dataset_name.clone(),
                        loss_label: labels[li].clone(),
                        level,
                        seed,
                        metrics: cell.metrics,
                        epochs_run: cell.history.epochs_run(),
                    }),
                    Err(err) => Err(CellFailure {
                        loss_label: labels[li].clone(),
                        level,
                        seed,
                        message: format!("{err:#}"),
                        divergence: err.chain().any(|c| {
                            matches!(
                                c.downcast_ref::<TrainError>(),
                                Some(TrainError::Diverged { .. })
                            )
                        }),
                    }),
                }
            })
            .collect()
    };
    let outcomes = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building sweep thread pool")?
            .install(run_all),
        None => run_all(),
    };

    let mut table = SweepTable {
        dataset: cfg.dataset_name.clone(),
        loss_labels: labels,
        levels: levels.to_vec(),
        seeds: seeds.to_vec(),
        ..Default::default()
    };
    for outcome in outcomes {
        match outcome {
            Ok(rec) => table.cells.push(rec),
            Err(fail) => table.failures.push(fail),
        }
    }

    let prov = SweepProvenance {
        config: cfg.clone(),
        losses: losses.to_vec(),
        levels: levels.to_vec(),
        seeds: seeds.to_vec(),
    };
    let header = provenance_line(&prov);
    write_file(
        &out_dir.join("results_wide.csv"),
        &format!("{header}{}", table.to_wide_csv()),
    )?;
    write_file(
        &out_dir.join("results_summary.csv"),
        &format!("{header}{}", table.to_summary_csv()),
    )?;
    write_file(&out_dir.join("results_table.txt"), &table.render_text())?;
    println!("{}", table.render_text());
    Ok(table)
}

#[derive(Serialize)]
struct BestParamsDoc<'a> {
    provenance: &'a ExperimentConfig,
    strategy: &'a str,
    contamination: f64,
    search_seed: u64,
    trial: usize,
    a: f64,
    eps: f64,
    lambda: f64,
    val_mae: f64,
    epochs_run: usize,
}

/// `hpo`: optimize `(a, eps, lambda)` for the robos loss at one
/// contamination level. The objective is the validation MAE of a full
/// training run at the trial seed. Writes trials.csv and best_params.json.
pub fn cmd_hpo(
    cfg: &ExperimentConfig,
    level: f64,
    strategy: Strategy,
    n_trials: usize,
    seed: u64,
    gamma: f64,
    space: &SearchSpace,
    out_dir: &Path,
) -> anyhow::Result<SearchOutcome> {
    let series = ingest(cfg)?;
    let objective = |params: &search::RobosParams,
                     trial_seed: u64|
     -> Result<TrialOutcome, search::ObjectiveError> {
        let cell = run_cell(&series, cfg, &params.to_loss_spec(), level, trial_seed)
            .map_err(|e| -> search::ObjectiveError { e.into() })?;
        Ok(TrialOutcome {
            val_metric: cell.val_mae,
            epochs_run: cell.history.epochs_run(),
        })
    };
    let outcome = match strategy {
        Strategy::Random => search::random_search(space, n_trials, seed, objective)?,
        Strategy::Tpe => search::tpe_search(space, n_trials, seed, gamma, objective)?,
    };

    #[derive(Serialize)]
    struct HpoProvenance<'a> {
        config: &'a ExperimentConfig,
        strategy: &'a str,
        contamination: f64,
        n_trials: usize,
        seed: u64,
        gamma: f64,
        space: &'a SearchSpace,
    }
    let header = provenance_line(&HpoProvenance {
        config: cfg,
        strategy: strategy.name(),
        contamination: level,
        n_trials,
        seed,
        gamma,
        space,
    });
    write_file(
        &out_dir.join("trials.csv"),
        &format!("{header}{}", search::trials_to_csv(&outcome.trials)),
    )?;

    let best = &outcome.best;
    let doc = BestParamsDoc {
        provenance: cfg,
        strategy: strategy.name(),
        contamination: level,
        search_seed: seed,
        trial: best.trial,
        a: best.params.a,
        eps: best.params.eps,
        lambda: best.params.lambda,
        val_mae: best.val_metric,
        epochs_run: best.epochs_run,
    };
    write_file(&out_dir.join("best_params.json"), &pretty_json(&doc))?;
    println!(
        "best trial {}: a={:.4} eps={:.4} lambda={:.4} val_mae={:.4}",
        best.trial, best.params.a, best.params.eps, best.params.lambda, best.val_metric
    );
    Ok(outcome)
}

/// `profile`: one `r,value,grad` CSV per loss spec over a uniform grid.
pub fn cmd_profile(
    specs: &[LossSpec],
    r_min: f64,
    r_max: f64,
    n_points: usize,
    out_dir: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    if specs.is_empty() {
        return Err(UsageError("profile needs at least one --loss".into()).into());
    }
    #[derive(Serialize)]
    struct ProfileProvenance<'a> {
        loss: &'a LossSpec,
        r_min: f64,
        r_max: f64,
        n_points: usize,
    }
    let mut written = Vec::with_capacity(specs.len());
    for spec in specs {
        let points = spec.profile(r_min, r_max, n_points)?;
        let mut out = provenance_line(&ProfileProvenance {
            loss: spec,
            r_min,
            r_max,
            n_points,
        });
        out.push_str("r,value,grad\n");
        for p in points {
            out.push_str(&format!("{},{},{}\n", p.r, p.value, p.grad));
        }
        let path = out_dir.join(format!("profile_{}.csv", lossarg::file_label(spec)));
        write_file(&path, &out)?;
        written.push(path);
    }
    println!("wrote {} profile file(s) to {}", written.len(), out_dir.display());
    Ok(written)
}

/// `bound`: evaluate the generalization bound for a saved checkpoint
/// against the dataset it was trained on (rebuilt from provenance).
pub fn cmd_bound(
    checkpoint_path: &Path,
    dataset_override: Option<&Path>,
    eps_conf: f64,
    out: Option<&Path>,
) -> anyhow::Result<BoundReport> {
    let text = std::fs::read_to_string(checkpoint_path)
        .with_context(|| format!("reading checkpoint {}", checkpoint_path.display()))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).context("parsing checkpoint json")?;
    let prov: RunProvenance = serde_json::from_value(
        doc.get("provenance")
            .cloned()
            .ok_or_else(|| UsageError("checkpoint has no provenance".into()))?,
    )
    .context("parsing checkpoint provenance")?;
    let network_value = doc
        .get("network")
        .cloned()
        .ok_or_else(|| UsageError("checkpoint has no network".into()))?;
    let net = Network::from_json(&network_value.to_string()).context("loading network")?;

    let mut cfg = prov.config.clone();
    if let Some(path) = dataset_override {
        cfg.dataset_path = path.display().to_string();
    }
    let series = ingest(&cfg)?;
    let region = data::train_region(series.len(), cfg.seq_size, cfg.train_frac);
    let spec = ContaminationSpec {
        fraction: prov.contamination,
        magnitude_lo: cfg.magnitude_lo,
        magnitude_hi: cfg.magnitude_hi,
        seed: seeds::derive(prov.seed, "inject"),
    };
    let contaminated = data::inject_outliers(&series, &spec, region)?;
    let windowed = WindowedDataset::from_series(&contaminated, cfg.seq_size, cfg.train_frac)?;
    if net.input_dim() != cfg.seq_size {
        return Err(UsageError(format!(
            "checkpoint expects inputs of length {}, dataset windows are {}",
            net.input_dim(),
            cfg.seq_size
        ))
        .into());
    }

    let report = bound_report(&net, &windowed, &prov.loss, eps_conf)?;
    let rendered = pretty_json(&report);
    match out {
        Some(path) => write_file(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(report)
}

/// `inject`: standalone contamination export for auditing. Writes a
/// single-column CSV of the contaminated series.
pub fn cmd_inject(
    cfg: &ExperimentConfig,
    level: f64,
    seed: u64,
    out_file: &Path,
) -> anyhow::Result<usize> {
    let series = ingest(cfg)?;
    let region = data::train_region(series.len(), cfg.seq_size, cfg.train_frac);
    let spec = ContaminationSpec {
        fraction: level,
        magnitude_lo: cfg.magnitude_lo,
        magnitude_hi: cfg.magnitude_hi,
        seed: seeds::derive(seed, "inject"),
    };
    let contaminated = data::inject_outliers(&series, &spec, region)?;
    let modified = series
        .values
        .iter()
        .zip(&contaminated.values)
        .filter(|(a, b)| a != b)
        .count();

    #[derive(Serialize)]
    struct InjectProvenance<'a> {
        config: &'a ExperimentConfig,
        contamination: f64,
        seed: u64,
        train_region: usize,
    }
    let mut out = provenance_line(&InjectProvenance {
        config: cfg,
        contamination: level,
        seed,
        train_region: region,
    });
    out.push_str("value\n");
    for v in &contaminated.values {
        out.push_str(&format!("{v}\n"));
    }
    write_file(out_file, &out)?;
    println!(
        "wrote {} values ({} modified) to {}",
        contaminated.len(),
        modified,
        out_file.display()
    );
    Ok(modified)
}
