//! `robos` — experiment runner for robust-loss time-series forecasting.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 training divergence.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use robos::search::{ParamRange, SearchSpace};
use robos::LossSpec;
use robos_cli::commands::{self, Strategy};
use robos_cli::config::{preset, preset_names, ExperimentConfig};
use robos_cli::{exit_code, lossarg, UsageError};

#[derive(Parser)]
#[command(
    name = "robos",
    version,
    about = "Train dense forecasting networks under five regression losses, \
             inject outliers, and compare robustness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and report test metrics.
    Train(TrainArgs),
    /// Run the full losses x contamination-levels x seeds grid.
    Sweep(SweepArgs),
    /// Optimize the robos loss hyperparameters (a, eps, lambda).
    Hpo(HpoArgs),
    /// Export loss value/gradient curves as CSV.
    Profile(ProfileArgs),
    /// Evaluate the generalization bound for a saved checkpoint.
    Bound(BoundArgs),
    /// Export a contaminated copy of a dataset for auditing.
    Inject(InjectArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV (single column, or timestamp,value with header)
    #[arg(long)]
    data: PathBuf,
    /// Value column name (requires a header row)
    #[arg(long)]
    column: Option<String>,
    /// Built-in architecture preset: daily_min_temperature,
    /// electricity_load, monthly_sunspots, daily_gold_price
    #[arg(long)]
    preset: Option<String>,
    /// Dataset name used in reports (defaults to preset or file stem)
    #[arg(long)]
    name: Option<String>,
    /// Input window length
    #[arg(long)]
    seq_size: Option<usize>,
    /// Number of hidden dense layers
    #[arg(long)]
    layers: Option<usize>,
    /// Width of each hidden layer
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    /// L2 regularization coefficient on all parameters
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Chronological train fraction of the windows
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Outlier magnitude range in clean-series sigma units
    #[arg(long, default_value_t = 3.0)]
    magnitude_lo: f64,
    #[arg(long, default_value_t = 5.0)]
    magnitude_hi: f64,
}

impl DataArgs {
    fn resolve(&self) -> Result<ExperimentConfig, UsageError> {
        let preset_cfg = match &self.preset {
            Some(name) => Some(preset(name).ok_or_else(|| {
                UsageError(format!(
                    "unknown preset {name:?}; available: {:?}",
                    preset_names()
                ))
            })?),
            None => None,
        };
        let dataset_name = self
            .name
            .clone()
            .or_else(|| self.preset.clone())
            .or_else(|| {
                self.data
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
            })
            .unwrap_or_else(|| "dataset".to_string());
        Ok(ExperimentConfig {
            dataset_path: self.data.display().to_string(),
            dataset_name,
            value_column: self.column.clone(),
            seq_size: self
                .seq_size
                .or(preset_cfg.map(|p| p.seq_size))
                .unwrap_or(30),
            dense_layers: self
                .layers
                .or(preset_cfg.map(|p| p.dense_layers))
                .unwrap_or(2),
            units: self.units.or(preset_cfg.map(|p| p.units)).unwrap_or(32),
            batch_size: self
                .batch_size
                .or(preset_cfg.map(|p| p.batch_size))
                .unwrap_or(32),
            learning_rate: self
                .lr
                .or(preset_cfg.map(|p| p.learning_rate))
                .unwrap_or(0.001),
            patience: self.patience.or(preset_cfg.map(|p| p.patience)).unwrap_or(5),
            max_epochs: self.max_epochs,
            l2_coeff: self.l2,
            train_frac: self.train_frac,
            magnitude_lo: self.magnitude_lo,
            magnitude_hi: self.magnitude_hi,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Loss spec, e.g. square, huber:delta=0.8, robos:a=1,lambda=0.25,eps=0.02
    #[arg(long, default_value = "robos")]
    loss: String,
    /// Contamination fraction of the train region
    #[arg(long, default_value_t = 0.0)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for metrics.json, history.csv, checkpoint.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated loss specs, or `all`
    #[arg(long, value_delimiter = ',', default_value = "all")]
    losses: Vec<String>,
    /// Comma-separated contamination fractions
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.05, 0.10, 0.20, 0.30])]
    levels: Vec<f64>,
    /// Comma-separated seeds; each cell is averaged over them
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    /// Max concurrent cells (defaults to the rayon global pool)
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Random,
    Tpe,
}

#[derive(Args)]
struct HpoArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = StrategyArg::Random)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value_t = 0.0)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TPE best-fraction split
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    /// Override the `a` range, as lo,hi
    #[arg(long)]
    a_range: Option<String>,
    /// Override the `eps` range (log-uniform), as lo,hi
    #[arg(long)]
    eps_range: Option<String>,
    /// Override the `lambda` range, as lo,hi
    #[arg(long)]
    lambda_range: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    /// Loss specs to export (repeatable)
    #[arg(long)]
    loss: Vec<String>,
    /// Expand robos specs varying `a` over these values, e.g. 1,2,5
    #[arg(long)]
    vary_a: Option<String>,
    /// Expand robos specs varying `lambda` over these values
    #[arg(long)]
    vary_lambda: Option<String>,
    /// Residual range as lo,hi
    #[arg(long, default_value = "-5,5")]
    range: String,
    #[arg(long, default_value_t = 201)]
    points: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    /// checkpoint.json written by `robos train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset CSV override (defaults to the path in the checkpoint)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Confidence parameter in (0, 1)
    #[arg(long, default_value_t = 0.05)]
    eps_conf: f64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.1)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(text: &str, flag: &str) -> Result<(f64, f64), UsageError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(UsageError(format!("{flag} expects lo,hi; got {text:?}")));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| UsageError(format!("{flag}: cannot parse {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| UsageError(format!("{flag}: cannot parse {:?}", parts[1])))?;
    Ok((lo, hi))
}

fn parse_values(text: &str, flag: &str) -> Result<Vec<f64>, UsageError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| UsageError(format!("{flag}: cannot parse {s:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.data.resolve()?;
            let loss = lossarg::parse_loss(&args.loss)?;
            commands::cmd_train(&cfg, &loss, args.level, args.seed, &args.out)?;
            Ok(())
        }
        Command::Sweep(args) => {
            let cfg = args.data.resolve()?;
            let losses = lossarg::parse_loss_list(&args.losses)?;
            let table = commands::cmd_sweep(
                &cfg,
                &losses,
                &args.levels,
                &args.seeds,
                args.jobs,
                &args.out,
            )?;
            if !table.failures.is_empty() {
                return Err(robos_cli::SweepFailures {
                    failed: table.failures.len(),
                    total: table.cells.len() + table.failures.len(),
                    divergences: table.failures.iter().filter(|f| f.divergence).count(),
                }
                .into());
            }
            Ok(())
        }
        Command::Hpo(args) => {
            let cfg = args.data.resolve()?;
            let mut space = SearchSpace::default();
            if let Some(text) = &args.a_range {
                let (lo, hi) = parse_pair(text, "--a-range")?;
                space.a = ParamRange::linear(lo, hi);
            }
            if let Some(text) = &args.eps_range {
                let (lo, hi) = parse_pair(text, "--eps-range")?;
                space.eps = ParamRange::log(lo, hi);
            }
            if let Some(text) = &args.lambda_range {
                let (lo, hi) = parse_pair(text, "--lambda-range")?;
                space.lambda = ParamRange::linear(lo, hi);
            }
            let strategy = match args.strategy {
                StrategyArg::Random => Strategy::Random,
                StrategyArg::Tpe => Strategy::Tpe,
            };
            commands::cmd_hpo(
                &cfg,
                args.level,
                strategy,
                args.trials,
                args.seed,
                args.gamma,
                &space,
                &args.out,
            )?;
            Ok(())
        }
        Command::Profile(args) => {
            let mut specs: Vec<LossSpec> = args
                .loss
                .iter()
                .map(|s| lossarg::parse_loss(s))
                .collect::<Result<_, _>>()?;
            if let Some(text) = &args.vary_a {
                for a in parse_values(text, "--vary-a")? {
                    specs.push(LossSpec::robos(
                        a,
                        lossarg::DEFAULT_ROBOS_LAMBDA,
                        lossarg::DEFAULT_ROBOS_EPS,
                    ));
                }
            }
            if let Some(text) = &args.vary_lambda {
                for lambda in parse_values(text, "--vary-lambda")? {
                    specs.push(LossSpec::robos(
                        lossarg::DEFAULT_ROBOS_A,
                        lambda,
                        lossarg::DEFAULT_ROBOS_EPS,
                    ));
                }
            }
            let (r_min, r_max) = parse_pair(&args.range, "--range")?;
            commands::cmd_profile(&specs, r_min, r_max, args.points, &args.out)?;
            Ok(())
        }
        Command::Bound(args) => {
            commands::cmd_bound(
                &args.checkpoint,
                args.data.as_deref(),
                args.eps_conf,
                args.out.as_deref(),
            )?;
            Ok(())
        }
        Command::Inject(args) => {
            let cfg = args.data.resolve()?;
            commands::cmd_inject(&cfg, args.level, args.seed, &args.out)?;
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and exit 0; real parse
            // problems are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
