//! Command-line front end.
//!
//! Settings can also come from a `key=value` file given with `--config`;
//! keys are long flag names (`-` or `_` both accepted) and explicit flags
//! win over file values. Every random choice derives from `--seed`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::bench::{
    ablate, build_ffnn, build_ffnn_bag, build_ffnn_lgt, metric_mae, run_experiment, write_ablation_csv, DataSource,
    ExperimentConfig, ExperimentMeta, ModelKind, SweepGrid, TrainedModel,
};
use crate::datagen::{generate, read_dataset_csv, read_inputs_csv, write_dataset_csv, Dataset, Projection, Subpattern, SyntheticSpec};
use crate::error::{PcnnError, Result};
use crate::ffnn::{Activation, Loss, TrainConfig, TrainMode};
use crate::numerics::{derive_seed, streams, Rng};
use crate::partition::{write_geometry_csv, write_partition_csv, DataPartition};
use crate::pcnn::{build_partition, train_pcnn, PartitionSource, PcnnConfig, Routing};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const CONFIG: i32 = 4;
    pub const DATA: i32 = 5;
    pub const NUMERICAL: i32 = 6;
}

fn exit_code(category: &str) -> i32 {
    match category {
        "io" => exit::IO,
        "config" => exit::CONFIG,
        "data" => exit::DATA,
        "numerical" => exit::NUMERICAL,
        _ => exit::USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "pcnn", version, about = "Piecewise-continuous neural networks", args_override_self = true)]
pub struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// key=value settings file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Maximum number of subpatterns trained concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic two-pattern dataset.
    Gen {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition the inputs of a dataset.
    Partition {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long)]
        n_parts: Option<usize>,
        /// Row-to-part assignments.
        #[arg(long)]
        out: PathBuf,
        /// Part anchors and radius.
        #[arg(long)]
        geometry: Option<PathBuf>,
    },
    /// Train one model on the training rows and save it.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "pcnn")]
        model: ModelKind,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Overrides the saved routing of a PCNN.
        #[arg(long)]
        routing: Option<Routing>,
        /// Overrides the saved threshold of a PCNN.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score benchmark models on one dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "ffnn,ffnn_rnd,ffnn_bag,ffnn_lgt,pcnn")]
        models: Vec<ModelKind>,
        #[command(flatten)]
        train: TrainArgs,
        /// Test share used when the data has no test rows.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment per point of a parameter grid.
    Ablate {
        /// `name=v1,v2,...` with name in n_parts, sigma, nu, r, n_data.
        #[arg(long = "sweep", required = true)]
        sweeps: Vec<String>,
        /// Fixed dataset; without it data is generated from the synthetic flags.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "pcnn")]
        models: Vec<ModelKind>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 30.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.25)]
    pub r: f64,
    #[arg(long, default_value = "exp_cos")]
    pub f1: Subpattern,
    #[arg(long, default_value = "neg_quad_cos")]
    pub f2: Subpattern,
    /// `gaussian` or `unit`.
    #[arg(long, default_value = "gaussian")]
    pub projection: String,
    #[arg(long = "gen-test-fraction", default_value_t = 0.2)]
    pub gen_test_fraction: f64,
}

impl SynthArgs {
    fn spec(&self, seed: u64) -> Result<SyntheticSpec> {
        let projection = match self.projection.as_str() {
            "gaussian" => Projection::Gaussian,
            "unit" => Projection::Unit,
            other => return Err(PcnnError::InvalidArgument(format!("unknown projection `{other}`"))),
        };
        let spec = SyntheticSpec {
            d: self.d,
            n: self.n,
            sigma: self.sigma,
            nu: self.nu,
            r: self.r,
            f1: self.f1,
            f2: self.f2,
            projection,
            test_fraction: self.gen_test_fraction,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Hidden widths of each subpattern.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    /// Hidden widths of the classifier (empty for logistic).
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub classifier_hidden: Vec<usize>,
    #[arg(long, default_value = "relu")]
    pub activation: Activation,
    #[arg(long, default_value = "gradient")]
    pub mode: TrainMode,
    #[arg(long, default_value = "mae")]
    pub loss: Loss,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Exact number of Adam updates; overrides --epochs.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub ridge_lambda: f64,
    #[arg(long)]
    pub classifier_epochs: Option<usize>,
    #[arg(long)]
    pub classifier_steps: Option<usize>,
    #[arg(long)]
    pub classifier_lr: Option<f64>,
    /// Remainder threshold of the randomized partition.
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,
    /// Requested part count (best effort).
    #[arg(long)]
    pub n_parts: Option<usize>,
    /// `random`, or `expert` to use the data's part column.
    #[arg(long, default_value = "random")]
    pub partition: String,
    /// Share the hidden widths across the subpatterns.
    #[arg(long)]
    pub split_budget: bool,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value = "argmax")]
    pub routing: Routing,
}

impl TrainArgs {
    fn config(&self, jobs: usize) -> Result<PcnnConfig> {
        let sub = TrainConfig {
            mode: self.mode,
            epochs: self.epochs,
            batch_size: self.batch_size,
            steps: self.steps,
            learning_rate: self.lr,
            ridge_lambda: self.ridge_lambda,
            loss: self.loss,
            ..TrainConfig::default()
        };
        let clf = TrainConfig {
            mode: TrainMode::Gradient,
            epochs: self.classifier_epochs.unwrap_or(self.epochs),
            steps: self.classifier_steps.or(self.steps),
            learning_rate: self.classifier_lr.unwrap_or(self.lr),
            loss: Loss::BinaryCrossEntropy,
            ..sub.clone()
        };
        sub.validate()?;
        clf.validate()?;
        if self.loss == Loss::BinaryCrossEntropy {
            return Err(PcnnError::InvalidArgument("bce is not a regression loss".into()));
        }
        if self.hidden.contains(&0) || self.classifier_hidden.contains(&0) {
            return Err(PcnnError::InvalidArgument("hidden widths must be >= 1".into()));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(PcnnError::InvalidArgument(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PcnnError::InvalidArgument(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if jobs == 0 {
            return Err(PcnnError::InvalidArgument("jobs must be >= 1".into()));
        }
        let partition = match (self.partition.as_str(), self.n_parts) {
            ("random", None) => PartitionSource::Random { q: self.q },
            ("random", Some(0)) => return Err(PcnnError::InvalidArgument("n_parts must be >= 1".into())),
            ("random", Some(n)) => PartitionSource::TargetParts(n),
            // filled in once the data is loaded
            ("expert", _) => PartitionSource::Given(DataPartition::whole(0)),
            (other, _) => return Err(PcnnError::InvalidArgument(format!("unknown partition `{other}`"))),
        };
        Ok(PcnnConfig {
            subpattern_hidden: self.hidden.clone(),
            subpattern_activation: self.activation,
            classifier_hidden: self.classifier_hidden.clone(),
            classifier_activation: self.activation,
            subpattern_train: sub,
            classifier_train: clf,
            partition,
            split_budget: self.split_budget,
            gamma: self.gamma,
            routing: self.routing,
            jobs,
        })
    }
}

/// Replaces a placeholder expert partition with the data's part column.
fn resolve_partition(cfg: &mut PcnnConfig, train: &Dataset) -> Result<()> {
    if let PartitionSource::Given(_) = cfg.partition {
        let labels = train
            .part_labels()
            .ok_or_else(|| PcnnError::MissingColumn("part".into()))?;
        cfg.partition = PartitionSource::Given(DataPartition::from_labels(labels));
    }
    Ok(())
}

/// Tags a random test share when the data has none.
fn ensure_test_split(data: Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if data.test().is_empty() {
        data.split_random(fraction, &mut Rng::new(derive_seed(seed, streams::SPLIT)))
    } else {
        Ok(data)
    }
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| PcnnError::InvalidArgument(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts config-file settings right after the subcommand name so that
/// later (explicit) flags override them. Keys known to some other
/// subcommand are skipped; unknown keys are an error.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| PcnnError::io(&path, e))?;
    let entries = parse_config(&text)?;
    let cmd = Cli::command();
    let Some(pos) = args
        .iter()
        .position(|a| cmd.get_subcommands().any(|s| s.get_name() == a.to_string_lossy()))
    else {
        return Ok(args);
    };
    let sub = cmd
        .find_subcommand(args[pos].to_string_lossy().as_ref())
        .expect("position found a subcommand");
    let mut inserted = Vec::new();
    for (key, value) in entries {
        let known_here = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str()));
        let known_globally = cmd.get_arguments().any(|a| a.get_long() == Some(key.as_str()));
        if key == "config" {
            continue;
        }
        match known_here {
            Some(arg) if !arg.get_action().takes_values() => {
                let on: bool = value
                    .parse()
                    .map_err(|_| PcnnError::InvalidArgument(format!("config `{key}`: expected true or false")))?;
                if on {
                    inserted.push(OsString::from(format!("--{key}")));
                }
            }
            Some(_) => {
                inserted.push(OsString::from(format!("--{key}")));
                inserted.push(OsString::from(value));
            }
            None if known_globally => {
                inserted.push(OsString::from(format!("--{key}")));
                inserted.push(OsString::from(value));
            }
            None if cmd
                .get_subcommands()
                .any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str()))) => {}
            None => return Err(PcnnError::InvalidArgument(format!("unknown config key `{key}`"))),
        }
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(inserted);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

fn report_error(category: &str, message: &str) -> i32 {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error kind={category}: {one_line}");
    exit_code(category)
}

/// Runs the program on `args` (including the program name) and returns the
/// exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => return report_error(e.category(), &e.to_string()),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return exit::OK;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            return report_error("usage", first);
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => report_error(e.category(), &e.to_string()),
    }
}

fn load(path: &Path) -> Result<Dataset> {
    read_dataset_csv(path)
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen { synth, out } => {
            let spec = synth.spec(seed)?;
            let data = generate(&spec, &mut Rng::new(seed))?;
            write_dataset_csv(&out, &data)?;
            println!("wrote {} rows to {}", data.len(), out.display());
        }
        Command::Partition {
            data,
            q,
            n_parts,
            out,
            geometry,
        } => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(PcnnError::InvalidArgument(format!("q must lie in (0, 1], got {q}")));
            }
            let data = load(&data)?;
            let source = match n_parts {
                Some(0) => return Err(PcnnError::InvalidArgument("n_parts must be >= 1".into())),
                Some(n) => PartitionSource::TargetParts(n),
                None => PartitionSource::Random { q },
            };
            let (partition, geo) = build_partition(data.inputs(), &source, seed)?;
            write_partition_csv(&out, &partition, data.len())?;
            if let Some(g) = geometry {
                write_geometry_csv(&g, &geo)?;
            }
            println!(
                "parts={} alpha={} iterations={} q={}",
                partition.len(),
                partition.alpha,
                partition.iterations,
                partition.q
            );
        }
        Command::Train {
            data,
            model,
            train,
            out,
        } => {
            let mut cfg = train.config(cli.jobs)?;
            let data = load(&data)?.train();
            resolve_partition(&mut cfg, &data)?;
            let trained = train_model(model, &data, &cfg, seed)?;
            trained.save(&out)?;
            let fit = metric_mae(&trained.predict(data.inputs())?, data.targets())?;
            println!(
                "model={} parts={} params={} train_mae={}",
                model,
                trained.n_parts(),
                trained.parameter_count(),
                fit
            );
        }
        Command::Predict {
            model,
            data,
            routing,
            gamma,
            out,
        } => {
            let mut model = TrainedModel::load(&model)?;
            if let TrainedModel::Routed(p) = model {
                let p = if let Some(r) = routing { p.with_routing(r) } else { p };
                let p = if let Some(g) = gamma { p.with_gamma(g)? } else { p };
                model = TrainedModel::Routed(p);
            }
            let inputs = read_inputs_csv(&data)?;
            if inputs.cols() != model.input_dim() {
                return Err(PcnnError::DimensionMismatch(format!(
                    "model expects {} inputs, data has {}",
                    model.input_dim(),
                    inputs.cols()
                )));
            }
            let pred = model.predict(&inputs)?;
            let parts = model.assignments(&inputs)?;
            write_predictions(&out, &pred, &parts)?;
            println!("wrote {} predictions to {}", pred.rows(), out.display());
        }
        Command::Eval {
            data,
            models,
            train,
            test_fraction,
            out,
        } => {
            let mut cfg = train.config(cli.jobs)?;
            let data = ensure_test_split(load(&data)?, test_fraction, seed)?;
            resolve_partition(&mut cfg, &data.train())?;
            let exp = ExperimentConfig { models, pcnn: cfg, seed };
            let output = run_experiment(&data, &exp, ExperimentMeta::for_data(&data, seed))?;
            print!("{}", output.report.to_table());
            if let Some(out) = out {
                output.report.write_csv(out)?;
            }
        }
        Command::Ablate {
            sweeps,
            data,
            models,
            synth,
            train,
            test_fraction,
            out,
        } => {
            let mut grid = SweepGrid::default();
            for s in &sweeps {
                grid.add(s)?;
            }
            let mut cfg = train.config(cli.jobs)?;
            if matches!(cfg.partition, PartitionSource::Given(_)) {
                return Err(PcnnError::InvalidArgument("ablate does not support the expert partition".into()));
            }
            let source = match data {
                Some(p) => DataSource::Fixed(ensure_test_split(load(&p)?, test_fraction, seed)?),
                None => DataSource::Synthetic(synth.spec(seed)?),
            };
            cfg.jobs = cli.jobs;
            let exp = ExperimentConfig { models, pcnn: cfg, seed };
            let results = ablate(&grid, &source, &exp)?;
            for (p, report) in &results {
                println!("[{p}]");
                print!("{}", report.to_table());
            }
            write_ablation_csv(&out, &results)?;
        }
    }
    Ok(())
}

fn train_model(kind: ModelKind, data: &Dataset, cfg: &PcnnConfig, seed: u64) -> Result<TrainedModel> {
    Ok(match kind {
        ModelKind::Ffnn => TrainedModel::Single(build_ffnn(data, cfg, seed)?),
        ModelKind::FfnnRnd => {
            let mut c = cfg.clone();
            c.subpattern_train.mode = TrainMode::RandomReadout;
            TrainedModel::Single(build_ffnn(data, &c, seed)?)
        }
        ModelKind::FfnnBag => {
            let (p, _) = build_partition(data.inputs(), &cfg.partition, seed)?;
            TrainedModel::Bag(build_ffnn_bag(&p, data, cfg, seed)?)
        }
        ModelKind::FfnnLgt => {
            let (p, _) = build_partition(data.inputs(), &cfg.partition, seed)?;
            TrainedModel::Routed(build_ffnn_lgt(&p, data, cfg, seed)?)
        }
        ModelKind::Pcnn => TrainedModel::Routed(train_pcnn(data, cfg, seed)?.model),
    })
}

/// `yhat0..`, then `part` (empty when no deep zero-set claims the row).
fn write_predictions(path: &Path, pred: &crate::numerics::Matrix, parts: &[Option<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..pred.cols()).map(|i| format!("yhat{i}")).collect();
    header.push("part".into());
    w.write_record(&header)?;
    for (row, part) in pred.iter_rows().zip(parts) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(part.map(|p| p.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| PcnnError::io(path, e))
}
