//! Benchmark models, error metrics, timing and the ablation runner.

use std::fmt::{self, Write as _};
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::datagen::{generate, Dataset, SyntheticSpec};
use crate::error::{PcnnError, Result};
use crate::ffnn::{Mlp, TrainMode};
use crate::numerics::Matrix;
use crate::partition::DataPartition;
use crate::pcnn::{
    build_partition, compute_labels, fit_classifier, fit_subpatterns, PartitionSource, PcnnConfig, PcnnModel,
};

fn check_shapes(pred: &Matrix, truth: &Matrix) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(PcnnError::DimensionMismatch(format!(
            "prediction shape {:?} vs truth shape {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.rows() == 0 {
        return Err(PcnnError::EmptyDataset);
    }
    Ok(())
}

/// Mean absolute error over all entries.
pub fn metric_mae(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    check_shapes(pred, truth)?;
    let s: f64 = pred.as_slice().iter().zip(truth.as_slice()).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.as_slice().len() as f64)
}

/// Mean squared error over all entries.
pub fn metric_mse(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    check_shapes(pred, truth)?;
    let s: f64 = pred.as_slice().iter().zip(truth.as_slice()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.as_slice().len() as f64)
}

/// Mean absolute percentage error and the number of rows left out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mape {
    /// Fraction, not percent.
    pub value: f64,
    /// Rows whose truth has zero norm.
    pub skipped: usize,
}

/// Mean over rows of `‖pred − truth‖ / ‖truth‖`; rows with zero truth are
/// skipped.
pub fn metric_mape(pred: &Matrix, truth: &Matrix) -> Result<Mape> {
    check_shapes(pred, truth)?;
    let (mut sum, mut used) = (0.0, 0usize);
    for (p, t) in pred.iter_rows().zip(truth.iter_rows()) {
        let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        sum += crate::numerics::euclidean(p, t) / norm;
        used += 1;
    }
    if used == 0 {
        return Err(PcnnError::UndefinedMetric("MAPE is undefined when every truth row is zero".into()));
    }
    Ok(Mape {
        value: sum / used as f64,
        skipped: truth.rows() - used,
    })
}

/// Benchmarked model families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Ffnn,
    FfnnRnd,
    FfnnBag,
    FfnnLgt,
    Pcnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Ffnn,
        ModelKind::FfnnRnd,
        ModelKind::FfnnBag,
        ModelKind::FfnnLgt,
        ModelKind::Pcnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ffnn => "FFNN",
            ModelKind::FfnnRnd => "FFNN-RND",
            ModelKind::FfnnBag => "FFNN-BAG",
            ModelKind::FfnnLgt => "FFNN-LGT",
            ModelKind::Pcnn => "PCNN",
        }
    }

    fn uses_partition(self) -> bool {
        matches!(self, ModelKind::FfnnBag | ModelKind::FfnnLgt | ModelKind::Pcnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = PcnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ffnn" => Ok(ModelKind::Ffnn),
            "ffnn_rnd" | "rnd" => Ok(ModelKind::FfnnRnd),
            "ffnn_bag" | "bag" => Ok(ModelKind::FfnnBag),
            "ffnn_lgt" | "lgt" => Ok(ModelKind::FfnnLgt),
            "pcnn" => Ok(ModelKind::Pcnn),
            other => Err(PcnnError::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

/// Unconditional sum of per-part networks.
#[derive(Clone, Debug, PartialEq)]
pub struct BagModel {
    members: Vec<Mlp>,
}

impl BagModel {
    pub fn new(members: Vec<Mlp>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| PcnnError::InvalidArgument("a bagged model needs at least one member".into()))?;
        if members
            .iter()
            .any(|m| m.input_dim() != first.input_dim() || m.output_dim() != first.output_dim())
        {
            return Err(PcnnError::DimensionMismatch("bag members must share dimensions".into()));
        }
        Ok(BagModel { members })
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut acc = self.members[0].forward(inputs)?;
        for m in &self.members[1..] {
            acc = acc.add(&m.forward(inputs)?)?;
        }
        Ok(acc)
    }

    pub fn parameter_count(&self) -> usize {
        self.members.iter().map(Mlp::parameter_count).sum()
    }
}

/// Any trained benchmark model.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Single(Mlp),
    Bag(BagModel),
    Routed(PcnnModel),
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Single(m) => m.input_dim(),
            TrainedModel::Bag(b) => b.members[0].input_dim(),
            TrainedModel::Routed(p) => p.input_dim(),
        }
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        match self {
            TrainedModel::Single(m) => m.forward(inputs),
            TrainedModel::Bag(b) => b.predict(inputs),
            TrainedModel::Routed(p) => p.predict(inputs),
        }
    }

    /// Part each row is routed to: 0 for unrouted models, and under
    /// threshold routing the lowest member (`None` if there is none).
    pub fn assignments(&self, inputs: &Matrix) -> Result<Vec<Option<usize>>> {
        match self {
            TrainedModel::Routed(p) => Ok(p.route_batch(inputs)?.into_iter().map(|r| r.first().copied()).collect()),
            _ => Ok(vec![Some(0); inputs.rows()]),
        }
    }

    pub fn n_parts(&self) -> usize {
        match self {
            TrainedModel::Single(_) => 1,
            TrainedModel::Bag(b) => b.members.len(),
            TrainedModel::Routed(p) => p.n_parts(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            TrainedModel::Single(m) => m.parameter_count(),
            TrainedModel::Bag(b) => b.parameter_count(),
            TrainedModel::Routed(p) => p.parameter_count(),
        }
    }

    /// Mean number of parameters that process a row of `inputs`.
    pub fn mean_active_parameters(&self, inputs: &Matrix) -> Result<f64> {
        match self {
            TrainedModel::Routed(p) => p.mean_active_parameters(inputs),
            _ => Ok(self.parameter_count() as f64),
        }
    }

    /// Hidden neurons summed over the regression networks (classifiers excluded).
    pub fn hidden_neurons(&self) -> usize {
        fn hidden(m: &Mlp) -> usize {
            let dims = m.dims();
            dims[1..dims.len() - 1].iter().sum()
        }
        match self {
            TrainedModel::Single(m) => hidden(m),
            TrainedModel::Bag(b) => b.members.iter().map(hidden).sum(),
            TrainedModel::Routed(p) => p.subpatterns().iter().map(hidden).sum(),
        }
    }

    /// Writes the model. Single networks and PCNNs use their own formats;
    /// bags are `PCNNBAG\0`, member count u32, then the members.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        match self {
            TrainedModel::Single(m) => m.write_to(w),
            TrainedModel::Routed(p) => p.write_to(w),
            TrainedModel::Bag(b) => {
                let mut head = BAG_MAGIC.to_vec();
                head.extend_from_slice(&(b.members.len() as u32).to_le_bytes());
                w.write_all(&head).map_err(|e| PcnnError::Format(e.to_string()))?;
                b.members.iter().try_for_each(|m| m.write_to(w))
            }
        }
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| PcnnError::Format(e.to_string()))?;
        if &magic == BAG_MAGIC {
            let n = crate::ffnn::io::read_u32(r)? as usize;
            let members = (0..n).map(|_| Mlp::read_from(r)).collect::<Result<Vec<_>>>()?;
            return Ok(TrainedModel::Bag(BagModel::new(members)?));
        }
        let mut chained = magic.as_slice().chain(r);
        match &magic {
            b"PCNNMODL" => Ok(TrainedModel::Routed(PcnnModel::read_from(&mut chained)?)),
            b"PCNNMLP\0" => Ok(TrainedModel::Single(Mlp::read_from(&mut chained)?)),
            _ => Err(PcnnError::Format("unrecognized model file".into())),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| PcnnError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| PcnnError::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }
}

const BAG_MAGIC: &[u8; 8] = b"PCNNBAG\0";

/// Single network on the whole dataset; identical to the only subpattern of
/// a PCNN trained on the trivial partition with the same seed.
pub fn build_ffnn(data: &Dataset, cfg: &PcnnConfig, seed: u64) -> Result<Mlp> {
    let whole = DataPartition::whole(data.len());
    let cfg = PcnnConfig { jobs: 1, ..cfg.clone() };
    let (mut models, _, _) = fit_subpatterns(data, &whole.parts, &cfg, seed)?;
    Ok(models.remove(0))
}

/// One network per part, summed without routing.
pub fn build_ffnn_bag(partition: &DataPartition, data: &Dataset, cfg: &PcnnConfig, seed: u64) -> Result<BagModel> {
    let (models, _, _) = fit_subpatterns(data, &partition.parts, cfg, seed)?;
    BagModel::new(models)
}

/// PCNN whose classifier is a single affine layer with one sigmoid per part.
pub fn build_ffnn_lgt(partition: &DataPartition, data: &Dataset, cfg: &PcnnConfig, seed: u64) -> Result<PcnnModel> {
    let (subpatterns, _, _) = fit_subpatterns(data, &partition.parts, cfg, seed)?;
    let labels = compute_labels(&subpatterns, data, cfg.subpattern_train.loss)?;
    let classifier = fit_classifier(data, &labels, &logistic(cfg), seed)?;
    PcnnModel::new(subpatterns, classifier, cfg.gamma, cfg.routing)
}

fn logistic(cfg: &PcnnConfig) -> PcnnConfig {
    PcnnConfig {
        classifier_hidden: Vec::new(),
        ..cfg.clone()
    }
}

/// Settings of one benchmark run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    /// Shared by every model. `FFNN` and `FFNN-RND` ignore the partition
    /// and budget split; `FFNN-RND` switches to random-readout training.
    pub pcnn: PcnnConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: ModelKind::ALL.to_vec(),
            pcnn: PcnnConfig::default(),
            seed: 0,
        }
    }
}

/// One line of a report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub mae: f64,
    pub mse: f64,
    pub mape: f64,
    pub mape_skipped: usize,
    pub p_time_seconds: f64,
    pub l_time_seconds: f64,
    pub params_total: usize,
    pub params_per_input_mean: f64,
    pub n_parts: usize,
    pub hidden_neurons: usize,
    /// Set when the model failed; metrics are then NaN.
    pub error: Option<String>,
}

impl ReportRow {
    fn failed(kind: ModelKind, err: String) -> ReportRow {
        ReportRow {
            name: kind.name().into(),
            mae: f64::NAN,
            mse: f64::NAN,
            mape: f64::NAN,
            mape_skipped: 0,
            p_time_seconds: f64::NAN,
            l_time_seconds: f64::NAN,
            params_total: 0,
            params_per_input_mean: f64::NAN,
            n_parts: 0,
            hidden_neurons: 0,
            error: Some(err),
        }
    }
}

/// Description of the data a report was produced on. Synthetic-only fields
/// are `None` for loaded data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentMeta {
    pub d: usize,
    pub sigma: Option<f64>,
    pub n_data: usize,
    pub nu: Option<f64>,
    pub r: Option<f64>,
    pub seed: u64,
}

impl ExperimentMeta {
    pub fn for_data(data: &Dataset, seed: u64) -> Self {
        ExperimentMeta {
            d: data.input_dim(),
            n_data: data.len(),
            seed,
            ..Default::default()
        }
    }

    pub fn for_synthetic(spec: &SyntheticSpec, seed: u64) -> Self {
        ExperimentMeta {
            d: spec.d,
            sigma: Some(spec.sigma),
            n_data: spec.n,
            nu: Some(spec.nu),
            r: Some(spec.r),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
    pub meta: ExperimentMeta,
}

impl BenchmarkReport {
    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// `metric(model) / metric(FFNN)` for MAE, if both rows succeeded.
    pub fn mae_ratio(&self, model: ModelKind) -> Option<f64> {
        let base = self.row(ModelKind::Ffnn.name())?.mae;
        let m = self.row(model.name())?.mae;
        (base.is_finite() && m.is_finite()).then(|| m / base)
    }

    pub const CSV_HEADER: [&'static str; 17] = [
        "model",
        "mae",
        "p_time_s",
        "l_time_s",
        "params_per_input",
        "n_parts",
        "d",
        "sigma",
        "n_data",
        "nu",
        "r",
        "mse",
        "mape",
        "mape_skipped",
        "params_total",
        "hidden_neurons",
        "error",
    ];

    /// Columns holding wall-clock measurements.
    pub const TIME_COLUMNS: [&'static str; 2] = ["p_time_s", "l_time_s"];

    fn csv_record(&self, row: &ReportRow) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        vec![
            row.name.clone(),
            row.mae.to_string(),
            row.p_time_seconds.to_string(),
            row.l_time_seconds.to_string(),
            row.params_per_input_mean.to_string(),
            row.n_parts.to_string(),
            self.meta.d.to_string(),
            opt(self.meta.sigma),
            self.meta.n_data.to_string(),
            opt(self.meta.nu),
            opt(self.meta.r),
            row.mse.to_string(),
            row.mape.to_string(),
            row.mape_skipped.to_string(),
            row.params_total.to_string(),
            row.hidden_neurons.to_string(),
            row.error.clone().unwrap_or_default(),
        ]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(Self::CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(self.csv_record(row))?;
        }
        w.flush().map_err(|e| PcnnError::io(path, e))
    }

    /// Fixed-width table in the CSV's column order.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<9} {:>11} {:>9} {:>9} {:>10} {:>6} {:>4} {:>7} {:>7} {:>6} {:>6}",
            "model", "MAE", "P.Time", "L.Time", "#Par/x", "#Parts", "d", "sigma", "#Data", "nu", "r"
        );
        let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
        for row in &self.rows {
            let _ = write!(
                s,
                "{:<9} {:>11.4e} {:>9.3} {:>9.3} {:>10.1} {:>6} {:>4} {:>7} {:>7} {:>6} {:>6}",
                row.name,
                row.mae,
                row.p_time_seconds,
                row.l_time_seconds,
                row.params_per_input_mean,
                row.n_parts,
                self.meta.d,
                opt(self.meta.sigma),
                self.meta.n_data,
                opt(self.meta.nu),
                opt(self.meta.r),
            );
            if let Some(e) = &row.error {
                let _ = write!(s, "  error: {e}");
            }
            s.push('\n');
        }
        s
    }
}

fn csv_io(path: &Path, e: csv::Error) -> PcnnError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => PcnnError::io(path, e),
        other => PcnnError::Format(format!("{other:?}")),
    }
}

/// Models trained by one experiment, in request order.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: BenchmarkReport,
    pub models: Vec<(ModelKind, TrainedModel)>,
}

/// Trains every requested model on the train split and scores it on the
/// test split. Models that fail get an error row; the others still run.
///
/// The partitioned models share one partition and one set of subpatterns.
/// Their P. time counts the subpattern stage at `cfg.pcnn.jobs`
/// concurrency; L. time counts it sequentially (re-run when `jobs > 1`).
pub fn run_experiment(data: &Dataset, cfg: &ExperimentConfig, meta: ExperimentMeta) -> Result<ExperimentOutput> {
    let train = data.train();
    let test = data.test();
    if train.is_empty() || test.is_empty() {
        return Err(PcnnError::InvalidArgument(
            "an experiment needs non-empty train and test splits".into(),
        ));
    }
    let pc = &cfg.pcnn;
    let seed = cfg.seed;
    let mut rows = Vec::new();
    let mut models = Vec::new();

    let shared = if cfg.models.iter().any(|m| m.uses_partition()) {
        Some(shared_stage(&train, pc, seed))
    } else {
        None
    };

    for &kind in &cfg.models {
        let built: std::result::Result<(TrainedModel, Duration, Duration), String> = match kind {
            ModelKind::Ffnn | ModelKind::FfnnRnd => {
                let mut c = pc.clone();
                if kind == ModelKind::FfnnRnd {
                    c.subpattern_train.mode = TrainMode::RandomReadout;
                }
                let t0 = Instant::now();
                build_ffnn(&train, &c, seed)
                    .map(|m| {
                        let t = t0.elapsed();
                        (TrainedModel::Single(m), t, t)
                    })
                    .map_err(|e| e.to_string())
            }
            _ => match shared.as_ref().expect("shared stage computed") {
                Err(e) => Err(e.to_string()),
                Ok(s) => finish_partitioned(kind, &train, pc, seed, s).map_err(|e| e.to_string()),
            },
        };
        match built.and_then(|(m, p, l)| score(kind, &m, &test, p, l).map(|row| (m, row)).map_err(|e| e.to_string())) {
            Ok((m, row)) => {
                rows.push(row);
                models.push((kind, m));
            }
            Err(e) => rows.push(ReportRow::failed(kind, e)),
        }
    }
    Ok(ExperimentOutput {
        report: BenchmarkReport { rows, meta },
        models,
    })
}

struct Shared {
    subpatterns: Vec<Mlp>,
    /// Partition plus parallel subpattern stage.
    parallel: Duration,
    /// Partition plus sequential subpattern stage.
    linear: Duration,
}

fn shared_stage(train: &Dataset, pc: &PcnnConfig, seed: u64) -> Result<Shared> {
    let t0 = Instant::now();
    let (partition, _) = build_partition(train.inputs(), &pc.partition, seed)?;
    let partition_time = t0.elapsed();
    let (subpatterns, _, wall) = fit_subpatterns(train, &partition.parts, pc, seed)?;
    let linear = if pc.jobs > 1 {
        let seq = PcnnConfig { jobs: 1, ..pc.clone() };
        fit_subpatterns(train, &partition.parts, &seq, seed)?.2
    } else {
        wall
    };
    Ok(Shared {
        subpatterns,
        parallel: partition_time + wall,
        linear: partition_time + linear,
    })
}

fn finish_partitioned(
    kind: ModelKind,
    train: &Dataset,
    pc: &PcnnConfig,
    seed: u64,
    s: &Shared,
) -> Result<(TrainedModel, Duration, Duration)> {
    if kind == ModelKind::FfnnBag {
        let bag = BagModel::new(s.subpatterns.clone())?;
        return Ok((TrainedModel::Bag(bag), s.parallel, s.linear));
    }
    let t0 = Instant::now();
    let labels = compute_labels(&s.subpatterns, train, pc.subpattern_train.loss)?;
    let clf_cfg = if kind == ModelKind::FfnnLgt { logistic(pc) } else { pc.clone() };
    let classifier = fit_classifier(train, &labels, &clf_cfg, seed)?;
    let extra = t0.elapsed();
    let model = PcnnModel::new(s.subpatterns.clone(), classifier, pc.gamma, pc.routing)?;
    Ok((TrainedModel::Routed(model), s.parallel + extra, s.linear + extra))
}

fn score(kind: ModelKind, model: &TrainedModel, test: &Dataset, p: Duration, l: Duration) -> Result<ReportRow> {
    let pred = model.predict(test.inputs())?;
    let truth = test.targets();
    let (mape, mape_skipped) = match metric_mape(&pred, truth) {
        Ok(m) => (m.value, m.skipped),
        Err(PcnnError::UndefinedMetric(_)) => (f64::NAN, truth.rows()),
        Err(e) => return Err(e),
    };
    Ok(ReportRow {
        name: kind.name().into(),
        mae: metric_mae(&pred, truth)?,
        mse: metric_mse(&pred, truth)?,
        mape,
        mape_skipped,
        p_time_seconds: p.as_secs_f64(),
        l_time_seconds: l.as_secs_f64(),
        params_total: model.parameter_count(),
        params_per_input_mean: model.mean_active_parameters(test.inputs())?,
        n_parts: model.n_parts(),
        hidden_neurons: model.hidden_neurons(),
        error: None,
    })
}

/// Values swept by [`ablate`]; an empty list keeps the base value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepGrid {
    pub n_parts: Vec<usize>,
    pub sigma: Vec<f64>,
    pub nu: Vec<f64>,
    pub r: Vec<f64>,
    pub n_data: Vec<usize>,
}

impl SweepGrid {
    /// Parses `name=v1,v2,...`.
    pub fn add(&mut self, spec: &str) -> Result<()> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| PcnnError::InvalidArgument(format!("sweep `{spec}` is not name=v1,v2,...")))?;
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| PcnnError::InvalidArgument(format!("sweep `{key}`: cannot parse `{s}`")))
                })
                .collect()
        }
        match key.trim() {
            "n_parts" => self.n_parts = list(key, values)?,
            "sigma" => self.sigma = list(key, values)?,
            "nu" => self.nu = list(key, values)?,
            "r" => self.r = list(key, values)?,
            "n_data" => self.n_data = list(key, values)?,
            other => return Err(PcnnError::InvalidArgument(format!("cannot sweep `{other}`"))),
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.n_parts.is_empty() && !self.needs_regeneration()
    }

    fn needs_regeneration(&self) -> bool {
        !(self.sigma.is_empty() && self.nu.is_empty() && self.r.is_empty() && self.n_data.is_empty())
    }

    /// Cartesian product in the order n_parts, sigma, nu, r, n_data (last
    /// varies fastest).
    pub fn points(&self) -> Vec<GridPoint> {
        fn opts<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for &n_parts in &opts(&self.n_parts) {
            for &sigma in &opts(&self.sigma) {
                for &nu in &opts(&self.nu) {
                    for &r in &opts(&self.r) {
                        for &n_data in &opts(&self.n_data) {
                            out.push(GridPoint {
                                n_parts,
                                sigma,
                                nu,
                                r,
                                n_data,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One combination of swept values (`None` = base value).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GridPoint {
    pub n_parts: Option<usize>,
    pub sigma: Option<f64>,
    pub nu: Option<f64>,
    pub r: Option<f64>,
    pub n_data: Option<usize>,
}

impl std::fmt::Display for GridPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if let Some(v) = self.n_parts {
            parts.push(format!("n_parts={v}"));
        }
        if let Some(v) = self.sigma {
            parts.push(format!("sigma={v}"));
        }
        if let Some(v) = self.nu {
            parts.push(format!("nu={v}"));
        }
        if let Some(v) = self.r {
            parts.push(format!("r={v}"));
        }
        if let Some(v) = self.n_data {
            parts.push(format!("n_data={v}"));
        }
        if parts.is_empty() {
            f.write_str("base")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

/// Where ablation data comes from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// A fixed dataset; only `n_parts` can be swept.
    Fixed(Dataset),
    /// Regenerated at every grid point from the spec (its `seed` included).
    Synthetic(SyntheticSpec),
}

/// Runs one experiment per grid point. Every point reuses `base.seed`, so
/// the points differ only in the swept values. An `n_parts` value fixes the
/// part count of the partitioned models; with `split_budget` set the total
/// subpattern width stays the same across those points.
pub fn ablate(grid: &SweepGrid, source: &DataSource, base: &ExperimentConfig) -> Result<Vec<(GridPoint, BenchmarkReport)>> {
    if grid.is_empty() {
        return Err(PcnnError::InvalidArgument("ablation grid is empty".into()));
    }
    if grid.needs_regeneration() && matches!(source, DataSource::Fixed(_)) {
        return Err(PcnnError::InvalidArgument(
            "sigma, nu, r and n_data sweeps need synthetic data".into(),
        ));
    }
    let mut out = Vec::new();
    for point in grid.points() {
        let mut cfg = base.clone();
        if let Some(n) = point.n_parts {
            cfg.pcnn.partition = PartitionSource::TargetParts(n);
        }
        let (data, meta) = match source {
            DataSource::Fixed(d) => (d.clone(), ExperimentMeta::for_data(d, base.seed)),
            DataSource::Synthetic(spec) => {
                let mut spec = spec.clone();
                if let Some(v) = point.sigma {
                    spec.sigma = v;
                }
                if let Some(v) = point.nu {
                    spec.nu = v;
                }
                if let Some(v) = point.r {
                    spec.r = v;
                }
                if let Some(v) = point.n_data {
                    spec.n = v;
                }
                let data = generate(&spec, &mut crate::numerics::Rng::new(spec.seed))?;
                let meta = ExperimentMeta::for_synthetic(&spec, base.seed);
                (data, meta)
            }
        };
        let result = run_experiment(&data, &cfg, meta)?;
        out.push((point, result.report));
    }
    Ok(out)
}

/// Long-format ablation CSV: the swept values followed by the report columns.
pub fn write_ablation_csv(path: impl AsRef<Path>, results: &[(GridPoint, BenchmarkReport)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["point", "sweep_n_parts", "sweep_sigma", "sweep_nu", "sweep_r", "sweep_n_data"];
    header.extend(BenchmarkReport::CSV_HEADER);
    w.write_record(&header)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for (i, (p, report)) in results.iter().enumerate() {
        for row in &report.rows {
            let mut rec = vec![
                i.to_string(),
                opt(p.n_parts.map(|v| v.to_string())),
                opt(p.sigma.map(|v| v.to_string())),
                opt(p.nu.map(|v| v.to_string())),
                opt(p.r.map(|v| v.to_string())),
                opt(p.n_data.map(|v| v.to_string())),
            ];
            rec.extend(report.csv_record(row));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| PcnnError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{Projection, Split, Subpattern};
    use crate::ffnn::{Activation, Architecture, TrainConfig};
    use crate::numerics::Rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn metric_examples() {
        let t = Matrix::column(&[1.0, 2.0]).unwrap();
        assert_eq!(metric_mae(&t, &t).unwrap(), 0.0);
        assert_eq!(metric_mse(&t, &t).unwrap(), 0.0);
        assert_eq!(metric_mape(&t, &t).unwrap().value, 0.0);
        let p = t.map(|v| v + 1.0);
        assert_abs_diff_eq!(metric_mae(&p, &t).unwrap(), 1.0);
        assert_abs_diff_eq!(metric_mse(&p, &t).unwrap(), 1.0);
        assert_abs_diff_eq!(metric_mape(&p, &t).unwrap().value, 0.75);
    }

    #[test]
    fn mape_skips_zero_rows() {
        let t = Matrix::column(&[0.0, 2.0, 4.0]).unwrap();
        let p = Matrix::column(&[5.0, 3.0, 4.0]).unwrap();
        let m = metric_mape(&p, &t).unwrap();
        assert_eq!(m.skipped, 1);
        assert_abs_diff_eq!(m.value, 0.25);
        let z = Matrix::column(&[0.0, 0.0]).unwrap();
        assert!(matches!(metric_mape(&z, &z), Err(PcnnError::UndefinedMetric(_))));
        assert!(metric_mae(&z, &t).is_err());
    }

    fn constant(d: usize, v: f64) -> Mlp {
        let arch = Architecture::new(vec![d, 1], Activation::Identity);
        let mut params = vec![0.0; d];
        params.push(v);
        Mlp::from_params(&arch, params).unwrap()
    }

    #[test]
    fn bag_sums_members() {
        let bag = BagModel::new(vec![constant(2, 1.0), constant(2, 2.0)]).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.7, -3.0]]).unwrap();
        assert_eq!(bag.predict(&x).unwrap().as_slice(), &[3.0, 3.0]);
        assert_eq!(bag.parameter_count(), 6);
        let single = BagModel::new(vec![constant(2, 1.5)]).unwrap();
        assert_eq!(single.predict(&x).unwrap(), single.members()[0].forward(&x).unwrap());
    }

    fn small_config() -> PcnnConfig {
        let train = TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        PcnnConfig {
            subpattern_hidden: vec![8],
            classifier_hidden: vec![8],
            subpattern_train: train.clone(),
            classifier_train: TrainConfig {
                loss: crate::ffnn::Loss::BinaryCrossEntropy,
                ..train
            },
            partition: PartitionSource::TargetParts(2),
            ..PcnnConfig::default()
        }
    }

    fn step_data(n: usize, seed: u64) -> Dataset {
        let spec = SyntheticSpec {
            d: 1,
            n,
            r: 1.0,
            f1: Subpattern::Linear,
            f2: Subpattern::Affine {
                slope: 1.0,
                intercept: 2.0,
            },
            projection: Projection::Unit,
            seed,
            ..SyntheticSpec::default()
        };
        generate(&spec, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn ffnn_matches_single_part_pcnn() {
        let data = step_data(200, 1);
        let cfg = PcnnConfig {
            partition: PartitionSource::TargetParts(1),
            ..small_config()
        };
        let ffnn = build_ffnn(&data, &cfg, 9).unwrap();
        let pcnn = crate::pcnn::train_pcnn(&data, &cfg, 9).unwrap();
        assert_eq!(pcnn.model.n_parts(), 1);
        assert_eq!(
            ffnn.forward(data.inputs()).unwrap(),
            pcnn.model.predict(data.inputs()).unwrap()
        );
    }

    #[test]
    fn lgt_shares_subpatterns_with_pcnn() {
        let data = step_data(200, 2);
        let cfg = small_config();
        let trained = crate::pcnn::train_pcnn(&data, &cfg, 4).unwrap();
        let lgt = build_ffnn_lgt(&trained.partition, &data, &cfg, 4).unwrap();
        assert_eq!(lgt.subpatterns(), trained.model.subpatterns());
        assert_eq!(lgt.classifier().dims(), &[1, 2]);
        assert_eq!(lgt.classifier().parameter_count(), 2 * (1 + 1));
    }

    #[test]
    fn lgt_routes_separable_parts() {
        // Two constant subpatterns, one exact per side of x = 0.5.
        let mut rng = Rng::new(5);
        let xs: Vec<f64> = (0..400).map(|_| rng.next_f64()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 0.5 { 0.0 } else { 1.0 }).collect();
        let data = Dataset::new(Matrix::column(&xs).unwrap(), Matrix::column(&ys).unwrap()).unwrap();
        let labels = compute_labels(&[constant(1, 0.0), constant(1, 1.0)], &data, crate::ffnn::Loss::Mae).unwrap();
        let mut cfg = logistic(&small_config());
        cfg.classifier_train.epochs = 300;
        cfg.classifier_train.learning_rate = 0.05;
        let clf = fit_classifier(&data, &labels, &cfg, 3).unwrap();
        let model = PcnnModel::new(vec![constant(1, 0.0), constant(1, 1.0)], clf, 0.5, crate::pcnn::Routing::Argmax).unwrap();
        let probes: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let routes = model.route_batch(&Matrix::column(&probes).unwrap()).unwrap();
        let correct = probes
            .iter()
            .zip(&routes)
            .filter(|(&x, r)| r[0] == usize::from(x >= 0.5))
            .count();
        assert!(correct as f64 / 200.0 >= 0.95, "routing accuracy {}", correct as f64 / 200.0);
    }

    #[test]
    fn experiment_report_invariants() {
        let data = step_data(300, 3);
        let cfg = ExperimentConfig {
            pcnn: small_config(),
            seed: 8,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&data, &cfg, ExperimentMeta::for_data(&data, 8)).unwrap();
        assert_eq!(out.report.rows.len(), 5);
        for row in &out.report.rows {
            assert!(row.error.is_none(), "{row:?}");
            assert!(row.mae >= 0.0 && row.mse >= 0.0 && row.mape >= 0.0);
            assert!(row.params_per_input_mean <= row.params_total as f64);
        }
        let pcnn = out.report.row("PCNN").unwrap();
        let bag = out.report.row("FFNN-BAG").unwrap();
        assert!(pcnn.params_total > bag.params_total);
        assert_eq!(pcnn.n_parts, 2);
        let again = run_experiment(&data, &cfg, ExperimentMeta::for_data(&data, 8)).unwrap();
        for (a, b) in out.report.rows.iter().zip(&again.report.rows) {
            assert_eq!((a.mae, a.mse, a.mape, a.params_total), (b.mae, b.mse, b.mape, b.params_total));
        }
    }

    #[test]
    fn experiment_requires_both_splits() {
        let data = step_data(50, 4);
        let all_train = data.clone().with_split(vec![Split::Train; 50]).unwrap();
        assert!(run_experiment(&all_train, &ExperimentConfig::default(), ExperimentMeta::default()).is_err());
    }

    #[test]
    fn grid_expansion() {
        let mut g = SweepGrid::default();
        assert!(g.is_empty());
        g.add("n_parts=1,2,4").unwrap();
        g.add("sigma=0,0.1").unwrap();
        assert_eq!(g.points().len(), 6);
        assert!(g.add("depth=3").is_err());
        assert!(g.add("n_parts").is_err());
    }

    #[test]
    fn budget_sweep_keeps_neurons() {
        let data = step_data(200, 6);
        let mut grid = SweepGrid::default();
        grid.add("n_parts=1,2,4,8").unwrap();
        let mut pcnn = small_config();
        pcnn.subpattern_hidden = vec![16];
        pcnn.split_budget = true;
        pcnn.subpattern_train.epochs = 2;
        pcnn.classifier_train.epochs = 2;
        let cfg = ExperimentConfig {
            models: vec![ModelKind::Pcnn, ModelKind::FfnnBag],
            pcnn,
            seed: 1,
        };
        let results = ablate(&grid, &DataSource::Fixed(data), &cfg).unwrap();
        assert_eq!(results.len(), 4);
        assert_eq!(results[2].1.row("PCNN").unwrap().n_parts, 4);
        for (p, report) in &results {
            let row = report.row("PCNN").unwrap();
            // the part count is best-effort; the budget is exact
            assert!(row.n_parts <= p.n_parts.unwrap());
            assert_eq!(row.hidden_neurons, 16);
        }
    }

    #[test]
    fn fixed_data_rejects_data_sweeps() {
        let mut grid = SweepGrid::default();
        grid.add("sigma=0,0.1").unwrap();
        let data = step_data(50, 1);
        assert!(ablate(&grid, &DataSource::Fixed(data), &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let data = step_data(100, 7);
        let cfg = ExperimentConfig {
            pcnn: PcnnConfig {
                partition: PartitionSource::TargetParts(2),
                ..small_config()
            },
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&data, &cfg, ExperimentMeta::default()).unwrap();
        for (_, m) in &out.models {
            let mut buf = Vec::new();
            m.write_to(&mut buf).unwrap();
            let back = TrainedModel::read_from(&mut buf.as_slice()).unwrap();
            assert_eq!(&back, m);
            assert_eq!(back.predict(data.inputs()).unwrap(), m.predict(data.inputs()).unwrap());
        }
        assert!(TrainedModel::read_from(&mut &b"garbage!"[..]).is_err());
    }
}
