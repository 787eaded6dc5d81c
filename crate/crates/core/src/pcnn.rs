//! The PCNN model and its decoupled trainer.
//!
//! Training runs in four stages, none of which differentiates the routing
//! indicator:
//!
//! 1. partition the training inputs;
//! 2. fit one subpattern network per part, independently (optionally on a
//!    thread pool);
//! 3. relabel every training sample with the subpattern(s) of minimal
//!    per-sample loss;
//! 4. fit the classifier to those labels with per-output binary
//!    cross-entropy.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::datagen::Dataset;
use crate::error::{PcnnError, Result};
use crate::ffnn::{train_ffnn_on, Activation, Architecture, Loss, Mlp, TrainConfig};
use crate::numerics::{derive_seed, sigmoid, streams, Matrix, Rng};
use crate::partition::{pair_stats, DataPartition, GeometricPart, PairStats, ALPHA_HI, ALPHA_LO};

/// How subpattern outputs are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Routing {
    /// Sum of the outputs of every subpattern whose deep zero-set contains
    /// `x` (`sigmoid(c(x)_n) > γ`); the zero vector when there is none.
    Threshold,
    /// Output of the subpattern with the largest classifier score, lowest
    /// index on ties. `γ` is ignored.
    Argmax,
}

impl Routing {
    fn tag(self) -> u8 {
        match self {
            Routing::Threshold => 0,
            Routing::Argmax => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Routing::Threshold),
            1 => Ok(Routing::Argmax),
            _ => Err(PcnnError::Format(format!("unknown routing tag {t}"))),
        }
    }
}

impl fmt::Display for Routing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Routing::Threshold => "threshold",
            Routing::Argmax => "argmax",
        })
    }
}

impl FromStr for Routing {
    type Err = PcnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" | "sum" => Ok(Routing::Threshold),
            "argmax" => Ok(Routing::Argmax),
            other => Err(PcnnError::InvalidArgument(format!("unknown routing `{other}`"))),
        }
    }
}

/// `N` subpatterns glued by a classifier's deep zero-sets.
#[derive(Clone, Debug, PartialEq)]
pub struct PcnnModel {
    subpatterns: Vec<Mlp>,
    classifier: Mlp,
    gamma: f64,
    routing: Routing,
}

impl PcnnModel {
    pub fn new(subpatterns: Vec<Mlp>, classifier: Mlp, gamma: f64, routing: Routing) -> Result<Self> {
        let first = subpatterns
            .first()
            .ok_or_else(|| PcnnError::InvalidArgument("a PCNN needs at least one subpattern".into()))?;
        let (d, out) = (first.input_dim(), first.output_dim());
        if subpatterns.iter().any(|s| s.input_dim() != d || s.output_dim() != out) {
            return Err(PcnnError::DimensionMismatch(
                "all subpatterns must share input and output dimensions".into(),
            ));
        }
        if classifier.input_dim() != d || classifier.output_dim() != subpatterns.len() {
            return Err(PcnnError::DimensionMismatch(format!(
                "classifier maps {} -> {}, expected {d} -> {}",
                classifier.input_dim(),
                classifier.output_dim(),
                subpatterns.len()
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(PcnnError::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok(PcnnModel {
            subpatterns,
            classifier,
            gamma,
            routing,
        })
    }

    pub fn n_parts(&self) -> usize {
        self.subpatterns.len()
    }

    pub fn input_dim(&self) -> usize {
        self.classifier.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.subpatterns[0].output_dim()
    }

    pub fn subpatterns(&self) -> &[Mlp] {
        &self.subpatterns
    }

    pub fn classifier(&self) -> &Mlp {
        &self.classifier
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn routing(&self) -> Routing {
        self.routing
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.routing = routing;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(PcnnError::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// Deep zero-set membership of `x`: entry `n` is `sigmoid(c(x)_n) > γ`.
    pub fn memberships(&self, x: &[f64]) -> Result<Vec<bool>> {
        let logits = self.classifier.forward_row(x)?;
        Ok(memberships_from_logits(&logits, self.gamma))
    }

    /// Indices of the subpatterns that process `x` under the model's routing.
    pub fn routes(&self, x: &[f64]) -> Result<Vec<usize>> {
        let logits = self.classifier.forward_row(x)?;
        Ok(self.routes_from_logits(&logits))
    }

    fn routes_from_logits(&self, logits: &[f64]) -> Vec<usize> {
        match self.routing {
            Routing::Argmax => vec![argmax(logits)],
            Routing::Threshold => memberships_from_logits(logits, self.gamma)
                .into_iter()
                .enumerate()
                .filter_map(|(i, m)| m.then_some(i))
                .collect(),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.output_dim()];
        for n in self.routes(x)? {
            let y = self.subpatterns[n].forward_row(x)?;
            acc.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
        }
        Ok(acc)
    }

    /// Batched prediction; each subpattern only sees the rows routed to it.
    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        let routes = self.route_batch(inputs)?;
        let d_out = self.output_dim();
        let mut out = Matrix::zeros(inputs.rows(), d_out);
        for (n, sub) in self.subpatterns.iter().enumerate() {
            let rows: Vec<usize> = (0..inputs.rows()).filter(|&i| routes[i].contains(&n)).collect();
            if rows.is_empty() {
                continue;
            }
            let y = sub.forward(&inputs.select_rows(&rows))?;
            for (k, &i) in rows.iter().enumerate() {
                out.row_mut(i).iter_mut().zip(y.row(k)).for_each(|(a, b)| *a += b);
            }
        }
        Ok(out)
    }

    /// Routes of every row of `inputs`.
    pub fn route_batch(&self, inputs: &Matrix) -> Result<Vec<Vec<usize>>> {
        let logits = self.classifier.forward(inputs)?;
        Ok(logits.iter_rows().map(|l| self.routes_from_logits(l)).collect())
    }

    /// Classifier plus every subpattern.
    pub fn parameter_count(&self) -> usize {
        self.classifier.parameter_count() + self.subpatterns.iter().map(Mlp::parameter_count).sum::<usize>()
    }

    /// Classifier parameters plus those of the subpatterns routed for `x`.
    pub fn active_parameter_count(&self, x: &[f64]) -> Result<usize> {
        Ok(self.classifier.parameter_count()
            + self
                .routes(x)?
                .into_iter()
                .map(|n| self.subpatterns[n].parameter_count())
                .sum::<usize>())
    }

    /// Mean of [`active_parameter_count`](Self::active_parameter_count) over rows.
    pub fn mean_active_parameters(&self, inputs: &Matrix) -> Result<f64> {
        if inputs.rows() == 0 {
            return Ok(0.0);
        }
        let c = self.classifier.parameter_count();
        let total: usize = self
            .route_batch(inputs)?
            .into_iter()
            .map(|r| c + r.into_iter().map(|n| self.subpatterns[n].parameter_count()).sum::<usize>())
            .sum();
        Ok(total as f64 / inputs.rows() as f64)
    }

    /// Binary layout: magic `PCNNMODL`, version u32, routing u8, γ f64,
    /// part count u32, the classifier network, then each subpattern network.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut head = Vec::new();
        head.extend_from_slice(MODEL_MAGIC);
        head.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        head.push(self.routing.tag());
        head.extend_from_slice(&self.gamma.to_le_bytes());
        head.extend_from_slice(&(self.subpatterns.len() as u32).to_le_bytes());
        w.write_all(&head).map_err(|e| PcnnError::Format(e.to_string()))?;
        self.classifier.write_to(w)?;
        for s in &self.subpatterns {
            s.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        use crate::ffnn::io::{read_f64, read_u32, read_u8};
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| PcnnError::Format(e.to_string()))?;
        if &magic != MODEL_MAGIC {
            return Err(PcnnError::Format("not a PCNN model file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(PcnnError::Format(format!("unsupported PCNN model version {version}")));
        }
        let routing = Routing::from_tag(read_u8(r)?)?;
        let gamma = read_f64(r)?;
        let n = read_u32(r)? as usize;
        let classifier = Mlp::read_from(r)?;
        let subpatterns = (0..n).map(|_| Mlp::read_from(r)).collect::<Result<Vec<_>>>()?;
        PcnnModel::new(subpatterns, classifier, gamma, routing)
    }
}

const MODEL_MAGIC: &[u8; 8] = b"PCNNMODL";
const MODEL_VERSION: u32 = 1;

fn memberships_from_logits(logits: &[f64], gamma: f64) -> Vec<bool> {
    logits.iter().map(|&z| sigmoid(z) > gamma).collect()
}

/// Index of the largest score, lowest index on ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if sigmoid(s) > sigmoid(scores[best]) {
            best = i;
        }
    }
    best
}

/// Deep zero-set membership of `x` (free-function form).
pub fn deep_zero_set_membership(model: &PcnnModel, x: &[f64]) -> Result<Vec<bool>> {
    model.memberships(x)
}

pub fn predict(model: &PcnnModel, x: &[f64]) -> Result<Vec<f64>> {
    model.predict_row(x)
}

pub fn active_parameter_count(model: &PcnnModel, x: &[f64]) -> Result<usize> {
    model.active_parameter_count(x)
}

/// Binary matrix `l[x, n]`: row per sample, column per subpattern.
#[derive(Clone, Debug, PartialEq)]
pub struct PartLabels {
    labels: Matrix,
}

impl PartLabels {
    /// `l[x, n] = 1` iff `losses[x, n]` attains the row minimum (ties give
    /// several ones).
    pub fn from_losses(losses: &Matrix) -> PartLabels {
        let mut labels = Matrix::zeros(losses.rows(), losses.cols());
        for (r, row) in losses.iter_rows().enumerate() {
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            for (c, &v) in row.iter().enumerate() {
                if v <= min {
                    labels.set(r, c, 1.0);
                }
            }
        }
        PartLabels { labels }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.labels
    }

    pub fn get(&self, part: usize, sample: usize) -> bool {
        self.labels.get(sample, part) == 1.0
    }

    pub fn n_samples(&self) -> usize {
        self.labels.rows()
    }

    pub fn n_parts(&self) -> usize {
        self.labels.cols()
    }

    /// Column of sample `x` as booleans.
    pub fn sample(&self, x: usize) -> Vec<bool> {
        self.labels.row(x).iter().map(|&v| v == 1.0).collect()
    }
}

/// Mean per-entry loss of one prediction row. `BinaryCrossEntropy` is not a
/// regression loss; it is scored as absolute error.
fn per_sample_loss(pred: &[f64], target: &[f64], loss: Loss) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| match loss {
            Loss::Mse => (p - t) * (p - t),
            Loss::Mae | Loss::BinaryCrossEntropy => (p - t).abs(),
        })
        .sum::<f64>()
        / n
}

/// Per-sample loss of every subpattern on every row: `losses[x, n]`.
pub fn subpattern_losses(subpatterns: &[Mlp], inputs: &Matrix, targets: &Matrix, loss: Loss) -> Result<Matrix> {
    let mut losses = Matrix::zeros(inputs.rows(), subpatterns.len());
    for (n, sub) in subpatterns.iter().enumerate() {
        let pred = sub.forward(inputs)?;
        for i in 0..inputs.rows() {
            losses.set(i, n, per_sample_loss(pred.row(i), targets.row(i), loss));
        }
    }
    Ok(losses)
}

/// Relabels every row with the subpattern(s) achieving the minimal
/// per-sample loss.
pub fn compute_labels(subpatterns: &[Mlp], data: &Dataset, loss: Loss) -> Result<PartLabels> {
    let losses = subpattern_losses(subpatterns, data.inputs(), data.targets(), loss)?;
    Ok(PartLabels::from_losses(&losses))
}

/// How the initial partition is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum PartitionSource {
    /// Randomized partition with remainder threshold `q`; `N` is whatever
    /// comes out.
    Random { q: f64 },
    /// Randomized partition with `q` chosen so that exactly `n` parts come
    /// out when the drawn radius allows it (otherwise as many as possible).
    /// `n = 1` yields the trivial partition.
    TargetParts(usize),
    /// A fixed partition (e.g. an expert partition read from data).
    Given(DataPartition),
}

/// Everything needed to train a PCNN.
#[derive(Clone, Debug, PartialEq)]
pub struct PcnnConfig {
    /// Hidden widths of each subpattern (before any budget split).
    pub subpattern_hidden: Vec<usize>,
    pub subpattern_activation: Activation,
    /// Hidden widths of the classifier; empty gives a logistic model.
    pub classifier_hidden: Vec<usize>,
    pub classifier_activation: Activation,
    pub subpattern_train: TrainConfig,
    /// Its `loss` is forced to binary cross-entropy.
    pub classifier_train: TrainConfig,
    pub partition: PartitionSource,
    /// When set, every hidden layer width is divided across the `N`
    /// subpatterns (remainder to the first parts).
    pub split_budget: bool,
    pub gamma: f64,
    pub routing: Routing,
    /// Maximum concurrent subpattern fits; 1 runs them sequentially.
    pub jobs: usize,
}

impl Default for PcnnConfig {
    fn default() -> Self {
        PcnnConfig {
            subpattern_hidden: vec![64, 64],
            subpattern_activation: Activation::Relu,
            classifier_hidden: vec![64, 64],
            classifier_activation: Activation::Relu,
            subpattern_train: TrainConfig::default(),
            classifier_train: TrainConfig {
                loss: Loss::BinaryCrossEntropy,
                ..TrainConfig::default()
            },
            partition: PartitionSource::Random { q: 0.2 },
            split_budget: false,
            gamma: 0.5,
            routing: Routing::Argmax,
            jobs: 1,
        }
    }
}

/// Wall-clock durations of the training stages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub partition: Duration,
    /// Wall-clock of the whole subpattern stage (parallel if `jobs > 1`).
    pub subpatterns_wall: Duration,
    pub subpattern_each: Vec<Duration>,
    pub labels: Duration,
    pub classifier: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.partition + self.subpatterns_wall + self.labels + self.classifier
    }

    pub fn subpatterns_sum(&self) -> Duration {
        self.subpattern_each.iter().sum()
    }
}

/// A trained model with the intermediate products of its training run.
#[derive(Clone, Debug)]
pub struct TrainedPcnn {
    pub model: PcnnModel,
    pub partition: DataPartition,
    pub geometry: Vec<GeometricPart>,
    pub labels: PartLabels,
    pub timings: StageTimings,
}

/// Hidden widths of subpattern `part` when `hidden` is shared by `n_parts`.
pub fn split_widths(hidden: &[usize], n_parts: usize, part: usize) -> Vec<usize> {
    hidden
        .iter()
        .map(|&w| (w / n_parts + usize::from(part < w % n_parts)).max(1))
        .collect()
}

/// Seed of subpattern `part` under run seed `seed`.
pub fn subpattern_seed(seed: u64, part: usize) -> u64 {
    derive_seed(derive_seed(seed, streams::SUBPATTERN), part as u64)
}

pub fn classifier_seed(seed: u64) -> u64 {
    derive_seed(seed, streams::CLASSIFIER)
}

/// Partition of `data`'s inputs according to `source`.
pub fn build_partition(
    inputs: &Matrix,
    source: &PartitionSource,
    seed: u64,
) -> Result<(DataPartition, Vec<GeometricPart>)> {
    let mut rng = Rng::new(derive_seed(seed, streams::PARTITION));
    match source {
        PartitionSource::Random { q } => crate::partition::get_partition(inputs, *q, &mut rng),
        PartitionSource::TargetParts(n) => partition_with_target(inputs, *n, &mut rng),
        PartitionSource::Given(p) => {
            let stats = pair_stats(inputs).ok();
            let radius = stats.map_or(0.0, |s| s.delta_min);
            let mut covered = vec![false; inputs.rows()];
            for part in &p.parts {
                for &i in part {
                    if i >= inputs.rows() || std::mem::replace(&mut covered[i], true) {
                        return Err(PcnnError::InvalidArgument(
                            "given partition is not a partition of the rows".into(),
                        ));
                    }
                }
            }
            if covered.iter().any(|c| !c) || p.parts.iter().any(Vec::is_empty) {
                return Err(PcnnError::InvalidArgument(
                    "given partition must cover every row with non-empty parts".into(),
                ));
            }
            let geometry = p
                .parts
                .iter()
                .map(|idx| GeometricPart {
                    anchors: inputs.select_rows(idx),
                    radius,
                })
                .collect();
            Ok((p.clone(), geometry))
        }
    }
}

/// Randomized partition with `q` set to the unclaimed share left after
/// `target - 1` passes, which makes the final remainder the `target`-th part.
fn partition_with_target(inputs: &Matrix, target: usize, rng: &mut Rng) -> Result<(DataPartition, Vec<GeometricPart>)> {
    if target == 0 {
        return Err(PcnnError::InvalidArgument("target part count must be >= 1".into()));
    }
    let n = inputs.rows();
    if target == 1 {
        let stats = pair_stats(inputs).ok();
        let mut p = DataPartition::whole(n);
        if let Some(s) = stats {
            p.delta_min = s.delta_min;
            p.delta_bar = s.delta_bar;
        }
        let radius = stats.map_or(0.0, |s| s.delta_min);
        let geometry = vec![GeometricPart {
            anchors: inputs.clone(),
            radius,
        }];
        return Ok((p, geometry));
    }
    let stats = pair_stats(inputs)?;
    let alpha = crate::numerics::sample_uniform(rng, ALPHA_LO, ALPHA_HI)?;
    let order = rng.permutation(n);
    let remaining = remaining_after_passes(inputs, alpha, &order, &stats);
    // remaining[k] = unclaimed rows after k + 1 passes of an unbounded run.
    let q = if target - 1 <= remaining.len() && remaining[target - 2] > 0 {
        remaining[target - 2] as f64 / n as f64
    } else {
        f64::MIN_POSITIVE
    };
    crate::partition::partition_with(inputs, q, alpha, order)
}

fn remaining_after_passes(inputs: &Matrix, alpha: f64, order: &[usize], stats: &PairStats) -> Vec<usize> {
    let radius = alpha * stats.delta_bar;
    let mut remaining: Vec<usize> = order.to_vec();
    let mut counts = Vec::new();
    while !remaining.is_empty() {
        let center = inputs.row(remaining[0]).to_vec();
        remaining.retain(|&i| crate::numerics::euclidean(inputs.row(i), &center) >= radius);
        counts.push(remaining.len());
    }
    counts
}

/// Fits one subpattern per part. Results do not depend on `jobs`.
pub fn fit_subpatterns(
    data: &Dataset,
    parts: &[Vec<usize>],
    cfg: &PcnnConfig,
    seed: u64,
) -> Result<(Vec<Mlp>, Vec<Duration>, Duration)> {
    let n_parts = parts.len();
    let task = |(n, idx): (usize, &Vec<usize>)| -> Result<(Mlp, Duration)> {
        let t0 = Instant::now();
        let hidden = if cfg.split_budget {
            split_widths(&cfg.subpattern_hidden, n_parts, n)
        } else {
            cfg.subpattern_hidden.clone()
        };
        let arch = Architecture::with_hidden(data.input_dim(), &hidden, data.target_dim(), cfg.subpattern_activation);
        let train = TrainConfig {
            seed: subpattern_seed(seed, n),
            ..cfg.subpattern_train.clone()
        };
        let x = data.inputs().select_rows(idx);
        let y = data.targets().select_rows(idx);
        let fit = train_ffnn_on(&x, &y, &train, &arch).map_err(|e| PcnnError::SubpatternFailed {
            part: n,
            source: Box::new(e),
        })?;
        Ok((fit.model, t0.elapsed()))
    };
    let t0 = Instant::now();
    let results: Vec<Result<(Mlp, Duration)>> = if cfg.jobs <= 1 {
        parts.iter().enumerate().map(task).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| PcnnError::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| parts.par_iter().enumerate().map(task).collect())
    };
    let wall = t0.elapsed();
    let mut models = Vec::with_capacity(n_parts);
    let mut each = Vec::with_capacity(n_parts);
    for r in results {
        let (m, d) = r?;
        models.push(m);
        each.push(d);
    }
    Ok((models, each, wall))
}

/// Fits the classifier to part labels with per-output cross-entropy.
pub fn fit_classifier(data: &Dataset, labels: &PartLabels, cfg: &PcnnConfig, seed: u64) -> Result<Mlp> {
    let arch = Architecture::with_hidden(
        data.input_dim(),
        &cfg.classifier_hidden,
        labels.n_parts(),
        cfg.classifier_activation,
    );
    let train = TrainConfig {
        seed: classifier_seed(seed),
        loss: Loss::BinaryCrossEntropy,
        ..cfg.classifier_train.clone()
    };
    Ok(train_ffnn_on(data.inputs(), labels.matrix(), &train, &arch)?.model)
}

/// Runs the full decoupled training procedure on every row of `data`.
pub fn train_pcnn(data: &Dataset, cfg: &PcnnConfig, seed: u64) -> Result<TrainedPcnn> {
    if data.is_empty() {
        return Err(PcnnError::EmptyDataset);
    }
    let t0 = Instant::now();
    let (partition, geometry) = build_partition(data.inputs(), &cfg.partition, seed)?;
    let partition_time = t0.elapsed();

    let (subpatterns, each, wall) = fit_subpatterns(data, &partition.parts, cfg, seed)?;

    let t1 = Instant::now();
    let labels = compute_labels(&subpatterns, data, cfg.subpattern_train.loss)?;
    let label_time = t1.elapsed();

    let t2 = Instant::now();
    let classifier = fit_classifier(data, &labels, cfg, seed)?;
    let classifier_time = t2.elapsed();

    let model = PcnnModel::new(subpatterns, classifier, cfg.gamma, cfg.routing)?;
    Ok(TrainedPcnn {
        model,
        partition,
        geometry,
        labels,
        timings: StageTimings {
            partition: partition_time,
            subpatterns_wall: wall,
            subpattern_each: each,
            labels: label_time,
            classifier: classifier_time,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffnn::parameter_count_for;

    /// Constant-output network `R^d -> R^out` with the given output.
    fn constant(d: usize, values: &[f64]) -> Mlp {
        let arch = Architecture::new(vec![d, values.len()], Activation::Identity);
        let mut params = vec![0.0; d * values.len()];
        params.extend_from_slice(values);
        Mlp::from_params(&arch, params).unwrap()
    }

    fn model(logits: &[f64], outputs: &[f64], gamma: f64, routing: Routing) -> PcnnModel {
        let subs = outputs.iter().map(|&v| constant(1, &[v])).collect();
        PcnnModel::new(subs, constant(1, logits), gamma, routing).unwrap()
    }

    #[test]
    fn membership_examples() {
        let m = model(&[0.0, 0.0], &[1.0, 2.0], 0.5, Routing::Threshold);
        assert_eq!(m.memberships(&[0.3]).unwrap(), vec![false, false]);
        let m = model(&[10.0, -10.0], &[1.0, 2.0], 0.5, Routing::Threshold);
        assert_eq!(deep_zero_set_membership(&m, &[0.3]).unwrap(), vec![true, false]);
        let m = model(&[30.0, 5.0], &[1.0, 2.0], 1.0, Routing::Threshold);
        assert_eq!(m.memberships(&[0.3]).unwrap(), vec![false, false]);
    }

    #[test]
    fn prediction_examples() {
        for routing in [Routing::Threshold, Routing::Argmax] {
            let m = model(&[10.0], &[4.5], 0.5, routing);
            assert_eq!(predict(&m, &[0.0]).unwrap(), vec![4.5]);
        }
        let m = model(&[3.0, 2.0], &[1.0, 2.0], 0.5, Routing::Threshold);
        assert_eq!(m.predict_row(&[0.0]).unwrap(), vec![3.0]);
        let m = model(&[-1.0, 1.0], &[1.0, 2.0], 0.99, Routing::Argmax);
        assert_eq!(m.predict_row(&[0.0]).unwrap(), vec![2.0]);
        let m = model(&[-5.0, -5.0], &[1.0, 2.0], 0.5, Routing::Threshold);
        assert_eq!(m.predict_row(&[0.0]).unwrap(), vec![0.0]);
        // ties go to the lowest index
        let m = model(&[1.0, 1.0], &[1.0, 2.0], 0.5, Routing::Argmax);
        assert_eq!(m.predict_row(&[0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn batched_prediction_matches_rows() {
        let mut rng = Rng::new(2);
        let subs: Vec<Mlp> = (0..3)
            .map(|_| Mlp::random(&Architecture::new(vec![2, 4, 1], Activation::Tanh), &mut rng).unwrap())
            .collect();
        let clf = Mlp::random(&Architecture::new(vec![2, 5, 3], Activation::Tanh), &mut rng).unwrap();
        let x = Matrix::from_raw(20, 2, (0..40).map(|_| rng.normal()).collect());
        for routing in [Routing::Argmax, Routing::Threshold] {
            let m = PcnnModel::new(subs.clone(), clf.clone(), 0.5, routing).unwrap();
            let batch = m.predict(&x).unwrap();
            for i in 0..20 {
                assert_eq!(batch.row(i), m.predict_row(x.row(i)).unwrap().as_slice());
            }
        }
    }

    #[test]
    fn invariants_enforced() {
        let sub = constant(1, &[1.0]);
        assert!(PcnnModel::new(vec![sub.clone()], constant(1, &[0.0, 0.0]), 0.5, Routing::Argmax).is_err());
        assert!(PcnnModel::new(vec![sub.clone()], constant(1, &[0.0]), 0.0, Routing::Argmax).is_err());
        assert!(PcnnModel::new(vec![sub.clone()], constant(1, &[0.0]), 1.5, Routing::Argmax).is_err());
        assert!(PcnnModel::new(vec![], constant(1, &[0.0]), 0.5, Routing::Argmax).is_err());
        assert!(PcnnModel::new(vec![sub, constant(2, &[1.0])], constant(1, &[0.0, 0.0]), 0.5, Routing::Argmax).is_err());
    }

    #[test]
    fn label_examples() {
        let l = PartLabels::from_losses(&Matrix::from_rows(&[[0.2, 0.5]]).unwrap());
        assert_eq!(l.sample(0), vec![true, false]);
        let l = PartLabels::from_losses(&Matrix::from_rows(&[[0.3, 0.3]]).unwrap());
        assert_eq!(l.sample(0), vec![true, true]);
        let l = PartLabels::from_losses(&Matrix::from_rows(&[[1.0, 0.1, 0.5]]).unwrap());
        assert_eq!(l.sample(0), vec![false, true, false]);
        assert!(l.get(1, 0));
    }

    #[test]
    fn labels_follow_dominant_subpattern() {
        // Subpattern 0 is exact on x < 0.5, subpattern 1 on x >= 0.5.
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 0.5 { 0.0 } else { 3.0 }).collect();
        let data = Dataset::new(Matrix::column(&xs).unwrap(), Matrix::column(&ys).unwrap()).unwrap();
        let subs = vec![constant(1, &[0.0]), constant(1, &[3.0])];
        let labels = compute_labels(&subs, &data, Loss::Mae).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let expected = if x < 0.5 { vec![true, false] } else { vec![false, true] };
            assert_eq!(labels.sample(i), expected);
        }
    }

    #[test]
    fn active_parameter_examples() {
        let m = model(&[10.0], &[1.0], 0.5, Routing::Argmax);
        assert_eq!(active_parameter_count(&m, &[0.0]).unwrap(), 2 + 2);
        let subs = vec![
            Mlp::zeros(&Architecture::new(vec![1, 3, 1], Activation::Relu)).unwrap(),
            Mlp::zeros(&Architecture::new(vec![1, 5, 1], Activation::Relu)).unwrap(),
        ];
        let m = PcnnModel::new(subs.clone(), constant(1, &[-1.0, 1.0]), 0.5, Routing::Argmax).unwrap();
        assert_eq!(m.active_parameter_count(&[0.0]).unwrap(), 4 + parameter_count_for(&[1, 5, 1]));
        let m = PcnnModel::new(subs, constant(1, &[-9.0, -9.0]), 0.5, Routing::Threshold).unwrap();
        assert_eq!(m.active_parameter_count(&[0.0]).unwrap(), 4);
        assert_eq!(m.parameter_count(), 4 + 10 + 16);
    }

    #[test]
    fn budget_split() {
        assert_eq!(split_widths(&[10, 7], 3, 0), vec![4, 3]);
        assert_eq!(split_widths(&[10, 7], 3, 1), vec![3, 2]);
        assert_eq!(split_widths(&[10, 7], 3, 2), vec![3, 2]);
        assert_eq!(split_widths(&[2], 4, 3), vec![1]);
    }

    #[test]
    fn target_parts_are_hit() {
        let mut rng = Rng::new(1);
        let x = Matrix::from_raw(300, 2, (0..600).map(|_| rng.next_f64()).collect());
        for target in [1, 2, 3, 5, 8] {
            let (p, geo) = build_partition(&x, &PartitionSource::TargetParts(target), 11).unwrap();
            assert_eq!(p.len(), target);
            assert_eq!(geo.len(), target);
        }
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = Rng::new(6);
        let subs: Vec<Mlp> = (0..2)
            .map(|_| Mlp::random(&Architecture::new(vec![3, 4, 2], Activation::Relu), &mut rng).unwrap())
            .collect();
        let clf = Mlp::random(&Architecture::new(vec![3, 2], Activation::Identity), &mut rng).unwrap();
        let m = PcnnModel::new(subs, clf, 0.7, Routing::Threshold).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(PcnnModel::read_from(&mut buf.as_slice()).unwrap(), m);
    }
}
