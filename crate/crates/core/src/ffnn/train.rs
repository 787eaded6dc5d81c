use std::fmt;
use std::str::FromStr;

use crate::datagen::Dataset;
use crate::error::{PcnnError, Result};
use crate::ffnn::{Architecture, Mlp};
use crate::numerics::{ridge_solve, sigmoid, softplus, streams, Matrix, Rng};

/// Clamp applied to probabilities before taking logarithms.
pub const BCE_EPS: f64 = 1e-12;

/// Label-to-target map used when a classifier readout is fit by ridge
/// regression: labels become the logits of these probabilities.
const READOUT_LABEL_PROB: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Mini-batch Adam on every parameter.
    Gradient,
    /// Random frozen hidden layers, ridge-fit affine readout.
    RandomReadout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Mae,
    Mse,
    /// Applied to `sigmoid(output)`; targets are labels in `{0, 1}`.
    BinaryCrossEntropy,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Mae => "mae",
            Loss::Mse => "mse",
            Loss::BinaryCrossEntropy => "bce",
        })
    }
}

impl FromStr for Loss {
    type Err = PcnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(Loss::Mae),
            "mse" => Ok(Loss::Mse),
            "bce" | "binary_cross_entropy" => Ok(Loss::BinaryCrossEntropy),
            other => Err(PcnnError::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

impl FromStr for TrainMode {
    type Err = PcnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" | "adam" => Ok(TrainMode::Gradient),
            "random_readout" | "rnd" => Ok(TrainMode::RandomReadout),
            other => Err(PcnnError::InvalidArgument(format!("unknown training mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    /// When set, training runs exactly this many Adam updates and `epochs`
    /// is ignored.
    pub steps: Option<usize>,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub ridge_lambda: f64,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Gradient,
            epochs: 100,
            batch_size: 32,
            steps: None,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            ridge_lambda: 1e-6,
            seed: 0,
            loss: Loss::Mae,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            TrainMode::Gradient => {
                if !(self.learning_rate > 0.0) {
                    return Err(PcnnError::InvalidArgument(format!(
                        "learning rate must be > 0, got {}",
                        self.learning_rate
                    )));
                }
                if self.batch_size == 0 {
                    return Err(PcnnError::InvalidArgument("batch size must be >= 1".into()));
                }
                if self.steps.is_none() && self.epochs == 0 {
                    return Err(PcnnError::InvalidArgument("epochs must be >= 1".into()));
                }
            }
            TrainMode::RandomReadout => {
                if !(self.ridge_lambda >= 0.0) {
                    return Err(PcnnError::InvalidArgument(format!(
                        "ridge lambda must be >= 0, got {}",
                        self.ridge_lambda
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A trained network with its training-loss trajectory endpoints.
#[derive(Clone, Debug)]
pub struct Fit {
    pub model: Mlp,
    /// Mean mini-batch loss over the first epoch.
    pub first_epoch_loss: f64,
    /// Mean mini-batch loss over the final epoch (full-data loss for
    /// readout fits).
    pub final_loss: f64,
    pub epochs: usize,
    pub steps: usize,
}

/// `-[l·ln p + (1-l)·ln(1-p)]` with `p` clamped to `[ε, 1-ε]`.
pub fn binary_cross_entropy(pred: f64, label: f64) -> f64 {
    let p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Mean loss over every entry of `out` against `target`.
pub fn loss_value(out: &Matrix, target: &Matrix, loss: Loss) -> f64 {
    let n = out.as_slice().len().max(1) as f64;
    let sum: f64 = out
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&o, &t)| entry_loss(o, t, loss))
        .sum();
    sum / n
}

#[inline]
pub(crate) fn entry_loss(o: f64, t: f64, loss: Loss) -> f64 {
    match loss {
        Loss::Mae => (o - t).abs(),
        Loss::Mse => (o - t) * (o - t),
        // -[t ln σ(o) + (1-t) ln(1-σ(o))] written through softplus.
        Loss::BinaryCrossEntropy => t * softplus(-o) + (1.0 - t) * softplus(o),
    }
}

/// `dL/d(out)` for [`loss_value`]. MAE uses `sign(r)` with 0 at `r = 0`.
pub fn loss_gradient(out: &Matrix, target: &Matrix, loss: Loss) -> Matrix {
    let n = out.as_slice().len().max(1) as f64;
    let data = out
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&o, &t)| {
            let g = match loss {
                Loss::Mae => {
                    let r = o - t;
                    if r > 0.0 {
                        1.0
                    } else if r < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Loss::Mse => 2.0 * (o - t),
                Loss::BinaryCrossEntropy => sigmoid(o) - t,
            };
            g / n
        })
        .collect();
    Matrix::from_raw(out.rows(), out.cols(), data)
}

/// Trains a network on every row of `data`.
pub fn train_ffnn(data: &Dataset, config: &TrainConfig, arch: &Architecture) -> Result<Fit> {
    train_ffnn_on(data.inputs(), data.targets(), config, arch)
}

pub fn train_ffnn_on(inputs: &Matrix, targets: &Matrix, config: &TrainConfig, arch: &Architecture) -> Result<Fit> {
    config.validate()?;
    if inputs.rows() == 0 {
        return Err(PcnnError::EmptyDataset);
    }
    if inputs.rows() != targets.rows() {
        return Err(PcnnError::DimensionMismatch(format!(
            "{} input rows vs {} target rows",
            inputs.rows(),
            targets.rows()
        )));
    }
    if arch.dims.first() != Some(&inputs.cols()) || arch.dims.last() != Some(&targets.cols()) {
        return Err(PcnnError::DimensionMismatch(format!(
            "dims {:?} do not match data ({} -> {})",
            arch.dims,
            inputs.cols(),
            targets.cols()
        )));
    }
    match config.mode {
        TrainMode::Gradient => train_adam(inputs, targets, config, arch),
        TrainMode::RandomReadout => train_readout(inputs, targets, config, arch),
    }
}

fn train_adam(inputs: &Matrix, targets: &Matrix, config: &TrainConfig, arch: &Architecture) -> Result<Fit> {
    let root = Rng::new(config.seed);
    let mut model = Mlp::random(arch, &mut root.child(streams::MODEL))?;
    let mut order_rng = root.child(streams::TRIAL);

    let n = inputs.rows();
    let batch = config.batch_size.min(n);
    let batches_per_epoch = n.div_ceil(batch);
    let total_steps = config.steps.unwrap_or(config.epochs * batches_per_epoch);
    let p = model.parameter_count();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let (b1, b2, eps, lr) = (config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate);

    let mut step = 0usize;
    let mut epoch = 0usize;
    let mut first_epoch_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    while step < total_steps {
        let order = order_rng.permutation(n);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(batch) {
            if step >= total_steps {
                break;
            }
            let xb = inputs.select_rows(chunk);
            let yb = targets.select_rows(chunk);
            let trace = model.forward_trace(&xb);
            let out = trace.acts.last().expect("trace has output");
            let loss = loss_value(out, &yb, config.loss);
            if !loss.is_finite() {
                return Err(PcnnError::NonFiniteLoss { epoch: epoch + 1 });
            }
            epoch_loss += loss;
            epoch_batches += 1;
            let grad = model.backward(&trace, loss_gradient(out, &yb, config.loss));

            step += 1;
            let c1 = 1.0 - b1.powi(step as i32);
            let c2 = 1.0 - b2.powi(step as i32);
            let params = model.params_mut();
            for i in 0..p {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        epoch += 1;
        let mean = epoch_loss / epoch_batches.max(1) as f64;
        if epoch == 1 {
            first_epoch_loss = mean;
        }
        final_loss = mean;
    }
    if model.params().iter().any(|v| !v.is_finite()) {
        return Err(PcnnError::NonFiniteLoss { epoch });
    }
    Ok(Fit {
        model,
        first_epoch_loss,
        final_loss,
        epochs: epoch,
        steps: step,
    })
}

fn train_readout(inputs: &Matrix, targets: &Matrix, config: &TrainConfig, arch: &Architecture) -> Result<Fit> {
    let root = Rng::new(config.seed);
    let mut model = Mlp::random_features(arch, &mut root.child(streams::MODEL))?;
    let features = model.hidden_features(inputs)?;
    let n = features.rows();
    let width = features.cols();
    let mut design = Vec::with_capacity(n * (width + 1));
    for row in features.iter_rows() {
        design.extend_from_slice(row);
        design.push(1.0);
    }
    let design = Matrix::from_raw(n, width + 1, design);
    let fit_targets = match config.loss {
        Loss::BinaryCrossEntropy => {
            let hi = (READOUT_LABEL_PROB / (1.0 - READOUT_LABEL_PROB)).ln();
            targets.map(|l| (2.0 * l - 1.0) * hi)
        }
        _ => targets.clone(),
    };
    let w = ridge_solve(&design, &fit_targets, config.ridge_lambda)?;
    let out_dim = targets.cols();
    let last = model.layer_count() - 1;
    {
        let (lw, lb) = model.layer_mut(last);
        for k in 0..width {
            for o in 0..out_dim {
                lw[k * out_dim + o] = w.get(k, o);
            }
        }
        for (o, b) in lb.iter_mut().enumerate() {
            *b = w.get(width, o);
        }
    }
    if model.params().iter().any(|v| !v.is_finite()) {
        return Err(PcnnError::NonFiniteLoss { epoch: 1 });
    }
    let out = model.forward(inputs)?;
    let loss = loss_value(&out, targets, config.loss);
    if !loss.is_finite() {
        return Err(PcnnError::NonFiniteLoss { epoch: 1 });
    }
    Ok(Fit {
        model,
        first_epoch_loss: loss,
        final_loss: loss,
        epochs: 1,
        steps: 0,
    })
}

/// Largest relative gap between the backpropagated gradient and central
/// finite differences (step `1e-5`) over every parameter.
///
/// The relative error of each coordinate is `|a - f| / max(|a|, |f|, 1e-6)`,
/// so coordinates whose true gradient is ~0 are judged on absolute error.
pub fn gradient_check(model: &Mlp, x: &Matrix, y: &Matrix, loss: Loss) -> f64 {
    const H: f64 = 1e-5;
    let trace = model.forward_trace(x);
    let out = trace.acts.last().expect("trace has output");
    let analytic = model.backward(&trace, loss_gradient(out, y, loss));
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + H;
        let up = loss_value(&probe.forward(x).expect("shape checked"), y, loss);
        probe.params_mut()[i] = orig - H;
        let down = loss_value(&probe.forward(x).expect("shape checked"), y, loss);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffnn::Activation;
    use approx::assert_abs_diff_eq;

    fn random_matrix(rng: &mut Rng, r: usize, c: usize, scale: f64) -> Matrix {
        Matrix::from_raw(r, c, (0..r * c).map(|_| scale * rng.normal()).collect())
    }

    #[test]
    fn bce_values() {
        assert!(binary_cross_entropy(1.0 - BCE_EPS, 1.0) < 1e-11);
        assert_abs_diff_eq!(binary_cross_entropy(0.5, 1.0), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(binary_cross_entropy(0.5, 0.0), 2f64.ln(), epsilon = 1e-15);
        assert!(binary_cross_entropy(0.0, 1.0).is_finite());
        assert!(binary_cross_entropy(1.0, 0.0).is_finite());
    }

    #[test]
    fn logit_form_matches_probability_form() {
        for &(z, l) in &[(0.3, 1.0), (-2.0, 0.0), (4.0, 0.0), (-1.0, 1.0)] {
            assert_abs_diff_eq!(
                entry_loss(z, l, Loss::BinaryCrossEntropy),
                binary_cross_entropy(sigmoid(z), l),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn tanh_mse_gradient() {
        let mut rng = Rng::new(3);
        let arch = Architecture::new(vec![3, 6, 2], Activation::Tanh);
        let m = Mlp::random(&arch, &mut rng).unwrap();
        let x = random_matrix(&mut rng, 5, 3, 1.0);
        let y = random_matrix(&mut rng, 5, 2, 1.0);
        assert!(gradient_check(&m, &x, &y, Loss::Mse) <= 1e-4);
    }

    #[test]
    fn readout_bias_gradient_by_hand() {
        // Zero hidden weights and biases with tanh give zero hidden
        // activations, so the output is the readout bias b and
        // d/db mean((b - 0)²) = 2b.
        let arch = Architecture::new(vec![2, 3, 1], Activation::Tanh);
        let mut params = vec![0.0; 13];
        params[12] = 0.7;
        let m = Mlp::from_params(&arch, params).unwrap();
        for n in [1, 4] {
            let x = Matrix::zeros(n, 2);
            let y = Matrix::zeros(n, 1);
            let trace = m.forward_trace(&x);
            let out = trace.acts.last().unwrap();
            let g = m.backward(&trace, loss_gradient(out, &y, Loss::Mse));
            assert_abs_diff_eq!(g[12], 2.0 * 0.7, epsilon = 1e-14);
            assert!(gradient_check(&m, &x, &y, Loss::Mse) <= 1e-4);
        }
    }

    #[test]
    fn relu_gradient_away_from_kinks() {
        let mut rng = Rng::new(5);
        let arch = Architecture::new(vec![2, 5, 4, 1], Activation::Relu);
        let mut checked = 0;
        while checked < 5 {
            let m = Mlp::random(&arch, &mut rng).unwrap();
            let x = random_matrix(&mut rng, 4, 2, 1.0);
            let y = random_matrix(&mut rng, 4, 1, 1.0);
            let trace = m.forward_trace(&x);
            let near_kink = trace.pre[..2].iter().any(|z| z.as_slice().iter().any(|v| v.abs() < 1e-3));
            if near_kink {
                continue;
            }
            assert!(gradient_check(&m, &x, &y, Loss::Mse) <= 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn fits_linear_target_with_adam() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let x = Matrix::column(&xs).unwrap();
        let y = Matrix::column(&ys).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 16,
            learning_rate: 1e-2,
            loss: Loss::Mse,
            seed: 1,
            ..TrainConfig::default()
        };
        let arch = Architecture::new(vec![1, 16, 1], Activation::Tanh);
        let fit = train_ffnn_on(&x, &y, &cfg, &arch).unwrap();
        let test: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let pred = fit.model.forward(&Matrix::column(&test).unwrap()).unwrap();
        let mae = pred.as_slice().iter().zip(&test).map(|(p, x)| (p - 2.0 * x).abs()).sum::<f64>() / 50.0;
        assert!(mae <= 0.05, "test mae {mae}");
        assert!(fit.final_loss <= fit.first_epoch_loss);
    }

    #[test]
    fn fits_linear_target_with_random_readout() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let x = Matrix::column(&xs).unwrap();
        let y = Matrix::column(&ys).unwrap();
        let cfg = TrainConfig {
            mode: TrainMode::RandomReadout,
            ridge_lambda: 1e-6,
            seed: 2,
            ..TrainConfig::default()
        };
        let arch = Architecture::new(vec![1, 50, 1], Activation::Tanh);
        let fit = train_ffnn_on(&x, &y, &cfg, &arch).unwrap();
        let test: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let pred = fit.model.forward(&Matrix::column(&test).unwrap()).unwrap();
        let mae = pred.as_slice().iter().zip(&test).map(|(p, x)| (p - 2.0 * x).abs()).sum::<f64>() / 50.0;
        assert!(mae <= 0.05, "test mae {mae}");
    }

    #[test]
    fn random_readout_leaves_hidden_weights_alone() {
        let arch = Architecture::new(vec![2, 8, 8, 1], Activation::Relu);
        let cfg = TrainConfig {
            mode: TrainMode::RandomReadout,
            seed: 9,
            ..TrainConfig::default()
        };
        let init = Mlp::random_features(&arch, &mut Rng::new(9).child(streams::MODEL)).unwrap();
        let mut rng = Rng::new(4);
        let x = random_matrix(&mut rng, 30, 2, 1.0);
        let y = random_matrix(&mut rng, 30, 1, 1.0);
        let fit = train_ffnn_on(&x, &y, &cfg, &arch).unwrap();
        assert_eq!(fit.model.hidden_params(), init.hidden_params());
        assert_ne!(fit.model.params(), init.params());
    }

    #[test]
    fn constant_dataset_is_interpolated() {
        let x = Matrix::from_rows(&[[0.3, -0.1]; 20]).unwrap();
        let y = Matrix::from_rows(&[[1.7]; 20]).unwrap();
        for mode in [TrainMode::Gradient, TrainMode::RandomReadout] {
            let cfg = TrainConfig {
                mode,
                epochs: 300,
                learning_rate: 1e-2,
                loss: Loss::Mse,
                ..TrainConfig::default()
            };
            let arch = Architecture::new(vec![2, 8, 1], Activation::Tanh);
            let fit = train_ffnn_on(&x, &y, &cfg, &arch).unwrap();
            let out = fit.model.forward_row(&[0.3, -0.1]).unwrap()[0];
            assert!((out - 1.7).abs() <= 1e-3, "{mode:?}: {out}");
        }
    }

    #[test]
    fn empty_and_divergent_training_are_errors() {
        let arch = Architecture::new(vec![1, 4, 1], Activation::Relu);
        let cfg = TrainConfig::default();
        let empty = Matrix::zeros(0, 1);
        assert!(matches!(
            train_ffnn_on(&empty, &empty, &cfg, &arch),
            Err(PcnnError::EmptyDataset)
        ));
        let x = Matrix::column(&[0.0, 1.0, 2.0]).unwrap();
        let y = Matrix::column(&[1e300, -1e300, 1e300]).unwrap();
        let cfg = TrainConfig {
            loss: Loss::Mse,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_ffnn_on(&x, &y, &cfg, &arch),
            Err(PcnnError::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn step_budget_is_exact() {
        let x = Matrix::column(&(0..10).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let cfg = TrainConfig {
            steps: Some(7),
            batch_size: 4,
            ..TrainConfig::default()
        };
        let arch = Architecture::new(vec![1, 3, 1], Activation::Tanh);
        let fit = train_ffnn_on(&x, &x, &cfg, &arch).unwrap();
        assert_eq!(fit.steps, 7);
        assert_eq!(fit.epochs, 3);
    }
}
