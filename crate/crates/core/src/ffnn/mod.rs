//! Dense feedforward networks, their training (mini-batch Adam or a
//! random-feature ridge readout) and a finite-difference gradient check.

pub(crate) mod io;
mod train;

pub use train::{
    binary_cross_entropy, gradient_check, loss_gradient, loss_value, train_ffnn, train_ffnn_on, Fit,
    Loss, TrainConfig, TrainMode, BCE_EPS,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{PcnnError, Result};
use crate::numerics::{sample_uniform, sigmoid, Matrix, Rng};

/// Hidden-layer nonlinearity. The readout is always affine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Tanh => 2,
            Activation::Identity => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Relu,
            1 => Activation::Sigmoid,
            2 => Activation::Tanh,
            3 => Activation::Identity,
            t => return Err(PcnnError::Format(format!("unknown activation tag {t}"))),
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = PcnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(PcnnError::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

/// Layer sizes plus hidden activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub dims: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(dims: Vec<usize>, activation: Activation) -> Self {
        Architecture { dims, activation }
    }

    /// `[input, hidden..., output]`.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(output);
        Architecture { dims, activation }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(PcnnError::InvalidArgument(format!(
                "layer dims must have >= 2 positive entries, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// `Σ_j (dims[j]·dims[j+1] + dims[j+1])`.
pub fn parameter_count_for(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Multilayer perceptron with all parameters in one flat buffer.
///
/// Layer `j` stores its `dims[j] x dims[j+1]` weight matrix row-major,
/// followed by its `dims[j+1]` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Cached per-layer values from a forward pass.
pub(crate) struct Trace {
    /// `acts[0]` is the input; `acts[j+1]` is the output of layer `j`.
    pub acts: Vec<Matrix>,
    /// Pre-activations of each layer.
    pub pre: Vec<Matrix>,
}

impl Mlp {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Mlp {
            dims: arch.dims.clone(),
            activation: arch.activation,
            params: vec![0.0; parameter_count_for(&arch.dims)],
        })
    }

    pub fn from_params(arch: &Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let expected = parameter_count_for(&arch.dims);
        if params.len() != expected {
            return Err(PcnnError::DimensionMismatch(format!(
                "{} parameters for dims {:?} (expected {expected})",
                params.len(),
                arch.dims
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(PcnnError::NonFinite("network parameter".into()));
        }
        Ok(Mlp {
            dims: arch.dims.clone(),
            activation: arch.activation,
            params,
        })
    }

    /// Random initialisation: weights `N(0, gain²/fan_in)`, hidden biases
    /// uniform in `[-1, 1]`, readout bias zero. `gain` is `√2` for ReLU and 1
    /// otherwise.
    pub fn random(arch: &Architecture, rng: &mut Rng) -> Result<Self> {
        let mut m = Mlp::zeros(arch)?;
        let gain = if arch.activation == Activation::Relu {
            std::f64::consts::SQRT_2
        } else {
            1.0
        };
        m.init_layers(rng, gain, 0..m.layer_count())?;
        Ok(m)
    }

    /// Hidden layers with std `1/sqrt(fan_in)` weights and `U[-1,1]` biases;
    /// readout left at zero (to be fit by ridge regression).
    pub(crate) fn random_features(arch: &Architecture, rng: &mut Rng) -> Result<Self> {
        let mut m = Mlp::zeros(arch)?;
        let hidden = m.layer_count() - 1;
        m.init_layers(rng, 1.0, 0..hidden)?;
        Ok(m)
    }

    fn init_layers(&mut self, rng: &mut Rng, gain: f64, layers: std::ops::Range<usize>) -> Result<()> {
        let last = self.layer_count() - 1;
        for j in layers {
            let (fan_in, fan_out) = (self.dims[j], self.dims[j + 1]);
            let std = gain / (fan_in as f64).sqrt();
            let (w, b) = self.layer_mut(j);
            for v in w.iter_mut() {
                *v = std * rng.normal();
            }
            if j < last {
                for v in b.iter_mut().take(fan_out) {
                    *v = sample_uniform(rng, -1.0, 1.0)?;
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::new(self.dims.clone(), self.activation)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims validated non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, j: usize) -> usize {
        parameter_count_for(&self.dims[..=j])
    }

    /// Range of layer `j`'s parameters (weights then biases) in the flat buffer.
    pub(crate) fn layer_range(&self, j: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(j);
        start..start + self.dims[j] * self.dims[j + 1] + self.dims[j + 1]
    }

    pub(crate) fn layer(&self, j: usize) -> (&[f64], &[f64]) {
        let r = self.layer_range(j);
        let split = self.dims[j] * self.dims[j + 1];
        self.params[r].split_at(split)
    }

    pub(crate) fn layer_mut(&mut self, j: usize) -> (&mut [f64], &mut [f64]) {
        let r = self.layer_range(j);
        let split = self.dims[j] * self.dims[j + 1];
        self.params[r].split_at_mut(split)
    }

    /// Parameters of every layer except the readout.
    pub fn hidden_params(&self) -> &[f64] {
        let end = self.layer_offset(self.layer_count() - 1);
        &self.params[..end]
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.dims[0] {
            return Err(PcnnError::DimensionMismatch(format!(
                "network expects {} input columns, got {}",
                self.dims[0],
                inputs.cols()
            )));
        }
        Ok(())
    }

    /// Applies every layer to the rows of `inputs`.
    pub fn forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut a = inputs.clone();
        let last = self.layer_count() - 1;
        for j in 0..self.layer_count() {
            let mut z = self.affine(j, &a);
            if j < last {
                let act = self.activation;
                z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Output for a single input row.
    pub fn forward_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_raw(1, x.len(), x.to_vec());
        Ok(self.forward(&m)?.into_vec())
    }

    /// Last hidden-layer activations (the random features of a readout fit).
    pub(crate) fn hidden_features(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut a = inputs.clone();
        for j in 0..self.layer_count() - 1 {
            let mut z = self.affine(j, &a);
            let act = self.activation;
            z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            a = z;
        }
        Ok(a)
    }

    fn affine(&self, j: usize, a: &Matrix) -> Matrix {
        let (w, b) = self.layer(j);
        let (fan_in, fan_out) = (self.dims[j], self.dims[j + 1]);
        let mut out = Vec::with_capacity(a.rows() * fan_out);
        for row in a.iter_rows() {
            let start = out.len();
            out.extend_from_slice(b);
            let o = &mut out[start..];
            for (k, &x) in row.iter().enumerate().take(fan_in) {
                if x == 0.0 {
                    continue;
                }
                let w_row = &w[k * fan_out..(k + 1) * fan_out];
                for (ov, &wv) in o.iter_mut().zip(w_row) {
                    *ov += x * wv;
                }
            }
        }
        Matrix::from_raw(a.rows(), fan_out, out)
    }

    pub(crate) fn forward_trace(&self, inputs: &Matrix) -> Trace {
        let mut acts = Vec::with_capacity(self.layer_count() + 1);
        let mut pre = Vec::with_capacity(self.layer_count());
        acts.push(inputs.clone());
        let last = self.layer_count() - 1;
        for j in 0..self.layer_count() {
            let z = self.affine(j, &acts[j]);
            let a = if j < last {
                let act = self.activation;
                z.map(|v| act.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        Trace { acts, pre }
    }

    /// Gradient of the loss with respect to every parameter, given
    /// `d_out = dL/d(output)` for the traced batch.
    pub(crate) fn backward(&self, trace: &Trace, d_out: Matrix) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out;
        for j in (0..self.layer_count()).rev() {
            let (fan_in, fan_out) = (self.dims[j], self.dims[j + 1]);
            let range = self.layer_range(j);
            let (gw, gb) = grad[range].split_at_mut(fan_in * fan_out);
            let a_prev = &trace.acts[j];
            for r in 0..delta.rows() {
                let d = delta.row(r);
                let a = a_prev.row(r);
                for (k, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let g = &mut gw[k * fan_out..(k + 1) * fan_out];
                    for (gv, &dv) in g.iter_mut().zip(d) {
                        *gv += av * dv;
                    }
                }
                for (gv, &dv) in gb.iter_mut().zip(d) {
                    *gv += dv;
                }
            }
            if j == 0 {
                break;
            }
            let (w, _) = self.layer(j);
            let z_prev = &trace.pre[j - 1];
            let mut next = Matrix::zeros(delta.rows(), fan_in);
            for r in 0..delta.rows() {
                let d = delta.row(r);
                let a_row = a_prev.row(r);
                let z_row = z_prev.row(r);
                let out = next.row_mut(r);
                for k in 0..fan_in {
                    let w_row = &w[k * fan_out..(k + 1) * fan_out];
                    let s: f64 = w_row.iter().zip(d).map(|(a, b)| a * b).sum();
                    out[k] = s * self.activation.derivative(z_row[k], a_row[k]);
                }
            }
            delta = next;
        }
        grad
    }
}
