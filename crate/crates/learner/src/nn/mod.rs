//! Minimal dense neural machinery for the two fixed agent topologies:
//! named parameter storage, a stacked-LSTM (or 1-D convolution) throughput
//! encoder feeding two fully connected layers, softmax/value heads, exact
//! reverse-mode gradients including backpropagation through time, plain SGD,
//! and finite-difference gradient checking.

mod backward;
mod checkpoint;
mod forward;
mod gradcheck;

pub use backward::{backward, objective_value, ActorSample, CriticSample, LossKind};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    encode_throughput, entropy, log_softmax, min_relu_margin, policy_forward, value_forward, Head,
};
pub use gradcheck::{finite_difference_check, GradCheckReport};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar state entries preceding the throughput window:
/// quantized distance/velocity/acceleration, buffer, last level.
pub const SCALAR_INPUTS: usize = 5;

/// Kernel width of the ablation 1-D convolution encoder.
pub const CONV_KERNEL: usize = 4;

/// Which encoder turns the throughput window into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Stacked LSTM over the window in time order.
    Lstm,
    /// 1-D convolution (kernel 4), ReLU, mean-pooled over positions.
    Conv1d,
}

/// Head attached after the fully connected stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkRole {
    /// Softmax over the bitrate ladder.
    Actor,
    /// Single linear state-value output.
    Critic,
}

/// Architecture and size choices shared by the actor and critic networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    /// Number of past chunk throughputs in the state (8; 2/16 for ablations).
    pub throughput_window: usize,
    pub fc_sizes: [usize; 2],
    pub num_actions: usize,
    /// Inverted-dropout rate applied after each FC layer during updates.
    pub dropout_rate: f64,
    pub encoder: EncoderKind,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            lstm_layers: 2,
            lstm_hidden: 64,
            throughput_window: 8,
            fc_sizes: [30, 10],
            num_actions: 4,
            dropout_rate: 0.1,
            encoder: EncoderKind::Lstm,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.lstm_layers == 0 || self.lstm_hidden == 0 {
            return bad("lstm layers and hidden size must be positive".into());
        }
        if self.throughput_window == 0 {
            return bad("throughput window must be positive".into());
        }
        if self.fc_sizes.iter().any(|&s| s == 0) || self.num_actions == 0 {
            return bad("layer sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} must be in [0, 1)", self.dropout_rate));
        }
        if self.encoder == EncoderKind::Conv1d && self.throughput_window < CONV_KERNEL {
            return bad(format!(
                "conv encoder needs a window of at least {CONV_KERNEL}, got {}",
                self.throughput_window
            ));
        }
        Ok(())
    }

    /// Length of the full observation vector (13 with the defaults).
    pub fn state_dim(&self) -> usize {
        SCALAR_INPUTS + self.throughput_window
    }

    /// Width of the encoder output feature vector.
    pub fn feature_dim(&self) -> usize {
        self.lstm_hidden
    }
}

/// A dense real array with an explicit shape, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![0.0; numel] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Named parameter arrays with immutable shapes; also the container for
/// gradients, which mirror the same names and shapes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: BTreeMap<String, Tensor>,
}

/// Gradients share the layout of the parameters they refer to.
pub type GradientSet = ParameterSet;

impl ParameterSet {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Iterates entries in name order (deterministic).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Zero-filled set with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::default();
        for (name, t) in self.iter() {
            out.insert(name, Tensor::zeros(t.shape.clone()));
        }
        out
    }

    /// First non-finite entry, as (name, flat index).
    pub fn find_non_finite(&self) -> Option<(String, usize)> {
        for (name, t) in self.iter() {
            if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
                return Some((name.to_string(), i));
            }
        }
        None
    }
}

/// Canonical parameter names and shapes for one network.
pub fn parameter_layout(cfg: &NetworkConfig, role: NetworkRole) -> Vec<(String, Vec<usize>)> {
    let h = cfg.lstm_hidden;
    let mut layout = Vec::new();
    match cfg.encoder {
        EncoderKind::Lstm => {
            for l in 0..cfg.lstm_layers {
                let input = if l == 0 { 1 } else { h };
                layout.push((format!("lstm{l}.w_ih"), vec![4 * h, input]));
                layout.push((format!("lstm{l}.w_hh"), vec![4 * h, h]));
                layout.push((format!("lstm{l}.bias"), vec![4 * h]));
            }
        }
        EncoderKind::Conv1d => {
            layout.push(("conv.w".to_string(), vec![h, CONV_KERNEL]));
            layout.push(("conv.b".to_string(), vec![h]));
        }
    }
    let fc_in = SCALAR_INPUTS + cfg.feature_dim();
    layout.push(("fc1.w".to_string(), vec![cfg.fc_sizes[0], fc_in]));
    layout.push(("fc1.b".to_string(), vec![cfg.fc_sizes[0]]));
    layout.push(("fc2.w".to_string(), vec![cfg.fc_sizes[1], cfg.fc_sizes[0]]));
    layout.push(("fc2.b".to_string(), vec![cfg.fc_sizes[1]]));
    let outputs = match role {
        NetworkRole::Actor => cfg.num_actions,
        NetworkRole::Critic => 1,
    };
    layout.push(("head.w".to_string(), vec![outputs, cfg.fc_sizes[1]]));
    layout.push(("head.b".to_string(), vec![outputs]));
    layout
}

/// Initializes parameters: weights uniform in ±1/sqrt(fan_in), biases zero
/// except the LSTM forget-gate slice, which starts at one. Deterministic
/// given the seed.
pub fn init_params(cfg: &NetworkConfig, seed: u64, role: NetworkRole) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::default();
    for (name, shape) in parameter_layout(cfg, role) {
        let mut tensor = Tensor::zeros(shape.clone());
        if shape.len() == 2 {
            let bound = 1.0 / (shape[1] as f64).sqrt();
            for v in &mut tensor.data {
                *v = rng.random_range(-bound..bound);
            }
        } else if name.starts_with("lstm") && name.ends_with(".bias") {
            // Gate order is [input, forget, output, candidate]; open the
            // forget gate at initialization.
            let h = cfg.lstm_hidden;
            for v in &mut tensor.data[h..2 * h] {
                *v = 1.0;
            }
        }
        params.insert(name, tensor);
    }
    Ok(params)
}

/// Checks that `params` matches the canonical layout for (cfg, role).
pub fn validate_shapes(params: &ParameterSet, cfg: &NetworkConfig, role: NetworkRole) -> Result<()> {
    let layout = parameter_layout(cfg, role);
    if params.len() != layout.len() {
        return Err(Error::InvalidConfig(format!(
            "parameter set has {} arrays, layout wants {}",
            params.len(),
            layout.len()
        )));
    }
    for (name, shape) in layout {
        let tensor = params.get(&name)?;
        if tensor.shape != shape {
            return Err(Error::ShapeMismatch { name, got: tensor.shape.clone(), want: shape });
        }
    }
    Ok(())
}

/// Update direction for [`sgd_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `p += lr * g` (policy objective maximization).
    Ascent,
    /// `p -= lr * g` (loss minimization).
    Descent,
}

/// One plain SGD step, elementwise over every named array.
pub fn sgd_step(params: &mut ParameterSet, grads: &GradientSet, lr: f64, direction: Direction) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate {lr} must be positive")));
    }
    let sign = match direction {
        Direction::Ascent => 1.0,
        Direction::Descent => -1.0,
    };
    for (name, grad) in grads.iter() {
        let tensor = params.get_mut(name)?;
        if tensor.shape != grad.shape {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                got: grad.shape.clone(),
                want: tensor.shape.clone(),
            });
        }
        for (p, g) in tensor.data.iter_mut().zip(&grad.data) {
            *p += sign * lr * g;
        }
    }
    Ok(())
}
