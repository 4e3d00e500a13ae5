//! Forward passes. Every pass records the intermediate activations needed
//! for the reverse sweep in [`super::backward`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use super::{
    validate_shapes, EncoderKind, NetworkConfig, NetworkRole, ParameterSet, CONV_KERNEL,
    SCALAR_INPUTS,
};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = w @ x + b` for a row-major `[rows, cols]` weight.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o = acc;
    }
}

/// Per-layer, per-timestep LSTM activations kept for BPTT.
pub(crate) struct LstmCache {
    /// Input vector of each layer at each step: `inputs[layer][t]`.
    pub(crate) inputs: Vec<Vec<Vec<f64>>>,
    pub(crate) h_prev: Vec<Vec<Vec<f64>>>,
    pub(crate) c_prev: Vec<Vec<Vec<f64>>>,
    pub(crate) gate_i: Vec<Vec<Vec<f64>>>,
    pub(crate) gate_f: Vec<Vec<Vec<f64>>>,
    pub(crate) gate_o: Vec<Vec<Vec<f64>>>,
    pub(crate) gate_g: Vec<Vec<Vec<f64>>>,
    pub(crate) tanh_c: Vec<Vec<Vec<f64>>>,
}

pub(crate) struct ConvCache {
    pub(crate) window: Vec<f64>,
    /// Pre-ReLU activations: `pre[position][filter]`.
    pub(crate) pre: Vec<Vec<f64>>,
}

pub(crate) enum EncoderCache {
    Lstm(LstmCache),
    Conv(ConvCache),
}

/// Everything the backward sweep needs about one forward evaluation.
pub(crate) struct ForwardTrace {
    pub(crate) encoder: EncoderCache,
    pub(crate) concat: Vec<f64>,
    pub(crate) z1: Vec<f64>,
    pub(crate) a1: Vec<f64>,
    pub(crate) mask1: Vec<f64>,
    pub(crate) z2: Vec<f64>,
    pub(crate) a2: Vec<f64>,
    pub(crate) mask2: Vec<f64>,
    /// Head outputs: logits for the actor, a single value for the critic.
    pub(crate) outputs: Vec<f64>,
    /// Softmax probabilities (actor only).
    pub(crate) probs: Option<Vec<f64>>,
}

fn lstm_encode(window: &[f64], params: &ParameterSet, cfg: &NetworkConfig) -> Result<(Vec<f64>, LstmCache)> {
    let h = cfg.lstm_hidden;
    let layers = cfg.lstm_layers;
    let steps = window.len();
    let mut cache = LstmCache {
        inputs: vec![Vec::with_capacity(steps); layers],
        h_prev: vec![Vec::with_capacity(steps); layers],
        c_prev: vec![Vec::with_capacity(steps); layers],
        gate_i: vec![Vec::with_capacity(steps); layers],
        gate_f: vec![Vec::with_capacity(steps); layers],
        gate_o: vec![Vec::with_capacity(steps); layers],
        gate_g: vec![Vec::with_capacity(steps); layers],
        tanh_c: vec![Vec::with_capacity(steps); layers],
    };
    let mut h_state = vec![vec![0.0; h]; layers];
    let mut c_state = vec![vec![0.0; h]; layers];
    let mut gates = vec![0.0; 4 * h];

    for t in 0..steps {
        let mut layer_input = vec![window[t]];
        for l in 0..layers {
            let w_ih = params.get(&format!("lstm{l}.w_ih"))?;
            let w_hh = params.get(&format!("lstm{l}.w_hh"))?;
            let bias = params.get(&format!("lstm{l}.bias"))?;

            affine(&w_ih.data, &bias.data, &layer_input, &mut gates);
            // gates += w_hh @ h_prev (bias already added once).
            for r in 0..4 * h {
                let row = &w_hh.data[r * h..(r + 1) * h];
                let mut acc = 0.0;
                for (wv, hv) in row.iter().zip(&h_state[l]) {
                    acc += wv * hv;
                }
                gates[r] += acc;
            }

            let mut gi = vec![0.0; h];
            let mut gf = vec![0.0; h];
            let mut go = vec![0.0; h];
            let mut gg = vec![0.0; h];
            for j in 0..h {
                gi[j] = sigmoid(gates[j]);
                gf[j] = sigmoid(gates[h + j]);
                go[j] = sigmoid(gates[2 * h + j]);
                gg[j] = gates[3 * h + j].tanh();
            }

            let mut c_new = vec![0.0; h];
            let mut tc = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                c_new[j] = gf[j] * c_state[l][j] + gi[j] * gg[j];
                tc[j] = c_new[j].tanh();
                h_new[j] = go[j] * tc[j];
            }

            cache.inputs[l].push(layer_input.clone());
            cache.h_prev[l].push(h_state[l].clone());
            cache.c_prev[l].push(c_state[l].clone());
            cache.gate_i[l].push(gi);
            cache.gate_f[l].push(gf);
            cache.gate_o[l].push(go);
            cache.gate_g[l].push(gg);
            cache.tanh_c[l].push(tc);

            h_state[l] = h_new.clone();
            c_state[l] = c_new;
            layer_input = h_new;
        }
    }
    Ok((h_state[layers - 1].clone(), cache))
}

fn conv_encode(window: &[f64], params: &ParameterSet, cfg: &NetworkConfig) -> Result<(Vec<f64>, ConvCache)> {
    let filters = cfg.feature_dim();
    let w = params.get("conv.w")?;
    let b = params.get("conv.b")?;
    let positions = window.len() + 1 - CONV_KERNEL;
    let mut pre = vec![vec![0.0; filters]; positions];
    let mut features = vec![0.0; filters];
    for (p, row) in pre.iter_mut().enumerate() {
        for f in 0..filters {
            let mut acc = b.data[f];
            for k in 0..CONV_KERNEL {
                acc += w.data[f * CONV_KERNEL + k] * window[p + k];
            }
            row[f] = acc;
            features[f] += acc.max(0.0) / positions as f64;
        }
    }
    Ok((features, ConvCache { window: window.to_vec(), pre }))
}

fn dropout_mask(len: usize, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            (0..len)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep })
                .collect()
        }
        _ => vec![1.0; len],
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - max - log_sum).collect()
}

/// Shannon entropy of a probability vector, in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// Role-specific head behavior is the only difference between the actor and
/// critic topologies.
pub use super::NetworkRole as Head;

pub(crate) fn forward_pass(
    state: &[f64],
    params: &ParameterSet,
    cfg: &NetworkConfig,
    role: NetworkRole,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardTrace> {
    cfg.validate()?;
    validate_shapes(params, cfg, role)?;
    if state.len() != cfg.state_dim() {
        return Err(Error::BadStateLength { want: cfg.state_dim(), got: state.len() });
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state vector".into()));
    }

    let scalars = state[..SCALAR_INPUTS].to_vec();
    let window = &state[SCALAR_INPUTS..];
    let (features, encoder) = match cfg.encoder {
        EncoderKind::Lstm => {
            let (f, c) = lstm_encode(window, params, cfg)?;
            (f, EncoderCache::Lstm(c))
        }
        EncoderKind::Conv1d => {
            let (f, c) = conv_encode(window, params, cfg)?;
            (f, EncoderCache::Conv(c))
        }
    };

    let mut concat = Vec::with_capacity(SCALAR_INPUTS + features.len());
    concat.extend_from_slice(&scalars);
    concat.extend_from_slice(&features);

    let fc1_w = params.get("fc1.w")?;
    let fc1_b = params.get("fc1.b")?;
    let mut z1 = vec![0.0; cfg.fc_sizes[0]];
    affine(&fc1_w.data, &fc1_b.data, &concat, &mut z1);
    let mask1 = dropout_mask(z1.len(), cfg.dropout_rate, dropout_rng.as_deref_mut());
    let a1: Vec<f64> = z1.iter().zip(&mask1).map(|(&z, &m)| z.max(0.0) * m).collect();

    let fc2_w = params.get("fc2.w")?;
    let fc2_b = params.get("fc2.b")?;
    let mut z2 = vec![0.0; cfg.fc_sizes[1]];
    affine(&fc2_w.data, &fc2_b.data, &a1, &mut z2);
    let mask2 = dropout_mask(z2.len(), cfg.dropout_rate, dropout_rng);
    let a2: Vec<f64> = z2.iter().zip(&mask2).map(|(&z, &m)| z.max(0.0) * m).collect();

    let head_w = params.get("head.w")?;
    let head_b = params.get("head.b")?;
    let outputs_len = head_b.data.len();
    let mut outputs = vec![0.0; outputs_len];
    affine(&head_w.data, &head_b.data, &a2, &mut outputs);

    let probs = match role {
        NetworkRole::Actor => {
            let logp = log_softmax(&outputs);
            Some(logp.iter().map(|lp| lp.exp()).collect())
        }
        NetworkRole::Critic => None,
    };

    Ok(ForwardTrace {
        encoder,
        concat,
        z1,
        a1,
        mask1,
        z2,
        a2,
        mask2,
        outputs,
        probs,
    })
}

/// Smallest |pre-activation| across the ReLU layers for one state. Central
/// finite differences are only a valid gradient oracle away from the ReLU
/// kinks, so checkers require a margin larger than their step size.
pub fn min_relu_margin(
    state: &[f64],
    params: &ParameterSet,
    cfg: &NetworkConfig,
    role: NetworkRole,
) -> Result<f64> {
    let trace = forward_pass(state, params, cfg, role, None)?;
    let mut margin = f64::INFINITY;
    for z in trace.z1.iter().chain(trace.z2.iter()) {
        margin = margin.min(z.abs());
    }
    if let EncoderCache::Conv(cache) = &trace.encoder {
        for row in &cache.pre {
            for z in row {
                margin = margin.min(z.abs());
            }
        }
    }
    Ok(margin)
}

/// Encoder features for one throughput window: the final top-layer hidden
/// state of the stacked LSTM (or the pooled convolution features).
pub fn encode_throughput(window: &[f64], params: &ParameterSet, cfg: &NetworkConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if window.len() != cfg.throughput_window {
        return Err(Error::BadWindowLength { want: cfg.throughput_window, got: window.len() });
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("throughput window".into()));
    }
    match cfg.encoder {
        EncoderKind::Lstm => lstm_encode(window, params, cfg).map(|(f, _)| f),
        EncoderKind::Conv1d => conv_encode(window, params, cfg).map(|(f, _)| f),
    }
}

/// Action probabilities for one state. With `train_mode` set and a nonzero
/// dropout rate, inverted dropout is applied after each FC layer using a
/// stream seeded from `cfg.seed`; evaluation needs no rescaling.
pub fn policy_forward(state: &[f64], params: &ParameterSet, cfg: &NetworkConfig, train_mode: bool) -> Result<Vec<f64>> {
    let mut rng;
    let dropout = if train_mode && cfg.dropout_rate > 0.0 {
        rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Some(&mut rng)
    } else {
        None
    };
    let trace = forward_pass(state, params, cfg, NetworkRole::Actor, dropout)?;
    Ok(trace.probs.expect("actor pass yields probabilities"))
}

/// State value for one state; evaluation mode, no dropout.
pub fn value_forward(state: &[f64], params: &ParameterSet, cfg: &NetworkConfig) -> Result<f64> {
    let trace = forward_pass(state, params, cfg, NetworkRole::Critic, None)?;
    Ok(trace.outputs[0])
}
