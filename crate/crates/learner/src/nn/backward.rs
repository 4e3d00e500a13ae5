//! Reverse-mode gradients of the actor and critic objectives, including
//! backpropagation through time over the throughput-window LSTM. Gradients
//! are exact for the batch-summed objective; batches sum, so duplicating a
//! sample doubles its contribution.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use super::forward::{entropy, forward_pass, log_softmax, EncoderCache, ForwardTrace};
use super::{GradientSet, NetworkConfig, NetworkRole, ParameterSet, CONV_KERNEL, SCALAR_INPUTS};

/// One actor-update sample: the advantage is treated as a constant.
#[derive(Debug, Clone)]
pub struct ActorSample {
    pub state: Vec<f64>,
    pub action: usize,
    pub advantage: f64,
}

/// One critic-update sample: the TD target is treated as a constant
/// (semi-gradient).
#[derive(Debug, Clone)]
pub struct CriticSample {
    pub state: Vec<f64>,
    pub target: f64,
}

/// The two scalar objectives the networks are trained on.
///
/// Actor: `sum_t [ log pi(a_t|s_t) * A_t + beta * H(pi(.|s_t)) ]`, maximized.
/// Critic: `sum_t (target_t - V(s_t))^2`, minimized.
pub enum LossKind<'a> {
    Actor { batch: &'a [ActorSample], entropy_weight: f64 },
    Critic { batch: &'a [CriticSample] },
}

impl LossKind<'_> {
    fn is_empty(&self) -> bool {
        match self {
            LossKind::Actor { batch, .. } => batch.is_empty(),
            LossKind::Critic { batch } => batch.is_empty(),
        }
    }
}

/// Objective value and exact gradients for the batch.
///
/// When `dropout_rng` is supplied and the config has a nonzero dropout rate,
/// inverted-dropout masks are sampled per sample per FC layer and the
/// gradients are taken through the masked network.
pub fn backward(
    kind: &LossKind,
    params: &ParameterSet,
    cfg: &NetworkConfig,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, GradientSet)> {
    if kind.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grads = params.zeros_like();
    let mut objective = 0.0;

    match kind {
        LossKind::Actor { batch, entropy_weight } => {
            for sample in *batch {
                if sample.action >= cfg.num_actions {
                    return Err(Error::BadAction { got: sample.action, len: cfg.num_actions });
                }
                if !sample.advantage.is_finite() {
                    return Err(Error::NonFinite("advantage".into()));
                }
                let trace =
                    forward_pass(&sample.state, params, cfg, NetworkRole::Actor, dropout_rng.as_deref_mut())?;
                let logp = log_softmax(&trace.outputs);
                let probs = trace.probs.as_ref().expect("actor trace");
                let h = entropy(probs);
                objective += logp[sample.action] * sample.advantage + entropy_weight * h;

                // d/dlogit_k [ logp_a * A + beta * H ]
                //   = A * (1[k=a] - p_k) - beta * p_k * (logp_k + H)
                let mut d_out = vec![0.0; cfg.num_actions];
                for k in 0..cfg.num_actions {
                    let indicator = if k == sample.action { 1.0 } else { 0.0 };
                    d_out[k] = sample.advantage * (indicator - probs[k])
                        - entropy_weight * probs[k] * (logp[k] + h);
                }
                accumulate_sample(&trace, &d_out, params, cfg, &mut grads)?;
            }
        }
        LossKind::Critic { batch } => {
            for sample in *batch {
                if !sample.target.is_finite() {
                    return Err(Error::NonFinite("critic target".into()));
                }
                let trace =
                    forward_pass(&sample.state, params, cfg, NetworkRole::Critic, dropout_rng.as_deref_mut())?;
                let v = trace.outputs[0];
                let err = sample.target - v;
                objective += err * err;
                let d_out = vec![-2.0 * err];
                accumulate_sample(&trace, &d_out, params, cfg, &mut grads)?;
            }
        }
    }

    if !objective.is_finite() {
        return Err(Error::NonFinite("objective".into()));
    }
    if let Some((name, _)) = grads.find_non_finite() {
        return Err(Error::NonFinite(format!("gradient of `{name}`")));
    }
    Ok((objective, grads))
}

/// Forward-only evaluation of the batch objective; no dropout. Used by the
/// finite-difference gradient checker as the independent scalar route.
pub fn objective_value(kind: &LossKind, params: &ParameterSet, cfg: &NetworkConfig) -> Result<f64> {
    if kind.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut objective = 0.0;
    match kind {
        LossKind::Actor { batch, entropy_weight } => {
            for sample in *batch {
                let trace = forward_pass(&sample.state, params, cfg, NetworkRole::Actor, None)?;
                let logp = log_softmax(&trace.outputs);
                let probs = trace.probs.as_ref().expect("actor trace");
                objective += logp[sample.action] * sample.advantage + entropy_weight * entropy(probs);
            }
        }
        LossKind::Critic { batch } => {
            for sample in *batch {
                let trace = forward_pass(&sample.state, params, cfg, NetworkRole::Critic, None)?;
                let err = sample.target - trace.outputs[0];
                objective += err * err;
            }
        }
    }
    Ok(objective)
}

/// Backprop for one sample: head -> FC stack -> encoder.
fn accumulate_sample(
    trace: &ForwardTrace,
    d_out: &[f64],
    params: &ParameterSet,
    cfg: &NetworkConfig,
    grads: &mut GradientSet,
) -> Result<()> {
    // Head.
    let head_w = params.get("head.w")?;
    let n2 = cfg.fc_sizes[1];
    {
        let g_w = grads.get_mut("head.w")?;
        for (r, d) in d_out.iter().enumerate() {
            for (c, a) in trace.a2.iter().enumerate() {
                g_w.data[r * n2 + c] += d * a;
            }
        }
        let g_b = grads.get_mut("head.b")?;
        for (r, d) in d_out.iter().enumerate() {
            g_b.data[r] += d;
        }
    }
    let mut d_a2 = vec![0.0; n2];
    for (c, slot) in d_a2.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (r, d) in d_out.iter().enumerate() {
            acc += head_w.data[r * n2 + c] * d;
        }
        *slot = acc;
    }

    // FC2 (dropout mask, then ReLU gate).
    let n1 = cfg.fc_sizes[0];
    let fc2_w = params.get("fc2.w")?;
    let mut d_z2 = vec![0.0; n2];
    for j in 0..n2 {
        let through_mask = d_a2[j] * trace.mask2[j];
        d_z2[j] = if trace.z2[j] > 0.0 { through_mask } else { 0.0 };
    }
    {
        let g_w = grads.get_mut("fc2.w")?;
        for (r, d) in d_z2.iter().enumerate() {
            for (c, a) in trace.a1.iter().enumerate() {
                g_w.data[r * n1 + c] += d * a;
            }
        }
        let g_b = grads.get_mut("fc2.b")?;
        for (r, d) in d_z2.iter().enumerate() {
            g_b.data[r] += d;
        }
    }
    let mut d_a1 = vec![0.0; n1];
    for (c, slot) in d_a1.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (r, d) in d_z2.iter().enumerate() {
            acc += fc2_w.data[r * n1 + c] * d;
        }
        *slot = acc;
    }

    // FC1.
    let fc_in = trace.concat.len();
    let fc1_w = params.get("fc1.w")?;
    let mut d_z1 = vec![0.0; n1];
    for j in 0..n1 {
        let through_mask = d_a1[j] * trace.mask1[j];
        d_z1[j] = if trace.z1[j] > 0.0 { through_mask } else { 0.0 };
    }
    {
        let g_w = grads.get_mut("fc1.w")?;
        for (r, d) in d_z1.iter().enumerate() {
            for (c, x) in trace.concat.iter().enumerate() {
                g_w.data[r * fc_in + c] += d * x;
            }
        }
        let g_b = grads.get_mut("fc1.b")?;
        for (r, d) in d_z1.iter().enumerate() {
            g_b.data[r] += d;
        }
    }
    // Gradient w.r.t. the encoder features (the scalar slice is input data).
    let feat_dim = cfg.feature_dim();
    let mut d_features = vec![0.0; feat_dim];
    for (c, slot) in d_features.iter_mut().enumerate() {
        let col = SCALAR_INPUTS + c;
        let mut acc = 0.0;
        for (r, d) in d_z1.iter().enumerate() {
            acc += fc1_w.data[r * fc_in + col] * d;
        }
        *slot = acc;
    }

    match &trace.encoder {
        EncoderCache::Lstm(cache) => lstm_backward(cache, &d_features, params, cfg, grads),
        EncoderCache::Conv(cache) => conv_backward(cache, &d_features, grads),
    }
}

/// BPTT over the stacked LSTM. Only the top layer's final hidden state feeds
/// the FC stack; gradient reaches earlier steps through the recurrent path
/// and lower layers through each step's input path.
fn lstm_backward(
    cache: &super::forward::LstmCache,
    d_features: &[f64],
    params: &ParameterSet,
    cfg: &NetworkConfig,
    grads: &mut GradientSet,
) -> Result<()> {
    let h = cfg.lstm_hidden;
    let layers = cfg.lstm_layers;
    let steps = cache.inputs[0].len();

    let mut from_above: Vec<Vec<f64>> = vec![vec![0.0; h]; steps];
    from_above[steps - 1].copy_from_slice(d_features);

    for l in (0..layers).rev() {
        let in_dim = if l == 0 { 1 } else { h };
        let w_ih = params.get(&format!("lstm{l}.w_ih"))?.data.clone();
        let w_hh = params.get(&format!("lstm{l}.w_hh"))?.data.clone();

        let mut g_w_ih = vec![0.0; 4 * h * in_dim];
        let mut g_w_hh = vec![0.0; 4 * h * h];
        let mut g_bias = vec![0.0; 4 * h];

        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut below: Vec<Vec<f64>> = vec![vec![0.0; in_dim]; steps];

        for t in (0..steps).rev() {
            let gi = &cache.gate_i[l][t];
            let gf = &cache.gate_f[l][t];
            let go = &cache.gate_o[l][t];
            let gg = &cache.gate_g[l][t];
            let tc = &cache.tanh_c[l][t];
            let c_prev = &cache.c_prev[l][t];
            let h_prev = &cache.h_prev[l][t];
            let x = &cache.inputs[l][t];

            let mut dz = vec![0.0; 4 * h];
            for j in 0..h {
                let dh = from_above[t][j] + dh_next[j];
                let dc = dh * go[j] * (1.0 - tc[j] * tc[j]) + dc_next[j];
                dz[j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
                dz[h + j] = dc * c_prev[j] * gf[j] * (1.0 - gf[j]);
                dz[2 * h + j] = dh * tc[j] * go[j] * (1.0 - go[j]);
                dz[3 * h + j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
                dc_next[j] = dc * gf[j];
            }

            for r in 0..4 * h {
                let d = dz[r];
                g_bias[r] += d;
                let ih_row = r * in_dim;
                for c in 0..in_dim {
                    g_w_ih[ih_row + c] += d * x[c];
                }
                let hh_row = r * h;
                for c in 0..h {
                    g_w_hh[hh_row + c] += d * h_prev[c];
                }
            }

            for (c, slot) in dh_next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for r in 0..4 * h {
                    acc += w_hh[r * h + c] * dz[r];
                }
                *slot = acc;
            }
            for (c, slot) in below[t].iter_mut().enumerate() {
                let mut acc = 0.0;
                for r in 0..4 * h {
                    acc += w_ih[r * in_dim + c] * dz[r];
                }
                *slot = acc;
            }
        }

        add_into(grads.get_mut(&format!("lstm{l}.w_ih"))?, &g_w_ih);
        add_into(grads.get_mut(&format!("lstm{l}.w_hh"))?, &g_w_hh);
        add_into(grads.get_mut(&format!("lstm{l}.bias"))?, &g_bias);

        if l > 0 {
            from_above = below;
        }
    }
    Ok(())
}

fn conv_backward(
    cache: &super::forward::ConvCache,
    d_features: &[f64],
    grads: &mut GradientSet,
) -> Result<()> {
    let positions = cache.pre.len();
    let filters = d_features.len();
    let g_w = grads.get_mut("conv.w")?;
    for (p, row) in cache.pre.iter().enumerate() {
        for f in 0..filters {
            if row[f] > 0.0 {
                let d = d_features[f] / positions as f64;
                for k in 0..CONV_KERNEL {
                    g_w.data[f * CONV_KERNEL + k] += d * cache.window[p + k];
                }
            }
        }
    }
    let g_b = grads.get_mut("conv.b")?;
    for (p, row) in cache.pre.iter().enumerate() {
        let _ = p;
        for f in 0..filters {
            if row[f] > 0.0 {
                g_b.data[f] += d_features[f] / positions as f64;
            }
        }
    }
    Ok(())
}

fn add_into(tensor: &mut super::Tensor, values: &[f64]) {
    for (t, v) in tensor.data.iter_mut().zip(values) {
        *t += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::{init_params, value_forward, EncoderKind};

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            lstm_layers: 2,
            lstm_hidden: 8,
            throughput_window: 8,
            fc_sizes: [5, 3],
            num_actions: 4,
            dropout_rate: 0.0,
            encoder: EncoderKind::Lstm,
            seed: 0,
        }
    }

    fn state(seed: usize, dim: usize) -> Vec<f64> {
        (0..dim).map(|i| ((seed * 37 + i * 13) % 11) as f64 / 11.0).collect()
    }

    #[test]
    fn critic_gradient_vanishes_at_a_perfect_fit() {
        let cfg = cfg();
        let params = init_params(&cfg, 7, NetworkRole::Critic).unwrap();
        let batch: Vec<CriticSample> = (0..5)
            .map(|i| {
                let s = state(i, cfg.state_dim());
                let target = value_forward(&s, &params, &cfg).unwrap();
                CriticSample { state: s, target }
            })
            .collect();
        let (loss, grads) = backward(&LossKind::Critic { batch: &batch }, &params, &cfg, None).unwrap();
        assert_eq!(loss, 0.0);
        for (_, g) in grads.iter() {
            assert!(g.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_advantages_with_zero_entropy_weight_give_zero_gradient() {
        let cfg = cfg();
        let params = init_params(&cfg, 3, NetworkRole::Actor).unwrap();
        let batch: Vec<ActorSample> = (0..4)
            .map(|i| ActorSample { state: state(i, cfg.state_dim()), action: i % 4, advantage: 0.0 })
            .collect();
        let (_, grads) =
            backward(&LossKind::Actor { batch: &batch, entropy_weight: 0.0 }, &params, &cfg, None).unwrap();
        for (_, g) in grads.iter() {
            assert!(g.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn duplicating_the_batch_doubles_the_gradient_exactly() {
        let cfg = cfg();
        let params = init_params(&cfg, 5, NetworkRole::Actor).unwrap();
        let one = vec![ActorSample { state: state(1, cfg.state_dim()), action: 2, advantage: 1.5 }];
        let two = vec![one[0].clone(), one[0].clone()];
        let (o1, g1) = backward(&LossKind::Actor { batch: &one, entropy_weight: 0.3 }, &params, &cfg, None).unwrap();
        let (o2, g2) = backward(&LossKind::Actor { batch: &two, entropy_weight: 0.3 }, &params, &cfg, None).unwrap();
        assert_eq!(o2, 2.0 * o1);
        for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*y, 2.0 * x);
            }
        }
    }

    #[test]
    fn doubling_advantages_doubles_the_gradient_when_entropy_is_off() {
        let cfg = cfg();
        let params = init_params(&cfg, 6, NetworkRole::Actor).unwrap();
        let base = vec![ActorSample { state: state(2, cfg.state_dim()), action: 1, advantage: 0.7 }];
        let double = vec![ActorSample { advantage: 1.4, ..base[0].clone() }];
        let (_, g1) = backward(&LossKind::Actor { batch: &base, entropy_weight: 0.0 }, &params, &cfg, None).unwrap();
        let (_, g2) = backward(&LossKind::Actor { batch: &double, entropy_weight: 0.0 }, &params, &cfg, None).unwrap();
        for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((y - 2.0 * x).abs() <= 1e-15 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn one_ascent_step_raises_the_advantaged_action() {
        use super::super::{policy_forward, sgd_step, Direction};
        let cfg = cfg();
        for seed in 0..10 {
            let mut params = init_params(&cfg, seed, NetworkRole::Actor).unwrap();
            let s = state(seed as usize, cfg.state_dim());
            let before = policy_forward(&s, &params, &cfg, false).unwrap()[0];
            let batch = vec![ActorSample { state: s.clone(), action: 0, advantage: 1.0 }];
            let (_, grads) =
                backward(&LossKind::Actor { batch: &batch, entropy_weight: 0.0 }, &params, &cfg, None).unwrap();
            sgd_step(&mut params, &grads, 1e-2, Direction::Ascent).unwrap();
            let after = policy_forward(&s, &params, &cfg, false).unwrap()[0];
            assert!(after > before, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn single_sample_critic_loss_is_squared_error() {
        let cfg = cfg();
        let mut params = init_params(&cfg, 1, NetworkRole::Critic).unwrap();
        // Zero the network so V = 0 everywhere.
        for name in ["head.w", "head.b"] {
            for v in &mut params.get_mut(name).unwrap().data {
                *v = 0.0;
            }
        }
        let batch = vec![CriticSample { state: state(0, cfg.state_dim()), target: 2.0 }];
        let (loss, _) = backward(&LossKind::Critic { batch: &batch }, &params, &cfg, None).unwrap();
        assert_eq!(loss, 4.0);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let cfg = cfg();
        let params = init_params(&cfg, 1, NetworkRole::Actor).unwrap();
        assert!(matches!(
            backward(&LossKind::Actor { batch: &[], entropy_weight: 0.0 }, &params, &cfg, None),
            Err(Error::EmptyBatch)
        ));
    }
}
