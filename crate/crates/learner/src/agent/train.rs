//! The advantage actor-critic loop: parallel workers roll out episodes from
//! an immutable parameter snapshot, the central agent applies one
//! entropy-regularized policy-gradient ascent and one TD critic descent per
//! collected episode, strictly serially in worker order. A single-worker run
//! is bitwise reproducible.

use abr_core::qoe::QoEConfig;
use abr_core::seed;
use abr_core::sensor::QuantizerConfig;
use abr_core::trace::{Trace, VideoSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{
    backward, sgd_step, value_forward, ActorSample, CriticSample, Direction, LossKind,
    NetworkConfig, NetworkRole, ParameterSet,
};
use super::env::{run_rollout, ActionMode, EnvConfig, Rollout};
use super::{make_env, TrainConfig};

/// One row of the training log, written after every update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLogRow {
    pub update: usize,
    pub episodes_seen: usize,
    pub mean_reward: f64,
    pub mean_entropy: f64,
    pub actor_objective: f64,
    pub critic_loss: f64,
}

pub const TRAINING_LOG_HEADER: &str = "update,episodes_seen,mean_reward,mean_entropy,actor_obj,critic_loss";

impl TrainingLogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.update, self.episodes_seen, self.mean_reward, self.mean_entropy, self.actor_objective, self.critic_loss
        )
    }
}

/// Renders the full training log deterministically.
pub fn training_log_csv(rows: &[TrainingLogRow]) -> String {
    let mut out = String::from(TRAINING_LOG_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

/// Result of a periodic greedy pass over the validation slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub episodes_seen: usize,
    /// Mean per-chunk QoE across validation episodes.
    pub mean_qoe: f64,
}

/// Progress callbacks during training; `Validation` carries the current
/// parameters so callers can write periodic checkpoints.
pub enum TrainEvent<'a> {
    Update(&'a TrainingLogRow),
    Validation { row: &'a ValidationRow, actor: &'a ParameterSet, critic: &'a ParameterSet },
}

#[derive(Debug)]
pub struct TrainOutput {
    pub actor: ParameterSet,
    pub critic: ParameterSet,
    pub log: Vec<TrainingLogRow>,
    pub validation: Vec<ValidationRow>,
}

/// Seed streams, disjoint by construction.
const STREAM_ACTOR_INIT: u64 = 0xA0;
const STREAM_CRITIC_INIT: u64 = 0xC0;
const STREAM_DROPOUT: u64 = 0xD0;
const STREAM_VALIDATION: u64 = 0xE0;

/// Trains actor and critic on the training traces.
///
/// Per round, up to `workers` episodes are rolled out in parallel from the
/// current parameter snapshot (worker RNG streams are keyed by seed, worker
/// id, and episode counter, so the schedule does not depend on thread
/// timing); the central agent then applies per-episode updates in worker
/// order.
#[allow(clippy::too_many_arguments)]
pub fn train(
    train_traces: &[&Trace],
    val_traces: &[&Trace],
    spec: &VideoSpec,
    qoe: &QoEConfig,
    quantizer: &QuantizerConfig,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    mut hook: impl FnMut(&TrainEvent),
) -> Result<TrainOutput> {
    cfg.validate()?;
    net_cfg.validate()?;
    spec.validate()?;
    if train_traces.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }

    let env = make_env(spec, qoe, quantizer, net_cfg, cfg.sensor_mode, cfg.pinned_buffer_s);
    let mut actor = crate::nn::init_params(net_cfg, seed::derive(cfg.seed, STREAM_ACTOR_INIT, 0), NetworkRole::Actor)?;
    let mut critic =
        crate::nn::init_params(net_cfg, seed::derive(cfg.seed, STREAM_CRITIC_INIT, 0), NetworkRole::Critic)?;

    // Validation episodes are fixed once so every pass is paired.
    let val_offsets: Vec<f64> = val_traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, STREAM_VALIDATION, i as u64));
            rng.random_range(0.0..t.duration_s())
        })
        .collect();

    let mut log = Vec::new();
    let mut validation = Vec::new();
    let mut episodes_seen = 0usize;
    let mut update_idx = 0usize;

    while episodes_seen < cfg.episodes {
        let round = cfg.workers.min(cfg.episodes - episodes_seen);

        let collect_one = |w: usize| -> Result<Rollout> {
            let episode_idx = (episodes_seen + w) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, w as u64, episode_idx));
            let trace = train_traces[rng.random_range(0..train_traces.len())];
            let t0 = rng.random_range(0.0..trace.duration_s());
            run_rollout(trace, t0, &env, &actor, net_cfg, ActionMode::Stochastic(&mut rng))
        };

        let rollouts: Vec<Rollout> = if round == 1 {
            vec![collect_one(0)?]
        } else {
            let results: Vec<Result<Rollout>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..round)
                    .map(|w| {
                        let collect_ref = &collect_one;
                        scope.spawn(move || collect_ref(w))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            results.into_iter().collect::<Result<Vec<_>>>()?
        };

        for rollout in rollouts {
            let row = apply_update(
                &rollout,
                &mut actor,
                &mut critic,
                net_cfg,
                cfg,
                update_idx,
                episodes_seen,
            )?;
            episodes_seen += 1;
            update_idx += 1;
            hook(&TrainEvent::Update(&row));
            log.push(row);

            if cfg.eval_every > 0 && episodes_seen % cfg.eval_every == 0 && !val_traces.is_empty() {
                let mean_qoe = validation_pass(val_traces, &val_offsets, &env, &actor, net_cfg)?;
                let row = ValidationRow { episodes_seen, mean_qoe };
                hook(&TrainEvent::Validation { row: &row, actor: &actor, critic: &critic });
                validation.push(row);
            }
        }
    }

    Ok(TrainOutput { actor, critic, log, validation })
}

/// One per-episode update: n-step targets over the episode (or configured
/// segments), advantages against the critic baseline, entropy-regularized
/// ascent for the actor, semi-gradient TD descent for the critic.
fn apply_update(
    rollout: &Rollout,
    actor: &mut ParameterSet,
    critic: &mut ParameterSet,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    update_idx: usize,
    episodes_seen: usize,
) -> Result<TrainingLogRow> {
    let steps = &rollout.steps;
    let n = steps.len();
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();

    let values: Vec<f64> = steps
        .iter()
        .map(|s| value_forward(&s.state, critic, net_cfg))
        .collect::<Result<_>>()?;

    // n-step return estimates, segment by segment.
    let seg_len = cfg.segment_chunks.unwrap_or(n).max(1);
    let mut q = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let end = (start + seg_len).min(n);
        let bootstrap = if end == n {
            0.0
        } else {
            values[end]
        };
        let seg = super::returns::n_step_targets(&rewards[start..end], bootstrap, cfg.gamma);
        q[start..end].copy_from_slice(&seg);
        start = end;
    }

    let mut advantages: Vec<f64> = q.iter().zip(&values).map(|(&qt, &vt)| qt - vt).collect();
    if cfg.advantage_norm {
        let mean = advantages.iter().sum::<f64>() / n as f64;
        let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-8);
        for a in &mut advantages {
            *a = (*a - mean) / std;
        }
    }

    let actor_batch: Vec<ActorSample> = steps
        .iter()
        .zip(&advantages)
        .map(|(s, &a)| ActorSample { state: s.state.clone(), action: s.action, advantage: a })
        .collect();
    let critic_batch: Vec<CriticSample> = steps
        .iter()
        .map(|s| {
            let next_v = if s.done { 0.0 } else { value_forward(&s.next_state, critic, net_cfg)? };
            Ok(CriticSample { state: s.state.clone(), target: s.reward + cfg.gamma * next_v })
        })
        .collect::<Result<_>>()?;

    let beta = cfg.entropy.weight_at(episodes_seen, cfg.episodes);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, STREAM_DROPOUT, update_idx as u64));

    let diverged = |what: &str| Error::Diverged { update: update_idx, what: what.to_string() };
    let (actor_objective, actor_grads) = backward(
        &LossKind::Actor { batch: &actor_batch, entropy_weight: beta },
        actor,
        net_cfg,
        Some(&mut dropout_rng),
    )
    .map_err(|e| match e {
        Error::NonFinite(what) => diverged(&what),
        other => other,
    })?;
    sgd_step(actor, &actor_grads, cfg.actor_lr, Direction::Ascent)?;

    let (critic_loss, critic_grads) =
        backward(&LossKind::Critic { batch: &critic_batch }, critic, net_cfg, None).map_err(|e| match e {
            Error::NonFinite(what) => diverged(&what),
            other => other,
        })?;
    sgd_step(critic, &critic_grads, cfg.critic_lr, Direction::Descent)?;

    Ok(TrainingLogRow {
        update: update_idx,
        episodes_seen: episodes_seen + 1,
        mean_reward: rewards.iter().sum::<f64>() / n as f64,
        mean_entropy: rollout.mean_entropy,
        actor_objective,
        critic_loss,
    })
}

/// Greedy pass over the validation episodes; returns the mean per-chunk QoE.
pub(crate) fn validation_pass(
    traces: &[&Trace],
    offsets: &[f64],
    env: &EnvConfig,
    actor: &ParameterSet,
    net_cfg: &NetworkConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (trace, &t0) in traces.iter().zip(offsets) {
        let rollout = run_rollout(trace, t0, env, actor, net_cfg, ActionMode::Greedy)?;
        total += rollout.steps.iter().map(|s| s.reward).sum::<f64>() / rollout.steps.len() as f64;
    }
    Ok(total / traces.len() as f64)
}
