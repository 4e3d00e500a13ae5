//! Greedy evaluation of a trained policy over a fixed episode set, plus the
//! observation-driven policy adapter used by the comparison harness.

use abr_core::qoe::{episode_summary, EpisodeSummary};
use abr_core::sim::{EpisodeLog, Observation};
use abr_core::trace::Trace;

use crate::error::Result;
use crate::nn::{policy_forward, validate_shapes, NetworkConfig, NetworkRole, ParameterSet};
use super::env::{run_rollout, ActionMode, EnvConfig};
use super::returns::greedy_action;
use super::{build_state, sensor_features, window_history};

/// A trained actor viewed as a deterministic policy over simulator
/// observations (greedy, lowest-index ties).
pub struct AgentPolicy<'a> {
    pub actor: &'a ParameterSet,
    pub net_cfg: &'a NetworkConfig,
    pub env: &'a EnvConfig,
}

impl AgentPolicy<'_> {
    pub fn decide(&self, obs: &Observation) -> Result<usize> {
        let features = sensor_features(obs.sensor, self.env.sensor_mode, &self.env.quantizer);
        let state = build_state(
            features,
            obs.playback,
            &window_history(obs.history_mbps, self.env.window),
            obs.spec,
        );
        let probs = policy_forward(&state, self.actor, self.net_cfg, false)?;
        Ok(greedy_action(&probs))
    }
}

/// Evaluation result over one episode set.
pub struct EvalOutput {
    pub logs: Vec<EpisodeLog>,
    pub summaries: Vec<EpisodeSummary>,
    /// Mean of the per-episode mean chunk QoE.
    pub mean_qoe: f64,
}

/// Runs the greedy policy over `(trace, start offset)` episodes. Never
/// mutates the parameters; fails up front on a checkpoint/config mismatch.
pub fn evaluate(
    episodes: &[(&Trace, f64)],
    actor: &ParameterSet,
    net_cfg: &NetworkConfig,
    env: &EnvConfig,
) -> Result<EvalOutput> {
    validate_shapes(actor, net_cfg, NetworkRole::Actor)?;
    let mut logs = Vec::with_capacity(episodes.len());
    let mut summaries = Vec::with_capacity(episodes.len());
    let mut total = 0.0;
    for &(trace, t0) in episodes {
        let rollout = run_rollout(trace, t0, env, actor, net_cfg, ActionMode::Greedy)?;
        let summary = episode_summary(&rollout.log, &env.qoe)?;
        total += summary.mean.total;
        logs.push(rollout.log);
        summaries.push(summary);
    }
    let mean_qoe = if episodes.is_empty() { 0.0 } else { total / episodes.len() as f64 };
    Ok(EvalOutput { logs, summaries, mean_qoe })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, NetworkRole};
    use abr_core::qoe::QoEConfig;
    use abr_core::sensor::QuantizerConfig;
    use abr_core::sim;
    use abr_core::trace::{synthesize, SynthParams, VideoSpec};
    use super::super::SensorMode;

    fn net() -> NetworkConfig {
        NetworkConfig { lstm_hidden: 4, fc_sizes: [5, 3], dropout_rate: 0.0, ..NetworkConfig::default() }
    }

    fn env(net: &NetworkConfig) -> EnvConfig {
        EnvConfig {
            spec: VideoSpec::default(),
            qoe: QoEConfig::default(),
            quantizer: QuantizerConfig::default(),
            sensor_mode: SensorMode::Quantized,
            window: net.throughput_window,
            pinned_buffer_s: None,
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let net = net();
        let actor = init_params(&net, 8, NetworkRole::Actor).unwrap();
        let trace = synthesize(&SynthParams::default(), 1).unwrap();
        let episodes = [(&trace, 17.0)];
        let env = env(&net);
        let a = evaluate(&episodes, &actor, &net, &env).unwrap();
        let b = evaluate(&episodes, &actor, &net, &env).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.mean_qoe, b.mean_qoe);
    }

    #[test]
    fn uniform_policy_breaks_ties_toward_the_lowest_level() {
        let net = net();
        // Zero parameters give exactly uniform probabilities everywhere.
        let mut actor = init_params(&net, 0, NetworkRole::Actor).unwrap();
        for name in ["head.w", "head.b"] {
            for v in &mut actor.get_mut(name).unwrap().data {
                *v = 0.0;
            }
        }
        let trace = synthesize(&SynthParams::default(), 2).unwrap();
        let env = env(&net);
        let out = evaluate(&[(&trace, 0.0)], &actor, &net, &env).unwrap();
        assert!(out.logs[0].chunks.iter().all(|c| c.level == 0));
    }

    #[test]
    fn checkpoint_config_mismatch_is_rejected() {
        let net = net();
        let other = NetworkConfig { lstm_hidden: 8, ..net.clone() };
        let actor = init_params(&other, 0, NetworkRole::Actor).unwrap();
        let trace = synthesize(&SynthParams::default(), 3).unwrap();
        let env = env(&net);
        assert!(evaluate(&[(&trace, 0.0)], &actor, &net, &env).is_err());
    }

    #[test]
    fn agent_policy_matches_rollout_decisions_through_run_episode() {
        let net = net();
        let actor = init_params(&net, 12, NetworkRole::Actor).unwrap();
        let trace = synthesize(&SynthParams::default(), 4).unwrap();
        let env = env(&net);

        let via_rollout = run_rollout(&trace, 5.0, &env, &actor, &net, ActionMode::Greedy).unwrap().log;

        let policy = AgentPolicy { actor: &actor, net_cfg: &net, env: &env };
        let via_sim = sim::run_episode(&trace, &env.spec, |obs| policy.decide(obs).unwrap(), 5.0).unwrap();

        let levels_a: Vec<usize> = via_rollout.chunks.iter().map(|c| c.level).collect();
        let levels_b: Vec<usize> = via_sim.chunks.iter().map(|c| c.level).collect();
        assert_eq!(levels_a, levels_b);
    }
}
