//! One streaming episode as seen by the agent: drives the playback simulator
//! chunk by chunk, reads the flight state at each request time, assembles
//! observations, and records experience tuples alongside the episode log.

use rand_chacha::ChaCha8Rng;

use abr_core::qoe::{chunk_qoe, QoEConfig};
use abr_core::sensor::QuantizerConfig;
use abr_core::sim::{self, ChunkRecord, EpisodeLog, PlaybackState};
use abr_core::trace::{Trace, VideoSpec};

use crate::error::{Error, Result};
use crate::nn::{entropy, policy_forward, NetworkConfig, ParameterSet};
use super::returns::{greedy_action, sample_action};
use super::{build_state, sensor_features, window_history, AgentState, ExperienceTuple, SensorMode};

/// Environment pieces shared by every rollout.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub spec: VideoSpec,
    pub qoe: QoEConfig,
    pub quantizer: QuantizerConfig,
    pub sensor_mode: SensorMode,
    /// Throughput-history window length of the observation.
    pub window: usize,
    /// Degenerate training mode: hold the buffer at this level and disable
    /// stalls and boundary violations, making each chunk a bandit round.
    pub pinned_buffer_s: Option<f64>,
}

/// How actions are drawn from the policy distribution.
pub enum ActionMode<'a> {
    /// Sample by inverse CDF from the policy (training).
    Stochastic(&'a mut ChaCha8Rng),
    /// Argmax with ties broken toward the lowest index (evaluation).
    Greedy,
}

/// One completed episode: experience for the learner plus the playback log.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub steps: Vec<ExperienceTuple>,
    pub log: EpisodeLog,
    /// Mean policy entropy over the episode's action distributions.
    pub mean_entropy: f64,
}

fn observe(playback: &PlaybackState, trace: &Trace, history: &[f64], env: &EnvConfig) -> AgentState {
    let sample = trace.sample_at(playback.wall_clock_s);
    let features = sensor_features(sample, env.sensor_mode, &env.quantizer);
    build_state(features, playback, &window_history(history, env.window), &env.spec)
}

/// Plays one episode from trace offset `t0` with the actor network choosing
/// levels. Rewards are the per-chunk QoE totals and are also written into
/// the returned episode log.
pub fn run_rollout(
    trace: &Trace,
    t0: f64,
    env: &EnvConfig,
    actor: &ParameterSet,
    net_cfg: &NetworkConfig,
    mut mode: ActionMode,
) -> Result<Rollout> {
    env.spec.validate()?;
    env.qoe.validate()?;
    if env.window != net_cfg.throughput_window {
        return Err(Error::BadWindowLength { want: net_cfg.throughput_window, got: env.window });
    }

    let num_chunks = env.spec.num_chunks;
    let mut playback = PlaybackState::initial(t0);
    if let Some(pinned) = env.pinned_buffer_s {
        playback.buffer_s = pinned;
    }

    let mut history: Vec<f64> = Vec::with_capacity(num_chunks);
    let mut steps = Vec::with_capacity(num_chunks);
    let mut chunks = Vec::with_capacity(num_chunks);
    let mut entropy_sum = 0.0;
    let mut state = observe(&playback, trace, &history, env);

    for chunk in 1..=num_chunks {
        let probs = policy_forward(&state, actor, net_cfg, false)?;
        entropy_sum += entropy(&probs);
        let action = match &mut mode {
            ActionMode::Stochastic(rng) => sample_action(&probs, rng)?,
            ActionMode::Greedy => greedy_action(&probs),
        };

        let outcome = sim::step(&playback, action, trace, &env.spec)?;
        let (rebuffer_s, violated, next_playback) = match env.pinned_buffer_s {
            Some(pinned) => {
                let next = PlaybackState {
                    buffer_s: pinned,
                    last_level: action,
                    chunk_index: playback.chunk_index + 1,
                    wall_clock_s: playback.wall_clock_s + outcome.download_s,
                };
                (0.0, false, next)
            }
            None => (outcome.rebuffer_s, outcome.boundary_violation, outcome.next_state.clone()),
        };

        let bitrate = env.spec.ladder_kbps[action];
        let prev_bitrate = env.spec.ladder_kbps[playback.last_level];
        let reward = chunk_qoe(bitrate, prev_bitrate, rebuffer_s, violated, &env.qoe)?.total;

        history.push(outcome.measured_throughput_mbps);
        let next_state = observe(&next_playback, trace, &history, env);
        let done = next_playback.chunk_index == num_chunks;

        steps.push(ExperienceTuple {
            state: std::mem::take(&mut state),
            action,
            reward,
            next_state: next_state.clone(),
            done,
        });
        chunks.push(ChunkRecord {
            chunk,
            level: action,
            bitrate_kbps: bitrate,
            download_s: outcome.download_s,
            rebuffer_s,
            buffer_s: next_playback.buffer_s,
            throughput_mbps: outcome.measured_throughput_mbps,
            reward,
            violation: violated,
        });

        playback = next_playback;
        state = next_state;
    }

    Ok(Rollout {
        steps,
        log: EpisodeLog { trace_id: trace.id().to_string(), start_offset_s: t0, chunks },
        mean_entropy: entropy_sum / num_chunks as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, NetworkRole};
    use abr_core::trace::TraceSample;
    use rand::SeedableRng;

    fn constant_trace(mbps: f64) -> Trace {
        Trace::new(
            "const",
            vec![TraceSample { t: 0.0, throughput_mbps: mbps, distance_m: 10.0, velocity_mps: 1.0, accel_mps2: [0.0; 3] }],
            100.0,
        )
        .unwrap()
    }

    fn small_net() -> NetworkConfig {
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
    fn rollout_produces_one_tuple_per_chunk_with_done_on_the_last() {
        let net = small_net();
        let actor = init_params(&net, 1, NetworkRole::Actor).unwrap();
        let trace = constant_trace(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rollout =
            run_rollout(&trace, 0.0, &env(&net), &actor, &net, ActionMode::Stochastic(&mut rng)).unwrap();
        assert_eq!(rollout.steps.len(), 41);
        assert_eq!(rollout.log.chunks.len(), 41);
        assert!(rollout.steps.last().unwrap().done);
        assert!(rollout.steps[..40].iter().all(|s| !s.done));
        // Tuples chain: next_state of step t is state of step t+1.
        for pair in rollout.steps.windows(2) {
            assert_eq!(pair[0].next_state, pair[1].state);
        }
    }

    #[test]
    fn rollouts_are_deterministic_given_the_rng_seed() {
        let net = small_net();
        let actor = init_params(&net, 2, NetworkRole::Actor).unwrap();
        let trace = constant_trace(6.0);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            run_rollout(&trace, 12.5, &env(&net), &actor, &net, ActionMode::Stochastic(&mut rng))
                .unwrap()
                .log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn greedy_mode_needs_no_rng_and_is_stable() {
        let net = small_net();
        let actor = init_params(&net, 3, NetworkRole::Actor).unwrap();
        let trace = constant_trace(6.0);
        let a = run_rollout(&trace, 0.0, &env(&net), &actor, &net, ActionMode::Greedy).unwrap().log;
        let b = run_rollout(&trace, 0.0, &env(&net), &actor, &net, ActionMode::Greedy).unwrap().log;
        assert_eq!(a, b);
    }

    #[test]
    fn pinned_buffer_mode_disables_stalls_and_violations() {
        let net = small_net();
        let actor = init_params(&net, 4, NetworkRole::Actor).unwrap();
        let trace = constant_trace(20.0);
        let mut e = env(&net);
        e.pinned_buffer_s = Some(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rollout = run_rollout(&trace, 0.0, &e, &actor, &net, ActionMode::Stochastic(&mut rng)).unwrap();
        assert!(rollout.log.chunks.iter().all(|c| c.rebuffer_s == 0.0));
        assert!(rollout.log.chunks.iter().all(|c| !c.violation));
        assert!(rollout.log.chunks.iter().all(|c| c.buffer_s == 10.0));
    }

    #[test]
    fn window_mismatch_is_an_error() {
        let net = small_net();
        let actor = init_params(&net, 1, NetworkRole::Actor).unwrap();
        let trace = constant_trace(10.0);
        let mut e = env(&net);
        e.window = 16;
        assert!(matches!(
            run_rollout(&trace, 0.0, &e, &actor, &net, ActionMode::Greedy),
            Err(Error::BadWindowLength { .. })
        ));
    }
}
