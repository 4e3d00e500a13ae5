//! The ABR agent: observation assembly from playback and flight state,
//! return/advantage computation, the advantage actor-critic training loop
//! with parallel experience workers, and greedy evaluation.

mod env;
mod eval;
mod returns;
mod train;

pub use env::{run_rollout, ActionMode, EnvConfig, Rollout};
pub use eval::{evaluate, AgentPolicy, EvalOutput};
pub use returns::{advantage, discounted_return, n_step_targets, sample_action};
pub use train::{
    train, training_log_csv, TrainEvent, TrainOutput, TrainingLogRow, ValidationRow,
    TRAINING_LOG_HEADER,
};

use serde::{Deserialize, Serialize};

use abr_core::qoe::QoEConfig;
use abr_core::sensor::{quantize, QuantizedSensors, QuantizerConfig};
use abr_core::sim::{PlaybackState, MAX_BUFFER_S};
use abr_core::trace::{TraceSample, VideoSpec};

use crate::nn::{EncoderKind, NetworkConfig};

/// Corpus-level throughput ceiling used to normalize state entries, Mbps.
pub const THROUGHPUT_NORM_MBPS: f64 = 20.0;
/// Raw-sensor normalizers for the unquantized ablation.
pub const RAW_DISTANCE_NORM_M: f64 = 50.0;
pub const RAW_VELOCITY_NORM_MPS: f64 = 20.0;
pub const RAW_ACCEL_NORM_MPS2: f64 = 20.0;

/// The agent observation: `[d, v, a, buffer_norm, last_level_norm, x_1..x_W]`
/// with the throughput window most-recent-last.
pub type AgentState = Vec<f64>;

/// How the three sensor entries are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    /// Quantized levels per the preprocessing rules.
    #[default]
    Quantized,
    /// Raw readings scaled by fixed normalizers.
    Raw,
    /// Sensor entries zeroed (the no-sensor ablation).
    None,
}

/// One transition of the on-policy rollout.
#[derive(Debug, Clone)]
pub struct ExperienceTuple {
    pub state: AgentState,
    pub action: usize,
    pub reward: f64,
    pub next_state: AgentState,
    /// Set exactly on the final chunk of the episode.
    pub done: bool,
}

/// Sensor entries for one trace sample under the given mode.
pub fn sensor_features(sample: &TraceSample, mode: SensorMode, cfg: &QuantizerConfig) -> [f64; 3] {
    match mode {
        SensorMode::Quantized => {
            let QuantizedSensors { d_q, v_q, a_q } = quantize(sample, cfg);
            [f64::from(d_q), f64::from(v_q), f64::from(a_q)]
        }
        SensorMode::Raw => [
            sample.distance_m / RAW_DISTANCE_NORM_M,
            sample.velocity_mps / RAW_VELOCITY_NORM_MPS,
            abr_core::sensor::accel_magnitude(sample.accel_mps2) / RAW_ACCEL_NORM_MPS2,
        ],
        SensorMode::None => [0.0; 3],
    }
}

/// Builds the observation vector from quantized sensors, the playback state,
/// and the measured-throughput history (already exactly one window long,
/// zero-padded at episode start).
pub fn assemble_state(
    sensors: &QuantizedSensors,
    playback: &PlaybackState,
    history: &[f64],
    spec: &VideoSpec,
) -> AgentState {
    build_state(
        [f64::from(sensors.d_q), f64::from(sensors.v_q), f64::from(sensors.a_q)],
        playback,
        history,
        spec,
    )
}

pub(crate) fn build_state(
    sensor_entries: [f64; 3],
    playback: &PlaybackState,
    history: &[f64],
    spec: &VideoSpec,
) -> AgentState {
    let rungs = spec.ladder_kbps.len();
    let level_norm = if rungs > 1 {
        playback.last_level as f64 / (rungs - 1) as f64
    } else {
        0.0
    };
    let mut state = Vec::with_capacity(3 + 2 + history.len());
    state.extend_from_slice(&sensor_entries);
    state.push(playback.buffer_s / MAX_BUFFER_S);
    state.push(level_norm);
    state.extend(history.iter().map(|&x| x / THROUGHPUT_NORM_MBPS));
    state
}

/// Last `window` measured throughputs, zero-padded on the old side.
pub(crate) fn window_history(history: &[f64], window: usize) -> Vec<f64> {
    let mut out = vec![0.0; window.saturating_sub(history.len())];
    let start = history.len().saturating_sub(window);
    out.extend_from_slice(&history[start..]);
    out
}

/// Linear decay of the entropy-regularization weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropySchedule {
    pub start: f64,
    pub end: f64,
    /// Episodes over which the weight decays; `None` means half the run.
    pub decay_episodes: Option<usize>,
}

impl Default for EntropySchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.1, decay_episodes: None }
    }
}

impl EntropySchedule {
    pub fn weight_at(&self, episodes_seen: usize, total_episodes: usize) -> f64 {
        let decay = self.decay_episodes.unwrap_or(total_episodes / 2).max(1);
        let frac = (episodes_seen as f64 / decay as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

/// Hyperparameters of the actor-critic training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy: EntropySchedule,
    pub workers: usize,
    pub episodes: usize,
    /// Run a greedy validation pass every this many episodes (0 disables).
    pub eval_every: usize,
    pub seed: u64,
    pub sensor_mode: SensorMode,
    /// Mid-episode bootstrapping: update on segments of this many chunks
    /// with the critic value at the segment end. `None` spans the episode.
    pub segment_chunks: Option<usize>,
    /// Standardize advantages within each update batch.
    pub advantage_norm: bool,
    /// Degenerate environment: pin the buffer and disable stalls/violations.
    pub pinned_buffer_s: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            actor_lr: 3e-5,
            critic_lr: 1e-2,
            entropy: EntropySchedule::default(),
            workers: 10,
            episodes: 2000,
            eval_every: 200,
            seed: 0,
            sensor_mode: SensorMode::Quantized,
            segment_chunks: None,
            advantage_norm: false,
            pinned_buffer_s: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        let bad = |msg: String| Err(crate::error::Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} must be in [0, 1]", self.gamma));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.episodes == 0 {
            return bad("episodes must be >= 1".into());
        }
        if self.entropy.start < 0.0 || self.entropy.end < 0.0 {
            return bad("entropy weights must be non-negative".into());
        }
        if self.segment_chunks == Some(0) {
            return bad("segment_chunks must be >= 1 when set".into());
        }
        Ok(())
    }
}

/// Everything an environment rollout needs besides the trace.
pub fn make_env(
    spec: &VideoSpec,
    qoe: &QoEConfig,
    quantizer: &QuantizerConfig,
    net_cfg: &NetworkConfig,
    sensor_mode: SensorMode,
    pinned_buffer_s: Option<f64>,
) -> EnvConfig {
    EnvConfig {
        spec: spec.clone(),
        qoe: qoe.clone(),
        quantizer: quantizer.clone(),
        sensor_mode,
        window: net_cfg.throughput_window,
        pinned_buffer_s,
    }
}

/// The evaluation-time network/state variants of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKind {
    NoSensor,
    RawSensor,
    ConvEncoder,
    Window2,
    Window16,
}

impl AblationKind {
    pub const NAMES: [&'static str; 5] = ["no_sensor", "raw_sensor", "conv_encoder", "window_2", "window_16"];

    pub fn parse(name: &str) -> crate::error::Result<Self> {
        match name {
            "no_sensor" => Ok(Self::NoSensor),
            "raw_sensor" => Ok(Self::RawSensor),
            "conv_encoder" => Ok(Self::ConvEncoder),
            "window_2" => Ok(Self::Window2),
            "window_16" => Ok(Self::Window16),
            other => Err(crate::error::Error::InvalidConfig(format!(
                "unknown ablation `{other}`; valid kinds: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

/// Derives the network config and sensor mode of one ablation variant from
/// the base configuration.
pub fn ablation_variants(
    kind: AblationKind,
    base_net: &NetworkConfig,
    base_mode: SensorMode,
) -> (NetworkConfig, SensorMode) {
    match kind {
        AblationKind::NoSensor => (base_net.clone(), SensorMode::None),
        AblationKind::RawSensor => (base_net.clone(), SensorMode::Raw),
        AblationKind::ConvEncoder => {
            (NetworkConfig { encoder: EncoderKind::Conv1d, ..base_net.clone() }, base_mode)
        }
        AblationKind::Window2 => {
            (NetworkConfig { throughput_window: 2, ..base_net.clone() }, base_mode)
        }
        AblationKind::Window16 => {
            (NetworkConfig { throughput_window: 16, ..base_net.clone() }, base_mode)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn playback(buffer: f64, level: usize) -> PlaybackState {
        PlaybackState { buffer_s: buffer, last_level: level, chunk_index: 0, wall_clock_s: 0.0 }
    }

    fn sensors(d: u8, v: u8, a: u8) -> QuantizedSensors {
        QuantizedSensors { d_q: d, v_q: v, a_q: a }
    }

    #[test]
    fn initial_state_is_all_zero_after_the_sensor_entries() {
        let spec = VideoSpec::default();
        let s = assemble_state(&sensors(1, 2, 0), &playback(0.0, 0), &[0.0; 8], &spec);
        assert_eq!(s.len(), 13);
        assert_eq!(&s[..3], &[1.0, 2.0, 0.0]);
        assert!(s[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn buffer_and_level_normalize_linearly() {
        let spec = VideoSpec::default();
        let s = assemble_state(&sensors(0, 0, 0), &playback(10.0, 3), &[0.0; 8], &spec);
        assert_eq!(s[3], 0.5);
        assert_eq!(s[4], 1.0);
    }

    #[test]
    fn throughput_history_scales_by_the_corpus_ceiling() {
        let spec = VideoSpec::default();
        let history = [20.0, 10.0, 5.0, 0.0, 0.0, 0.0, 0.0, 2.0];
        let s = assemble_state(&sensors(0, 0, 0), &playback(0.0, 0), &history, &spec);
        assert_eq!(s[5], 1.0);
        assert_eq!(s[6], 0.5);
        assert_eq!(s[12], 0.1);
    }

    #[test]
    fn window_history_pads_and_truncates() {
        assert_eq!(window_history(&[1.0, 2.0], 4), vec![0.0, 0.0, 1.0, 2.0]);
        assert_eq!(window_history(&[1.0, 2.0, 3.0, 4.0, 5.0], 3), vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn raw_mode_scales_readings() {
        let sample = TraceSample {
            t: 0.0,
            throughput_mbps: 1.0,
            distance_m: 25.0,
            velocity_mps: 10.0,
            accel_mps2: [0.0, 4.0, 3.0],
        };
        let cfg = QuantizerConfig::default();
        let f = sensor_features(&sample, SensorMode::Raw, &cfg);
        assert!((f[0] - 0.5).abs() < 1e-12);
        assert!((f[1] - 0.5).abs() < 1e-12);
        assert!((f[2] - 0.25).abs() < 1e-12);
        assert_eq!(sensor_features(&sample, SensorMode::None, &cfg), [0.0; 3]);
    }

    #[test]
    fn ablations_change_exactly_the_advertised_knob() {
        let base = NetworkConfig::default();
        let (net, mode) = ablation_variants(AblationKind::NoSensor, &base, SensorMode::Quantized);
        assert_eq!(net, base);
        assert_eq!(mode, SensorMode::None);

        let (net, _) = ablation_variants(AblationKind::Window2, &base, SensorMode::Quantized);
        assert_eq!(net.throughput_window, 2);
        assert_eq!(net.state_dim(), 7);

        let (net, _) = ablation_variants(AblationKind::ConvEncoder, &base, SensorMode::Quantized);
        assert_eq!(net.encoder, EncoderKind::Conv1d);
        assert_eq!(net.feature_dim(), base.feature_dim());
    }

    #[test]
    fn entropy_schedule_decays_linearly_then_holds() {
        let sched = EntropySchedule { start: 1.0, end: 0.1, decay_episodes: Some(100) };
        assert_eq!(sched.weight_at(0, 1000), 1.0);
        assert!((sched.weight_at(50, 1000) - 0.55).abs() < 1e-12);
        assert!((sched.weight_at(100, 1000) - 0.1).abs() < 1e-12);
        assert!((sched.weight_at(500, 1000) - 0.1).abs() < 1e-12);
        // Default decay spans half the run.
        let default = EntropySchedule::default();
        assert!((default.weight_at(500, 1000) - 0.1).abs() < 1e-12);
    }
}
