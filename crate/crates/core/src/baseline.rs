//! Rule-based comparison policies: fixed bitrate, buffer-occupancy control,
//! harmonic-mean rate prediction, and horizon-enumerating MPC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qoe::{self, QoEConfig};
use crate::sim::{Observation, PlaybackState, MAX_BUFFER_S, REBUFFER_GRANULARITY_S};
use crate::trace::VideoSpec;

/// Floor applied to stalled (zero) throughput samples before the harmonic
/// mean, in Mbps.
pub const HARMONIC_FLOOR_MBPS: f64 = 0.01;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct BaselineConfig {
    /// Below this buffer level the buffer-based policy sits on the lowest rung.
    pub reservoir_s: f64,
    /// Above this buffer level it picks the highest rung.
    pub cushion_top_s: f64,
    /// History window of the harmonic-mean predictor.
    pub rb_window: usize,
    /// Lookahead depth of the MPC policy, in chunks.
    pub mpc_horizon: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { reservoir_s: 5.0, cushion_top_s: 15.0, rb_window: 5, mpc_horizon: 5 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reservoir_s > 0.0) || !(self.cushion_top_s > self.reservoir_s) {
            return Err(Error::InvalidConfig("need 0 < reservoir < cushion_top".into()));
        }
        if self.rb_window == 0 || self.mpc_horizon == 0 {
            return Err(Error::InvalidConfig("rb_window and mpc_horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Constant policy pinned to one rung; construction checks the ladder.
pub fn fixed_policy(level: usize, spec: &VideoSpec) -> Result<impl Fn(&Observation) -> usize> {
    if level >= spec.ladder_kbps.len() {
        return Err(Error::LevelOutOfRange { level, len: spec.ladder_kbps.len() });
    }
    Ok(move |_: &Observation| level)
}

/// Buffer-occupancy rule: lowest rung below the reservoir, highest above the
/// cushion, and a linear ramp across the rungs in between.
pub fn buffer_based(buffer_s: f64, cfg: &BaselineConfig, ladder: &[f64]) -> usize {
    let top = ladder.len() - 1;
    if buffer_s < cfg.reservoir_s {
        0
    } else if buffer_s > cfg.cushion_top_s {
        top
    } else {
        let frac = (buffer_s - cfg.reservoir_s) / (cfg.cushion_top_s - cfg.reservoir_s);
        ((frac * top as f64).floor() as usize).min(top)
    }
}

/// Harmonic mean of the most recent throughput samples, robust to spikes.
/// Zero samples are floored to 0.01 Mbps; an episode's first chunks use
/// whatever history exists so far.
pub fn harmonic_mean(history_mbps: &[f64]) -> Result<f64> {
    if history_mbps.is_empty() {
        return Err(Error::EmptyInput("throughput history"));
    }
    let inv_sum: f64 = history_mbps.iter().map(|&x| 1.0 / x.max(HARMONIC_FLOOR_MBPS)).sum();
    Ok(history_mbps.len() as f64 / inv_sum)
}

fn recent(history: &[f64], window: usize) -> &[f64] {
    &history[history.len().saturating_sub(window)..]
}

/// Rate rule: the highest rung whose bitrate does not exceed the harmonic
/// mean prediction; the lowest rung if none fits.
pub fn rate_based(history_mbps: &[f64], ladder: &[f64]) -> Result<usize> {
    let predicted_kbps = harmonic_mean(history_mbps)? * 1000.0;
    Ok(ladder
        .iter()
        .rposition(|&b| b <= predicted_kbps)
        .unwrap_or(0))
}

/// Model-predictive control: assumes the harmonic-mean rate holds, simulates
/// every ladder sequence over the horizon through the buffer dynamics, and
/// takes the first level of the sequence with the best summed QoE. Ties go
/// to the lower level.
pub fn mpc(
    playback: &PlaybackState,
    history_mbps: &[f64],
    spec: &VideoSpec,
    cfg: &BaselineConfig,
    qoe_cfg: &QoEConfig,
) -> Result<usize> {
    let predicted_mbps = if history_mbps.is_empty() {
        HARMONIC_FLOOR_MBPS
    } else {
        harmonic_mean(recent(history_mbps, cfg.rb_window))?
    };
    let remaining = spec.num_chunks.saturating_sub(playback.chunk_index).max(1);
    let horizon = cfg.mpc_horizon.min(remaining);
    let ladder_len = spec.ladder_kbps.len();

    let mut best_first = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    let mut sequence = vec![0usize; horizon];
    // Lexicographic enumeration with strict improvement keeps ties on the
    // lowest first level.
    loop {
        let value = rollout_value(&sequence, playback, predicted_mbps, spec, qoe_cfg)?;
        if value > best_value {
            best_value = value;
            best_first = sequence[0];
        }
        // Next sequence in lexicographic order (most-significant digit first).
        let mut pos = horizon;
        loop {
            if pos == 0 {
                return Ok(best_first);
            }
            pos -= 1;
            sequence[pos] += 1;
            if sequence[pos] < ladder_len {
                break;
            }
            sequence[pos] = 0;
        }
    }
}

/// Total QoE of one candidate sequence under the predicted constant rate.
fn rollout_value(
    sequence: &[usize],
    playback: &PlaybackState,
    rate_mbps: f64,
    spec: &VideoSpec,
    qoe_cfg: &QoEConfig,
) -> Result<f64> {
    let rate_bps = (rate_mbps * 1e6).max(HARMONIC_FLOOR_MBPS * 1e6);
    let mut buffer = playback.buffer_s;
    let mut prev_kbps = spec.ladder_kbps[playback.last_level];
    let mut total = 0.0;
    for &level in sequence {
        let bitrate = spec.ladder_kbps[level];
        let f = bitrate * spec.chunk_duration_s * 1000.0 / rate_bps;
        let stall = if buffer >= f {
            buffer = buffer + spec.chunk_duration_s - f;
            0.0
        } else {
            let stall = ((f - buffer) / REBUFFER_GRANULARITY_S).ceil() * REBUFFER_GRANULARITY_S;
            buffer = spec.chunk_duration_s;
            stall
        };
        buffer = buffer.min(MAX_BUFFER_S);
        total += qoe::chunk_qoe(bitrate, prev_kbps, stall, false, qoe_cfg)?.total;
        prev_kbps = bitrate;
    }
    Ok(total)
}

/// The rule-based policies behind one dispatch point, for harness use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Fixed(usize),
    BufferBased,
    RateBased,
    Mpc,
}

impl BaselineKind {
    pub fn name(&self) -> String {
        match self {
            Self::Fixed(level) => format!("fixed-{level}"),
            Self::BufferBased => "buffer-based".into(),
            Self::RateBased => "rate-based".into(),
            Self::Mpc => "mpc".into(),
        }
    }
}

/// A ready-to-run baseline policy over simulator observations.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    pub kind: BaselineKind,
    pub cfg: BaselineConfig,
    pub qoe: QoEConfig,
}

impl BaselinePolicy {
    pub fn new(kind: BaselineKind, cfg: BaselineConfig, qoe: QoEConfig) -> Self {
        Self { kind, cfg, qoe }
    }

    pub fn decide(&self, obs: &Observation) -> usize {
        let ladder = &obs.spec.ladder_kbps;
        match self.kind {
            BaselineKind::Fixed(level) => level.min(ladder.len() - 1),
            BaselineKind::BufferBased => buffer_based(obs.playback.buffer_s, &self.cfg, ladder),
            BaselineKind::RateBased => {
                if obs.history_mbps.is_empty() {
                    0
                } else {
                    rate_based(recent(obs.history_mbps, self.cfg.rb_window), ladder)
                        .expect("nonempty history")
                }
            }
            BaselineKind::Mpc => mpc(obs.playback, obs.history_mbps, obs.spec, &self.cfg, &self.qoe)
                .expect("valid mpc inputs"),
        }
    }
}
