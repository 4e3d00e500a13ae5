//! Per-chunk QoE reward: log bitrate utility, rebuffering and smoothness
//! penalties, the boundary-violation penalty, and episode aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::EpisodeLog;

/// Weights of the QoE reward.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct QoEConfig {
    /// Rebuffering weight mu.
    pub mu: f64,
    /// Lowest ladder rung in Kbps; the zero point of the log utility.
    pub l_min_kbps: f64,
    /// Flat penalty subtracted when a chunk violates the 20 s boundaries.
    pub violation_penalty: f64,
}

impl Default for QoEConfig {
    fn default() -> Self {
        Self { mu: 2.26, l_min_kbps: 300.0, violation_penalty: 5.0 }
    }
}

impl QoEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.l_min_kbps > 0.0) || self.violation_penalty < 0.0 {
            return Err(Error::InvalidConfig(
                "qoe config requires mu > 0, l_min > 0, violation_penalty >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// The additive pieces of one chunk's reward.
/// `total = utility - rebuffer_penalty - smoothness_penalty - violation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoEBreakdown {
    pub utility: f64,
    pub rebuffer_penalty: f64,
    pub smoothness_penalty: f64,
    pub violation: f64,
    pub total: f64,
}

impl QoEBreakdown {
    fn zero() -> Self {
        Self { utility: 0.0, rebuffer_penalty: 0.0, smoothness_penalty: 0.0, violation: 0.0, total: 0.0 }
    }
}

/// Log bitrate utility `ln(l / l_min)`; zero at the lowest rung.
pub fn utility_log(l_kbps: f64, l_min_kbps: f64) -> Result<f64> {
    if !(l_min_kbps > 0.0) || l_kbps < l_min_kbps {
        return Err(Error::InvalidConfig(format!(
            "utility requires l >= l_min > 0, got l={l_kbps}, l_min={l_min_kbps}"
        )));
    }
    Ok((l_kbps / l_min_kbps).ln())
}

/// One chunk's QoE: utility minus the rebuffering penalty `mu * T`, the
/// bitrate jitter `|q(l_t) - q(l_prev)|`, and the boundary penalty.
pub fn chunk_qoe(
    l_kbps: f64,
    l_prev_kbps: f64,
    rebuffer_s: f64,
    violated: bool,
    cfg: &QoEConfig,
) -> Result<QoEBreakdown> {
    if rebuffer_s < 0.0 || !rebuffer_s.is_finite() {
        return Err(Error::NonFinite("rebuffer time"));
    }
    let utility = utility_log(l_kbps, cfg.l_min_kbps)?;
    let prev_utility = utility_log(l_prev_kbps, cfg.l_min_kbps)?;
    let rebuffer_penalty = cfg.mu * rebuffer_s;
    let smoothness_penalty = (utility - prev_utility).abs();
    let violation = if violated { cfg.violation_penalty } else { 0.0 };
    Ok(QoEBreakdown {
        utility,
        rebuffer_penalty,
        smoothness_penalty,
        violation,
        total: utility - rebuffer_penalty - smoothness_penalty - violation,
    })
}

/// Episode aggregate: per-chunk means of every component plus the full
/// per-chunk sequence for CDF plots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub mean: QoEBreakdown,
    pub per_chunk: Vec<QoEBreakdown>,
}

/// Scores every chunk of an episode log. The first chunk's smoothness term
/// compares against the lowest rung, matching the simulator's initial state.
pub fn episode_breakdowns(log: &EpisodeLog, cfg: &QoEConfig) -> Result<Vec<QoEBreakdown>> {
    cfg.validate()?;
    let mut prev = cfg.l_min_kbps;
    let mut out = Vec::with_capacity(log.chunks.len());
    for rec in &log.chunks {
        let b = chunk_qoe(rec.bitrate_kbps, prev, rec.rebuffer_s, rec.violation, cfg)?;
        out.push(b);
        prev = rec.bitrate_kbps;
    }
    Ok(out)
}

/// Writes each chunk's QoE total into the log's reward field and returns the
/// summary.
pub fn score_episode(log: &mut EpisodeLog, cfg: &QoEConfig) -> Result<EpisodeSummary> {
    let per_chunk = episode_breakdowns(log, cfg)?;
    for (rec, b) in log.chunks.iter_mut().zip(&per_chunk) {
        rec.reward = b.total;
    }
    summarize(per_chunk)
}

/// Per-chunk means of an already-scored episode.
pub fn episode_summary(log: &EpisodeLog, cfg: &QoEConfig) -> Result<EpisodeSummary> {
    summarize(episode_breakdowns(log, cfg)?)
}

fn summarize(per_chunk: Vec<QoEBreakdown>) -> Result<EpisodeSummary> {
    if per_chunk.is_empty() {
        return Err(Error::EmptyInput("episode log"));
    }
    let n = per_chunk.len() as f64;
    let mut mean = QoEBreakdown::zero();
    for b in &per_chunk {
        mean.utility += b.utility / n;
        mean.rebuffer_penalty += b.rebuffer_penalty / n;
        mean.smoothness_penalty += b.smoothness_penalty / n;
        mean.violation += b.violation / n;
        mean.total += b.total / n;
    }
    Ok(EpisodeSummary { mean, per_chunk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ChunkRecord;

    const LN_9_5: f64 = 2.2512917986064953; // ln(2850/300)

    #[test]
    fn utility_examples() {
        assert_eq!(utility_log(300.0, 300.0).unwrap(), 0.0);
        assert!((utility_log(2850.0, 300.0).unwrap() - LN_9_5).abs() < 1e-12);
        // ln(1850/300) = ln(37/6) by hand.
        assert!((utility_log(1850.0, 300.0).unwrap() - 1.8191584434161694).abs() < 1e-12);
        assert!(utility_log(200.0, 300.0).is_err());
    }

    #[test]
    fn utility_is_increasing_and_zero_at_min() {
        let ladder = [300.0, 750.0, 1850.0, 2850.0];
        let mut prev = -1.0;
        for l in ladder {
            let u = utility_log(l, 300.0).unwrap();
            assert!(u > prev);
            prev = u;
        }
        assert_eq!(utility_log(300.0, 300.0).unwrap(), 0.0);
    }

    #[test]
    fn chunk_qoe_by_hand() {
        let cfg = QoEConfig::default();

        // Steady 1850 Kbps: reward is pure utility.
        let b = chunk_qoe(1850.0, 1850.0, 0.0, false, &cfg).unwrap();
        assert!((b.total - 1.8191584434161694).abs() < 1e-12);

        // 750 after 300 with a 1.5 s stall: utility and jitter cancel,
        // leaving -mu * T = -3.39.
        let b = chunk_qoe(750.0, 300.0, 1.5, false, &cfg).unwrap();
        assert!((b.utility - 0.9162907318741551).abs() < 1e-12);
        assert!((b.total - -3.39).abs() < 1e-12);

        // All terms vanish at the lowest rung.
        let b = chunk_qoe(300.0, 300.0, 0.0, false, &cfg).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn violation_subtracts_the_flat_penalty() {
        let cfg = QoEConfig::default();
        let clean = chunk_qoe(2850.0, 2850.0, 0.0, false, &cfg).unwrap();
        let hit = chunk_qoe(2850.0, 2850.0, 0.0, true, &cfg).unwrap();
        assert_eq!(hit.total, clean.total - cfg.violation_penalty);
    }

    #[test]
    fn smoothness_is_symmetric_in_the_two_levels() {
        let cfg = QoEConfig::default();
        let a = chunk_qoe(2850.0, 750.0, 0.0, false, &cfg).unwrap();
        let b = chunk_qoe(750.0, 2850.0, 0.0, false, &cfg).unwrap();
        assert_eq!(a.smoothness_penalty, b.smoothness_penalty);
    }

    #[test]
    fn breakdown_identity_holds() {
        let cfg = QoEConfig::default();
        for (l, p, t, v) in [(750.0, 300.0, 1.5, false), (2850.0, 300.0, 0.0, true), (1850.0, 2850.0, 3.0, true)] {
            let b = chunk_qoe(l, p, t, v, &cfg).unwrap();
            assert_eq!(b.total, b.utility - b.rebuffer_penalty - b.smoothness_penalty - b.violation);
        }
    }

    fn log_with(rewards_chunks: Vec<ChunkRecord>) -> EpisodeLog {
        EpisodeLog { trace_id: "t".into(), start_offset_s: 0.0, chunks: rewards_chunks }
    }

    fn record(bitrate: f64, rebuf: f64, violated: bool) -> ChunkRecord {
        ChunkRecord {
            chunk: 1,
            level: 0,
            bitrate_kbps: bitrate,
            download_s: 0.1,
            rebuffer_s: rebuf,
            buffer_s: 2.0,
            throughput_mbps: 5.0,
            reward: 0.0,
            violation: violated,
        }
    }

    #[test]
    fn summary_of_constant_chunks_is_that_constant() {
        let cfg = QoEConfig::default();
        let mut chunks = vec![record(1850.0, 0.0, false); 41];
        chunks[0].bitrate_kbps = 1850.0;
        let mut log = log_with(chunks);
        // First chunk pays the jump from the 300 Kbps base.
        let summary = score_episode(&mut log, &cfg).unwrap();
        let q = 1.8191584434161694;
        assert!((summary.per_chunk[1].total - q).abs() < 1e-12);
        let expected_mean = (41.0 * q - q) / 41.0; // first chunk loses its jitter
        assert!((summary.mean.total - expected_mean).abs() < 1e-12);
        assert_eq!(log.chunks[1].reward, summary.per_chunk[1].total);
    }

    #[test]
    fn summary_mean_is_arithmetic_and_linear() {
        let cfg = QoEConfig::default();
        let log = log_with(vec![record(300.0, 0.0, false), record(300.0, 1.0, true)]);
        let summary = episode_summary(&log, &cfg).unwrap();
        let m = &summary.mean;
        assert!((m.total - (m.utility - m.rebuffer_penalty - m.smoothness_penalty - m.violation)).abs() < 1e-12);
        // Totals {0, -2.26 - 5} have mean -3.63.
        assert!((m.total - -3.63).abs() < 1e-12);
    }

    #[test]
    fn empty_log_is_an_error() {
        let cfg = QoEConfig::default();
        assert!(episode_summary(&log_with(vec![]), &cfg).is_err());
    }
}
