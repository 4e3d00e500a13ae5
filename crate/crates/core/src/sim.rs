//! Chunked playback simulation over a throughput trace: per-chunk download
//! times by piecewise integration of the zero-order-hold trace, buffer
//! accounting with a 500 ms rebuffer granularity, and the 20 s buffer and
//! rebuffer boundaries of a live-streaming client.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Trace, TraceSample, VideoSpec};

/// Live-streaming cap on the client buffer, seconds.
pub const MAX_BUFFER_S: f64 = 20.0;
/// Rebuffering beyond this is a boundary violation, seconds.
pub const MAX_REBUFFER_S: f64 = 20.0;
/// Retry granularity of the stalled client, seconds.
pub const REBUFFER_GRANULARITY_S: f64 = 0.5;

/// Client playback state between chunk downloads.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackState {
    /// Buffered-but-unplayed video, in `[0, MAX_BUFFER_S]` seconds.
    pub buffer_s: f64,
    /// Ladder index of the previous chunk.
    pub last_level: usize,
    /// Chunks completed so far, in `[0, num_chunks]`.
    pub chunk_index: usize,
    /// Seconds into the trace timeline.
    pub wall_clock_s: f64,
}

impl PlaybackState {
    /// State at episode start: empty buffer, lowest rung, clock at `t0`.
    pub fn initial(t0: f64) -> Self {
        Self { buffer_s: 0.0, last_level: 0, chunk_index: 0, wall_clock_s: t0 }
    }
}

/// Result of downloading one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Download time f_t in seconds.
    pub download_s: f64,
    /// Stall time T_t, a non-negative multiple of 0.5 s.
    pub rebuffer_s: f64,
    /// Chunk bits divided by download time, in Mbps.
    pub measured_throughput_mbps: f64,
    /// Set when the buffer had to be clamped at 20 s or the stall exceeded 20 s.
    pub boundary_violation: bool,
    pub next_state: PlaybackState,
}

/// Size of one constant-bitrate chunk in bits.
pub fn chunk_size_bits(spec: &VideoSpec, level: usize) -> Result<f64> {
    let ladder = &spec.ladder_kbps;
    let bitrate = *ladder
        .get(level)
        .ok_or(Error::LevelOutOfRange { level, len: ladder.len() })?;
    Ok(bitrate * spec.chunk_duration_s * 1000.0)
}

/// Bits deliverable over one full trace period.
fn period_capacity_bits(trace: &Trace) -> f64 {
    let samples = trace.samples();
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let seg_end = samples.get(i + 1).map_or(trace.duration_s(), |n| n.t);
        total += s.throughput_mbps * 1e6 * (seg_end - s.t).max(0.0);
    }
    total
}

/// Smallest `f` such that the trace delivers `bits` over `[t_start, t_start+f]`.
///
/// Integration is piecewise over the zero-order-hold segments; zero-rate
/// regions pass time without progress, and the trace wraps at its end. A
/// trace that delivers nothing over a full period cannot carry the chunk.
pub fn download_time(trace: &Trace, t_start: f64, bits: f64) -> Result<f64> {
    if !(bits > 0.0) {
        return Err(Error::EmptyChunk);
    }
    if period_capacity_bits(trace) <= 0.0 {
        return Err(Error::UndeliverableChunk(trace.id().to_string()));
    }
    let samples = trace.samples();
    let n = samples.len();
    let duration = trace.duration_s();

    let mut pos = t_start.rem_euclid(duration);
    if pos >= duration {
        pos = 0.0;
    }
    let mut idx = trace.index_at(pos);
    let mut remaining = bits;
    let mut f = 0.0;
    loop {
        let seg_end = if idx + 1 < n { samples[idx + 1].t } else { duration };
        let seg_len = (seg_end - pos).max(0.0);
        let rate_bps = samples[idx].throughput_mbps * 1e6;
        if rate_bps > 0.0 && remaining <= rate_bps * seg_len {
            return Ok(f + remaining / rate_bps);
        }
        remaining -= rate_bps * seg_len;
        f += seg_len;
        idx += 1;
        if idx == n {
            idx = 0;
            pos = 0.0;
        } else {
            pos = samples[idx].t;
        }
    }
}

/// Downloads one chunk and updates the playback state.
///
/// No stall when the starting buffer covers the download (`b >= f`):
/// the buffer loses `f` and gains one chunk duration. Otherwise the stall is
/// the shortfall rounded up to the 0.5 s retry granularity and the buffer
/// restarts at one chunk duration. A buffer above 20 s clamps there (the
/// client idles out the excess before the next request) and flags a
/// boundary violation, as does a stall beyond 20 s.
pub fn step(state: &PlaybackState, level: usize, trace: &Trace, spec: &VideoSpec) -> Result<StepOutcome> {
    if state.chunk_index >= spec.num_chunks {
        return Err(Error::EpisodeFinished(spec.num_chunks));
    }
    let bits = chunk_size_bits(spec, level)?;
    let f = download_time(trace, state.wall_clock_s, bits)?;
    let b = state.buffer_s;
    let t_chunk = spec.chunk_duration_s;

    let (raw_next, rebuffer) = if b >= f {
        (b + t_chunk - f, 0.0)
    } else {
        let stall = ((f - b) / REBUFFER_GRANULARITY_S).ceil() * REBUFFER_GRANULARITY_S;
        (t_chunk, stall)
    };

    let mut violation = false;
    let mut idle = 0.0;
    let mut buffer_next = raw_next;
    if buffer_next > MAX_BUFFER_S {
        idle = buffer_next - MAX_BUFFER_S;
        buffer_next = MAX_BUFFER_S;
        violation = true;
    }
    if rebuffer > MAX_REBUFFER_S {
        violation = true;
    }

    Ok(StepOutcome {
        download_s: f,
        rebuffer_s: rebuffer,
        measured_throughput_mbps: bits / f / 1e6,
        boundary_violation: violation,
        next_state: PlaybackState {
            buffer_s: buffer_next,
            last_level: level,
            chunk_index: state.chunk_index + 1,
            wall_clock_s: state.wall_clock_s + f + idle,
        },
    })
}

/// What a policy sees before choosing the next chunk's level.
#[derive(Debug)]
pub struct Observation<'a> {
    /// Playback state before the download (buffer b_t, last level, clock).
    pub playback: &'a PlaybackState,
    /// Trace sample held at the request time (the flight state readout).
    pub sensor: &'a TraceSample,
    /// Measured throughput of completed chunks in Mbps, oldest first.
    pub history_mbps: &'a [f64],
    pub spec: &'a VideoSpec,
}

/// Per-chunk record of an episode. `buffer_s` is the post-download,
/// post-clamp buffer; `reward` is filled in by the QoE layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    /// 1-based chunk number.
    pub chunk: usize,
    pub level: usize,
    pub bitrate_kbps: f64,
    #[serde(rename = "f_s")]
    pub download_s: f64,
    #[serde(rename = "rebuf_s")]
    pub rebuffer_s: f64,
    pub buffer_s: f64,
    #[serde(rename = "thru_mbps")]
    pub throughput_mbps: f64,
    pub reward: f64,
    #[serde(skip)]
    pub violation: bool,
}

/// Full trajectory of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub trace_id: String,
    pub start_offset_s: f64,
    pub chunks: Vec<ChunkRecord>,
}

impl EpisodeLog {
    /// Line-oriented JSON, one object per chunk.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.chunks {
            out.push_str(&serde_json::to_string(record).expect("plain record"));
            out.push('\n');
        }
        out
    }
}

/// Plays `spec.num_chunks` chunks from an empty buffer at trace offset `t0`,
/// asking `policy` for each chunk's ladder level.
pub fn run_episode(
    trace: &Trace,
    spec: &VideoSpec,
    mut policy: impl FnMut(&Observation) -> usize,
    t0: f64,
) -> Result<EpisodeLog> {
    spec.validate()?;
    let mut state = PlaybackState::initial(t0);
    let mut history: Vec<f64> = Vec::with_capacity(spec.num_chunks);
    let mut chunks = Vec::with_capacity(spec.num_chunks);
    for chunk in 1..=spec.num_chunks {
        let level = {
            let obs = Observation {
                playback: &state,
                sensor: trace.sample_at(state.wall_clock_s),
                history_mbps: &history,
                spec,
            };
            policy(&obs)
        };
        let outcome = step(&state, level, trace, spec)?;
        chunks.push(ChunkRecord {
            chunk,
            level,
            bitrate_kbps: spec.ladder_kbps[level],
            download_s: outcome.download_s,
            rebuffer_s: outcome.rebuffer_s,
            buffer_s: outcome.next_state.buffer_s,
            throughput_mbps: outcome.measured_throughput_mbps,
            reward: 0.0,
            violation: outcome.boundary_violation,
        });
        history.push(outcome.measured_throughput_mbps);
        state = outcome.next_state;
    }
    Ok(EpisodeLog { trace_id: trace.id().to_string(), start_offset_s: t0, chunks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceSample;
    use proptest::prelude::*;

    fn constant_trace(mbps: f64) -> Trace {
        let samples = vec![TraceSample {
            t: 0.0,
            throughput_mbps: mbps,
            distance_m: 10.0,
            velocity_mps: 1.0,
            accel_mps2: [0.0; 3],
        }];
        Trace::new("const", samples, 100.0).unwrap()
    }

    fn two_rate_trace(r0: f64, r1: f64) -> Trace {
        let mk = |t: f64, thr: f64| TraceSample {
            t,
            throughput_mbps: thr,
            distance_m: 10.0,
            velocity_mps: 1.0,
            accel_mps2: [0.0; 3],
        };
        Trace::new("two", vec![mk(0.0, r0), mk(1.0, r1)], 2.0).unwrap()
    }

    #[test]
    fn chunk_sizes_by_hand() {
        let spec = VideoSpec::default();
        assert_eq!(chunk_size_bits(&spec, 3).unwrap(), 5_700_000.0);
        assert_eq!(chunk_size_bits(&spec, 0).unwrap(), 600_000.0);
        assert!(matches!(
            chunk_size_bits(&spec, 7),
            Err(Error::LevelOutOfRange { level: 7, len: 4 })
        ));
    }

    #[test]
    fn download_time_constant_rate() {
        let tr = constant_trace(4.0);
        let f = download_time(&tr, 0.0, 5_700_000.0).unwrap();
        assert!((f - 1.425).abs() < 1e-12);
    }

    #[test]
    fn download_time_piecewise() {
        // 1 Mb in the first second, the remaining 1 Mb at 3 Mbps.
        let tr = two_rate_trace(1.0, 3.0);
        let f = download_time(&tr, 0.0, 2_000_000.0).unwrap();
        assert!((f - (1.0 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn download_time_rejects_empty_chunk() {
        let tr = constant_trace(4.0);
        assert!(matches!(download_time(&tr, 0.0, 0.0), Err(Error::EmptyChunk)));
    }

    #[test]
    fn download_time_passes_zero_rate_regions() {
        let tr = two_rate_trace(0.0, 4.0);
        // Waits out the zero-rate first second, then 0.25 s at 4 Mbps.
        let f = download_time(&tr, 0.0, 1_000_000.0).unwrap();
        assert!((f - 1.25).abs() < 1e-12);
    }

    #[test]
    fn download_time_wraps_at_trace_end() {
        let tr = two_rate_trace(1.0, 3.0);
        // From t=1.5: 0.5 s at 3 Mbps (1.5 Mb), wrap, 1 s at 1 Mbps, rest at 3.
        let f = download_time(&tr, 1.5, 3_000_000.0).unwrap();
        let expect = 0.5 + 1.0 + 0.5 / 3.0;
        assert!((f - expect).abs() < 1e-12, "{f} vs {expect}");
    }

    #[test]
    fn all_zero_trace_is_undeliverable() {
        let tr = constant_trace(0.0);
        assert!(matches!(
            download_time(&tr, 0.0, 1.0),
            Err(Error::UndeliverableChunk(_))
        ));
    }

    #[test]
    fn step_without_rebuffering() {
        let tr = constant_trace(4.0);
        let spec = VideoSpec::default();
        let state = PlaybackState { buffer_s: 10.0, last_level: 0, chunk_index: 0, wall_clock_s: 0.0 };
        let out = step(&state, 3, &tr, &spec).unwrap();
        assert!((out.download_s - 1.425).abs() < 1e-12);
        assert_eq!(out.rebuffer_s, 0.0);
        assert!((out.next_state.buffer_s - 10.575).abs() < 1e-12);
        assert!(!out.boundary_violation);
    }

    #[test]
    fn step_with_rebuffering_rounds_up_to_half_seconds() {
        // f = 2.2 s against a 1.0 s buffer: stall = ceil(1.2/0.5)*0.5 = 1.5 s.
        let tr = constant_trace(1.0);
        let spec = VideoSpec { ladder_kbps: vec![1100.0], chunk_duration_s: 2.0, num_chunks: 10 };
        let state = PlaybackState { buffer_s: 1.0, last_level: 0, chunk_index: 0, wall_clock_s: 0.0 };
        let out = step(&state, 0, &tr, &spec).unwrap();
        assert!((out.download_s - 2.2).abs() < 1e-12);
        assert_eq!(out.rebuffer_s, 1.5);
        assert_eq!(out.next_state.buffer_s, 2.0);
    }

    #[test]
    fn step_clamps_buffer_and_flags_violation() {
        let tr = constant_trace(1.0);
        let spec = VideoSpec { ladder_kbps: vec![100.0], chunk_duration_s: 2.0, num_chunks: 10 };
        let state = PlaybackState { buffer_s: 19.8, last_level: 0, chunk_index: 0, wall_clock_s: 0.0 };
        let out = step(&state, 0, &tr, &spec).unwrap();
        assert!((out.download_s - 0.2).abs() < 1e-12);
        // Raw landing at 21.6 s clamps to 20 with the 1.6 s excess idled out.
        assert_eq!(out.next_state.buffer_s, MAX_BUFFER_S);
        assert!(out.boundary_violation);
        assert!((out.next_state.wall_clock_s - (0.2 + 1.6)).abs() < 1e-12);
    }

    #[test]
    fn stall_at_exact_buffer_boundary_is_zero() {
        let tr = constant_trace(1.0);
        let spec = VideoSpec { ladder_kbps: vec![1000.0], chunk_duration_s: 2.0, num_chunks: 10 };
        // f = 2.0 exactly; b = 2.0 takes the no-stall branch.
        let state = PlaybackState { buffer_s: 2.0, last_level: 0, chunk_index: 0, wall_clock_s: 0.0 };
        let out = step(&state, 0, &tr, &spec).unwrap();
        assert_eq!(out.rebuffer_s, 0.0);
        // Just below, the stall jumps to the 0.5 s granularity floor.
        let state = PlaybackState { buffer_s: 2.0 - 1e-9, ..state };
        let out = step(&state, 0, &tr, &spec).unwrap();
        assert_eq!(out.rebuffer_s, 0.5);
    }

    #[test]
    fn run_episode_matches_hand_rolled_recurrence() {
        let tr = constant_trace(20.0);
        let spec = VideoSpec::default();
        let log = run_episode(&tr, &spec, |_| 0, 0.0).unwrap();
        assert_eq!(log.chunks.len(), 41);

        // Independent recurrence per the buffer update equations.
        let f = 600_000.0 / 20e6;
        let mut b = 0.0_f64;
        for (i, rec) in log.chunks.iter().enumerate() {
            assert!((rec.download_s - f).abs() < 1e-12);
            let (expect_b, expect_t, violated) = if b >= f {
                let raw: f64 = b + 2.0 - f;
                (raw.min(20.0), 0.0, raw > 20.0)
            } else {
                (2.0, ((f - b) / 0.5_f64).ceil() * 0.5, false)
            };
            assert_eq!(rec.rebuffer_s, expect_t, "chunk {}", i + 1);
            assert!((rec.buffer_s - expect_b).abs() < 1e-9, "chunk {}", i + 1);
            assert_eq!(rec.violation, violated, "chunk {}", i + 1);
            b = expect_b;
        }
        // First chunk rebuffers by its rounded download time; later the
        // buffer saturates at the 20 s cap with violations.
        assert_eq!(log.chunks[0].rebuffer_s, 0.5);
        assert!(log.chunks[1..].iter().all(|c| c.rebuffer_s == 0.0));
        assert!(log.chunks.last().unwrap().violation);
        assert_eq!(log.chunks.last().unwrap().buffer_s, 20.0);
    }

    #[test]
    fn run_episode_is_deterministic() {
        let tr = constant_trace(5.0);
        let spec = VideoSpec::default();
        let a = run_episode(&tr, &spec, |o| o.playback.chunk_index % 4, 3.25).unwrap();
        let b = run_episode(&tr, &spec, |o| o.playback.chunk_index % 4, 3.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_has_the_documented_keys() {
        let tr = constant_trace(5.0);
        let spec = VideoSpec::default();
        let log = run_episode(&tr, &spec, |_| 1, 0.0).unwrap();
        let first_line = log.to_jsonl().lines().next().unwrap().to_string();
        // Keys must appear in the documented order in the raw output.
        let mut cursor = 0;
        for key in ["chunk", "level", "bitrate_kbps", "f_s", "rebuf_s", "buffer_s", "thru_mbps", "reward"] {
            let pos = first_line[cursor..]
                .find(&format!("\"{key}\":"))
                .unwrap_or_else(|| panic!("missing or misordered key {key} in {first_line}"));
            cursor += pos;
        }
        assert!(serde_json::from_str::<serde_json::Value>(&first_line).is_ok());
    }

    proptest! {
        #[test]
        fn buffer_stays_in_bounds_and_stall_iff_shortfall(
            buffer in 0.0_f64..20.0,
            rate in 0.05_f64..25.0,
            level in 0_usize..4,
            t0 in 0.0_f64..100.0,
        ) {
            let tr = constant_trace(rate);
            let spec = VideoSpec::default();
            let state = PlaybackState { buffer_s: buffer, last_level: 0, chunk_index: 0, wall_clock_s: t0 };
            let out = step(&state, level, &tr, &spec).unwrap();
            prop_assert!(out.next_state.buffer_s >= 0.0);
            prop_assert!(out.next_state.buffer_s <= MAX_BUFFER_S);
            prop_assert_eq!(out.rebuffer_s == 0.0, buffer >= out.download_s);
            let halves = out.rebuffer_s / 0.5;
            prop_assert!((halves - halves.round()).abs() < 1e-9);
        }
    }
}
