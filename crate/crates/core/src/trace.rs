//! Throughput/flight-state traces: the trace file format, corpus loading and
//! splitting, zero-order-hold reconstruction, and a synthetic flight
//! generator whose rate profiles fall monotonically with distance and speed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expected CSV header for trace files.
pub const TRACE_HEADER: &str = "t_s,throughput_mbps,distance_m,velocity_mps,ax_mps2,ay_mps2,az_mps2";

/// One time-indexed reading: link throughput plus the flight state that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    /// Seconds since trace start.
    pub t: f64,
    /// Link throughput in Mbps.
    pub throughput_mbps: f64,
    /// Distance from the ground client in meters.
    pub distance_m: f64,
    /// Horizontal ground speed in m/s.
    pub velocity_mps: f64,
    /// Per-axis accelerations in m/s².
    pub accel_mps2: [f64; 3],
}

impl TraceSample {
    fn validate(&self) -> std::result::Result<(), String> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(format!("timestamp must be finite and non-negative, got {}", self.t));
        }
        if !self.throughput_mbps.is_finite() || self.throughput_mbps < 0.0 {
            return Err(format!("throughput must be finite and non-negative, got {}", self.throughput_mbps));
        }
        if !self.distance_m.is_finite() || self.distance_m < 0.0 {
            return Err(format!("distance must be finite and non-negative, got {}", self.distance_m));
        }
        if !self.velocity_mps.is_finite() || self.velocity_mps < 0.0 {
            return Err(format!("velocity must be finite and non-negative, got {}", self.velocity_mps));
        }
        if self.accel_mps2.iter().any(|a| !a.is_finite()) {
            return Err("acceleration must be finite".to_string());
        }
        Ok(())
    }
}

/// An immutable time series of [`TraceSample`]s with strictly increasing
/// timestamps. `duration` is the period used when an episode reads past the
/// last sample: lookups wrap modulo `duration`, so any episode length plays.
#[derive(Debug, Clone)]
pub struct Trace {
    id: String,
    samples: Vec<TraceSample>,
    duration_s: f64,
}

impl Trace {
    pub fn new(id: impl Into<String>, samples: Vec<TraceSample>, duration_s: f64) -> Result<Self> {
        let id = id.into();
        let invalid = |msg: String| Error::InvalidTrace { id: id.clone(), msg };
        if samples.is_empty() {
            return Err(invalid("trace has no samples".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            s.validate().map_err(|msg| invalid(format!("sample {i}: {msg}")))?;
        }
        for w in samples.windows(2) {
            if w[1].t <= w[0].t {
                return Err(invalid(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        let last_t = samples.last().unwrap().t;
        if !duration_s.is_finite() || duration_s < last_t || duration_s <= 0.0 {
            return Err(invalid(format!(
                "duration {duration_s} must be positive and cover the last timestamp {last_t}"
            )));
        }
        Ok(Self { id, samples, duration_s })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    /// Index of the sample that holds at time `t` (zero-order hold with wrap
    /// modulo duration). A timestamp exactly on a sample boundary belongs to
    /// the newer sample.
    pub(crate) fn index_at(&self, t: f64) -> usize {
        let pos = wrap_time(t, self.duration_s);
        // Last sample with timestamp <= pos.
        match self
            .samples
            .binary_search_by(|s| s.t.partial_cmp(&pos).expect("finite timestamps"))
        {
            Ok(i) => i,
            Err(0) => 0, // pos before first timestamp can only happen if samples[0].t > 0
            Err(i) => i - 1,
        }
    }

    /// Full sample held at time `t` (hold semantics, wrapping at trace end).
    pub fn sample_at(&self, t: f64) -> &TraceSample {
        &self.samples[self.index_at(t)]
    }

    /// Throughput in Mbps at time `t` under zero-order hold; beyond the trace
    /// end the trace wraps modulo its duration.
    pub fn throughput_at(&self, t: f64) -> f64 {
        self.sample_at(t).throughput_mbps
    }

    /// Serializes the trace in the canonical CSV format.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                s.t, s.throughput_mbps, s.distance_m, s.velocity_mps, s.accel_mps2[0], s.accel_mps2[1], s.accel_mps2[2]
            ));
        }
        out
    }
}

/// Wraps `t` into `[0, duration)`.
fn wrap_time(t: f64, duration: f64) -> f64 {
    let r = t.rem_euclid(duration);
    if r >= duration {
        0.0 // guard against rem_euclid returning `duration` at float edge cases
    } else {
        r
    }
}

/// Shape of the playable video: bitrate ladder, chunk length, chunk count.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct VideoSpec {
    /// Ascending bitrate ladder in Kbps.
    pub ladder_kbps: Vec<f64>,
    /// Chunk length in seconds.
    pub chunk_duration_s: f64,
    /// Number of chunks in one episode.
    pub num_chunks: usize,
}

impl Default for VideoSpec {
    fn default() -> Self {
        Self {
            ladder_kbps: vec![300.0, 750.0, 1850.0, 2850.0],
            chunk_duration_s: 2.0,
            num_chunks: 41,
        }
    }
}

impl VideoSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ladder_kbps.is_empty() {
            return Err(Error::InvalidVideoSpec("ladder is empty".into()));
        }
        if self.ladder_kbps.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidVideoSpec("ladder bitrates must be positive".into()));
        }
        if self.ladder_kbps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidVideoSpec("ladder must be strictly ascending".into()));
        }
        if !(self.chunk_duration_s > 0.0) {
            return Err(Error::InvalidVideoSpec("chunk duration must be positive".into()));
        }
        if self.num_chunks == 0 {
            return Err(Error::InvalidVideoSpec("num_chunks must be positive".into()));
        }
        Ok(())
    }

    /// Lowest ladder rung in Kbps.
    pub fn min_bitrate_kbps(&self) -> f64 {
        self.ladder_kbps[0]
    }
}

/// A set of traces plus the parameters that define its train/test partition.
#[derive(Debug, Clone)]
pub struct TraceCorpus {
    pub traces: Vec<Trace>,
    pub split_seed: u64,
    pub train_fraction: f64,
}

impl TraceCorpus {
    pub fn new(traces: Vec<Trace>) -> Self {
        Self { traces, split_seed: 0, train_fraction: 0.8 }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Seed-deterministic partition into train and test sets.
    /// `|train| = round(train_fraction * N)`; both sides must be nonempty.
    pub fn split(&self) -> Result<(Vec<&Trace>, Vec<&Trace>)> {
        if self.traces.is_empty() {
            return Err(Error::EmptyInput("corpus"));
        }
        if !self.train_fraction.is_finite() || self.train_fraction <= 0.0 || self.train_fraction > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        let n = self.traces.len();
        let k = (self.train_fraction * n as f64).round() as usize;
        if k == 0 {
            return Err(Error::EmptySplit("train"));
        }
        if k >= n {
            return Err(Error::EmptySplit("test"));
        }
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.split_seed);
        // Fisher-Yates; indexing the RNG directly keeps the partition stable
        // across rand crate upgrades.
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        let train = indices[..k].iter().map(|&i| &self.traces[i]).collect();
        let test = indices[k..].iter().map(|&i| &self.traces[i]).collect();
        Ok((train, test))
    }
}

/// Loads a corpus from a directory of trace CSV files (or a single file).
/// Files are read in lexicographic order so corpus order is stable.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<TraceCorpus> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = if path.is_dir() {
        fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
            .collect()
    } else {
        vec![path.to_path_buf()]
    };
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    let mut traces = Vec::with_capacity(files.len());
    for file in &files {
        traces.push(load_trace(file)?);
    }
    warn_throughput_range(&traces);
    Ok(TraceCorpus::new(traces))
}

/// Corpus-level sanity check; out-of-range throughput is a warning, not an error.
fn warn_throughput_range(traces: &[Trace]) {
    let max = traces
        .iter()
        .flat_map(|t| t.samples().iter().map(|s| s.throughput_mbps))
        .fold(0.0_f64, f64::max);
    if max > 20.0 {
        eprintln!("warning: corpus throughput peaks at {max:.2} Mbps, above the expected 0-20 Mbps range");
    }
}

/// Parses one trace CSV file. Row numbers in diagnostics are 1-based and
/// count the header, matching what an editor shows.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::TraceParse { path: display.clone(), row: 1, msg: e.to_string() })?;

    {
        let headers = reader.headers().map_err(|e| Error::TraceParse {
            path: display.clone(),
            row: 1,
            msg: e.to_string(),
        })?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != TRACE_HEADER {
            return Err(Error::TraceParse {
                path: display,
                row: 1,
                msg: format!("unexpected header `{got}`, want `{TRACE_HEADER}`"),
            });
        }
    }

    let mut samples: Vec<TraceSample> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let parse_err = |msg: String| Error::TraceParse { path: display.clone(), row, msg };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.len() != 7 {
            return Err(parse_err(format!("expected 7 fields, got {}", record.len())));
        }
        let mut fields = [0.0_f64; 7];
        for (j, raw) in record.iter().enumerate() {
            fields[j] = raw
                .parse::<f64>()
                .map_err(|e| parse_err(format!("field {}: {e}", j + 1)))?;
        }
        let sample = TraceSample {
            t: fields[0],
            throughput_mbps: fields[1],
            distance_m: fields[2],
            velocity_mps: fields[3],
            accel_mps2: [fields[4], fields[5], fields[6]],
        };
        sample.validate().map_err(parse_err)?;
        if let Some(prev) = samples.last() {
            if sample.t <= prev.t {
                return Err(parse_err(format!(
                    "timestamp {} does not increase past {}",
                    sample.t, prev.t
                )));
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::InvalidTrace { id, msg: "trace file has no data rows".into() });
    }
    let duration = infer_duration(&samples);
    Trace::new(id, samples, duration)
}

/// Trace files carry no explicit duration; extend the last sample by the
/// trailing inter-sample gap so its hold interval is not lost when wrapping.
fn infer_duration(samples: &[TraceSample]) -> f64 {
    let last = samples.last().unwrap().t;
    let step = if samples.len() >= 2 {
        last - samples[samples.len() - 2].t
    } else {
        1.0
    };
    last + step
}

/// Writes a trace to `<dir>/<id>.csv`.
pub fn write_trace(dir: impl AsRef<Path>, trace: &Trace) -> Result<PathBuf> {
    let path = dir.as_ref().join(format!("{}.csv", trace.id()));
    fs::write(&path, trace.to_csv())?;
    Ok(path)
}

/// A monotone non-increasing piecewise-linear multiplier profile. Values are
/// held flat beyond the first/last breakpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RateProfile {
    points: Vec<(f64, f64)>,
}

impl RateProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("profile needs at least one point".into()));
        }
        for &(x, y) in &points {
            if !x.is_finite() || !y.is_finite() || y < 0.0 {
                return Err(Error::InvalidConfig(format!("bad profile point ({x}, {y})")));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig("profile x-coordinates must be strictly ascending".into()));
        }
        if points.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::InvalidConfig("profile must be non-increasing".into()));
        }
        Ok(Self { points })
    }

    /// Constant profile, handy for disabling one of the two factors.
    pub fn flat(value: f64) -> Self {
        Self { points: vec![(0.0, value)] }
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 {
            return pts[0].1;
        }
        if x >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let i = pts.partition_point(|&(px, _)| px <= x);
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Parameters of the synthetic flight generator.
///
/// Distance and velocity evolve as first-order lags toward waypoint targets
/// redrawn at random dwell intervals; throughput is
/// `trace_scale * base_rate * g_d(distance) * g_v(velocity)` times mean-one
/// lognormal noise. Acceleration is the velocity derivative on the x axis
/// plus zero-mean vibration noise on all three axes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SynthParams {
    pub duration_s: f64,
    pub sample_interval_s: f64,
    pub base_rate_mbps: f64,
    /// Scales throughput to emulate bandwidth shared across clients.
    pub trace_scale: f64,
    pub distance_profile: RateProfile,
    pub velocity_profile: RateProfile,
    /// (min, max) meters; equal endpoints pin the distance.
    pub distance_range_m: (f64, f64),
    /// (min, max) m/s; equal endpoints pin the velocity.
    pub velocity_range_mps: (f64, f64),
    /// (min, max) seconds between waypoint retargets.
    pub dwell_range_s: (f64, f64),
    /// First-order lag time constant toward the current targets.
    pub response_tau_s: f64,
    /// Per-axis std-dev of vibration acceleration noise.
    pub vibration_std_mps2: f64,
    /// Sigma of the mean-one lognormal throughput noise; zero disables it.
    pub noise_sigma: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            duration_s: 100.0,
            sample_interval_s: 1.0,
            base_rate_mbps: 20.0,
            trace_scale: 1.0,
            // Knee at 50 m: full rate close in, steep fall just past 50.
            distance_profile: RateProfile::new(vec![(0.0, 1.0), (50.0, 1.0), (55.0, 0.55), (90.0, 0.4)])
                .expect("static profile"),
            // Steps at the 8 and 12 m/s velocity bands.
            velocity_profile: RateProfile::new(vec![(0.0, 1.0), (8.0, 0.95), (12.0, 0.55), (16.0, 0.4)])
                .expect("static profile"),
            distance_range_m: (10.0, 90.0),
            velocity_range_mps: (0.0, 16.0),
            dwell_range_s: (5.0, 20.0),
            response_tau_s: 1.0,
            vibration_std_mps2: 3.0,
            noise_sigma: 0.25,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("synth params: {msg}")));
        if !(self.duration_s > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.sample_interval_s > 0.0) || self.sample_interval_s > self.duration_s {
            return bad("sample interval must be positive and at most the duration");
        }
        if !(self.base_rate_mbps >= 0.0) || !(self.trace_scale >= 0.0) {
            return bad("rate bounds must be non-negative");
        }
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo;
        if !ok_range(self.distance_range_m) {
            return bad("distance range must satisfy 0 <= min <= max");
        }
        if !ok_range(self.velocity_range_mps) {
            return bad("velocity range must satisfy 0 <= min <= max");
        }
        if !ok_range(self.dwell_range_s) || self.dwell_range_s.0 <= 0.0 {
            return bad("dwell range must satisfy 0 < min <= max");
        }
        if !(self.response_tau_s > 0.0) {
            return bad("response tau must be positive");
        }
        if self.vibration_std_mps2 < 0.0 || self.noise_sigma < 0.0 {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }
}

/// Generates one synthetic flight trace; deterministic given `seed`.
pub fn synthesize(params: &SynthParams, seed: u64) -> Result<Trace> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform_in = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };

    let dt = (params.sample_interval_s / 10.0).min(0.1);
    let steps_per_sample = (params.sample_interval_s / dt).round() as usize;
    let n_samples = (params.duration_s / params.sample_interval_s).ceil() as usize;

    let vibration = if params.vibration_std_mps2 > 0.0 {
        Some(Normal::new(0.0, params.vibration_std_mps2).expect("validated std"))
    } else {
        None
    };
    // Mean-one lognormal: exp(N(-sigma^2/2, sigma^2)).
    let log_noise = if params.noise_sigma > 0.0 {
        Some(Normal::new(-params.noise_sigma * params.noise_sigma / 2.0, params.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let mut distance = uniform_in(&mut rng, params.distance_range_m);
    let mut velocity = uniform_in(&mut rng, params.velocity_range_mps);
    let mut target_d = uniform_in(&mut rng, params.distance_range_m);
    let mut target_v = uniform_in(&mut rng, params.velocity_range_mps);
    let mut next_retarget = uniform_in(&mut rng, params.dwell_range_s);

    let mut samples = Vec::with_capacity(n_samples);
    let mut t = 0.0_f64;
    for k in 0..n_samples {
        // Longitudinal acceleration over the step leading into this sample.
        let dv_dt = (target_v - velocity) / params.response_tau_s;
        let accel_long = dv_dt;
        let accel = [
            accel_long + vibration.as_ref().map_or(0.0, |d| d.sample(&mut rng)),
            vibration.as_ref().map_or(0.0, |d| d.sample(&mut rng)),
            vibration.as_ref().map_or(0.0, |d| d.sample(&mut rng)),
        ];
        let noise = log_noise.as_ref().map_or(1.0, |d| d.sample(&mut rng).exp());
        let throughput = params.trace_scale
            * params.base_rate_mbps
            * params.distance_profile.value_at(distance)
            * params.velocity_profile.value_at(velocity)
            * noise;

        samples.push(TraceSample {
            t,
            throughput_mbps: throughput.max(0.0),
            distance_m: distance,
            velocity_mps: velocity,
            accel_mps2: accel,
        });

        // Advance the kinematics to the next sample instant.
        for _ in 0..steps_per_sample {
            t += dt;
            if t >= next_retarget {
                target_d = uniform_in(&mut rng, params.distance_range_m);
                target_v = uniform_in(&mut rng, params.velocity_range_mps);
                next_retarget = t + uniform_in(&mut rng, params.dwell_range_s);
            }
            distance += (target_d - distance) * dt / params.response_tau_s;
            velocity += (target_v - velocity) * dt / params.response_tau_s;
        }
        t = (k + 1) as f64 * params.sample_interval_s;
    }

    Trace::new(format!("synth-{seed:08}"), samples, params.duration_s)
}
