//! Flight-state sensor preprocessing: quantization of distance, velocity,
//! and acceleration readings into small discrete levels, plus the
//! threshold-derivation sweep that finds quantization boundaries from a
//! labeled (sensor, throughput) corpus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TraceSample;

/// Quantization thresholds and the parameters of the derivation sweep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct QuantizerConfig {
    /// Distance boundary in meters; beyond it `d_q` flips to 1.
    pub distance_threshold_m: f64,
    /// Velocity band boundaries in m/s, strictly increasing.
    pub velocity_thresholds_mps: (f64, f64),
    /// Acceleration-magnitude boundary in m/s².
    pub accel_threshold_mps2: f64,
    /// Windowed-mean throughput drop that marks one threshold, in Mbps.
    pub qoe_drop_mbps: f64,
    /// Sliding-window length in samples for the derivation sweep.
    pub window: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            distance_threshold_m: 50.0,
            velocity_thresholds_mps: (8.0, 12.0),
            accel_threshold_mps2: 18.0,
            qoe_drop_mbps: 0.95,
            window: 50,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        let (v_lo, v_hi) = self.velocity_thresholds_mps;
        if !(v_lo > 0.0) || !(v_hi > v_lo) {
            return Err(Error::InvalidConfig(
                "velocity thresholds must be positive and strictly increasing".into(),
            ));
        }
        if !(self.distance_threshold_m > 0.0) || !(self.accel_threshold_mps2 > 0.0) {
            return Err(Error::InvalidConfig("thresholds must be positive".into()));
        }
        if !(self.qoe_drop_mbps > 0.0) {
            return Err(Error::InvalidConfig("qoe drop must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be positive".into()));
        }
        Ok(())
    }
}

/// Discrete sensor levels fed to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedSensors {
    /// Distance level: 0 within the threshold, 1 beyond it.
    pub d_q: u8,
    /// Velocity level: 0 below the band, 1 inside it, 2 above it.
    pub v_q: u8,
    /// Acceleration level: 0 within the threshold, 1 beyond it.
    pub a_q: u8,
}

/// Euclidean norm of the raw 3-axis acceleration. The quantizer treats the
/// reading as one overall value, not a 3-D partition.
pub fn accel_magnitude(accel: [f64; 3]) -> f64 {
    (accel[0] * accel[0] + accel[1] * accel[1] + accel[2] * accel[2]).sqrt()
}

/// Quantizes one trace sample.
///
/// Band membership is fixed so outputs are deterministic at the boundaries:
/// `d_q = 1` iff distance > threshold; `v_q = 0` below the lower bound,
/// `1` inside the closed band, `2` strictly above it; `a_q = 1` iff the
/// acceleration magnitude exceeds its threshold.
pub fn quantize(sample: &TraceSample, cfg: &QuantizerConfig) -> QuantizedSensors {
    let (v_lo, v_hi) = cfg.velocity_thresholds_mps;
    let d_q = u8::from(sample.distance_m > cfg.distance_threshold_m);
    let v_q = if sample.velocity_mps < v_lo {
        0
    } else if sample.velocity_mps <= v_hi {
        1
    } else {
        2
    };
    let a_q = u8::from(accel_magnitude(sample.accel_mps2) > cfg.accel_threshold_mps2);
    QuantizedSensors { d_q, v_q, a_q }
}

/// Derives quantization thresholds for one sensor from labeled pairs.
///
/// Pairs are sorted by sensor value; a sliding window of `cfg.window`
/// samples tracks the mean throughput. Each time the windowed mean falls
/// `cfg.qoe_drop_mbps` below the reference (initially the first window's
/// mean, reset after every emission), the window's central sensor value is
/// emitted as a threshold. Output is strictly increasing and independent of
/// the input order.
pub fn derive_thresholds(pairs: &[(f64, f64)], cfg: &QuantizerConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let w = cfg.window;
    if pairs.len() < 2 * w {
        return Err(Error::TooFewPairs { need: 2 * w, got: pairs.len() });
    }
    if pairs.iter().any(|&(s, t)| !s.is_finite() || !t.is_finite()) {
        return Err(Error::NonFinite("sensor/throughput pair"));
    }

    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite pairs"));

    let mut window_sum: f64 = sorted[..w].iter().map(|p| p.1).sum();
    let mut reference = window_sum / w as f64;
    let mut thresholds = Vec::new();

    for i in 1..=(sorted.len() - w) {
        window_sum += sorted[i + w - 1].1 - sorted[i - 1].1;
        let mean = window_sum / w as f64;
        if reference - mean >= cfg.qoe_drop_mbps {
            // Midpoint of the window's sensor span locates the drop.
            let center = 0.5 * (sorted[i].0 + sorted[i + w - 1].0);
            if thresholds.last().is_none_or(|&last| center > last) {
                thresholds.push(center);
            }
            reference = mean;
        }
    }
    Ok(thresholds)
}

/// Extracts (sensor value, throughput) pairs for one named sensor field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorKind {
    Distance,
    Velocity,
    Accel,
}

impl SensorKind {
    pub const NAMES: [&'static str; 3] = ["distance", "velocity", "accel"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "distance" => Ok(Self::Distance),
            "velocity" => Ok(Self::Velocity),
            "accel" => Ok(Self::Accel),
            other => Err(Error::InvalidConfig(format!(
                "unknown sensor `{other}`; valid sensors: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Distance => "distance",
            Self::Velocity => "velocity",
            Self::Accel => "accel",
        }
    }

    pub fn value(self, sample: &TraceSample) -> f64 {
        match self {
            Self::Distance => sample.distance_m,
            Self::Velocity => sample.velocity_mps,
            Self::Accel => accel_magnitude(sample.accel_mps2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(distance: f64, velocity: f64, accel: [f64; 3]) -> TraceSample {
        TraceSample { t: 0.0, throughput_mbps: 1.0, distance_m: distance, velocity_mps: velocity, accel_mps2: accel }
    }

    #[test]
    fn accel_magnitude_examples() {
        assert_eq!(accel_magnitude([0.0, 0.0, 0.0]), 0.0);
        assert_eq!(accel_magnitude([3.0, 4.0, 0.0]), 5.0);
        // sqrt(300) by hand.
        assert!((accel_magnitude([10.0, 10.0, 10.0]) - 17.3205).abs() < 1e-4);
    }

    #[test]
    fn quantize_follows_the_three_rules() {
        let cfg = QuantizerConfig::default();
        assert_eq!(quantize(&sample(60.0, 0.0, [0.0; 3]), &cfg).d_q, 1);
        assert_eq!(quantize(&sample(40.0, 0.0, [0.0; 3]), &cfg).d_q, 0);
        assert_eq!(quantize(&sample(0.0, 10.0, [0.0; 3]), &cfg).v_q, 1);
        assert_eq!(quantize(&sample(0.0, 7.9, [0.0; 3]), &cfg).v_q, 0);
        assert_eq!(quantize(&sample(0.0, 12.1, [0.0; 3]), &cfg).v_q, 2);
        assert_eq!(quantize(&sample(0.0, 0.0, [20.0, 0.0, 0.0]), &cfg).a_q, 1);
        assert_eq!(quantize(&sample(0.0, 0.0, [10.0, 0.0, 0.0]), &cfg).a_q, 0);
    }

    #[test]
    fn quantize_band_boundaries() {
        let cfg = QuantizerConfig::default();
        // 50 m is still level 0; the band [8, 12] is closed at both ends.
        assert_eq!(quantize(&sample(50.0, 0.0, [0.0; 3]), &cfg).d_q, 0);
        assert_eq!(quantize(&sample(0.0, 8.0, [0.0; 3]), &cfg).v_q, 1);
        assert_eq!(quantize(&sample(0.0, 12.0, [0.0; 3]), &cfg).v_q, 1);
        assert_eq!(quantize(&sample(0.0, 0.0, [18.0, 0.0, 0.0]), &cfg).a_q, 0);
    }

    #[test]
    fn constant_throughput_yields_no_thresholds() {
        let cfg = QuantizerConfig { window: 10, ..QuantizerConfig::default() };
        let pairs: Vec<(f64, f64)> = (1..=100).map(|v| (v as f64, 5.0)).collect();
        assert!(derive_thresholds(&pairs, &cfg).unwrap().is_empty());
    }

    /// Independent sweep: recompute every window mean from scratch and
    /// record the crossing points of the reference-relative drop.
    fn brute_force_thresholds(pairs: &[(f64, f64)], w: usize, drop: f64) -> Vec<f64> {
        let mut sorted = pairs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = |i: usize| sorted[i..i + w].iter().map(|p| p.1).sum::<f64>() / w as f64;
        let mut reference = mean(0);
        let mut out: Vec<f64> = Vec::new();
        for i in 1..=(sorted.len() - w) {
            let m = mean(i);
            if reference - m >= drop {
                let c = 0.5 * (sorted[i].0 + sorted[i + w - 1].0);
                if out.last().map_or(true, |&l| c > l) {
                    out.push(c);
                }
                reference = m;
            }
        }
        out
    }

    #[test]
    fn linear_ramp_thresholds_match_brute_force_and_expected_positions() {
        let cfg = QuantizerConfig { window: 10, ..QuantizerConfig::default() };
        let pairs: Vec<(f64, f64)> = (1..=100).map(|v| (v as f64, 10.0 - 0.05 * v as f64)).collect();
        let got = derive_thresholds(&pairs, &cfg).unwrap();
        let oracle = brute_force_thresholds(&pairs, 10, 0.95);
        assert_eq!(got, oracle);
        // Cumulative 0.95 Mbps crossings on the ramp: near 24, 43, 62, 81.
        let expected = [24.0, 43.0, 62.0, 81.0];
        assert_eq!(got.len(), expected.len(), "{got:?}");
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() <= 10.0, "threshold {g} not within a window width of {e}");
        }
    }

    #[test]
    fn input_order_does_not_matter() {
        let cfg = QuantizerConfig { window: 10, ..QuantizerConfig::default() };
        let pairs: Vec<(f64, f64)> = (1..=100).map(|v| (v as f64, 10.0 - 0.05 * v as f64)).collect();
        let mut reversed = pairs.clone();
        reversed.reverse();
        assert_eq!(derive_thresholds(&pairs, &cfg).unwrap(), derive_thresholds(&reversed, &cfg).unwrap());
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let cfg = QuantizerConfig { window: 10, ..QuantizerConfig::default() };
        let pairs: Vec<(f64, f64)> = (0..19).map(|v| (v as f64, 1.0)).collect();
        assert!(matches!(derive_thresholds(&pairs, &cfg), Err(Error::TooFewPairs { .. })));
    }

    #[test]
    fn non_finite_pairs_are_rejected() {
        let cfg = QuantizerConfig { window: 2, ..QuantizerConfig::default() };
        let pairs = vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 1.0), (3.0, 1.0)];
        assert!(matches!(derive_thresholds(&pairs, &cfg), Err(Error::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(
            d1 in 0.0_f64..120.0, d2 in 0.0_f64..120.0,
            v1 in 0.0_f64..25.0, v2 in 0.0_f64..25.0,
            a1 in 0.0_f64..30.0, a2 in 0.0_f64..30.0,
        ) {
            let cfg = QuantizerConfig::default();
            let q = |d: f64, v: f64, a: f64| quantize(&sample(d, v, [a, 0.0, 0.0]), &cfg);
            if d1 <= d2 { prop_assert!(q(d1, 0.0, 0.0).d_q <= q(d2, 0.0, 0.0).d_q); }
            if v1 <= v2 { prop_assert!(q(0.0, v1, 0.0).v_q <= q(0.0, v2, 0.0).v_q); }
            if a1 <= a2 { prop_assert!(q(0.0, 0.0, a1).a_q <= q(0.0, 0.0, a2).a_q); }
        }

        #[test]
        fn thresholds_strictly_increase_and_ignore_permutation(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(40..160_usize);
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..12.0)))
                .collect();
            let cfg = QuantizerConfig { window: 20, ..QuantizerConfig::default() };
            if pairs.len() >= 40 {
                let got = derive_thresholds(&pairs, &cfg).unwrap();
                prop_assert!(got.windows(2).all(|w| w[1] > w[0]));
                let mut shuffled = pairs.clone();
                for i in (1..shuffled.len()).rev() {
                    let j = rng.random_range(0..=i);
                    shuffled.swap(i, j);
                }
                prop_assert_eq!(derive_thresholds(&shuffled, &cfg).unwrap(), got);
            }
        }
    }
}
