//! Report emission: atomic file writes, CDF tables, and the paired
//! bootstrap used for relative-QoE confidence intervals.

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes via a temp file plus rename so readers never see partial output.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Empirical CDF points of a sample: sorted values with cumulative
/// probability (i+1)/n.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

/// CSV body for one CDF, columns `value,cum_prob`.
pub fn cdf_csv(values: &[f64]) -> String {
    let mut out = String::from("value,cum_prob\n");
    for (v, p) in cdf(values) {
        out.push_str(&format!("{v:.6},{p:.6}\n"));
    }
    out
}

/// Paired bootstrap over per-episode differences: resamples episodes with
/// replacement and returns the (2.5%, 97.5%) percentile interval of the
/// mean difference. Deterministic given the seed.
pub fn paired_bootstrap_ci(diffs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    assert!(!diffs.is_empty(), "bootstrap needs at least one pair");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut total = 0.0;
        for _ in 0..n {
            total += diffs[rng.random_range(0..n)];
        }
        means.push(total / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let lo = means[((resamples as f64) * 0.025).floor() as usize];
    let hi = means[(((resamples as f64) * 0.975).ceil() as usize - 1).min(resamples - 1)];
    (lo, hi)
}
