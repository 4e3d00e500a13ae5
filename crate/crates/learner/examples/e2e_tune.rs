//! Scratch calibration of the end-to-end learning experiment. Not part of
//! the test suite.

use abr_core::baseline::{BaselineConfig, BaselineKind, BaselinePolicy};
use abr_core::qoe::{episode_summary, QoEConfig};
use abr_core::sensor::QuantizerConfig;
use abr_core::sim::run_episode;
use abr_core::trace::{synthesize, RateProfile, SynthParams, Trace, TraceCorpus, VideoSpec};
use abr_core::seed;
use abr_learner::agent::{
    evaluate, make_env, train, EntropySchedule, SensorMode, TrainConfig,
};
use abr_learner::nn::NetworkConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-regime corpus: velocity above the 12 m/s band cuts the link to a
/// tenth of its base rate, so regime shifts are the whole game.
fn coupled_params() -> SynthParams {
    SynthParams {
        duration_s: 100.0,
        sample_interval_s: 1.0,
        base_rate_mbps: 6.0,
        trace_scale: 1.0,
        distance_profile: RateProfile::flat(1.0),
        velocity_profile: RateProfile::new(vec![(0.0, 1.0), (10.0, 1.0), (12.0, 0.1), (20.0, 0.1)]).unwrap(),
        distance_range_m: (25.0, 45.0),
        velocity_range_mps: (2.0, 17.0),
        dwell_range_s: (4.0, 12.0),
        response_tau_s: 1.0,
        vibration_std_mps2: 3.0,
        noise_sigma: 0.3,
    }
}

fn baseline_mean(kind: BaselineKind, episodes: &[(&Trace, f64)], spec: &VideoSpec, qoe: &QoEConfig) -> f64 {
    let policy = BaselinePolicy::new(kind, BaselineConfig::default(), qoe.clone());
    let mut total = 0.0;
    for &(trace, t0) in episodes {
        let log = run_episode(trace, spec, |obs| policy.decide(obs), t0).unwrap();
        total += episode_summary(&log, qoe).unwrap().mean.total;
    }
    total / episodes.len() as f64
}

fn main() {
    let params = coupled_params();
    let traces: Vec<Trace> = (0..200).map(|s| synthesize(&params, s).unwrap()).collect();
    let mut corpus = TraceCorpus::new(traces);
    corpus.split_seed = 1;
    let (train_set, test_set) = corpus.split().unwrap();

    let spec = VideoSpec::default();
    let qoe = QoEConfig { violation_penalty: 0.0, ..QoEConfig::default() };
    let quant = QuantizerConfig::default();

    // Fixed evaluation episodes (paired across every policy).
    let episodes: Vec<(&Trace, f64)> = test_set
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(99, 0, i as u64));
            (*t, rng.random_range(0.0..t.duration_s()))
        })
        .collect();

    for kind in [
        BaselineKind::Fixed(0),
        BaselineKind::Fixed(1),
        BaselineKind::Fixed(2),
        BaselineKind::Fixed(3),
        BaselineKind::BufferBased,
        BaselineKind::RateBased,
        BaselineKind::Mpc,
    ] {
        println!("{:<14} mean QoE {:+.4}", kind.name(), baseline_mean(kind, &episodes, &spec, &qoe));
    }

    let net = NetworkConfig::default();
    for (gamma, alr, clr, episodes_n, e_end, norm) in [
        (0.95, 5e-4, 3e-5, 1500usize, 0.01, false),
        (0.95, 1e-3, 3e-5, 1500, 0.01, false),
        (0.9, 5e-4, 1e-4, 1500, 0.01, false),
    ] {
        let cfg = TrainConfig {
            gamma,
            actor_lr: alr,
            critic_lr: clr,
            entropy: EntropySchedule { start: 0.5, end: e_end, decay_episodes: Some(episodes_n / 2) },
            workers: 10,
            episodes: episodes_n,
            eval_every: 0,
            seed: 3,
            sensor_mode: SensorMode::Quantized,
            advantage_norm: norm,
            ..TrainConfig::default()
        };
        let start = std::time::Instant::now();
        match train(&train_set, &[], &spec, &qoe, &quant, &net, &cfg, |_| {}) {
            Ok(out) => {
                let env = make_env(&spec, &qoe, &quant, &net, cfg.sensor_mode, None);
                let eval = evaluate(&episodes, &out.actor, &net, &env).unwrap();
                println!(
                    "agent g={gamma} alr={alr} clr={clr} eps={episodes_n} e_end={e_end} norm={norm} -> mean QoE {:+.4}  ({:.0} s)",
                    eval.mean_qoe,
                    start.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("agent g={gamma} alr={alr} clr={clr} -> DIVERGED {e}"),
        }
    }
}
