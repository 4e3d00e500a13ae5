//! Scratch scan of bandit-mode hyperparameters. Not part of the test suite.

use abr_core::qoe::QoEConfig;
use abr_core::sensor::QuantizerConfig;
use abr_core::trace::{Trace, TraceSample, VideoSpec};
use abr_learner::agent::{
    make_env, run_rollout, train, ActionMode, EntropySchedule, SensorMode, TrainConfig,
};
use abr_learner::nn::{policy_forward, NetworkConfig};

fn constant_trace(mbps: f64) -> Trace {
    Trace::new(
        "ample",
        vec![TraceSample { t: 0.0, throughput_mbps: mbps, distance_m: 10.0, velocity_mps: 1.0, accel_mps2: [0.0; 3] }],
        100.0,
    )
    .unwrap()
}

fn main() {
    let trace = constant_trace(20.0);
    let spec = VideoSpec::default();
    let qoe = QoEConfig::default();
    let quant = QuantizerConfig::default();
    let net = NetworkConfig::default();

    for (seed, gamma, actor_lr, critic_lr, e_end, adv_norm, episodes) in [
        (1u64, 0.5, 1.5e-3, 1e-4, 0.003, false, 500),
        (2, 0.5, 1.5e-3, 1e-4, 0.003, false, 500),
        (3, 0.5, 1.5e-3, 1e-4, 0.003, false, 500),
        (4, 0.5, 1.5e-3, 1e-4, 0.003, false, 500),
        (5, 0.5, 1.5e-3, 1e-4, 0.003, false, 500),
        (7, 0.5, 1.5e-3, 1e-4, 0.003, false, 500),
    ] {
        let cfg = TrainConfig {
            gamma,
            workers: 1,
            episodes,
            eval_every: 0,
            actor_lr,
            critic_lr,
            entropy: EntropySchedule { start: 0.5, end: e_end, decay_episodes: Some(episodes * 2 / 5) },
            seed,
            pinned_buffer_s: Some(10.0),
            advantage_norm: adv_norm,
            ..TrainConfig::default()
        };
        let refs = [&trace];
        match train(&refs, &[], &spec, &qoe, &quant, &net, &cfg, |_| {}) {
            Ok(out) => {
                let env = make_env(&spec, &qoe, &quant, &net, SensorMode::Quantized, cfg.pinned_buffer_s);
                let rollout = run_rollout(&trace, 0.0, &env, &out.actor, &net, ActionMode::Greedy).unwrap();
                let mut min_ptop = f64::INFINITY;
                let mut all_top = true;
                for step in &rollout.steps {
                    let probs = policy_forward(&step.state, &out.actor, &net, false).unwrap();
                    min_ptop = min_ptop.min(probs[3]);
                    all_top &= step.action == 3;
                }
                let last = &out.log[out.log.len() - 1];
                println!(
                    "seed={seed} g={gamma} alr={actor_lr:>7} clr={critic_lr:>7} e_end={e_end:>6} norm={adv_norm} -> all_top={all_top} min_ptop={min_ptop:.4} last_entropy={:.4} last_critic_loss={:.1}",
                    last.mean_entropy, last.critic_loss
                );
            }
            Err(e) => println!("g={gamma} alr={actor_lr:>7} clr={critic_lr:>7} e_end={e_end:>6} norm={adv_norm} -> DIVERGED: {e}"),
        }
    }
}
