//! The five harness commands: synth, derive-thresholds, train, eval, compare.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use abr_core::baseline::{BaselineKind, BaselinePolicy};
use abr_core::qoe::{episode_summary, score_episode, EpisodeSummary, QoEBreakdown};
use abr_core::seed;
use abr_core::sensor::{derive_thresholds, SensorKind};
use abr_core::sim::{run_episode, EpisodeLog};
use abr_core::trace::{load_corpus, synthesize, Trace, TraceCorpus};
use abr_learner::agent::{evaluate, make_env, train, training_log_csv, TrainEvent};
use abr_learner::nn::{load_checkpoint, save_checkpoint, validate_shapes, NetworkRole, ParameterSet};

use crate::config::{RunConfig, Sidecar};
use crate::report::{atomic_write, cdf_csv, paired_bootstrap_ci};
use crate::CliError;

/// Seed streams for the harness-level RNG draws.
const STREAM_SYNTH: u64 = 0x51;
const STREAM_OFFSETS: u64 = 0x0F;
const STREAM_BOOTSTRAP: u64 = 0xB0;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_out(path: &Path, text: &str) -> Result<(), CliError> {
    atomic_write(path, text.as_bytes()).map_err(runtime)
}

pub fn cmd_synth(cfg: &RunConfig, count: usize, duration: Option<f64>) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Config("synth: count must be positive".into()));
    }
    let mut params = cfg.synth.clone();
    if let Some(d) = duration {
        params.duration_s = d;
    }
    params.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;

    let dir = cfg.out_dir.join("traces");
    std::fs::create_dir_all(&dir).map_err(runtime)?;
    let width = count.to_string().len().max(4);
    for i in 0..count {
        let generated = synthesize(&params, seed::derive(cfg.train.seed, STREAM_SYNTH, i as u64))
            .map_err(runtime)?;
        let trace = Trace::new(
            format!("trace-{i:0width$}"),
            generated.samples().to_vec(),
            generated.duration_s(),
        )
        .map_err(runtime)?;
        atomic_write(&dir.join(format!("{}.csv", trace.id())), trace.to_csv().as_bytes())
            .map_err(runtime)?;
    }

    let manifest = json!({
        "count": count,
        "seed": cfg.train.seed,
        "params": params,
    });
    write_out(
        &cfg.out_dir.join("manifest.json"),
        &format!("{}\n", serde_json::to_string_pretty(&manifest).expect("plain manifest")),
    )?;
    println!("wrote {count} traces to {}", dir.display());
    Ok(())
}

pub fn cmd_derive_thresholds(
    cfg: &RunConfig,
    corpus_flag: Option<&Path>,
    sensor: &str,
) -> Result<(), CliError> {
    let kind = SensorKind::parse(sensor).map_err(|e| CliError::Config(e.to_string()))?;
    let corpus = load_corpus(cfg.corpus_path(corpus_flag)?).map_err(runtime)?;
    let pairs: Vec<(f64, f64)> = corpus
        .traces
        .iter()
        .flat_map(|t| t.samples().iter().map(|s| (kind.value(s), s.throughput_mbps)))
        .collect();
    let thresholds = derive_thresholds(&pairs, &cfg.quantizer).map_err(runtime)?;

    let payload = json!({ "sensor": kind.name(), "thresholds": thresholds });
    let text = format!("{}\n", serde_json::to_string_pretty(&payload).expect("plain payload"));
    write_out(&cfg.out_dir.join(format!("thresholds-{}.json", kind.name())), &text)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, corpus_flag: Option<&Path>) -> Result<(), CliError> {
    let mut corpus = load_corpus(cfg.corpus_path(corpus_flag)?).map_err(runtime)?;
    corpus.split_seed = cfg.train.seed;
    corpus.train_fraction = cfg.train_fraction;
    let (train_set, val_set) = corpus.split().map_err(runtime)?;
    println!(
        "training on {} traces, validating on {} ({} episodes, {} workers)",
        train_set.len(),
        val_set.len(),
        cfg.train.episodes,
        cfg.train.workers
    );

    let checkpoint_path = cfg.out_dir.join("model.ckpt");
    std::fs::create_dir_all(&cfg.out_dir).map_err(runtime)?;
    let sidecar = Sidecar { network: cfg.network.clone(), train: cfg.train.clone() };

    let mut validation_rows = Vec::new();
    let out = train(
        &train_set,
        &val_set,
        &cfg.video,
        &cfg.qoe,
        &cfg.quantizer,
        &cfg.network,
        &cfg.train,
        |event| {
            if let TrainEvent::Validation { row, actor, critic } = event {
                println!(
                    "episodes {:>6}: validation mean QoE {:+.4}",
                    row.episodes_seen, row.mean_qoe
                );
                // Periodic checkpoint; atomic, so an interrupted run keeps
                // the last complete one.
                let _ = save_checkpoint(&checkpoint_path, &[("actor", actor), ("critic", critic)]);
                let _ = sidecar.save(&checkpoint_path);
                validation_rows.push((row.episodes_seen, row.mean_qoe));
            }
        },
    )
    .map_err(runtime)?;

    save_checkpoint(&checkpoint_path, &[("actor", &out.actor), ("critic", &out.critic)])
        .map_err(runtime)?;
    sidecar.save(&checkpoint_path)?;
    write_out(&cfg.out_dir.join("training_log.csv"), &training_log_csv(&out.log))?;

    let mut val_csv = String::from("episodes_seen,mean_qoe\n");
    for (eps, qoe) in &validation_rows {
        val_csv.push_str(&format!("{eps},{qoe:.6}\n"));
    }
    write_out(&cfg.out_dir.join("validation_log.csv"), &val_csv)?;

    println!("checkpoint: {}", checkpoint_path.display());
    Ok(())
}

/// Loads an actor parameter set plus its sidecar configs.
pub fn load_agent(checkpoint: &Path) -> Result<(ParameterSet, Sidecar), CliError> {
    let sidecar = Sidecar::load(checkpoint)?;
    let sets = load_checkpoint(checkpoint).map_err(|e| CliError::Config(e.to_string()))?;
    let actor = sets
        .into_iter()
        .find(|(name, _)| name == "actor")
        .map(|(_, set)| set)
        .ok_or_else(|| CliError::Config("checkpoint has no actor parameter set".into()))?;
    validate_shapes(&actor, &sidecar.network, NetworkRole::Actor)
        .map_err(|e| CliError::Config(format!("checkpoint does not match its network config: {e}")))?;
    Ok((actor, sidecar))
}

/// Fixed per-trace episode offsets so every policy sees identical episodes.
fn episode_offsets<'a>(corpus: &'a TraceCorpus, seed_base: u64) -> Vec<(&'a Trace, f64)> {
    corpus
        .traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_base, STREAM_OFFSETS, i as u64));
            (t, rng.random_range(0.0..t.duration_s()))
        })
        .collect()
}

pub fn cmd_eval(cfg: &RunConfig, corpus_flag: Option<&Path>, checkpoint: &Path) -> Result<(), CliError> {
    let (actor, sidecar) = load_agent(checkpoint)?;
    if sidecar.network.num_actions != cfg.video.ladder_kbps.len() {
        return Err(CliError::Config(format!(
            "checkpoint expects {} actions but the ladder has {} rungs",
            sidecar.network.num_actions,
            cfg.video.ladder_kbps.len()
        )));
    }
    let corpus = load_corpus(cfg.corpus_path(corpus_flag)?).map_err(runtime)?;
    let episodes = episode_offsets(&corpus, cfg.train.seed);

    let env = make_env(
        &cfg.video,
        &cfg.qoe,
        &cfg.quantizer,
        &sidecar.network,
        sidecar.train.sensor_mode,
        None,
    );
    let eval = evaluate(&episodes, &actor, &sidecar.network, &env).map_err(runtime)?;

    let episode_dir = cfg.out_dir.join("episodes");
    for log in &eval.logs {
        write_out(&episode_dir.join(format!("{}.jsonl", log.trace_id)), &log.to_jsonl())?;
    }
    let results = vec![("agent".to_string(), eval.logs, eval.summaries)];
    write_reports(cfg, &results)?;
    println!("mean QoE per chunk: {:+.4} over {} episodes", eval.mean_qoe, episodes.len());
    Ok(())
}

/// A named policy under comparison.
enum PolicySpec {
    Baseline(BaselineKind),
    Agent { name: String, checkpoint: PathBuf },
}

fn parse_policies(list: &str) -> Result<Vec<PolicySpec>, CliError> {
    let mut out = Vec::new();
    for raw in list.split(',') {
        let token = raw.trim();
        let spec = match token {
            "" => continue,
            "buffer" => PolicySpec::Baseline(BaselineKind::BufferBased),
            "rate" => PolicySpec::Baseline(BaselineKind::RateBased),
            "mpc" => PolicySpec::Baseline(BaselineKind::Mpc),
            _ => {
                if let Some(level) = token.strip_prefix("fixed:") {
                    let level: usize = level.parse().map_err(|_| {
                        CliError::Config(format!("bad fixed policy `{token}`; want fixed:<level>"))
                    })?;
                    PolicySpec::Baseline(BaselineKind::Fixed(level))
                } else if let Some(path) = token.strip_prefix("agent:") {
                    let checkpoint = PathBuf::from(path);
                    let name = checkpoint
                        .file_stem()
                        .map(|s| format!("agent-{}", s.to_string_lossy()))
                        .unwrap_or_else(|| "agent".into());
                    PolicySpec::Agent { name, checkpoint }
                } else {
                    return Err(CliError::Config(format!(
                        "unknown policy `{token}`; valid: fixed:<level>, buffer, rate, mpc, agent:<checkpoint>"
                    )));
                }
            }
        };
        out.push(spec);
    }
    if out.is_empty() {
        return Err(CliError::Config("no policies given".into()));
    }
    Ok(out)
}

type PolicyResults = (String, Vec<EpisodeLog>, Vec<EpisodeSummary>);

pub fn cmd_compare(cfg: &RunConfig, corpus_flag: Option<&Path>, policies: &str) -> Result<(), CliError> {
    let specs = parse_policies(policies)?;
    for spec in &specs {
        if let PolicySpec::Baseline(BaselineKind::Fixed(level)) = spec {
            if *level >= cfg.video.ladder_kbps.len() {
                return Err(CliError::Config(format!(
                    "fixed:{level} is off the {}-rung ladder",
                    cfg.video.ladder_kbps.len()
                )));
            }
        }
    }
    let corpus = load_corpus(cfg.corpus_path(corpus_flag)?).map_err(runtime)?;
    let episodes = episode_offsets(&corpus, cfg.train.seed);

    let mut results: Vec<PolicyResults> = Vec::new();
    for spec in &specs {
        let (name, logs) = match spec {
            PolicySpec::Baseline(kind) => {
                let policy = BaselinePolicy::new(*kind, cfg.baseline.clone(), cfg.qoe.clone());
                let mut logs = Vec::with_capacity(episodes.len());
                for &(trace, t0) in &episodes {
                    let mut log =
                        run_episode(trace, &cfg.video, |obs| policy.decide(obs), t0).map_err(runtime)?;
                    score_episode(&mut log, &cfg.qoe).map_err(runtime)?;
                    logs.push(log);
                }
                (kind.name(), logs)
            }
            PolicySpec::Agent { name, checkpoint } => {
                let (actor, sidecar) = load_agent(checkpoint)?;
                if sidecar.network.num_actions != cfg.video.ladder_kbps.len() {
                    return Err(CliError::Config(format!(
                        "{name}: checkpoint expects {} actions but the ladder has {} rungs",
                        sidecar.network.num_actions,
                        cfg.video.ladder_kbps.len()
                    )));
                }
                let env = make_env(
                    &cfg.video,
                    &cfg.qoe,
                    &cfg.quantizer,
                    &sidecar.network,
                    sidecar.train.sensor_mode,
                    None,
                );
                let eval = evaluate(&episodes, &actor, &sidecar.network, &env).map_err(runtime)?;
                (name.clone(), eval.logs)
            }
        };
        let summaries: Vec<EpisodeSummary> = logs
            .iter()
            .map(|log| episode_summary(log, &cfg.qoe))
            .collect::<Result<_, _>>()
            .map_err(runtime)?;
        results.push((name, logs, summaries));
    }

    write_reports(cfg, &results)?;
    write_pairwise(cfg, &results)?;

    for (name, _, summaries) in &results {
        let mean = mean_breakdown(summaries);
        println!("{name:<16} mean QoE {:+.4}", mean.total);
    }
    println!("reports in {}", cfg.out_dir.display());
    Ok(())
}

fn mean_breakdown(summaries: &[EpisodeSummary]) -> QoEBreakdown {
    let n = summaries.len() as f64;
    let mut mean = QoEBreakdown { utility: 0.0, rebuffer_penalty: 0.0, smoothness_penalty: 0.0, violation: 0.0, total: 0.0 };
    for s in summaries {
        mean.utility += s.mean.utility / n;
        mean.rebuffer_penalty += s.mean.rebuffer_penalty / n;
        mean.smoothness_penalty += s.mean.smoothness_penalty / n;
        mean.violation += s.mean.violation / n;
        mean.total += s.mean.total / n;
    }
    mean
}

/// Summary, CDF, and time-series reports shared by eval and compare.
fn write_reports(cfg: &RunConfig, results: &[PolicyResults]) -> Result<(), CliError> {
    let mut summary = String::from("policy,mean_qoe,mean_utility,mean_rebuf_pen,mean_smooth_pen,mean_violation\n");
    for (name, _, summaries) in results {
        let m = mean_breakdown(summaries);
        summary.push_str(&format!(
            "{name},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            m.total, m.utility, m.rebuffer_penalty, m.smoothness_penalty, m.violation
        ));
    }
    write_out(&cfg.out_dir.join("summary.csv"), &summary)?;

    // Per-policy, per-component CDFs over per-episode means.
    for (name, _, summaries) in results {
        let components: [(&str, Box<dyn Fn(&EpisodeSummary) -> f64>); 4] = [
            ("qoe", Box::new(|s: &EpisodeSummary| s.mean.total)),
            ("utility", Box::new(|s: &EpisodeSummary| s.mean.utility)),
            ("rebuffer", Box::new(|s: &EpisodeSummary| s.mean.rebuffer_penalty)),
            ("smoothness", Box::new(|s: &EpisodeSummary| s.mean.smoothness_penalty)),
        ];
        for (component, extract) in components {
            let values: Vec<f64> = summaries.iter().map(&extract).collect();
            write_out(&cfg.out_dir.join(format!("cdf-{name}-{component}.csv")), &cdf_csv(&values))?;
        }
    }

    // Bitrate and buffer trajectories for every policy on every episode.
    let mut ts = String::from("policy,trace,start_offset_s,chunk,level,bitrate_kbps,buffer_s,rebuf_s,thru_mbps\n");
    for (name, logs, _) in results {
        for log in logs {
            for c in &log.chunks {
                ts.push_str(&format!(
                    "{name},{},{:.3},{},{},{},{:.4},{:.2},{:.4}\n",
                    log.trace_id, log.start_offset_s, c.chunk, c.level, c.bitrate_kbps, c.buffer_s, c.rebuffer_s, c.throughput_mbps
                ));
            }
        }
    }
    write_out(&cfg.out_dir.join("timeseries.csv"), &ts)?;
    Ok(())
}

/// Pairwise mean-QoE differences with paired-bootstrap 95% intervals.
fn write_pairwise(cfg: &RunConfig, results: &[PolicyResults]) -> Result<(), CliError> {
    let per_episode: BTreeMap<&str, Vec<f64>> = results
        .iter()
        .map(|(name, _, summaries)| (name.as_str(), summaries.iter().map(|s| s.mean.total).collect()))
        .collect();

    let mut csv = String::from("policy_a,policy_b,mean_a,mean_b,mean_diff,rel_diff_pct,ci95_lo,ci95_hi\n");
    for (i, (name_a, _, _)) in results.iter().enumerate() {
        for (name_b, _, _) in results.iter().skip(i + 1) {
            let a = &per_episode[name_a.as_str()];
            let b = &per_episode[name_b.as_str()];
            let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let mean_a = a.iter().sum::<f64>() / a.len() as f64;
            let mean_b = b.iter().sum::<f64>() / b.len() as f64;
            let mean_diff = mean_a - mean_b;
            let rel = if mean_b.abs() > 1e-12 { 100.0 * mean_diff / mean_b.abs() } else { f64::NAN };
            let (lo, hi) = paired_bootstrap_ci(&diffs, 1000, seed::derive(cfg.train.seed, STREAM_BOOTSTRAP, 0));
            csv.push_str(&format!(
                "{name_a},{name_b},{mean_a:.6},{mean_b:.6},{mean_diff:.6},{rel:.2},{lo:.6},{hi:.6}\n"
            ));
        }
    }
    write_out(&cfg.out_dir.join("pairwise.csv"), &csv)
}
