//! Merged run configuration: defaults, then an optional JSON config file,
//! then command-line flag overrides, in that order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use abr_core::baseline::BaselineConfig;
use abr_core::qoe::QoEConfig;
use abr_core::sensor::QuantizerConfig;
use abr_core::trace::{SynthParams, VideoSpec};
use abr_learner::agent::TrainConfig;
use abr_learner::nn::NetworkConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub video: VideoSpec,
    pub quantizer: QuantizerConfig,
    pub qoe: QoEConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    pub synth: SynthParams,
    /// Default corpus location for commands that read traces.
    pub corpus: Option<PathBuf>,
    /// Train-side share of the corpus split used by `train`.
    pub train_fraction: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            video: VideoSpec::default(),
            quantizer: QuantizerConfig::default(),
            qoe: QoEConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            baseline: BaselineConfig::default(),
            synth: SynthParams::default(),
            corpus: None,
            train_fraction: 0.8,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(
        config_path: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
        workers: Option<usize>,
    ) -> Result<Self, CliError> {
        let mut cfg = match config_path {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str::<RunConfig>(&text).map_err(|e| {
                    CliError::Config(format!("cannot parse config {}: {e}", path.display()))
                })?
            }
            None => RunConfig::default(),
        };
        if cfg.out_dir.as_os_str().is_empty() {
            cfg.out_dir = PathBuf::from("out");
        }
        if let Some(seed) = seed {
            cfg.train.seed = seed;
            cfg.network.seed = seed;
        }
        if let Some(out) = out {
            cfg.out_dir = out.to_path_buf();
        }
        if let Some(workers) = workers {
            cfg.train.workers = workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |what: &str, r: Result<(), abr_core::Error>| {
            r.map_err(|e| CliError::Config(format!("{what}: {e}")))
        };
        field("video", self.video.validate())?;
        field("quantizer", self.quantizer.validate())?;
        field("qoe", self.qoe.validate())?;
        field("synth", self.synth.validate())?;
        field("baseline", self.baseline.validate())?;
        self.network.validate().map_err(|e| CliError::Config(format!("network: {e}")))?;
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        if self.network.num_actions != self.video.ladder_kbps.len() {
            return Err(CliError::Config(format!(
                "network.num_actions ({}) must equal the ladder length ({})",
                self.network.num_actions,
                self.video.ladder_kbps.len()
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "train_fraction {} must be in (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn corpus_path(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.corpus.clone())
            .ok_or_else(|| CliError::Config("no corpus given (use --corpus or the config file)".into()))
    }
}

/// Checkpoint sidecar: the configs needed to rebuild the networks and the
/// observation pipeline around saved parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl Sidecar {
    pub fn path_for(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("json")
    }

    pub fn save(&self, checkpoint: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("plain config serializes");
        crate::report::atomic_write(&Self::path_for(checkpoint), text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("write sidecar: {e}")))
    }

    pub fn load(checkpoint: &Path) -> Result<Self, CliError> {
        let path = Self::path_for(checkpoint);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read sidecar {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse sidecar {}: {e}", path.display())))
    }
}
