use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::snn::Topology;
use crate::trainer::{NudgeRates, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Directory holding the IDX files (plain or gzipped).
    pub dir: PathBuf,
    /// Use only this many training images.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_n: Option<usize>,
    /// When set, subsets are drawn by a seeded shuffle instead of taking the
    /// first images.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset_seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/mnist"),
            train_n: None,
            test_n: None,
            subset_seed: None,
        }
    }
}

/// Everything a training run needs, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    pub layers: Vec<usize>,
    pub data: DataConfig,
    pub out_dir: PathBuf,
    /// Number of images at the start of the first epoch whose spike and
    /// first-block update logs are written out (0 disables recording).
    pub record_images: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerConfig::new(HyperParams::default()),
            layers: vec![784, 100, 10],
            data: DataConfig::default(),
            out_dir: PathBuf::from("runs/default"),
            record_images: 0,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawFile {
    hyper: toml::Table,
    trainer: RawTrainer,
    network: RawNetwork,
    data: Option<DataConfig>,
    run: RawRun,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawTrainer {
    target_rate_hi: Option<f64>,
    target_rate_lo: Option<f64>,
    skip_threshold: Option<f64>,
    skip_nudge: Option<bool>,
    nudge_rates: Option<NudgeRates>,
    init_gain: Option<f64>,
    lr_decay: Option<f64>,
    epochs: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawNetwork {
    layers: Option<Vec<usize>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    record_images: Option<usize>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    hyper: &'a HyperParams,
    trainer: RawTrainer,
    network: RawNetwork,
    data: &'a DataConfig,
    run: RawRun,
}

impl RunConfig {
    /// Parses a TOML config. Missing keys take their defaults; unknown keys
    /// are rejected. `[hyper]` accepts `learning_rate` as an alternative to
    /// `eta_r`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        let mut table = raw.hyper;
        let lr = match table.remove("learning_rate") {
            None => None,
            Some(v) => Some(
                v.as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| Error::Config("hyper.learning_rate must be a number".into()))?,
            ),
        };
        if lr.is_some() && table.contains_key("eta_r") {
            return Err(Error::Config("set either hyper.learning_rate or hyper.eta_r, not both".into()));
        }
        let explicit_eta = table.contains_key("eta_r");
        let mut hyper: HyperParams = table.try_into().map_err(|e: toml::de::Error| Error::Parse(format!("config: {e}")))?;
        if !explicit_eta {
            // the pinned learning rate survives changes to tau or gamma_li
            hyper = hyper.with_learning_rate(lr.unwrap_or(crate::params::DEFAULT_LEARNING_RATE));
        }

        let mut trainer = TrainerConfig::new(hyper);
        let t = raw.trainer;
        trainer.target_rate_hi = t.target_rate_hi.unwrap_or(trainer.target_rate_hi);
        trainer.target_rate_lo = t.target_rate_lo.unwrap_or(trainer.target_rate_lo);
        trainer.skip_threshold = t.skip_threshold.unwrap_or(trainer.skip_threshold);
        trainer.skip_nudge = t.skip_nudge.unwrap_or(trainer.skip_nudge);
        trainer.nudge_rates = t.nudge_rates.unwrap_or(trainer.nudge_rates);
        trainer.init_gain = t.init_gain.unwrap_or(trainer.init_gain);
        trainer.lr_decay = t.lr_decay.unwrap_or(trainer.lr_decay);
        trainer.epochs = t.epochs.unwrap_or(trainer.epochs);
        trainer.seed = raw.run.seed.unwrap_or(trainer.seed);

        let defaults = RunConfig::default();
        let cfg = RunConfig {
            trainer,
            layers: raw.network.layers.unwrap_or(defaults.layers),
            data: raw.data.unwrap_or(defaults.data),
            out_dir: raw.run.out_dir.unwrap_or(defaults.out_dir),
            record_images: raw.run.record_images.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.topology().map(|_| ())
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(self.layers.clone())
    }

    /// Fully resolved config as TOML; parsing it back gives the same config.
    pub fn to_toml(&self) -> String {
        let t = &self.trainer;
        let resolved = Resolved {
            hyper: &t.hyper,
            trainer: RawTrainer {
                target_rate_hi: Some(t.target_rate_hi),
                target_rate_lo: Some(t.target_rate_lo),
                skip_threshold: Some(t.skip_threshold),
                skip_nudge: Some(t.skip_nudge),
                nudge_rates: Some(t.nudge_rates),
                init_gain: Some(t.init_gain),
                lr_decay: Some(t.lr_decay),
                epochs: Some(t.epochs),
            },
            network: RawNetwork {
                layers: Some(self.layers.clone()),
            },
            data: &self.data,
            run: RawRun {
                seed: Some(t.seed),
                out_dir: Some(self.out_dir.clone()),
                record_images: Some(self.record_images),
            },
        };
        toml::to_string(&resolved).expect("config structs always serialise")
    }
}
