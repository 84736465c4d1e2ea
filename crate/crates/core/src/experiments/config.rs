//! Experiment settings and the `key = value` config file.
//!
//! ```text
//! # desk-scale run with a longer schedule
//! seed = 3
//! epochs = 500
//! hidden = 32 64 64
//! n_init = 4000
//! ```
//!
//! Unset keys keep their defaults ([`ExperimentConfig::desk`] or
//! [`ExperimentConfig::paper`]). Recognized keys: `seed`, `variant`, `n_v`,
//! `n_p`, `hidden`, `epochs`, `batch_size`, `learning_rate`, `records`,
//! `heldout_records`, `n_init`, `control_batch`, `control_epochs`,
//! `gamma_max`, `c_tau`, `update_threshold`, `update_capacity`,
//! `update_epochs`, `update_rate`, `update_momentum`, `update_observations`.

use std::path::Path;

use super::text::read_file;
use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::model::{SpnpbConfig, Variant};
use crate::trainer::TrainConfig;
use crate::updater::UpdaterConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Embedding width; `None` keeps the scenario world's value.
    pub n_v: Option<usize>,
    /// Records per regime; `None` keeps the scenario's counts.
    pub records: Option<usize>,
    /// Size of each held-out chunk used for nearest-bias classification.
    pub heldout_records: usize,
    /// Observations streamed through the online bias updater.
    pub update_observations: usize,
    pub train: TrainConfig,
    pub control: ControlConfig,
    pub updater: UpdaterConfig,
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        Self {
            seed: 0,
            n_v: None,
            records: None,
            heldout_records: 50,
            update_observations: 200,
            train: TrainConfig::default(),
            control: ControlConfig::desk(),
            updater: UpdaterConfig::default(),
        }
    }

    /// 512-D embedding, hidden widths {100, 300, 500} and 30000 initial
    /// control samples with 100 candidates.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.n_v = Some(512);
        c.train.model = SpnpbConfig::paper();
        c.control = ControlConfig::paper();
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.control.validate()?;
        self.updater.validate()?;
        if self.heldout_records == 0 || self.update_observations == 0 || self.records == Some(0) {
            return Err(Error::InvalidConfig(
                "records, heldout_records and update_observations must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Applies the `key = value` lines of `text` on top of `self`.
    pub fn apply(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = || {
                value
                    .parse::<u64>()
                    .map_err(|e| err(format!("bad integer for {key}: {e}")))
            };
            let count = || int().map(|v| v as usize);
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad number for {key}: {e}")))
            };
            match key {
                "seed" => self.seed = int()?,
                "variant" => {
                    self.train.variant = value.parse::<Variant>().map_err(|e| err(e.to_string()))?
                }
                "n_v" => self.n_v = Some(count()?),
                "n_p" => self.train.model.n_p = count()?,
                "hidden" => {
                    self.train.model.hidden = value
                        .split_whitespace()
                        .map(|t| {
                            t.parse::<usize>()
                                .map_err(|e| err(format!("bad width `{t}`: {e}")))
                        })
                        .collect::<Result<_>>()?
                }
                "epochs" => self.train.epochs = count()?,
                "batch_size" => self.train.batch_size = count()?,
                "learning_rate" => self.train.adam.rate = float()?,
                "records" => self.records = Some(count()?),
                "heldout_records" => self.heldout_records = count()?,
                "n_init" => self.control.n_init = count()?,
                "control_batch" => self.control.batch = count()?,
                "control_epochs" => self.control.epochs = count()?,
                "gamma_max" => self.control.gamma_max = float()?,
                "c_tau" => self.control.c_tau = float()?,
                "update_threshold" => self.updater.threshold = count()?,
                "update_capacity" => self.updater.capacity = count()?,
                "update_epochs" => self.updater.epochs = count()?,
                "update_rate" => self.updater.momentum.rate = float()?,
                "update_momentum" => self.updater.momentum.momentum = float()?,
                "update_observations" => self.update_observations = count()?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        self.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = read_file(path)?;
        self.apply(&text, path)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}
