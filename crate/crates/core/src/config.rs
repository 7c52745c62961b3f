//! Run configuration: a flat `key = value` file, overridable from the
//! command line. Unknown keys are errors.
//!
//! ```text
//! # comment
//! dataset = data/ICEWS14
//! interval = 24h
//! model = translate-time
//! strategy = tkgan
//! seed = 7
//! ```
//!
//! [`RunConfig::KEYS`] lists every key; [`RunConfig::render`] writes the
//! effective configuration in the same format.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::Interval;
use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::pipeline::{FitSettings, TrainSettings};
use crate::ttt::TttConfig;

pub const DATA_ROOT_ENV: &str = "TKGR_FORGE_DATA";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub interval: Interval,
    pub train: TrainSettings,
    pub fit: FitSettings,
    pub ttt: TttConfig,
    pub protocol: Protocol,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            interval: Interval::unit_step(),
            train: TrainSettings::default(),
            fit: FitSettings::default(),
            ttt: TttConfig::default(),
            protocol: Protocol::TimeAwareFiltered,
            seed: 0,
            out: PathBuf::from("runs"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_with<T>(key: &str, value: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    f(value).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("`{key}`: {m}")),
        other => other,
    })
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "dataset",
        "interval",
        "model",
        "dim",
        "strategy",
        "epochs",
        "margin",
        "optimizer",
        "lr_generator",
        "lr_discriminator",
        "batch_size",
        "candidates",
        "adversarial_epochs",
        "pretrain_epochs",
        "patience",
        "eval_every",
        "val_queries",
        "selection",
        "reward_samples",
        "bern",
        "window",
        "filter_known",
        "lstm_window",
        "lstm_hidden",
        "lstm_epochs",
        "lstm_lr",
        "lstm_batch",
        "count_mode",
        "history_includes_valid",
        "ttt_lr",
        "ttt_steps",
        "ttt_horizon",
        "ttt_subset",
        "ttt_optimizer",
        "protocol",
        "seed",
        "out",
    ];

    /// Sets one key. Relative dataset paths are resolved against
    /// `$TKGR_FORGE_DATA` when it is set.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let adv = &mut self.train.adversarial;
        match key {
            "dataset" => self.dataset = (!v.is_empty()).then(|| resolve_dataset(Path::new(v))),
            "interval" => self.interval = parse_with(key, v, Interval::from_str)?,
            "model" => self.train.kind = parse_with(key, v, FromStr::from_str)?,
            "dim" => self.train.dim = parse(key, v)?,
            "strategy" => self.train.strategy = parse_with(key, v, FromStr::from_str)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "margin" => adv.margin = parse(key, v)?,
            "optimizer" => adv.optimizer = parse_with(key, v, FromStr::from_str)?,
            "lr_generator" => adv.lr_generator = parse(key, v)?,
            "lr_discriminator" => adv.lr_discriminator = parse(key, v)?,
            "batch_size" => adv.batch_size = parse(key, v)?,
            "candidates" => adv.candidates = parse(key, v)?,
            "adversarial_epochs" => adv.max_epochs = parse(key, v)?,
            "pretrain_epochs" => adv.pretrain_epochs = parse(key, v)?,
            "patience" => adv.patience = parse(key, v)?,
            "eval_every" => adv.eval_every = parse(key, v)?,
            "val_queries" => adv.val_queries = parse(key, v)?,
            "selection" => adv.selection = parse_with(key, v, FromStr::from_str)?,
            "reward_samples" => adv.reward_samples = parse(key, v)?,
            "bern" => self.train.sampler.bern = parse(key, v)?,
            "window" => self.train.sampler.window = parse(key, v)?,
            "filter_known" => self.train.sampler.filter_known = parse(key, v)?,
            "lstm_window" => self.fit.lstm.window = parse(key, v)?,
            "lstm_hidden" => self.fit.lstm.hidden = parse(key, v)?,
            "lstm_epochs" => self.fit.lstm.epochs = parse(key, v)?,
            "lstm_lr" => self.fit.lstm.lr = parse(key, v)?,
            "lstm_batch" => self.fit.lstm.batch_size = parse(key, v)?,
            "count_mode" => self.fit.mode = parse_with(key, v, FromStr::from_str)?,
            "history_includes_valid" => self.fit.include_valid = parse(key, v)?,
            "ttt_lr" => self.ttt.lr = parse(key, v)?,
            "ttt_steps" => self.ttt.steps = parse(key, v)?,
            "ttt_horizon" => {
                self.ttt.horizon = match v {
                    "all" => None,
                    n => Some(parse(key, n)?),
                }
            }
            "ttt_subset" => self.ttt.subset = parse_with(key, v, FromStr::from_str)?,
            "ttt_optimizer" => self.ttt.optimizer = parse_with(key, v, FromStr::from_str)?,
            "protocol" => self.protocol = parse_with(key, v, FromStr::from_str)?,
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_str(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_str(&text, path).map_err(|e| match e {
            Error::Parse { path, line, message } => Error::Config(format!("{}:{line}: {message}", path.display())),
            other => other,
        })?;
        Ok(cfg)
    }

    /// The effective configuration, one key per line, every key present.
    pub fn render(&self) -> String {
        let adv = &self.train.adversarial;
        let s = &self.train.sampler;
        let l = &self.fit.lstm;
        let dataset = self.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let horizon = self.ttt.horizon.map(|h| h.to_string()).unwrap_or_else(|| "all".into());
        let pairs: Vec<(&str, String)> = vec![
            ("dataset", dataset),
            ("interval", self.interval.to_string()),
            ("model", self.train.kind.to_string()),
            ("dim", self.train.dim.to_string()),
            ("strategy", self.train.strategy.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("margin", adv.margin.to_string()),
            ("optimizer", adv.optimizer.to_string()),
            ("lr_generator", adv.lr_generator.to_string()),
            ("lr_discriminator", adv.lr_discriminator.to_string()),
            ("batch_size", adv.batch_size.to_string()),
            ("candidates", adv.candidates.to_string()),
            ("adversarial_epochs", adv.max_epochs.to_string()),
            ("pretrain_epochs", adv.pretrain_epochs.to_string()),
            ("patience", adv.patience.to_string()),
            ("eval_every", adv.eval_every.to_string()),
            ("val_queries", adv.val_queries.to_string()),
            ("selection", adv.selection.to_string()),
            ("reward_samples", adv.reward_samples.to_string()),
            ("bern", s.bern.to_string()),
            ("window", s.window.to_string()),
            ("filter_known", s.filter_known.to_string()),
            ("lstm_window", l.window.to_string()),
            ("lstm_hidden", l.hidden.to_string()),
            ("lstm_epochs", l.epochs.to_string()),
            ("lstm_lr", l.lr.to_string()),
            ("lstm_batch", l.batch_size.to_string()),
            ("count_mode", self.fit.mode.to_string()),
            ("history_includes_valid", self.fit.include_valid.to_string()),
            ("ttt_lr", self.ttt.lr.to_string()),
            ("ttt_steps", self.ttt.steps.to_string()),
            ("ttt_horizon", horizon),
            ("ttt_subset", self.ttt.subset.to_string()),
            ("ttt_optimizer", self.ttt.optimizer.to_string()),
            ("protocol", self.protocol.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
        ];
        debug_assert_eq!(pairs.len(), Self::KEYS.len());
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Range checks; `need_dataset` also requires an existing dataset path.
    pub fn validate(&self, need_dataset: bool) -> Result<()> {
        self.train.adversarial.validate()?;
        self.ttt.validate()?;
        if self.train.dim == 0 {
            return Err(Error::Config("`dim` must be positive".into()));
        }
        let l = &self.fit.lstm;
        if l.window == 0 || l.hidden == 0 || l.batch_size == 0 || !(l.lr > 0.0) {
            return Err(Error::Config("LSTM window, hidden size, batch and learning rate must be positive".into()));
        }
        if need_dataset {
            match &self.dataset {
                None => {
                    return Err(Error::Config(format!(
                        "no dataset given (set `dataset` or {DATA_ROOT_ENV})"
                    )))
                }
                Some(p) if !p.exists() => {
                    return Err(Error::Config(format!("dataset path {} does not exist", p.display())))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Relative paths that do not exist as given are looked up under
/// `$TKGR_FORGE_DATA`.
pub fn resolve_dataset(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            return Path::new(&root).join(path);
        }
    }
    path.to_path_buf()
}
