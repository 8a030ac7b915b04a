//! Run settings shared by every subcommand.
//!
//! Settings come from three places, strongest last: built-in defaults, a
//! `key = value` config file, and command-line flags (merged by the CLI).
//! The cache directory additionally honors `CRPSYNC_CACHE_DIR`, which wins
//! over both the file and the default so scripted runs can be redirected
//! without editing anything.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::ingestion::Channel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    BadLine { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
}

/// Everything the pipeline needs to run, with the defaults used throughout
/// the experiments. One file describes one grid point; grids are scripted
/// by varying `w` and `epsilon` across invocations.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub tickers: Vec<String>,
    pub channels: Vec<Channel>,
    pub w: usize,
    pub epsilon: f64,
    pub k: usize,
    pub tau: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_period: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub pool1: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub pool2: usize,
}

impl Default for Settings {
    fn default() -> Settings {
        Settings {
            data_dir: PathBuf::from("data"),
            cache_dir: PathBuf::from("cache"),
            tickers: Vec::new(),
            channels: vec![Channel::Price, Channel::Volume, Channel::Return],
            w: 10,
            epsilon: 0.45,
            k: 2,
            tau: 1,
            train_frac: 0.7,
            val_frac: 0.15,
            seed: 42,
            epochs: 300,
            batch_size: 128,
            learning_rate: 0.01,
            lr_decay_factor: 5.0,
            lr_decay_period: 40,
            conv1_filters: 16,
            conv1_kernel: 3,
            pool1: 2,
            conv2_filters: 32,
            conv2_kernel: 3,
            pool2: 2,
        }
    }
}

impl Settings {
    /// Defaults overlaid with `path` (when given) and then the
    /// `CRPSYNC_CACHE_DIR` environment variable.
    pub fn load(path: Option<&Path>) -> Result<Settings, ConfigError> {
        let mut s = Settings::default();
        if let Some(path) = path {
            s.merge_file(path)?;
        }
        if let Some(dir) = std::env::var_os("CRPSYNC_CACHE_DIR") {
            s.cache_dir = PathBuf::from(dir);
        }
        Ok(s)
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line,
                text: trimmed.to_string(),
            })?;
            self.set(line, key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                line,
                key: key.to_string(),
                reason: e.to_string(),
            })
        }
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            "tickers" => {
                self.tickers = value
                    .split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .collect();
            }
            "channels" => {
                let mut channels = Vec::new();
                for part in value.split(',') {
                    channels.push(parse::<Channel>(line, key, part.trim())?);
                }
                if channels.is_empty() {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        reason: "no channels listed".into(),
                    });
                }
                self.channels = channels;
            }
            "w" => self.w = parse(line, key, value)?,
            "epsilon" => self.epsilon = parse(line, key, value)?,
            "k" => self.k = parse(line, key, value)?,
            "tau" => self.tau = parse(line, key, value)?,
            "train_frac" => self.train_frac = parse(line, key, value)?,
            "val_frac" => self.val_frac = parse(line, key, value)?,
            "seed" => self.seed = parse(line, key, value)?,
            "epochs" => self.epochs = parse(line, key, value)?,
            "batch_size" => self.batch_size = parse(line, key, value)?,
            "learning_rate" => self.learning_rate = parse(line, key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(line, key, value)?,
            "lr_decay_period" => self.lr_decay_period = parse(line, key, value)?,
            "conv1_filters" => self.conv1_filters = parse(line, key, value)?,
            "conv1_kernel" => self.conv1_kernel = parse(line, key, value)?,
            "pool1" => self.pool1 = parse(line, key, value)?,
            "conv2_filters" => self.conv2_filters = parse(line, key, value)?,
            "conv2_kernel" => self.conv2_kernel = parse(line, key, value)?,
            "pool2" => self.pool2 = parse(line, key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}
