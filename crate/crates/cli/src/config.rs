//! Settings are a flat key-value file overlaid with command-line flags.
//! A flag `--min-rate 0.4` sets key `min_rate`; flags always win.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use vlogvis_core::kv::KvConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct Settings {
    kv: KvConfig,
}

impl Settings {
    pub fn from_kv(kv: KvConfig) -> Self {
        Self { kv }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let kv = KvConfig::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { kv })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.kv.set(key.replace('-', "_"), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.kv.get(key).filter(|v| !v.is_empty())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| CliError::Config(format!("missing required setting {key:?}")))
    }

    /// A path that must already exist.
    pub fn input(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.require(key)?);
        check_exists(key, &p)?;
        Ok(p)
    }

    pub fn opt_input(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                let p = PathBuf::from(v);
                check_exists(key, &p)?;
                Ok(Some(p))
            }
        }
    }

    pub fn output(&self, key: &str) -> Result<PathBuf> {
        self.require(key).map(PathBuf::from)
    }

    pub fn opt_output(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn value<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("setting {key:?}: cannot parse {v:?}"))),
        }
    }

    /// A number that must lie in `range`.
    pub fn bounded(&self, key: &str, default: f64, lo: f64, hi: f64) -> Result<f64> {
        let v: f64 = self.value(key, default)?;
        if !(lo..=hi).contains(&v) {
            return Err(CliError::Config(format!("setting {key:?} = {v} outside [{lo}, {hi}]")));
        }
        Ok(v)
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
    }

    /// Comma-separated values parsed as `T`.
    pub fn values<T: FromStr>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: Clone,
    {
        match self.list(key) {
            None => Ok(default.to_vec()),
            Some(items) => items
                .iter()
                .map(|s| {
                    s.parse().map_err(|_| {
                        CliError::Config(format!("setting {key:?}: cannot parse {s:?}"))
                    })
                })
                .collect(),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        self.value(key, false)
    }
}

fn check_exists(key: &str, p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key}: {} does not exist", p.display())))
    }
}
