//! Flat `section.key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Every key a configuration file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "objective.kind",
    "objective.table_level",
    "objective.curvature",
    "kernel.family",
    "kernel.lengthscale",
    "kernel.output_scale",
    "domain.dim",
    "domain.lower",
    "domain.upper",
    "search.alpha",
    "search.budget",
    "search.max_level",
    "search.half_radius",
    "search.jitter",
    "search.beta_scale",
    "search.seed",
    "search.seeds",
    "search.strategy",
    "compare.strategies",
    "verify.levels",
    "output.dir",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Blank lines and lines starting with `#` are skipped; later keys win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", n + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", n + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key} = {v}: {e}"))))
            .transpose()
    }
}
