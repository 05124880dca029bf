//! Flag / config-file / default resolution.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Keys accepted in a config file; each mirrors a long flag name.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out-dir",
    "denoiser",
    "window-start",
    "window-end",
    "grad-step",
    "grad-iters",
    "inject-mode",
    "target-agent",
    "delta",
    "w-joint",
    "w-vel",
    "adapter-steps",
    "adapter-grad-step",
    "adapter-grad-iters",
    "vel-loss-form",
    "no-adapter",
    "no-controller",
    "sampler",
    "ddim-steps",
    "kind",
    "kinds",
    "frames",
    "fps",
    "per-kind",
    "epochs",
    "lr",
    "batch",
    "hidden",
    "layers",
    "shape",
    "scale",
    "seeds",
    "scenarios",
    "windows",
];

/// Flat `key = value` settings read from a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                field: format!("config line {}", n + 1),
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim().trim_start_matches("--").to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Unknown {
                    kind: "config key",
                    name: key,
                });
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| Error::Parse {
                field: format!("config `{key}`"),
                reason: e.to_string(),
            }),
        }
    }

    /// Flag value if given, else config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.parsed(key)
    }

    /// Switch flags: set on the command line, or `true` in the config.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.parsed::<bool>(key)?.unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_config_default() {
        let c = ConfigFile::parse("# comment\nseed = 5\n--w-vel=0.3  # trailing\n\nno-adapter = true\n").unwrap();
        assert_eq!(c.pick(Some(9u64), "seed", 0).unwrap(), 9);
        assert_eq!(c.pick(None, "seed", 0u64).unwrap(), 5);
        assert_eq!(c.pick(None, "delta", 0.1f64).unwrap(), 0.1);
        assert_eq!(c.pick(None, "w-vel", 0.1f64).unwrap(), 0.3);
        assert!(c.switch(false, "no-adapter").unwrap());
        assert!(!c.switch(false, "no-controller").unwrap());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::parse("sed = 5").is_err());
        assert!(ConfigFile::parse("seed 5").is_err());
        let c = ConfigFile::parse("seed = five").unwrap();
        let err = c.pick(None, "seed", 0u64).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }
}
