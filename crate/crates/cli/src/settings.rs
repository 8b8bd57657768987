//! Layered run configuration: command-line flags over a key-value file over
//! presets over built-in defaults. Every resolved key is recorded so the
//! effective configuration can be echoed into output headers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// `key = value` lines; `#` starts a comment. Keys are normalized so that
/// `step_alpha` and `step-alpha` are the same key.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| anyhow!("config line {}: expected 'key = value'", i + 1))?;
        let key = normalize(k);
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    preset: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Settings::from_map(file))
    }

    pub fn from_map(file: BTreeMap<String, String>) -> Self {
        Settings {
            file,
            ..Settings::default()
        }
    }

    /// Installs preset values that sit between the file and the defaults.
    pub fn apply_preset(&mut self, values: &[(&str, &str)]) {
        for (k, v) in values {
            self.preset.insert(normalize(k), v.to_string());
        }
    }

    /// Resolves a key without recording it in the effective configuration.
    pub fn peek<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        let raw = self.file.get(key).or_else(|| self.preset.get(key));
        raw.map(|s| s.parse::<T>().map_err(|e| anyhow!("invalid value {s:?} for '{key}': {e}")))
            .transpose()
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let v = self.peek(key, flag)?.unwrap_or(default);
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let v = self.peek(key, flag)?;
        if let Some(x) = &v {
            self.effective.insert(key.to_string(), x.to_string());
        }
        Ok(v)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.get_opt(key, flag)?
            .ok_or_else(|| anyhow!("missing required setting '{key}' (flag --{key} or config key)"))
    }

    /// Boolean switch: a set flag wins, otherwise the file, otherwise `default`.
    pub fn switch(&mut self, key: &str, flag: bool, default: bool) -> Result<bool> {
        self.get(key, flag.then_some(true), default)
    }

    pub fn effective(&self) -> &BTreeMap<String, String> {
        &self.effective
    }

    /// File keys that no setting asked for.
    pub fn unused_keys(&self) -> Vec<&str> {
        self.file
            .keys()
            .filter(|k| !self.effective.contains_key(*k))
            .map(String::as_str)
            .collect()
    }
}

/// Two comma-separated numbers, e.g. prior hyperparameters `1,0.25`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair(pub f64, pub f64);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(format!("expected two comma-separated numbers, got {s:?}"));
        }
        let a = parts[0].parse::<f64>().map_err(|e| e.to_string())?;
        let b = parts[1].parse::<f64>().map_err(|e| e.to_string())?;
        Ok(Pair(a, b))
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}
