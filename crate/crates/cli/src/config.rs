//! Flat `key = value` configuration with `#` comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn split_pair(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).ok_or_else(|| ConfigError(format!("line {}: expected key = value", no + 1)))?;
            if entries.insert(k.clone(), v).is_some() {
                return Err(ConfigError(format!("line {}: duplicate key '{k}'", no + 1)));
            }
        }
        Ok(Config { entries })
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = split_pair(pair).ok_or_else(|| ConfigError(format!("override '{pair}' is not key=value")))?;
        self.entries.insert(k, v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }
}

/// Typed access to a [`Config`] that collects every problem instead of
/// stopping at the first, and remembers which keys were consulted.
pub struct Reader<'a> {
    cfg: &'a Config,
    known: BTreeSet<&'static str>,
    resolved: BTreeMap<String, String>,
    pub errors: Vec<String>,
}

impl<'a> Reader<'a> {
    pub fn new(cfg: &'a Config) -> Self {
        let mut known = BTreeSet::new();
        known.insert("experiment");
        known.insert("out");
        Reader {
            cfg,
            known,
            resolved: BTreeMap::new(),
            errors: Vec::new(),
        }
    }

    fn value<T: FromStr + ToString>(&mut self, key: &'static str, default: Option<T>) -> Option<T> {
        self.known.insert(key);
        let out = match self.cfg.get(key) {
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.errors.push(format!("{key}: cannot parse '{raw}'"));
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.errors.push(format!("{key}: required key missing"));
                }
                default
            }
        };
        if let Some(v) = &out {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        out
    }

    pub fn f64(&mut self, key: &'static str, default: Option<f64>) -> f64 {
        self.value(key, default).unwrap_or(f64::NAN)
    }

    pub fn usize(&mut self, key: &'static str, default: Option<usize>) -> usize {
        self.value(key, default).unwrap_or(0)
    }

    pub fn u64(&mut self, key: &'static str, default: Option<u64>) -> u64 {
        self.value(key, default).unwrap_or(0)
    }

    pub fn bool(&mut self, key: &'static str, default: bool) -> bool {
        self.value(key, Some(default)).unwrap_or(default)
    }

    pub fn string(&mut self, key: &'static str, default: &str, allowed: &[&str]) -> String {
        let v: String = self.value(key, Some(default.to_string())).unwrap_or_default();
        if !allowed.contains(&v.as_str()) {
            self.errors.push(format!("{key}: '{v}' is not one of {allowed:?}"));
        }
        v
    }

    fn list<T: FromStr>(&mut self, key: &'static str, default: &str) -> Vec<T> {
        self.known.insert(key);
        let raw = self.cfg.get(key).unwrap_or(default).to_string();
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse() {
                Ok(v) => out.push(v),
                Err(_) => self.errors.push(format!("{key}: cannot parse list item '{item}'")),
            }
        }
        if out.is_empty() {
            self.errors.push(format!("{key}: list is empty"));
        }
        self.resolved.insert(key.to_string(), raw);
        out
    }

    pub fn f64_list(&mut self, key: &'static str, default: &str) -> Vec<f64> {
        self.list(key, default)
    }

    pub fn usize_list(&mut self, key: &'static str, default: &str) -> Vec<usize> {
        self.list(key, default)
    }

    /// Errors for keys no reader asked for.
    pub fn unknown_keys(&self) -> Vec<String> {
        self.cfg
            .entries()
            .keys()
            .filter(|k| !self.known.contains(k.as_str()))
            .map(|k| format!("{k}: unknown key"))
            .collect()
    }

    /// Every consulted key with its value after defaults.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}
