//! Flat `key = value` experiment configuration.
//!
//! One entry per line; `#` starts a comment; lists are comma separated and
//! integer lists accept inclusive ranges such as `0-99`. Later sources
//! override earlier ones: config file, then named flags, then `--set`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(CliError::usage(format!("line {}: invalid key `{key}`", n + 1)));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::usage(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        if !valid_key(key) {
            return Err(CliError::usage(format!("invalid key `{key}`")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("expected KEY=VALUE, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    /// Rejects keys the command does not understand.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::usage(format!(
                "unknown key `{k}`; expected one of: {}",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Serializes back to the config grammar, keys sorted.
    pub fn to_text(&self) -> String {
        self.entries().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::usage(format!("missing required key `{key}`")))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, v: &str) -> Result<T, CliError> {
        v.trim()
            .parse()
            .map_err(|_| CliError::usage(format!("`{key}`: cannot parse `{v}`")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        self.get(key).map_or(Ok(default), |v| self.parsed(key, v))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        self.get(key).map_or(Ok(default), |v| self.parsed(key, v))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, CliError> {
        self.get(key).map_or(Ok(default), |v| self.parsed(key, v))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::usage(format!("`{key}`: expected true/false, got `{v}`"))),
        }
    }

    /// A path that must exist.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let p = PathBuf::from(self.require(key)?);
        if !p.exists() {
            return Err(CliError::usage(format!("{key} path does not exist: {}", p.display())));
        }
        Ok(p)
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let list = split_list(v)
            .map(|s| self.parsed::<f64>(key, s))
            .collect::<Result<Vec<_>, _>>()?;
        if list.is_empty() {
            return Err(CliError::usage(format!("`{key}` must not be empty")));
        }
        Ok(Some(list))
    }

    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let mut out = Vec::new();
        for item in split_list(v) {
            match item.split_once('-') {
                Some((a, b)) => {
                    let (a, b): (usize, usize) = (self.parsed(key, a)?, self.parsed(key, b)?);
                    if b < a {
                        return Err(CliError::usage(format!("`{key}`: empty range `{item}`")));
                    }
                    out.extend(a..=b);
                }
                None => out.push(self.parsed(key, item)?),
            }
        }
        if out.is_empty() {
            return Err(CliError::usage(format!("`{key}` must not be empty")));
        }
        Ok(Some(out))
    }

    /// Singular-value bins written `1-1, 2-4, 5-10`.
    pub fn bins(&self, key: &str) -> Result<Option<Vec<(usize, usize)>>, CliError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        split_list(v)
            .map(|item| {
                let (a, b) = item
                    .split_once('-')
                    .ok_or_else(|| CliError::usage(format!("`{key}`: bin `{item}` must be FIRST-LAST")))?;
                Ok((self.parsed(key, a)?, self.parsed(key, b)?))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| split_list(v).map(str::to_string).collect())
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        let c = Config::parse("# sweep\nmodel = m/\nimages = 0-2, 7 # trailing\n\nlrp_gammas=0.1,1\n").unwrap();
        assert_eq!(c.get("model"), Some("m/"));
        assert_eq!(c.usize_list("images").unwrap().unwrap(), vec![0, 1, 2, 7]);
        assert_eq!(c.f64_list("lrp_gammas").unwrap().unwrap(), vec![0.1, 1.0]);
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("no equals sign").is_err());
        assert!(Config::parse("Bad-Key = 1").is_err());
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let mut c = Config::parse("seed = 1").unwrap();
        c.set_pair("seed=2").unwrap();
        assert_eq!(c.u64_or("seed", 0).unwrap(), 2);
        assert!(c.check_keys(&["seed"]).is_ok());
        c.set("typo", "x").unwrap();
        assert!(c.check_keys(&["seed"]).is_err());
        assert!(c.bool_or("missing", true).unwrap());
    }

    #[test]
    fn bins() {
        let c = Config::parse("bins = 1-1, 2-4,5-10").unwrap();
        assert_eq!(c.bins("bins").unwrap().unwrap(), vec![(1, 1), (2, 4), (5, 10)]);
    }
}
