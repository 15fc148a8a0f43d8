//! `key = value` settings grouped under `[section]` headers (TOML syntax).
//!
//! A value comes from the command's built-in default, then the optional
//! config file, then command-line flags. Every value a command reads is
//! recorded in order, so the resolved set can be written back as a snapshot
//! that reproduces the run when passed to `--config`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    /// `"section.key"` to raw text, from the file and the flags.
    given: BTreeMap<String, String>,
    /// Every key read so far with its resolved value, in read order.
    resolved: Vec<(String, String)>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings, CliError> {
        let mut given = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let table: Table = text
                .parse()
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            for (section, props) in table {
                let Value::Table(props) = props else {
                    return Err(CliError::Usage(format!("config key {section:?} is outside any [section]")));
                };
                for (k, v) in props {
                    given.insert(format!("{section}.{k}"), raw_text(&format!("{section}.{k}"), v)?);
                }
            }
        }
        Ok(Settings { given, resolved: Vec::new() })
    }

    /// A command-line flag, which wins over the file.
    pub fn flag(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.given.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        let value = match self.given.get(key) {
            Some(raw) => parse(key, raw)?,
            None => default,
        };
        self.record(key, value.to_string());
        Ok(value)
    }

    /// A setting with no default; `flag` names the option that supplies it.
    pub fn require<T: FromStr + Display>(&mut self, key: &str, flag: &str) -> Result<T, CliError> {
        let raw = self
            .given
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("missing {flag} (or `{key}` in the config file)")))?;
        let value: T = parse(key, raw)?;
        self.record(key, value.to_string());
        Ok(value)
    }

    /// Comma-separated sizes, e.g. `512,256`.
    pub fn sizes<const N: usize>(&mut self, key: &str, default: [usize; N]) -> Result<[usize; N], CliError> {
        let text = match self.given.get(key) {
            Some(raw) => raw.clone(),
            None => join(&default),
        };
        let parsed: Vec<usize> = text
            .split(',')
            .map(|p| parse(key, p))
            .collect::<Result<_, _>>()?;
        let sizes: [usize; N] = parsed
            .try_into()
            .map_err(|_| CliError::Usage(format!("{key} needs exactly {N} comma-separated sizes, got {text:?}")))?;
        self.record(key, join(&sizes));
        Ok(sizes)
    }

    /// One of a fixed set of words.
    pub fn choice(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String, CliError> {
        let value: String = self.get(key, default.to_string())?;
        if !allowed.contains(&value.as_str()) {
            return Err(CliError::Usage(format!("{key} must be one of {}, got {value:?}", allowed.join("|"))));
        }
        Ok(value)
    }

    fn record(&mut self, key: &str, value: String) {
        match self.resolved.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.resolved.push((key.to_string(), value)),
        }
    }

    /// Rejects keys that were supplied but never read, which are almost
    /// always typos or settings of another command.
    pub fn finish(&self) -> Result<(), CliError> {
        let unused: Vec<&str> = self
            .given
            .keys()
            .filter(|k| !self.resolved.iter().any(|(r, _)| r == *k))
            .map(String::as_str)
            .collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("unknown config keys for this command: {}", unused.join(", "))))
        }
    }

    /// Everything the file and flags supplied, read or not.
    pub fn given(&self) -> impl Iterator<Item = (&str, &str)> {
        self.given.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.resolved
    }

    /// Resolved settings as TOML, every value written as a string so the
    /// text round-trips exactly.
    pub fn snapshot(&self) -> String {
        let mut root = Table::new();
        for (key, value) in &self.resolved {
            let (section, name) = key.split_once('.').unwrap_or(("general", key));
            if let Value::Table(t) = root.entry(section).or_insert_with(|| Value::Table(Table::new())) {
                t.insert(name.to_string(), Value::String(value.clone()));
            }
        }
        format!("# csigan {}\n{root}", env!("CARGO_PKG_VERSION"))
    }
}

/// Scalars become their text; arrays of sizes become `a,b,c`.
fn raw_text(key: &str, v: Value) -> Result<String, CliError> {
    Ok(match v {
        Value::String(s) => s,
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => items
            .into_iter()
            .map(|i| raw_text(key, i))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        other => return Err(CliError::Usage(format!("unsupported value {other} for {key}"))),
    })
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad value {raw:?} for {key}")))
}

fn join(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}
