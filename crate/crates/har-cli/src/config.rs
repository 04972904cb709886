//! Run configuration: a flat `key = value` document (dotted keys for
//! nested blocks) merged with command-line `key=value` overrides. Every
//! key a command reads is recorded with its final value; unknown keys are
//! rejected; the resolved document is written next to the outputs so runs
//! replay exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    /// Load from an optional config file, then apply overrides (later
    /// entries win), then the dedicated --seed/--out flags.
    pub fn from_sources(
        config_path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::config(format!(
                        "{}:{}: expected 'key = value'",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                values.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        for ov in overrides {
            let (k, v) = ov.split_once('=').ok_or_else(|| {
                CliError::config(format!("override '{ov}' is not of the form key=value"))
            })?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(s) = seed {
            values.insert("seed".into(), s.to_string());
        }
        if let Some(o) = out {
            values.insert("out".into(), o.display().to_string());
        }
        Ok(RunConfig { values, used: BTreeSet::new(), resolved: BTreeMap::new() })
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        RunConfig {
            values: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        }
    }

    fn record(&mut self, key: &str, value: String) -> String {
        self.used.insert(key.to_string());
        self.resolved.insert(key.to_string(), value.clone());
        value
    }

    pub fn get_str(&mut self, key: &str, default: &str) -> String {
        let v = self.values.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.record(key, v)
    }

    pub fn require_str(&mut self, key: &str) -> Result<String, CliError> {
        match self.values.get(key).cloned() {
            Some(v) => Ok(self.record(key, v)),
            None => Err(CliError::config(format!("missing required key '{key}'"))),
        }
    }

    pub fn require_path(&mut self, key: &str) -> Result<PathBuf, CliError> {
        Ok(PathBuf::from(self.require_str(key)?))
    }

    pub fn get_u64(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        let v = self.get_str(key, &default.to_string());
        v.parse().map_err(|_| CliError::config(format!("key '{key}': '{v}' is not an integer")))
    }

    pub fn get_usize(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.get_u64(key, default as u64)? as usize)
    }

    pub fn get_f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.get_str(key, &format_f64(default));
        v.parse().map_err(|_| CliError::config(format!("key '{key}': '{v}' is not a number")))
    }

    pub fn get_bool(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        let v = self.get_str(key, if default { "true" } else { "false" });
        match v.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::config(format!("key '{key}': '{other}' is not a boolean"))),
        }
    }

    /// Comma/semicolon separated list of usizes.
    pub fn get_usize_list(&mut self, key: &str, default: &str) -> Result<Vec<usize>, CliError> {
        let v = self.get_str(key, default);
        v.split([',', ';'])
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("key '{key}': '{s}' is not an integer")))
            })
            .collect()
    }

    /// Reject any key that was never consumed by the command.
    pub fn finish(&self) -> Result<(), CliError> {
        let unknown: Vec<&String> =
            self.values.keys().filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(format!(
                "unknown key(s): {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }

    /// The fully resolved document (defaults included), sorted by key.
    pub fn resolved_text(&self, command: &str) -> String {
        let mut out = format!("command = {command}\n");
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Format that round-trips through `parse::<f64>` and is stable.
pub fn format_f64(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}
