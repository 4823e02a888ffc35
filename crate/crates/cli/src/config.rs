// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layered run configuration: defaults, then a JSON config file, then flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Merges `flags` over the config file at `config` over `T::default()`.
///
/// Keys in the config file that `T` does not know are rejected so typos do
/// not silently fall back to defaults.
pub fn resolve<T, F>(config: Option<&Path>, flags: &F) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
    F: Serialize,
{
    let mut merged = match serde_json::to_value(T::default()).expect("defaults serialize") {
        Value::Object(map) => map,
        _ => unreachable!("configs are structs"),
    };
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let Value::Object(file) = file else {
            return Err(CliError::Validation(format!(
                "config {}: expected a JSON object",
                path.display()
            )));
        };
        for (key, value) in file {
            if !merged.contains_key(&key) {
                return Err(CliError::Validation(format!(
                    "config {}: unknown key {key:?}",
                    path.display()
                )));
            }
            merged.insert(key, value);
        }
    }
    overlay(&mut merged, serde_json::to_value(flags).expect("flags serialize"));
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Validation(format!("configuration: {e}")))
}

fn overlay(into: &mut Map<String, Value>, flags: Value) {
    if let Value::Object(flags) = flags {
        for (key, value) in flags {
            if !value.is_null() {
                into.insert(key, value);
            }
        }
    }
}

/// Writes the effective configuration as `run_config.json`.
pub fn echo<T: Serialize>(out_dir: &Path, command: &str, cfg: &T) -> Result<(), CliError> {
    let mut value = serde_json::to_value(cfg).expect("config serializes");
    if let Value::Object(map) = &mut value {
        map.insert("command".to_string(), Value::String(command.to_string()));
    }
    let text = serde_json::to_string_pretty(&value).expect("config serializes") + "\n";
    crate::output::write_file(&out_dir.join("run_config.json"), text.as_bytes())
}

/// Parses `a..b` or `a..=b` (both inclusive) or a comma list into values.
pub fn parse_int_list(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Validation(format!("cannot parse {spec:?} as a range `a..b` or a list `a,b,c`"));
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(CliError::Validation(format!("empty range {spec:?}")));
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}
