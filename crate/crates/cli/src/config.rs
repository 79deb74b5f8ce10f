//! `key = value` configuration files.
//!
//! Each key names a long flag without its dashes (`theta = 2`, `ref = uniform`).
//! `true` turns a switch on and `false` leaves it off. Blank lines and lines
//! starting with `#` are ignored. Flags given on the command line win over the
//! file.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses a configuration file body into `(key, value)` pairs in file order.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", number + 1);
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            bail!("line {}: missing key", number + 1);
        }
        if key == "config" {
            bail!("line {}: configuration files cannot nest", number + 1);
        }
        if pairs.iter().any(|(k, _)| k == key) {
            bail!("line {}: `{key}` is set twice", number + 1);
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--" {
            return None;
        }
        if text == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = text.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

fn flag_names(args: &[OsString]) -> HashSet<String> {
    args.iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect()
}

/// Appends the flags of the `--config` file, if any, that the command line does not set.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("--config {}", path.display()))?;
    let pairs = parse(&text).with_context(|| format!("--config {}", path.display()))?;
    let given = flag_names(&args);
    let mut merged = args;
    for (key, value) in pairs {
        if given.contains(&key) {
            continue;
        }
        match value.as_str() {
            "true" => merged.push(format!("--{key}").into()),
            "false" => {}
            _ => merged.push(format!("--{key}={value}").into()),
        }
    }
    Ok(merged)
}
