//! `--config` support: a JSON object whose keys mirror long flags
//! (`batch_size` or `batch-size` for `--batch-size`). Its entries become flag
//! tokens placed after the subcommand; flags given explicitly on the command
//! line take precedence.

use std::ffi::OsString;
use std::fs;

use serde_json::Value;

const SUBCOMMANDS: [&str; 5] = ["theorems", "score", "search", "bench", "ablate"];

/// Long flag names present in `argv`, without the leading dashes.
fn explicit_flags(argv: &[OsString]) -> Vec<String> {
    argv.iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect()
}

/// Path given by `--config`, in either `--config p` or `--config=p` form.
fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn tokens(key: &str, value: &Value) -> Result<Vec<String>, String> {
    let flag = format!("--{key}");
    match value {
        Value::Null | Value::Bool(false) => Ok(Vec::new()),
        Value::Bool(true) => Ok(vec![flag]),
        Value::Number(n) => Ok(vec![flag, n.to_string()]),
        Value::String(s) => Ok(vec![flag, s.clone()]),
        _ => Err(format!(
            "config key {key:?} must be a string, number, boolean or null"
        )),
    }
}

/// Returns `argv` with the config file's entries spliced in after the
/// subcommand. Without `--config` the arguments pass through unchanged.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    let json: Value = serde_json::from_str(&text)
        .map_err(|e| format!("config {}: {e}", path.to_string_lossy()))?;
    let Value::Object(map) = json else {
        return Err(format!(
            "config {} must hold a JSON object",
            path.to_string_lossy()
        ));
    };
    let explicit = explicit_flags(&argv);
    let mut extra = Vec::new();
    for (key, value) in &map {
        let key = key.replace('_', "-");
        if key == "config" {
            return Err("config files cannot nest --config".into());
        }
        if explicit.contains(&key) {
            continue;
        }
        extra.extend(tokens(&key, value)?);
    }
    let Some(at) = argv
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
    else {
        return Ok(argv);
    };
    let mut out = argv;
    out.splice(at + 1..at + 1, extra.into_iter().map(OsString::from));
    Ok(out)
}
