//! `--config file.json`: a JSON object whose keys supply flags that the
//! command line does not already set.

use std::ffi::OsString;
use std::path::Path;

use serde_json::Value;

/// Key whose array value is appended as positional arguments.
pub const POSITIONAL_KEY: &str = "args";

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

fn has_flag(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.strip_prefix(flag).is_some_and(|r| r.starts_with('='))
    })
}

fn scalar(v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(format!("unsupported config value {v}")),
    }
}

/// Returns `argv` with flags from the config file appended. Keys use the long
/// flag name, with `_` accepted for `-`. `true` adds a switch, `false` and
/// `null` add nothing, arrays repeat the flag.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("reading config {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| format!("parsing config {}: {e}", path.display()))?;
    let Value::Object(map) = value else {
        return Err(format!("config {} must be a JSON object", path.display()));
    };
    let mut out = argv.clone();
    let mut positional = Vec::new();
    for (key, v) in &map {
        if key == POSITIONAL_KEY {
            let Value::Array(items) = v else {
                return Err(format!("config key {POSITIONAL_KEY:?} must be an array"));
            };
            for item in items {
                positional.push(OsString::from(scalar(item)?));
            }
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || has_flag(&argv, &flag) {
            continue;
        }
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag.into()),
            Value::Array(items) => {
                for item in items {
                    out.push(flag.clone().into());
                    out.push(scalar(item)?.into());
                }
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other)?.into());
            }
        }
    }
    out.extend(positional);
    Ok(out)
}
