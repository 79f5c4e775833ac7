//! `--config FILE` support. The file is a flat JSON object whose keys are
//! flag names (`max-epochs` or `max_epochs`). Its entries are spliced into
//! the argument list directly after the subcommand, ahead of the user's own
//! flags, so anything given on the command line wins.

use std::ffi::OsString;
use std::path::Path;

use serde_json::Value;

use crate::error::CliError;

const GLOBAL_WITH_VALUE: [&str; 2] = ["--config", "--threads"];

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    let mut found = None;
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            found = it.next().cloned();
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(v.into());
        }
    }
    found
}

fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if GLOBAL_WITH_VALUE.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn flag_tokens(path: &Path, text: &str) -> Result<Vec<OsString>, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(CliError::usage(format!("{}: expected a JSON object", path.display())));
    };
    let mut out = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            return Err(CliError::usage("a config file cannot name another config file"));
        }
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(CliError::usage(format!("config key {key:?}: unsupported value {other}"))),
        };
        match &v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag.into()),
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other)?.into());
            }
        }
    }
    Ok(out)
}

/// Returns `args` with the config file's flags inserted after the
/// subcommand name. Without `--config` the arguments come back unchanged.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let tokens = flag_tokens(path, &text)?;
    let Some(at) = subcommand_index(&args) else {
        return Ok(args);
    };
    let mut out = args[..=at].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"max_epochs": 3, "causal": true, "layer-norm": false, "kernel-hidden": [4, 4]}"#).unwrap();
        let args = os(&["bin", "--threads", "1", "--config", p.to_str().unwrap(), "train", "--max-epochs", "5"]);
        let out = expand(args).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        let at = s.iter().position(|a| a == "train").unwrap();
        assert_eq!(
            &s[at + 1..],
            ["--causal", "--kernel-hidden", "4,4", "--max-epochs", "3", "--max-epochs", "5"]
        );
    }

    #[test]
    fn rejects_non_objects() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "[1, 2]").unwrap();
        let err = expand(os(&["bin", "--config", p.to_str().unwrap(), "train"])).unwrap_err();
        assert_eq!(err.code, 2);
    }
}
