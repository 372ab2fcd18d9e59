//! `key = value` config files, merged under the command-line flags.
//!
//! Keys are the long flag names without dashes (`T = 256`, `runs = 50`,
//! `unconstrained = true`). Blank lines and lines starting with `#` are
//! ignored. The file's entries are spliced in right after the subcommand, so
//! any flag given on the command line wins.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::CommandFactory;

use crate::args::Cli;

/// Parsed `(key, value)` pairs in file order.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, found `{line}`", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            bail!("line {}: empty key", lineno + 1);
        }
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        entries.push((key.to_string(), value.to_string()));
    }
    Ok(entries)
}

/// Value of `--config` anywhere in `args`, if present.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            return iter.next().cloned();
        }
        if let Some(rest) = arg.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(rest.into());
        }
    }
    None
}

/// Rewrite `args` with the config file's entries inserted as flags just
/// after the subcommand. Returns `args` unchanged when there is no
/// `--config` or no recognizable subcommand.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let Some((pos, sub)) = args
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| a.to_str().and_then(|s| cmd.find_subcommand(s)).map(|sub| (i, sub)))
    else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in parse_config(&text)? {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| anyhow!("{}: unknown key `{key}` for `{}`", path.display(), sub.get_name()))?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{key}").into()),
                "false" => {}
                other => bail!("{}: `{key}` is a switch; expected true or false, found `{other}`", path.display()),
            }
        }
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}
