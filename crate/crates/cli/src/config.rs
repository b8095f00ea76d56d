//! Flat `key = value` config files applied as argument defaults.
//!
//! Keys are long flag names (`size-mb` or `size_mb`). A key is looked up
//! among the global flags and then among the flags of the invoked
//! subcommand; anything else is an error. Command-line values and
//! environment variables still win over the file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, Command};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value", i + 1);
        };
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push(Entry {
            line: i + 1,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

/// Clap keeps defaults as `'static` strings; config values live for the
/// whole process anyway.
fn leak(s: &str) -> &'static str {
    s.to_string().leak()
}

fn apply_default(arg: Arg, value: &str) -> Arg {
    let arg = arg.required(false);
    match arg.get_action() {
        ArgAction::Append => arg.default_values(value.split(',').map(|s| leak(s.trim()))),
        _ => arg.default_value(leak(value)),
    }
}

fn has_arg(cmd: &Command, id: &str) -> bool {
    cmd.get_arguments().any(|a| a.get_id() == id && a.get_long().is_some())
}

/// Installs `entries` as defaults on `root` or on the subcommand at `path`.
pub fn apply(mut root: Command, path: &[String], entries: &[Entry]) -> Result<Command> {
    for e in entries {
        if e.key == "config" {
            bail!("line {}: config files cannot include other config files", e.line);
        }
        if has_arg(&root, &e.key) {
            let value = e.value.clone();
            root = root.mut_arg(e.key.as_str(), |a| apply_default(a, &value));
            continue;
        }
        let found = path.split_last().is_some_and(|(leaf, parents)| {
            let mut cmd = &root;
            for p in parents {
                match cmd.find_subcommand(p) {
                    Some(c) => cmd = c,
                    None => return false,
                }
            }
            cmd.find_subcommand(leaf).is_some_and(|c| has_arg(c, &e.key))
        });
        if !found {
            bail!("line {}: unknown key '{}'", e.line, e.key);
        }
        root = mut_nested(root, path, &e.key, &e.value);
    }
    Ok(root)
}

fn mut_nested(cmd: Command, path: &[String], key: &str, value: &str) -> Command {
    match path.split_first() {
        None => cmd.mut_arg(key, |a| apply_default(a, value)),
        Some((head, rest)) => cmd.mut_subcommand(head.as_str(), |sub| mut_nested(sub, rest, key, value)),
    }
}
