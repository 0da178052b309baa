//! `key = value` config files with `[section]` headers.
//!
//! A section names a command path with dots (`[train.gmm]`, `[restore]`)
//! or `[global]`; its keys are that command's long flag names. Values are
//! appended to the command line only for flags the user did not pass, so
//! flags always win.

use std::path::Path;

use clap::{ArgAction, Command};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, String> {
    let mut section = String::from("global");
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| format!("line {line}: unterminated section header"))?.trim();
            if name.is_empty() {
                return Err(format!("line {line}: empty section name"));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = t.split_once('=').ok_or_else(|| format!("line {line}: expected `key = value`"))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {line}: empty key"));
        }
        out.push(Entry { section: section.clone(), key, value: value.trim().trim_matches('"').to_string(), line });
    }
    Ok(out)
}

fn find_command<'a>(root: &'a Command, section: &str) -> Option<&'a Command> {
    if section == "global" {
        return Some(root);
    }
    let mut cmd = root;
    for part in section.split('.') {
        cmd = cmd.find_subcommand(part)?;
    }
    Some(cmd)
}

fn takes_value(cmd: &Command, key: &str) -> Option<bool> {
    cmd.get_arguments()
        .filter(|a| !matches!(a.get_id().as_str(), "config" | "help" | "version"))
        .find(|a| a.get_long() == Some(key))
        .map(|a| !matches!(a.get_action(), ArgAction::SetTrue | ArgAction::SetFalse | ArgAction::Count))
}

/// The subcommand path named on the command line, e.g. `["train", "gmm"]`.
fn command_path(root: &Command, args: &[String]) -> Vec<String> {
    let mut path = Vec::new();
    let mut cmd = root;
    for a in args.iter().skip(1) {
        if a.starts_with('-') {
            continue;
        }
        match cmd.find_subcommand(a) {
            Some(sub) => {
                path.push(a.clone());
                cmd = sub;
                if !cmd.has_subcommands() {
                    break;
                }
            }
            None => continue,
        }
    }
    path
}

fn flag_given(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    args.iter().any(|a| *a == long || a.starts_with(&format!("{long}=")))
}

/// Extracts `--config` from `args`, if any.
pub fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Validates every entry against `root` and returns `args` extended with
/// the entries that apply to the invoked command.
pub fn merge(root: &Command, args: &[String], entries: &[Entry], file: &Path) -> Result<Vec<String>, String> {
    let path = command_path(root, args);
    let active = path.join(".");
    let mut out = args.to_vec();
    for e in entries {
        let cmd = find_command(root, &e.section)
            .ok_or_else(|| format!("{}:{}: unknown section [{}]", file.display(), e.line, e.section))?;
        let with_value = takes_value(cmd, &e.key)
            .ok_or_else(|| format!("{}:{}: unknown key `{}` in [{}]", file.display(), e.line, e.key, e.section))?;
        let applies = e.section == "global" || e.section == active;
        if !applies || flag_given(args, &e.key) {
            continue;
        }
        if with_value {
            out.push(format!("--{}={}", e.key, e.value));
        } else {
            match e.value.as_str() {
                "true" => out.push(format!("--{}", e.key)),
                "false" => {}
                other => return Err(format!("{}:{}: `{}` expects true or false, got {other:?}", file.display(), e.line, e.key)),
            }
        }
    }
    Ok(out)
}
