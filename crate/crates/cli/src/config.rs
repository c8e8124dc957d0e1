//! `--config FILE` support: `key = value` lines become long flags placed
//! right after the subcommand. Keys already given on the command line are
//! skipped, so explicit flags always win.

use std::collections::HashSet;
use std::fs;

use anyhow::{bail, Context, Result};

/// One `--key value` (or bare `--key` for `true`) per config line.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, found {raw:?}", n + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("config line {}: invalid key {key:?}", n + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn flag_name(arg: &str) -> Option<&str> {
    let name = arg.strip_prefix("--")?;
    Some(name.split_once('=').map_or(name, |(k, _)| k))
}

/// Rewrites `argv` with the entries of any `--config` file spliced in.
pub fn expand_args(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv.get(pos + 1).cloned().context("--config needs a file")?,
    };
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read config {path}"))?;
    let given: HashSet<&str> = argv.iter().filter_map(|a| flag_name(a)).collect();
    let mut injected = Vec::new();
    for (key, value) in parse(&text)? {
        if given.contains(key.as_str()) {
            continue;
        }
        match value.as_str() {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value);
            }
        }
    }
    // argv[0] is the binary, argv[1] the subcommand
    let split = 2.min(argv.len());
    let mut out = argv[..split].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[split..]);
    Ok(out)
}
