//! Checkpoint directory IO: a `config.txt` of key=value pairs describing the
//! architecture, next to a `weights.bin` tensor blob file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::graph::Graph;
use crate::util::{atomic_write, decode_blobs, encode_blobs};

pub const CONFIG_FILE: &str = "config.txt";
pub const WEIGHTS_FILE: &str = "weights.bin";

/// Serializes config pairs as sorted `key=value` lines.
pub fn render_config(pairs: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Checkpoint(format!("config line {} is not key=value: {line}", lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Writes a checkpoint directory: `config.txt` plus `weights.bin`.
pub fn save_checkpoint(
    dir: &Path,
    config: &BTreeMap<String, String>,
    graph: &Graph,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    atomic_write(&dir.join(CONFIG_FILE), render_config(config).as_bytes())?;
    let blobs = graph.export_tensors();
    atomic_write(&dir.join(WEIGHTS_FILE), &encode_blobs(&blobs)?)?;
    Ok(())
}

/// Reads the config half of a checkpoint.
pub fn load_config(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_config(&text)
}

/// Loads weights into a graph built from the checkpoint's config.
pub fn load_weights(dir: &Path, graph: &mut Graph) -> Result<()> {
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    graph.import_tensors(&decode_blobs(&bytes)?)
}

/// Fetches a required key from a parsed config.
pub fn require<'a>(cfg: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    cfg.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Checkpoint(format!("config missing key {key}")))
}

/// Parses a required key into any `FromStr` type.
pub fn require_parsed<T: std::str::FromStr>(
    cfg: &BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    let raw = require(cfg, key)?;
    raw.parse().map_err(|_| {
        Error::Checkpoint(format!("config key {key} has unparseable value {raw}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_preserves_pairs() {
        let mut cfg = BTreeMap::new();
        cfg.insert("arch".to_string(), "multires_unet".to_string());
        cfg.insert("base_width".to_string(), "51".to_string());
        let text = render_config(&cfg);
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn parse_config_skips_comments_and_rejects_garbage() {
        let cfg = parse_config("# header\n\nkey = value\n").unwrap();
        assert_eq!(cfg["key"], "value");
        assert!(parse_config("not a pair\n").is_err());
    }
}
