//! Output files and their provenance headers.

use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What every output records about the run that produced it.
#[derive(Debug, Clone)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub input_hash: String,
    pub config: Vec<(String, String)>,
}

impl Meta {
    /// Hashes the input bytes together with the effective configuration, so
    /// the digest changes whenever either does and never depends on time.
    pub fn new(command: &str, seed: u64, settings: &Settings, inputs: &[&[u8]]) -> Self {
        let config: Vec<(String, String)> = settings.effective().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut h = Sha256::new();
        for bytes in inputs {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        for (k, v) in &config {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        Meta {
            command: command.to_string(),
            seed,
            input_hash: format!("{:x}", h.finalize()),
            config,
        }
    }

    /// `#` comment lines for CSV and edge-list outputs.
    pub fn header(&self) -> String {
        let mut s = format!(
            "# rwnet {VERSION}\n# command: {}\n# seed: {}\n# input-sha256: {}\n",
            self.command, self.seed, self.input_hash
        );
        for (k, v) in &self.config {
            s.push_str(&format!("# config {k} = {v}\n"));
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let config: Map<String, Value> = self.config.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        json!({
            "version": VERSION,
            "command": self.command,
            "seed": self.seed,
            "input_sha256": self.input_hash,
            "config": config,
        })
    }
}

/// Buffered writer to `path`, or to stdout when `path` is `None` or `-`.
pub fn open(path: Option<&str>) -> Result<Box<dyn Write>> {
    match path {
        None | Some("-") => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {p}"))?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

/// Writes `{"meta": ..., <fields of body>}` as pretty JSON.
pub fn write_json(path: Option<&str>, meta: &Meta, body: Value) -> Result<()> {
    let mut obj = Map::new();
    obj.insert("meta".into(), meta.to_json());
    match body {
        Value::Object(fields) => obj.extend(fields),
        other => {
            obj.insert("result".into(), other);
        }
    }
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, &Value::Object(obj))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Header followed by whatever `body` writes.
pub fn write_with_header<F>(path: Option<&str>, meta: &Meta, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut w = open(path)?;
    w.write_all(meta.header().as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::settings::parse_config;

    fn meta(cfg: &str, input: &[u8]) -> Meta {
        let mut s = Settings::from_map(parse_config(cfg).unwrap());
        s.get("alpha", None::<f64>, 0.5).unwrap();
        Meta::new("rwnet generate", 7, &s, &[input])
    }

    #[test]
    fn hash_tracks_inputs_and_config() {
        let a = meta("alpha = 0.3", b"0 1\n");
        assert_eq!(a.input_hash, meta("alpha = 0.3", b"0 1\n").input_hash);
        assert_ne!(a.input_hash, meta("alpha = 0.4", b"0 1\n").input_hash);
        assert_ne!(a.input_hash, meta("alpha = 0.3", b"0 2\n").input_hash);
        assert_eq!(a.input_hash.len(), 64);
    }

    #[test]
    fn header_lines_are_comments() {
        let h = meta("", b"").header();
        assert!(h.lines().all(|l| l.starts_with("# ")));
        assert!(h.contains("# config alpha = 0.5"));
        assert!(h.contains("# seed: 7"));
    }
}
