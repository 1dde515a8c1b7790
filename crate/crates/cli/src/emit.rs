//! Bit-stable report emission.
//!
//! JSON objects are written with sorted keys and every non-integer number
//! with 17 significant digits, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `x` with 17 significant digits in exponent form; `null` if not finite.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

pub fn to_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| {
        out.push('\n');
        out.extend(std::iter::repeat_n("  ", d));
    };
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => write!(out, "{i}").unwrap(),
            (_, Some(u)) => write!(out, "{u}").unwrap(),
            _ => out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                pad(out, depth + 1);
                write_value(out, x, depth + 1);
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                pad(out, depth + 1);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(out, &m[k], depth + 1);
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

/// CSV text with a header row; every line newline-terminated.
pub fn to_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn provenance(config_text: &str, command: &str) -> Value {
    json!({
        "command": command,
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "tool": TOOL_NAME,
        "tool_version": TOOL_VERSION,
    })
}

/// Files produced by one command, held in memory until all are ready.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl Artifacts {
    pub fn push(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text));
    }

    /// Write every artifact plus `<command>.manifest.json`. On any failure
    /// the files written so far are removed again.
    pub fn write(mut self, dir: &Path, command: &str, config_text: &str) -> std::io::Result<Vec<PathBuf>> {
        let mut listing = Map::new();
        for (name, text) in &self.files {
            listing.insert(name.clone(), Value::String(sha256_hex(text.as_bytes())));
        }
        let manifest = json!({
            "files": listing,
            "provenance": provenance(config_text, command),
            "warnings": self.warnings,
        });
        self.files.push((format!("{command}.manifest.json"), to_json(&manifest)));

        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, text) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, text) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())));
            }
            written.push(path);
        }
        Ok(written)
    }
}
