use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use pap_core::eval::Value;
use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "pap/1";

/// Provenance attached to every JSON and CSV output.
pub struct Manifest {
    pub command: String,
    pub program_sha256: String,
    pub seed: u64,
    pub config: Json,
    pub started: Instant,
    pub stable: bool,
}

impl Manifest {
    pub fn new(command: &str, source: &str, seed: u64, config: Json, stable: bool) -> Manifest {
        Manifest {
            command: command.to_string(),
            program_sha256: hex::encode(Sha256::digest(source.as_bytes())),
            seed,
            config,
            started: Instant::now(),
            stable,
        }
    }

    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        m.insert("command".into(), json!(self.command));
        m.insert("program_sha256".into(), json!(self.program_sha256));
        m.insert("seed".into(), json!(self.seed));
        m.insert("config".into(), self.config.clone());
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        if !self.stable {
            m.insert(
                "elapsed_ms".into(),
                json!(self.started.elapsed().as_secs_f64() * 1e3),
            );
        }
        Json::Object(m)
    }

    /// Wraps a result object with the schema tag and this manifest.
    pub fn document(&self, body: Json) -> Json {
        let mut doc = match body {
            Json::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        doc.insert("schema".into(), json!(SCHEMA));
        doc.insert("manifest".into(), self.to_json());
        Json::Object(doc)
    }
}

/// Writes to a file, or to stdout for `-`.
pub fn emit(target: Option<&Path>, text: &str) -> Result<()> {
    match target {
        Some(p) if p != Path::new("-") => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn json_text(doc: &Json) -> String {
    let mut s = serde_json::to_string(doc).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn real_json(x: f64) -> Json {
    if x.is_finite() {
        json!(x)
    } else {
        json!(pap_core::syntax::real_literal(x))
    }
}

pub fn value_json(v: &Value) -> Json {
    match v {
        Value::Real(x) => real_json(*x),
        Value::Bool(b) => json!(b),
        Value::Unit => Json::Null,
        Value::Pair(a, b) => json!([value_json(a), value_json(b)]),
        Value::Closure(_) | Value::RecClosure(_) => json!(v.to_string()),
    }
}

/// Comment line carrying the manifest, for CSV outputs.
pub fn csv_manifest_line(m: &Manifest) -> String {
    let mut doc = m.to_json();
    doc["schema"] = json!(SCHEMA);
    format!(
        "# manifest {}\n",
        serde_json::to_string(&doc).expect("serializable")
    )
}

pub fn csv_real(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
