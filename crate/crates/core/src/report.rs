//! Machine-readable record of one evaluation run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pretrain_sim::{ClipSimConfig, AGGREGATE_RULE, RETRIEVAL_RULE};

pub const TOOL_VERSION: &str = concat!("desceval ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl InputDigest {
    /// Streams the file through SHA-256.
    pub fn of_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::with_capacity(1 << 20, file);
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 20];
        let mut bytes = 0u64;
        loop {
            let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(InputDigest {
            path: path.display().to_string(),
            bytes,
            sha256: hex::encode(hasher.finalize()),
        })
    }
}

/// Report of one command invocation. Every map is keyed by name, so the
/// serialized form is independent of insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, InputDigest>,
    pub metrics: BTreeMap<String, Value>,
    pub wall_time_seconds: Option<f64>,
}

impl EvalReport {
    pub fn new(command: impl Into<String>) -> Self {
        EvalReport {
            command: command.into(),
            ..Default::default()
        }
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.config.insert(key.to_owned(), to_value(value));
        self
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.metrics.insert(key.to_owned(), to_value(value));
        self
    }

    /// Echoes the caption-similarity settings, including the retrieval rule
    /// and the depth it yields for a corpus of `corpus_rows`.
    pub fn clip_sim_config(&mut self, cfg: &ClipSimConfig, corpus_rows: usize) -> &mut Self {
        self.config("tau", cfg.tau)
            .config("top_fraction", cfg.top_fraction)
            .config("corpus_sample_size", cfg.corpus_sample_size)
            .config("corpus_rows", corpus_rows)
            .config("retrieval_depth", cfg.retrieval_depth(corpus_rows))
            .config("retrieval_rule", RETRIEVAL_RULE)
            .config("aggregate_rule", AGGREGATE_RULE)
    }

    /// Records the digest of an input file under `role`.
    pub fn input(&mut self, role: &str, path: impl AsRef<Path>) -> Result<&mut Self> {
        self.inputs.insert(role.to_owned(), InputDigest::of_file(path)?);
        Ok(self)
    }

    pub fn to_value(&self, include_wall_time: bool) -> Value {
        let mut root = Map::new();
        root.insert("tool_version".into(), Value::from(TOOL_VERSION));
        root.insert("command".into(), Value::from(self.command.clone()));
        root.insert("config".into(), to_value(&self.config));
        root.insert("inputs".into(), to_value(&self.inputs));
        root.insert("metrics".into(), to_value(&self.metrics));
        if include_wall_time {
            root.insert("wall_time_seconds".into(), to_value(self.wall_time_seconds));
        }
        sort_keys(Value::Object(root))
    }

    /// Pretty, key-sorted JSON with a trailing newline.
    pub fn to_json_string(&self, include_wall_time: bool) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value(include_wall_time))
            .expect("report values are plain JSON");
        s.push('\n');
        s
    }
}

fn to_value(v: impl Serialize) -> Value {
    // non-finite floats have no JSON form and become null
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Rebuilds every object with its keys in ascending order.
pub fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}
