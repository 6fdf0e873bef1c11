//! Provenance block embedded in every output.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    /// SHA-256 of the config file bytes.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub version: String,
    pub started: String,
    pub finished: String,
}

/// Wall clock, or `SOURCE_DATE_EPOCH` when set so reruns are byte-identical.
fn now() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|s| DateTime::<Utc>::from_timestamp(s, 0))
        .unwrap_or_else(Utc::now);
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn start(config: Option<&[u8]>, seed: Option<u64>) -> Self {
        RunManifest {
            command_line: std::env::args().collect(),
            config_hash: config.map(hex_digest),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: now(),
            finished: String::new(),
        }
    }

    pub fn finish(mut self) -> Self {
        self.finished = now();
        self
    }
}
