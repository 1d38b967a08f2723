//! Machine-checkable certificates: one record per verified statement, plus
//! the per-run report. Certificates carry ids, witnesses, counts and
//! runtimes; reports are byte-deterministic (runtimes live only in the
//! certificate stream and on the console).

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Pass => write!(f, "pass"),
            Status::Fail => write!(f, "FAIL"),
            Status::Skipped => write!(f, "skipped"),
        }
    }
}

/// One verified statement: id, human-readable anchor, verdict, counts and
/// witnesses (id arrays and similar), wall time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub statement: String,
    pub anchor: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub witnesses: BTreeMap<String, serde_json::Value>,
    pub runtime_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Certificate {
    /// The deterministic part (everything except the runtime), for digests.
    fn deterministic_value(&self) -> serde_json::Value {
        serde_json::json!({
            "statement": self.statement,
            "anchor": self.anchor,
            "status": self.status,
            "counts": self.counts,
            "witnesses": self.witnesses,
            "notes": self.notes,
        })
    }
}

/// Outcome data a stage hands back on success.
#[derive(Debug, Default)]
pub struct StageData {
    pub counts: BTreeMap<String, u64>,
    pub witnesses: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
}

impl StageData {
    pub fn count(mut self, key: &str, value: u64) -> Self {
        self.counts.insert(key.into(), value);
        self
    }

    pub fn witness(mut self, key: &str, value: serde_json::Value) -> Self {
        self.witnesses.insert(key.into(), value);
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }
}

/// Run one stage, timing it and converting an error into a failed
/// certificate with the error text as witness.
pub fn run_stage(
    statement: &str,
    anchor: &str,
    body: impl FnOnce() -> crate::Result<StageData>,
) -> Certificate {
    let start = Instant::now();
    let trace = std::env::var_os("UNITALS_TRACE").is_some();
    if trace {
        eprintln!("[stage] {statement} ...");
    }
    let cert = match body() {
        Ok(data) => Certificate {
            statement: statement.into(),
            anchor: anchor.into(),
            status: Status::Pass,
            counts: data.counts,
            witnesses: data.witnesses,
            runtime_ms: start.elapsed().as_millis() as u64,
            notes: data.notes,
        },
        Err(e) => Certificate {
            statement: statement.into(),
            anchor: anchor.into(),
            status: Status::Fail,
            counts: BTreeMap::new(),
            witnesses: BTreeMap::from([(
                "error".to_string(),
                serde_json::Value::String(e.to_string()),
            )]),
            runtime_ms: start.elapsed().as_millis() as u64,
            notes: vec![],
        },
    };
    if trace {
        eprintln!(
            "[stage] {statement}: {} ({} ms)",
            cert.status, cert.runtime_ms
        );
    }
    cert
}

pub fn skipped_stage(statement: &str, anchor: &str, reason: &str) -> Certificate {
    Certificate {
        statement: statement.into(),
        anchor: anchor.into(),
        status: Status::Skipped,
        counts: BTreeMap::new(),
        witnesses: BTreeMap::new(),
        runtime_ms: 0,
        notes: vec![reason.into()],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateBundle {
    pub version: String,
    pub order: usize,
    pub mode: String,
    pub seed: u64,
    pub input_digest: String,
    pub stages: Vec<Certificate>,
    pub verdict: Status,
    /// Digest over the deterministic parts of the stages.
    pub digest: String,
}

impl CertificateBundle {
    pub fn new(
        order: usize,
        mode: &str,
        seed: u64,
        input_digest: String,
        stages: Vec<Certificate>,
    ) -> CertificateBundle {
        let verdict = if stages.iter().any(|s| s.status == Status::Fail) {
            Status::Fail
        } else {
            Status::Pass
        };
        let det: Vec<serde_json::Value> =
            stages.iter().map(|s| s.deterministic_value()).collect();
        let digest = digest_value(&serde_json::Value::Array(det));
        CertificateBundle {
            version: env!("CARGO_PKG_VERSION").into(),
            order,
            mode: mode.into(),
            seed,
            input_digest,
            stages,
            verdict,
            digest,
        }
    }

    /// Fixed-layout text table; no runtimes, so the output is reproducible.
    pub fn report_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "order {}  mode {}  seed {}  input {}\n",
            self.order, self.mode, self.seed, self.input_digest
        ));
        out.push_str(&format!("{:-<100}\n", ""));
        for s in &self.stages {
            let counts = s
                .counts
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!(
                "{:<24} {:<8} {}\n",
                s.statement,
                s.status.to_string(),
                if counts.is_empty() {
                    s.notes.join("; ")
                } else {
                    counts
                }
            ));
            out.push_str(&format!("{:<24} {:<8} :: {}\n", "", "", s.anchor));
        }
        out.push_str(&format!("{:-<100}\n", ""));
        out.push_str(&format!("verdict: {}\n", self.verdict));
        out.push_str(&format!("digest: {}\n", self.digest));
        out
    }
}

pub fn digest_value(value: &serde_json::Value) -> String {
    let canonical = serde_json::to_vec(value).expect("serializable");
    let mut hasher = Sha256::new();
    hasher.update(&canonical);
    hex_string(&hasher.finalize())
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_runtime() {
        let make = |ms: u64| -> CertificateBundle {
            let cert = Certificate {
                statement: "demo".into(),
                anchor: "demo anchor".into(),
                status: Status::Pass,
                counts: BTreeMap::from([("k".to_string(), 1u64)]),
                witnesses: BTreeMap::new(),
                runtime_ms: ms,
                notes: vec![],
            };
            CertificateBundle::new(4, "exhaustive", 0, "x".into(), vec![cert])
        };
        assert_eq!(make(1).digest, make(99).digest);
        assert_eq!(make(1).report_text(), make(99).report_text());
    }

    #[test]
    fn failed_stage_fails_the_bundle() {
        let cert = run_stage("s", "a", || {
            Err(crate::Error::verification("s", "boom"))
        });
        assert_eq!(cert.status, Status::Fail);
        let bundle = CertificateBundle::new(4, "exhaustive", 0, "x".into(), vec![cert]);
        assert_eq!(bundle.verdict, Status::Fail);
    }
}
