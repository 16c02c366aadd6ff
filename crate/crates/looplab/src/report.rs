//! Residual reports: named worst-case deviations with stable serialization.
//!
//! Every verification pass produces one [`ResidualReport`].  A key names a
//! check; recording the same key again keeps whichever observation has the
//! larger magnitude, so a grid sweep ends with the worst case per check and
//! the inputs that produced it.  Serialization is deterministic: entries are
//! held in key order, input maps are ordered, and the wall time is kept out
//! of the serialized form so identical runs emit identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;

/// One named residual observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualEntry {
    pub key: String,
    /// Parameter values behind the recorded worst case, pre-rendered so the
    /// serialized form is independent of float formatting surprises.
    pub inputs: BTreeMap<String, String>,
    pub value_re: f64,
    pub value_im: f64,
    pub abs: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Run description attached to a report.  The wall time is measured but
/// never serialized, keeping reports byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub version: String,
    pub precision: String,
    pub seed: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Worst-case residuals keyed by check name.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    metadata: ReportMetadata,
    entries: BTreeMap<String, ResidualEntry>,
}

#[derive(Serialize)]
struct ReportView<'a> {
    metadata: &'a ReportMetadata,
    entries: Vec<&'a ResidualEntry>,
}

impl ResidualReport {
    pub fn new(precision: &str, seed: u64) -> Self {
        Self {
            metadata: ReportMetadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                precision: precision.to_string(),
                seed,
                wall_time: Duration::default(),
            },
            entries: BTreeMap::new(),
        }
    }

    pub fn metadata(&self) -> &ReportMetadata {
        &self.metadata
    }

    pub fn set_wall_time(&mut self, elapsed: Duration) {
        self.metadata.wall_time = elapsed;
    }

    /// Records one observation; per key only the largest magnitude survives,
    /// together with the inputs that produced it.
    pub fn record(
        &mut self,
        key: &str,
        inputs: &[(&str, String)],
        value: Complex64,
        threshold: f64,
    ) {
        let abs = value.norm();
        match self.entries.get_mut(key) {
            Some(entry) if entry.abs >= abs => {}
            slot => {
                let entry = ResidualEntry {
                    key: key.to_string(),
                    inputs: inputs
                        .iter()
                        .map(|(k, v)| (k.to_string(), v.clone()))
                        .collect(),
                    value_re: value.re,
                    value_im: value.im,
                    abs,
                    threshold,
                    pass: abs <= threshold,
                };
                match slot {
                    Some(existing) => *existing = entry,
                    None => {
                        self.entries.insert(key.to_string(), entry);
                    }
                }
            }
        }
    }

    /// Convenience for real-valued residuals.
    pub fn record_real(&mut self, key: &str, inputs: &[(&str, String)], value: f64, threshold: f64) {
        self.record(key, inputs, Complex64::new(value, 0.0), threshold);
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = &ResidualEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&ResidualEntry> {
        self.entries.get(key)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.values().all(|e| e.pass)
    }

    /// Pretty JSON with entries in key order and no wall time.
    pub fn to_json(&self) -> Result<String> {
        let view = ReportView {
            metadata: &self.metadata,
            entries: self.entries.values().collect(),
        };
        Ok(serde_json::to_string_pretty(&view)?)
    }

    /// Flat CSV, one row per entry; inputs rendered as `k=v` pairs joined
    /// with semicolons.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,value_re,value_im,abs,threshold,pass,inputs\n");
        for e in self.entries.values() {
            let inputs = e
                .inputs
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{},{}\n",
                e.key, e.value_re, e.value_im, e.abs, e.threshold, e.pass, inputs
            ));
        }
        out
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "looplab {} | precision {} | seed {} | {:.3}s",
            self.metadata.version,
            self.metadata.precision,
            self.metadata.seed,
            self.metadata.wall_time.as_secs_f64()
        )?;
        let key_width = self
            .entries
            .keys()
            .map(|k| k.len())
            .max()
            .unwrap_or(3)
            .max(3);
        writeln!(
            f,
            "{:<key_width$}  {:>12}  {:>12}  status",
            "key", "abs", "threshold"
        )?;
        for e in self.entries.values() {
            let status = if e.pass { "pass" } else { "FAIL" };
            writeln!(
                f,
                "{:<key_width$}  {:>12.3e}  {:>12.3e}  {status}",
                e.key, e.abs, e.threshold
            )?;
            if !e.pass {
                let inputs = e
                    .inputs
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                writeln!(f, "{:<key_width$}    at {inputs}", "")?;
            }
        }
        write!(
            f,
            "{} checks, {}",
            self.len(),
            if self.all_pass() { "all pass" } else { "FAILURES" }
        )
    }
}
