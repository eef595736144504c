//! Structured report records emitted by the command-line tool.
//!
//! Field order is fixed by struct declaration order and maps are
//! `BTreeMap`s, so identical runs serialize to identical bytes. Floating
//! point values are rounded to 12 significant digits before serialization.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::protocol::Fingerprint;

pub const TOOL_NAME: &str = "chainport";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds to 12 significant digits; non-finite values pass through.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

pub fn sig12_opt(x: Option<f64>) -> Option<f64> {
    x.map(sig12)
}

#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub fingerprint: Fingerprint,
}

impl Header {
    pub fn new(command: &'static str, fingerprint: Fingerprint) -> Self {
        Self { tool: TOOL_NAME, version: TOOL_VERSION, command, fingerprint }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub n: usize,
    pub family: String,
    pub end_link: String,
    pub mode: String,
    pub seed: u64,
    pub trials: u64,
    pub inputs: String,
    pub input_path: Option<String>,
    pub table: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectionSource {
    /// "file", "derived" or "unavailable".
    pub source: &'static str,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub index: u64,
    pub readout_q: Option<Vec<u8>>,
    pub readout_q_prime: Option<Vec<u8>>,
    pub d: Vec<u8>,
    pub prob: f64,
    pub fidelity_before: f64,
    pub fidelity_after: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub trials: u64,
    pub class_counts: BTreeMap<String, u64>,
    pub min_fidelity_before: f64,
    pub mean_fidelity_before: f64,
    pub min_fidelity_after: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub header: Header,
    pub config: ConfigEcho,
    pub corrections: CorrectionSource,
    pub trials: Vec<TrialRecord>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: &'static str,
    /// "pass", "fail" or "skipped".
    pub status: &'static str,
    pub value: Option<f64>,
    pub detail: Option<String>,
}

impl CheckRecord {
    pub fn measured(name: &'static str, pass: bool, value: f64, detail: Option<String>) -> Self {
        Self { name, status: if pass { "pass" } else { "fail" }, value: Some(sig12(value)), detail }
    }

    pub fn flag(name: &'static str, pass: bool, detail: Option<String>) -> Self {
        Self { name, status: if pass { "pass" } else { "fail" }, value: None, detail }
    }

    pub fn skipped(name: &'static str, reason: &str) -> Self {
        Self { name, status: "skipped", value: None, detail: Some(reason.to_string()) }
    }

    pub fn failed(&self) -> bool {
        self.status == "fail"
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KrausRecord {
    pub d: Vec<u8>,
    pub weight: f64,
    pub unitarity_deviation: f64,
    pub cyclic_fidelity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub header: Header,
    pub config: ConfigEcho,
    pub checks: Vec<CheckRecord>,
    /// Informational: structure of each class's branch operator.
    pub branch_operators: Option<Vec<KrausRecord>>,
    pub pairing: Option<crate::verify::PairingReport>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StatsReport {
    pub header: Header,
    pub config: ConfigEcho,
    pub histogram: crate::verify::OutcomeHistogram,
    pub within_5_sigma: Option<bool>,
}
