use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Inputs of one trial, enough to recompute its slack.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Case {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

/// Outcome of one numerical verification.
///
/// `worst_slack` is the minimum of `RHS - LHS` over all trials and
/// `passed` holds iff it is at least `-tolerance`. Skipped checks carry no
/// slack and count as passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub params: BTreeMap<String, f64>,
    pub trials: usize,
    pub worst_slack: Option<f64>,
    pub worst_case: Option<Case>,
    pub tolerance: f64,
    pub passed: bool,
    pub skipped: bool,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn skipped(check_id: &str, params: BTreeMap<String, f64>, reason: impl Into<String>) -> Self {
        Self {
            check_id: check_id.to_string(),
            params,
            trials: 0,
            worst_slack: None,
            worst_case: None,
            tolerance: 0.0,
            passed: true,
            skipped: true,
            notes: vec![reason.into()],
        }
    }

    /// A failed report for a check that could not run.
    pub fn errored(check_id: &str, params: BTreeMap<String, f64>, reason: impl Into<String>) -> Self {
        Self { passed: false, skipped: false, ..Self::skipped(check_id, params, reason) }
    }
}

/// Accumulates trials; the tolerance is `relative · max(1, largest side seen)`.
#[derive(Debug, Clone)]
pub(crate) struct SlackTracker {
    relative: f64,
    scale: f64,
    trials: usize,
    worst: Option<(f64, Case)>,
    notes: Vec<String>,
}

impl SlackTracker {
    pub(crate) fn new(relative: f64) -> Self {
        Self { relative, scale: 1.0, trials: 0, worst: None, notes: Vec::new() }
    }

    /// Records `rhs - lhs` for one trial.
    pub(crate) fn record(&mut self, lhs: f64, rhs: f64, case: impl FnOnce() -> Case) {
        self.trials += 1;
        let slack = if lhs.is_finite() && rhs.is_finite() {
            rhs - lhs
        } else if rhs == f64::INFINITY {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        if lhs.is_finite() {
            self.scale = self.scale.max(lhs.abs());
        }
        if rhs.is_finite() {
            self.scale = self.scale.max(rhs.abs());
        }
        if self.worst.as_ref().is_none_or(|(w, _)| slack < *w) {
            self.worst = Some((slack, case()));
        }
    }

    pub(crate) fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub(crate) fn finish(self, check_id: &str, params: BTreeMap<String, f64>) -> CheckReport {
        let tolerance = self.relative * self.scale;
        let (worst_slack, worst_case) = match self.worst {
            Some((s, c)) => (Some(s), Some(c)),
            None => (None, None),
        };
        let passed = worst_slack.is_none_or(|s| s >= -tolerance);
        CheckReport {
            check_id: check_id.to_string(),
            params,
            trials: self.trials,
            worst_slack,
            worst_case,
            tolerance,
            passed,
            skipped: false,
            notes: self.notes,
        }
    }
}
