//! Versioned JSON report with metric values and pass/fail checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::SCHEMA_VERSION;
use super::run::RunResult;
use crate::series::Peak;

/// Acceptance bound of a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Bound {
    Below { limit: f64 },
    Above { limit: f64 },
    Within { lo: f64, hi: f64 },
}

impl Bound {
    /// NaN never passes.
    pub fn admits(self, v: f64) -> bool {
        match self {
            Bound::Below { limit } => v < limit,
            Bound::Above { limit } => v > limit,
            Bound::Within { lo, hi } => (lo..=hi).contains(&v),
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Below { limit } => write!(f, "< {limit:e}"),
            Bound::Above { limit } => write!(f, "> {limit:e}"),
            Bound::Within { lo, hi } => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self { name: name.into(), value, bound, passed: bound.admits(value) }
    }

    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Bound::Below { limit })
    }

    pub fn above(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Bound::Above { limit })
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, value, Bound::Within { lo, hi })
    }

    /// One human-readable line, prefixed PASS or FAIL.
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} {}: {:.6e} ({})", self.name, self.value, self.bound)
    }
}

/// Per-run bookkeeping included in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub model: String,
    pub rho_bar: f64,
    pub delta: f64,
    pub tau_final: f64,
    pub steps: usize,
    pub rejected: usize,
    pub samples: usize,
    pub peaks: Vec<Peak>,
    pub invariant_drift: f64,
    pub norm_drift: f64,
    pub ladder: Option<[i64; 2]>,
    pub widenings: u32,
}

impl RunSummary {
    pub fn of(label: impl Into<String>, r: &RunResult) -> Self {
        Self {
            label: label.into(),
            model: r.config.model.to_string(),
            rho_bar: r.params.rho_bar,
            delta: r.params.delta,
            tau_final: r.outcome.t_final,
            steps: r.outcome.steps,
            rejected: r.outcome.rejected,
            samples: r.series.len(),
            peaks: r.peaks.clone(),
            invariant_drift: r.series.invariant_drift(),
            norm_drift: r.series.norm_drift(),
            ladder: r.ladder.map(|l| [l.n_min(), l.n_max()]),
            widenings: r.widenings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// "run", "preset", "compare" or "validate".
    pub kind: String,
    pub name: String,
    pub runs: Vec<RunSummary>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(kind: &str, name: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            name: name.into(),
            runs: Vec::new(),
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    /// Records the value as a metric and checks it.
    pub fn pin(&mut self, c: Check) {
        self.metric(&c.name.clone(), c.value);
        self.check(c);
    }

    pub fn add_run(&mut self, label: &str, r: &RunResult) {
        self.runs.push(RunSummary::of(label, r));
    }

    /// Folds another report's runs, metrics and checks in, prefixing names.
    pub fn absorb(&mut self, prefix: &str, other: Report) {
        for mut r in other.runs {
            r.label = format!("{prefix}/{}", r.label);
            self.runs.push(r);
        }
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}/{k}"), v);
        }
        for mut c in other.checks {
            c.name = format!("{prefix}/{}", c.name);
            self.check(c);
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_reject_nan() {
        for b in
            [Bound::Below { limit: 1.0 }, Bound::Above { limit: 1.0 }, Bound::Within { lo: 0.0, hi: 1.0 }]
        {
            assert!(!b.admits(f64::NAN));
        }
    }

    #[test]
    fn report_tracks_failures_and_round_trips() {
        let mut r = Report::new("preset", "demo");
        r.pin(Check::below("drift", 1e-12, 1e-8));
        assert!(r.passed);
        r.pin(Check::within("ratio", 2.2, 1.9, 2.1));
        assert!(!r.passed);
        assert_eq!(r.failed().count(), 1);
        assert!(r.checks[1].line().starts_with("FAIL ratio"));
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let text = r.to_json().unwrap();
        assert!(text.contains(r#""op": "within""#));
    }
}
