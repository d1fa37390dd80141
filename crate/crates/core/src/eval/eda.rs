// SPDX-License-Identifier: Apache-2.0

//! Parse-only adapter for industrial DC/SEC-style reports.
//!
//! Report grammar: one `KEY: value` per line with keys `SEC` (`PASS` or
//! `FAIL`), `WNS`, `TNS`, `AREA`, `POWER`, and any number of
//! `PATH: <name> <slack>` lines. Keys are case-insensitive; blank lines and
//! trailing whitespace are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Artifacts, EvalInput, Evaluator, EvaluatorConfig, EDA};
use crate::model::{EvaluatorResult, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecStatus {
    Pass,
    Fail,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaReport {
    pub sec_status: SecStatus,
    pub wns: Option<f64>,
    pub tns: Option<f64>,
    pub area: Option<f64>,
    pub power: Option<f64>,
    pub critical_paths: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EdaParseError {
    #[error("empty EDA report")]
    Empty,
}

pub fn parse_eda_report(text: &str) -> Result<EdaReport, EdaParseError> {
    if text.trim().is_empty() {
        return Err(EdaParseError::Empty);
    }
    let mut report = EdaReport {
        sec_status: SecStatus::Unknown,
        wns: None,
        tns: None,
        area: None,
        power: None,
        critical_paths: Vec::new(),
        warnings: Vec::new(),
    };
    let mut sec_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            report
                .warnings
                .push(format!("line {}: not a `KEY: value` line", idx + 1));
            continue;
        };
        let key = key.trim().to_ascii_uppercase();
        let value = value.trim();
        let mut number = |slot: &mut Option<f64>, name: &str| match value.parse::<f64>() {
            Ok(v) if v.is_finite() => *slot = Some(v),
            _ => report
                .warnings
                .push(format!("line {}: {name} value `{value}` is not a number", idx + 1)),
        };
        match key.as_str() {
            "SEC" => {
                sec_seen = true;
                report.sec_status = match value.to_ascii_uppercase().as_str() {
                    "PASS" | "PASSED" => SecStatus::Pass,
                    "FAIL" | "FAILED" => SecStatus::Fail,
                    _ => {
                        report
                            .warnings
                            .push(format!("line {}: unknown SEC status `{value}`", idx + 1));
                        SecStatus::Unknown
                    }
                }
            }
            "WNS" => number(&mut report.wns, "WNS"),
            "TNS" => number(&mut report.tns, "TNS"),
            "AREA" => number(&mut report.area, "AREA"),
            "POWER" => number(&mut report.power, "POWER"),
            "PATH" => {
                let mut parts = value.split_whitespace();
                match (parts.next(), parts.next().and_then(|s| s.parse::<f64>().ok())) {
                    (Some(name), Some(slack)) => report.critical_paths.push((name.to_string(), slack)),
                    _ => report
                        .warnings
                        .push(format!("line {}: malformed PATH line", idx + 1)),
                }
            }
            other => report
                .warnings
                .push(format!("line {}: unknown key `{other}`", idx + 1)),
        }
    }
    if !sec_seen {
        report.warnings.push("SEC status missing".into());
    }
    for (name, present) in [
        ("WNS", report.wns.is_some()),
        ("TNS", report.tns.is_some()),
        ("AREA", report.area.is_some()),
        ("POWER", report.power.is_some()),
    ] {
        if !present {
            report.warnings.push(format!("{name} missing"));
        }
    }
    Ok(report)
}

impl EdaReport {
    pub fn to_result(&self) -> EvaluatorResult {
        let outcome = match self.sec_status {
            SecStatus::Pass => Outcome::Passed,
            SecStatus::Fail => Outcome::Mismatch,
            SecStatus::Unknown => Outcome::UnknownFailure,
        };
        let mut r = EvaluatorResult::new(EDA, outcome).with_metric(
            "sec_pass",
            if self.sec_status == SecStatus::Pass { 1.0 } else { 0.0 },
        );
        for (k, v) in [
            ("wns", self.wns),
            ("tns", self.tns),
            ("area", self.area),
            ("power", self.power),
        ] {
            if let Some(v) = v {
                r.insert_metric(k, v);
            }
        }
        for (name, slack) in &self.critical_paths {
            r.insert_metric(format!("path:{name}"), *slack);
        }
        let mut fb = Vec::new();
        if self.sec_status == SecStatus::Fail {
            fb.push("sequential equivalence check failed".to_string());
        }
        fb.extend(self.warnings.iter().cloned());
        r.feedback = fb.join("\n");
        r
    }
}

pub struct EdaEvaluator {
    report_dir: Option<PathBuf>,
}

impl EdaEvaluator {
    pub fn new(config: &EvaluatorConfig) -> Self {
        Self {
            report_dir: config.eda_report_dir.clone(),
        }
    }

    fn locate(&self, input: &EvalInput<'_>) -> Option<PathBuf> {
        let dir = self.report_dir.as_deref()?;
        let task = input.task.task_id.as_str();
        [
            dir.join(task).join(format!("{}.rpt", input.version)),
            dir.join(format!("{task}.rpt")),
        ]
        .into_iter()
        .find(|p| p.is_file())
    }
}

pub fn evaluate_report_file(path: &Path) -> EvaluatorResult {
    match std::fs::read_to_string(path) {
        Ok(text) => match parse_eda_report(&text) {
            Ok(report) => report.to_result(),
            Err(e) => EvaluatorResult::new(EDA, Outcome::UnknownFailure).with_feedback(e.to_string()),
        },
        Err(e) => EvaluatorResult::new(EDA, Outcome::ToolUnavailable)
            .with_feedback(format!("{}: {e}", path.display())),
    }
}

impl Evaluator for EdaEvaluator {
    fn name(&self) -> &str {
        EDA
    }

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult {
        match self.locate(input) {
            Some(path) => {
                artifacts.add_file(EDA, path.clone());
                evaluate_report_file(&path)
            }
            None => EvaluatorResult::new(EDA, Outcome::ToolUnavailable).with_feedback(format!(
                "no EDA report for {} {} (parse-only mode)",
                input.task.task_id, input.version
            )),
        }
    }
}
