// SPDX-License-Identifier: Apache-2.0

//! Structured feedback context carried between major rounds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::eval::{functional::embedded_hint_tags, EDA, SYNTHESIS, TIMING};
use crate::hints;
use crate::model::{CandidateRecord, Outcome};

pub const TRUNCATION_MARKER: &str = "[truncated]";

/// One failed evaluator of the baseline record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub evaluator: String,
    pub outcome: Outcome,
    pub mismatch_ratio: Option<f64>,
    pub excerpt: String,
    pub hint_tags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackContext {
    pub failures: Vec<FailureSummary>,
    pub metrics: BTreeMap<String, f64>,
    /// Worst reported timing paths, `name slack`.
    pub timing_paths: Vec<String>,
    /// Most frequent cell types, `type count`.
    pub hotspots: Vec<String>,
    /// Whether synthesis, timing, or EDA feedback exists for path selection.
    pub structural_feedback: bool,
    /// Rolling summary of the most recent non-promoting rounds.
    pub digest: Vec<String>,
}

/// Keeps the first `cap` characters, marking the cut.
pub fn truncate(text: &str, cap: usize) -> String {
    if text.chars().count() <= cap {
        return text.to_string();
    }
    let cut: String = text.chars().take(cap).collect();
    format!("{cut}\n{TRUNCATION_MARKER}")
}

pub fn build_feedback_context(record: &CandidateRecord, excerpt_cap: usize) -> FeedbackContext {
    let mut failures = Vec::new();
    for r in &record.results {
        if !r.outcome.is_failure() {
            continue;
        }
        let mut tags: BTreeSet<String> = embedded_hint_tags(&r.feedback).into_iter().collect();
        if tags.is_empty() {
            tags.extend(hints::derive_tags(&r.evaluator, r.outcome, &r.feedback));
        }
        let excerpt: String = r
            .feedback
            .lines()
            .filter(|l| !l.starts_with("[hint:"))
            .collect::<Vec<_>>()
            .join("\n");
        let mismatch_ratio = match (r.metric("mismatch_count"), r.metric("total_samples")) {
            (Some(m), Some(n)) if n > 0.0 => Some(m / n),
            _ => None,
        };
        failures.push(FailureSummary {
            evaluator: r.evaluator.clone(),
            outcome: r.outcome,
            mismatch_ratio,
            excerpt: truncate(excerpt.trim(), excerpt_cap),
            hint_tags: tags.into_iter().collect(),
        });
    }
    let metrics = record.merged_metrics();
    let mut paths: Vec<(String, f64)> = metrics
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("path:").map(|n| (n.to_string(), *v)))
        .collect();
    paths.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut timing_paths: Vec<String> = paths
        .into_iter()
        .take(3)
        .map(|(n, s)| format!("{n} {s}"))
        .collect();
    if let Some(d) = metrics.get("abc_delay_proxy") {
        timing_paths.push(format!("abc_delay_proxy {d}"));
    }
    let mut cells: Vec<(String, f64)> = metrics
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("cell_type:").map(|t| (t.to_string(), *v)))
        .collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let hotspots = cells
        .into_iter()
        .take(3)
        .map(|(t, c)| format!("{t} {c}"))
        .collect();
    let structural_feedback = record
        .results
        .iter()
        .any(|r| [SYNTHESIS, TIMING, EDA].contains(&r.evaluator.as_str()) && r.outcome != Outcome::ToolUnavailable);
    FeedbackContext {
        failures,
        metrics,
        timing_paths,
        hotspots,
        structural_feedback,
        digest: Vec::new(),
    }
}

impl FeedbackContext {
    pub fn hint_tags(&self) -> Vec<String> {
        let tags: BTreeSet<String> = self
            .failures
            .iter()
            .flat_map(|f| f.hint_tags.iter().cloned())
            .collect();
        tags.into_iter().collect()
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Adds a one-line summary of a non-promoting round, keeping the last two.
    pub fn push_digest(&mut self, line: String) {
        self.digest.push(line);
        let excess = self.digest.len().saturating_sub(2);
        self.digest.drain(..excess);
    }

    /// Prompt text, capped at `cap` characters.
    pub fn render(&self, cap: usize) -> String {
        let mut out = Vec::new();
        for f in &self.failures {
            let mut head = format!("- {}: {}", f.evaluator, f.outcome);
            if let Some(r) = f.mismatch_ratio {
                head.push_str(&format!(" (mismatch ratio {r:.3})"));
            }
            out.push(head);
            if !f.excerpt.is_empty() {
                out.extend(f.excerpt.lines().map(|l| format!("    {l}")));
            }
            for tag in &f.hint_tags {
                if let Some(text) = hints::hint_text(tag) {
                    out.push(format!("  hint ({tag}): {text}"));
                }
            }
        }
        let shown: Vec<String> = ["cell_count", "wire_count", "wire_bits", "abc_delay_proxy", "downstream_score", "wns", "tns", "area"]
            .iter()
            .filter_map(|k| self.metrics.get(*k).map(|v| format!("{k}={v}")))
            .collect();
        if !shown.is_empty() {
            out.push(format!("- metrics: {}", shown.join(", ")));
        }
        if !self.timing_paths.is_empty() {
            out.push(format!("- timing paths: {}", self.timing_paths.join("; ")));
        }
        if !self.hotspots.is_empty() {
            out.push(format!("- cell hotspots: {}", self.hotspots.join("; ")));
        }
        for d in &self.digest {
            out.push(format!("- earlier round: {d}"));
        }
        if out.is_empty() {
            out.push("- no evaluator failures".into());
        }
        truncate(&out.join("\n"), cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_is_marked_and_deterministic() {
        let t = truncate("abcdefgh", 3);
        assert_eq!(t, "abc\n[truncated]");
        assert_eq!(truncate("abc", 3), "abc");
    }

    #[test]
    fn digest_keeps_last_two() {
        let mut c = FeedbackContext::default();
        for i in 0..4 {
            c.push_digest(format!("r{i}"));
        }
        assert_eq!(c.digest, vec!["r2", "r3"]);
    }
}
