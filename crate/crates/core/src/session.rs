// SPDX-License-Identifier: Apache-2.0

//! Session summaries for the skill evolver and per-task run summaries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::eval::{functional::embedded_hint_tags, FUNCTIONAL};
use crate::hints;
use crate::model::{
    CandidateRecord, EquivalenceRisk, Focus, MajorRecord, Outcome, PathSelect, SessionSummary,
    Strategy,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("session `{0}` has no candidate records")]
    Empty(String),
    #[error("records span several tasks: {0} and {1}")]
    MixedTasks(String, String),
}

/// Most frequent key; ties go to the smallest key.
fn dominant<K: Ord + Copy>(counts: &BTreeMap<K, u32>) -> Option<K> {
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(k, _)| *k)
}

/// Summarizes one run of one task.
pub fn summarize_session(
    session_id: &str,
    records: &[CandidateRecord],
    majors: &[MajorRecord],
) -> Result<SessionSummary, SessionError> {
    let first = records
        .first()
        .ok_or_else(|| SessionError::Empty(session_id.to_string()))?;
    if let Some(other) = records.iter().find(|r| r.task_id != first.task_id) {
        return Err(SessionError::MixedTasks(first.task_id.clone(), other.task_id.clone()));
    }
    let mut referenced = BTreeSet::new();
    let mut proposed = BTreeSet::new();
    let mut strategy_counts = BTreeMap::new();
    let mut focus_counts = BTreeMap::new();
    let mut path_counts: BTreeMap<PathSelect, u32> = BTreeMap::new();
    let mut hint_tags: BTreeMap<String, u32> = BTreeMap::new();
    let mut risk = EquivalenceRisk::Low;
    for r in records {
        let c = &r.candidate;
        for s in &c.skill_refs {
            referenced.insert(s.skill_id.clone());
            if s.risk == EquivalenceRisk::High {
                risk = EquivalenceRisk::High;
            }
        }
        proposed.extend(c.proposed_skills.iter().cloned());
        *strategy_counts.entry(c.strategy).or_insert(0) += 1;
        *focus_counts.entry(c.plan.focus).or_insert(0) += 1;
        *path_counts.entry(c.plan.path_select).or_insert(0) += 1;
        for res in r.results.iter().filter(|x| x.outcome.is_failure()) {
            let mut tags = embedded_hint_tags(&res.feedback);
            if tags.is_empty() {
                tags = hints::derive_tags(&res.evaluator, res.outcome, &res.feedback);
            }
            for t in tags {
                *hint_tags.entry(t).or_insert(0) += 1;
            }
        }
    }
    let pass_count = records.iter().filter(|r| r.correctness_pass()).count() as u32;
    let promote_count = majors.iter().filter(|m| m.promoted).count() as u32;
    let avg_score = records.iter().map(|r| r.score).sum::<f64>() / records.len() as f64;
    let score_deltas = majors
        .iter()
        .filter(|m| m.promoted)
        .filter_map(|m| match (m.score, m.previous_score) {
            (Some(new), Some(old)) => Some(new - old),
            _ => None,
        })
        .filter(|d| d.is_finite())
        .collect();
    Ok(SessionSummary {
        session_id: session_id.to_string(),
        task_id: first.task_id.clone(),
        referenced_skills: referenced,
        proposed_skills: proposed,
        pass_count,
        promote_count,
        record_count: records.len() as u32,
        avg_score,
        score_deltas,
        strategy: dominant(&strategy_counts).unwrap_or(Strategy::Direct),
        path_select: dominant(&path_counts).unwrap_or(PathSelect::None),
        focus: dominant(&focus_counts).unwrap_or(Focus::Combinational),
        strategy_counts,
        focus_counts,
        hint_tags,
        equivalence_risk: risk,
        run_dir: None,
    })
}

/// Per-task summary with the column semantics of the result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task_id: String,
    /// A promoted final major exists and passes correctness.
    pub final_success: bool,
    /// Best `1 - mismatch ratio` over all minors; a functional pass is 1.
    pub best_functional_score: f64,
    /// Gate-satisfying selections over rounds with a selection.
    pub promotion_pass: f64,
    /// Minors whose functional outcome is not a compile or syntax error.
    pub compile_pass: f64,
    pub promoted_major_count: u32,
    pub rounds: u32,
    pub minors_evaluated: u32,
    pub final_version: Option<String>,
    pub final_score: Option<f64>,
}

/// Functional quality of one minor in `[0, 1]`.
pub fn functional_score(record: &CandidateRecord) -> f64 {
    let Some(r) = record.result(FUNCTIONAL) else {
        return 0.0;
    };
    match r.outcome {
        Outcome::Passed => 1.0,
        Outcome::Mismatch => match (r.metric("mismatch_count"), r.metric("total_samples")) {
            (Some(m), Some(n)) if n > 0.0 => (1.0 - m / n).clamp(0.0, 1.0),
            _ => 0.0,
        },
        _ => 0.0,
    }
}

fn compiled(record: &CandidateRecord) -> bool {
    !record
        .result(FUNCTIONAL)
        .is_some_and(|r| matches!(r.outcome, Outcome::CompileError | Outcome::SyntaxError))
}

pub fn summarize_run(task_id: &str, minors: &[CandidateRecord], majors: &[MajorRecord]) -> RunSummary {
    let final_major = majors.iter().rev().find_map(|m| m.baseline_record.as_ref());
    let selections: Vec<&MajorRecord> = majors.iter().filter(|m| m.selected_minor.is_some()).collect();
    let gate_ok = selections
        .iter()
        .filter(|m| m.gate_result.as_ref().map_or(true, |g| g.passed))
        .count();
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    RunSummary {
        task_id: task_id.to_string(),
        final_success: final_major.is_some_and(|r| r.correctness_pass()),
        best_functional_score: minors.iter().map(functional_score).fold(0.0, f64::max),
        promotion_pass: ratio(gate_ok, selections.len()),
        compile_pass: ratio(minors.iter().filter(|r| compiled(r)).count(), minors.len()),
        promoted_major_count: majors.iter().filter(|m| m.promoted).count() as u32,
        rounds: majors.len() as u32,
        minors_evaluated: minors.len() as u32,
        final_version: final_major.map(|r| r.version().to_string()),
        final_score: final_major.map(|r| r.score),
    }
}
