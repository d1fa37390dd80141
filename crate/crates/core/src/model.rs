// SPDX-License-Identifier: Apache-2.0

//! Shared data model: tasks, versioned candidates, evaluator records and
//! session summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Identifies a minor candidate inside a run: `major` is the round index,
/// `minor` the 1-based attempt index within that round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VersionId {
    pub major: u32,
    pub minor: u32,
}

impl VersionId {
    pub fn new(major: u32, minor: u32) -> Self {
        Self { major, minor }
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    CBridge,
    Repair,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::CBridge => "c_bridge",
            Strategy::Repair => "repair",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "c_bridge" => Ok(Strategy::CBridge),
            "repair" => Ok(Strategy::Repair),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSelect {
    TimingCritical,
    StructurallyComplex,
    RandomExploration,
    None,
}

impl PathSelect {
    pub const ACTIVE: [PathSelect; 3] = [
        PathSelect::TimingCritical,
        PathSelect::StructurallyComplex,
        PathSelect::RandomExploration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PathSelect::TimingCritical => "timing_critical",
            PathSelect::StructurallyComplex => "structurally_complex",
            PathSelect::RandomExploration => "random_exploration",
            PathSelect::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Combinational,
    Sequential,
    Mixed,
}

impl Focus {
    pub const ROTATION: [Focus; 3] = [Focus::Combinational, Focus::Sequential, Focus::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Focus::Combinational => "combinational",
            Focus::Sequential => "sequential",
            Focus::Mixed => "mixed",
        }
    }
}

/// The structural half of a minor attempt's diversity: where to look and
/// what kind of rewrite to favour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiversityPlan {
    pub path_select: PathSelect,
    pub focus: Focus,
}

impl DiversityPlan {
    /// Tags used for skill retrieval.
    pub fn tags(&self) -> Vec<String> {
        let mut tags = vec![self.focus.as_str().to_string()];
        if self.path_select != PathSelect::None {
            tags.push(self.path_select.as_str().to_string());
            // "timing_critical" -> "timing", "critical"
            tags.extend(self.path_select.as_str().split('_').map(str::to_string));
        }
        tags
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Static,
    Retrieved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceRisk {
    #[default]
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRef {
    pub skill_id: String,
    pub mode: RetrievalMode,
    #[serde(default)]
    pub risk: EquivalenceRisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Passed,
    Mismatch,
    CompileError,
    SyntaxError,
    Timeout,
    UnknownFailure,
    ToolUnavailable,
}

impl Outcome {
    pub const ALL: [Outcome; 7] = [
        Outcome::Passed,
        Outcome::Mismatch,
        Outcome::CompileError,
        Outcome::SyntaxError,
        Outcome::Timeout,
        Outcome::UnknownFailure,
        Outcome::ToolUnavailable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Passed => "passed",
            Outcome::Mismatch => "mismatch",
            Outcome::CompileError => "compile_error",
            Outcome::SyntaxError => "syntax_error",
            Outcome::Timeout => "timeout",
            Outcome::UnknownFailure => "unknown_failure",
            Outcome::ToolUnavailable => "tool_unavailable",
        }
    }

    /// A genuine failure of the candidate, as opposed to success or an
    /// absent tool.
    pub fn is_failure(self) -> bool {
        !matches!(self, Outcome::Passed | Outcome::ToolUnavailable)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown outcome `{s}`"))
    }
}

/// Output of one evaluator on one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorResult {
    pub evaluator: String,
    pub passed: bool,
    pub outcome: Outcome,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub feedback: String,
}

impl EvaluatorResult {
    pub fn new(evaluator: impl Into<String>, outcome: Outcome) -> Self {
        Self {
            evaluator: evaluator.into(),
            passed: outcome == Outcome::Passed,
            outcome,
            metrics: BTreeMap::new(),
            feedback: String::new(),
        }
    }

    pub fn with_feedback(mut self, feedback: impl Into<String>) -> Self {
        self.feedback = feedback.into();
        self
    }

    pub fn with_metric(mut self, key: impl Into<String>, value: f64) -> Self {
        self.insert_metric(key, value);
        self
    }

    /// Non-finite values are dropped so records stay serializable.
    pub fn insert_metric(&mut self, key: impl Into<String>, value: f64) {
        if value.is_finite() {
            self.metrics.insert(key.into(), value);
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtlCandidate {
    pub version: VersionId,
    pub rtl_text: String,
    pub strategy: Strategy,
    pub plan: DiversityPlan,
    #[serde(default)]
    pub skill_refs: Vec<SkillRef>,
    #[serde(default)]
    pub parent: Option<VersionId>,
    /// Set when a c_bridge attempt fell back to direct generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downgraded_from: Option<Strategy>,
    /// Generation or extraction failure; `rtl_text` is empty when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_error: Option<String>,
    /// Skill ids proposed by the model output (`SKILL-PROPOSAL: <id>`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proposed_skills: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub task_id: String,
    pub candidate: RtlCandidate,
    pub results: Vec<EvaluatorResult>,
    pub score: f64,
    pub eligible: bool,
    /// Major version the score was computed against (EDA deltas).
    #[serde(default)]
    pub baseline: Option<VersionId>,
    #[serde(default)]
    pub artifacts: BTreeMap<String, Vec<PathBuf>>,
    #[serde(default)]
    pub wall_time_ms: BTreeMap<String, u64>,
    #[serde(default)]
    pub timestamp_ms: u64,
}

impl CandidateRecord {
    pub fn version(&self) -> VersionId {
        self.candidate.version
    }

    pub fn result(&self, evaluator: &str) -> Option<&EvaluatorResult> {
        self.results.iter().find(|r| r.evaluator == evaluator)
    }

    /// Union of all evaluator metric dictionaries; later evaluators win on
    /// key collisions.
    pub fn merged_metrics(&self) -> BTreeMap<String, f64> {
        let mut merged = BTreeMap::new();
        for r in &self.results {
            merged.extend(r.metrics.iter().map(|(k, v)| (k.clone(), *v)));
        }
        merged
    }

    /// Correctness pass used for session statistics: the functional evaluator
    /// passed and, when an EDA report is present, SEC passed too.
    pub fn correctness_pass(&self) -> bool {
        let functional = self
            .result(crate::eval::FUNCTIONAL)
            .map(|r| r.passed)
            .unwrap_or(false);
        let sec = self.result(crate::eval::EDA).map(|r| r.passed).unwrap_or(true);
        functional && sec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorRecord {
    pub task_id: String,
    pub major: u32,
    pub selected_minor: Option<u32>,
    pub promoted: bool,
    /// Score of the selected minor, or of the carried baseline when nothing
    /// was selected.
    pub score: Option<f64>,
    /// Baseline score the selection was compared against.
    pub previous_score: Option<f64>,
    /// Major baseline after this round.
    pub baseline_record: Option<CandidateRecord>,
    pub gate_result: Option<EvaluatorResult>,
    pub minors_evaluated: u32,
    #[serde(default)]
    pub artifact: Option<PathBuf>,
    #[serde(default)]
    pub timestamp_ms: u64,
}

/// Compact per-run summary consumed by the skill evolver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub task_id: String,
    pub referenced_skills: BTreeSet<String>,
    #[serde(default)]
    pub proposed_skills: BTreeSet<String>,
    pub pass_count: u32,
    pub promote_count: u32,
    pub record_count: u32,
    pub avg_score: f64,
    pub score_deltas: Vec<f64>,
    pub strategy: Strategy,
    pub path_select: PathSelect,
    pub focus: Focus,
    #[serde(default)]
    pub strategy_counts: BTreeMap<Strategy, u32>,
    #[serde(default)]
    pub focus_counts: BTreeMap<Focus, u32>,
    #[serde(default)]
    pub hint_tags: BTreeMap<String, u32>,
    pub equivalence_risk: EquivalenceRisk,
    /// Task directory the session was read from; replay cases point here.
    #[serde(default)]
    pub run_dir: Option<PathBuf>,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
