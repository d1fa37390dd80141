// SPDX-License-Identifier: Apache-2.0

//! Evaluator-guided RTL search with a reusable skill library.

pub mod eval;
pub mod evolver;
pub mod feedback;
pub mod fsutil;
pub mod gemm;
pub mod hints;
pub mod history;
pub mod llm;
pub mod manifest;
pub mod model;
pub mod report;
pub mod scoring;
pub mod search;
pub mod session;
pub mod skills;
pub mod task;
pub mod validation;

pub use eval::{EvaluatorConfig, EvaluatorPool};
pub use llm::{LlmProvider, PromptKey, ProviderConfig};
pub use manifest::{LoadedManifest, RunManifest};
pub use model::{
    CandidateRecord, DiversityPlan, EquivalenceRisk, EvaluatorResult, Focus, MajorRecord, Outcome, PathSelect,
    RetrievalMode, RtlCandidate, SessionSummary, SkillRef, Strategy, VersionId,
};
pub use scoring::{ScoreConfig, ScoreMode, ScoreResult};
pub use search::{SearchConfig, SearchEngine};
pub use skills::{SkillFile, SkillLibrary};
pub use task::TaskSpec;
pub use validation::{Queue, Thresholds, ValidationJob};
