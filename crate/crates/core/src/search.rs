// SPDX-License-Identifier: Apache-2.0

//! Per-task major/minor search.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{EvalError, EvalInput, EvaluatorSuite};
use crate::feedback::{build_feedback_context, FeedbackContext};
use crate::fsutil;
use crate::history::{HistoryError, HistorySink, TaskRunDir};
use crate::llm::{
    build_cbridge_reference_prompt, build_cbridge_verilog_prompt, build_generation_prompt,
    build_repair_prompt, extract_rtl, parse_skill_proposals, strip_fence, LlmProvider, Prompt,
    PromptKey,
};
use crate::model::{
    now_ms, CandidateRecord, DiversityPlan, Focus, MajorRecord, PathSelect, RtlCandidate, Strategy,
    VersionId,
};
use crate::scoring::{score_results, select_best, NormalizerSource, ScoreConfig, ScoreError, ScoreMode};
use crate::session::{summarize_run, RunSummary};
use crate::skills::{retrieve, RetrievalConfig, SkillFile, SkillLibrary};
use crate::task::TaskSpec;

pub const CANDIDATE_FILE: &str = "candidate.v";
pub const BEST_FILE: &str = "best.v";

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SearchError + '_ {
    move |source| SearchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Major rounds `R`.
    pub rounds: u32,
    /// Minors per round `K`.
    pub minors: u32,
    pub strategy_pool: Vec<Strategy>,
    /// `None` stops early only in `correctness_only` mode.
    pub early_stop: Option<bool>,
    pub promotion_gate: Option<String>,
    pub rng_seed: u64,
    /// Minors generated and evaluated concurrently.
    pub parallelism: usize,
    /// Characters of evaluator feedback kept per failure.
    pub excerpt_cap: usize,
    pub retrieval: RetrievalConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            minors: 5,
            strategy_pool: vec![Strategy::Direct, Strategy::CBridge, Strategy::Repair],
            early_stop: None,
            promotion_gate: None,
            rng_seed: 0,
            parallelism: 1,
            excerpt_cap: 1500,
            retrieval: RetrievalConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.rounds == 0 || self.minors == 0 {
            return Err(SearchError::Config("rounds and minors must be >= 1".into()));
        }
        if self.strategy_pool.is_empty() {
            return Err(SearchError::Config("strategy_pool must not be empty".into()));
        }
        if self.parallelism == 0 {
            return Err(SearchError::Config("parallelism must be >= 1".into()));
        }
        Ok(())
    }

    pub fn early_stop_for(&self, mode: ScoreMode) -> bool {
        self.early_stop.unwrap_or(mode == ScoreMode::CorrectnessOnly)
    }
}

/// Strategy and diversity plan for minor `k` (1-based).
///
/// Strategies go round-robin over the usable pool, then uniformly at
/// random; `repair` is usable only with a baseline. Focus rotates with `k`.
/// A path is selected only when the baseline carries structural feedback.
pub fn sample_attempt(
    pool: &[Strategy],
    k: u32,
    has_baseline: bool,
    structural_feedback: bool,
    rng: &mut impl Rng,
) -> (Strategy, DiversityPlan) {
    let usable: Vec<Strategy> = pool
        .iter()
        .copied()
        .filter(|s| has_baseline || *s != Strategy::Repair)
        .collect();
    let idx = (k as usize).saturating_sub(1);
    let strategy = if usable.is_empty() {
        Strategy::Direct
    } else if idx < usable.len() {
        usable[idx]
    } else {
        usable[rng.gen_range(0..usable.len())]
    };
    let path_select = if structural_feedback {
        PathSelect::ACTIVE[rng.gen_range(0..PathSelect::ACTIVE.len())]
    } else {
        PathSelect::None
    };
    let plan = DiversityPlan {
        path_select,
        focus: Focus::ROTATION[idx % Focus::ROTATION.len()],
    };
    (strategy, plan)
}

/// Orchestrator state between rounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchState {
    pub current_major: Option<CandidateRecord>,
    /// Baseline score used by the improvement test.
    pub major_score: Option<f64>,
    pub feedback: FeedbackContext,
    /// One line per recent non-promoting round, newest last, at most two.
    pub failed_rounds: Vec<String>,
    pub round: u32,
}

impl SearchState {
    /// Feedback shown to the model: the major's context plus the digest.
    fn prompt_feedback(&self) -> FeedbackContext {
        let mut fb = self.feedback.clone();
        for line in &self.failed_rounds {
            fb.push_digest(line.clone());
        }
        fb
    }
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub summary: RunSummary,
    pub final_record: Option<CandidateRecord>,
    pub majors: Vec<MajorRecord>,
    pub minors: Vec<CandidateRecord>,
    pub run_dir: PathBuf,
}

/// Everything a search needs besides the task.
pub struct SearchEngine<'a> {
    pub config: &'a SearchConfig,
    pub score: &'a ScoreConfig,
    pub evaluators: &'a dyn EvaluatorSuite,
    pub provider: &'a dyn LlmProvider,
    pub skills: Option<&'a SkillLibrary>,
}

struct Attempt {
    version: VersionId,
    strategy: Strategy,
    plan: DiversityPlan,
}

fn task_seed(seed: u64, task_id: &str) -> u64 {
    let digest = Sha256::digest(task_id.as_bytes());
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl<'a> SearchEngine<'a> {
    /// Checks configuration that must hold before round 1.
    pub fn preflight(&self, task: &TaskSpec) -> Result<(), SearchError> {
        self.config.validate()?;
        self.score.validate()?;
        task.validate()
            .map_err(|e| SearchError::Config(e.to_string()))?;
        let enabled = self.evaluators.enabled();
        for req in &self.score.required {
            if !enabled.contains(req) {
                return Err(SearchError::Config(format!(
                    "required evaluator `{req}` is not enabled"
                )));
            }
        }
        self.evaluators.check_task(task)?;
        Ok(())
    }

    pub fn run_task(&self, task: &TaskSpec, dir: TaskRunDir) -> Result<TaskOutcome, SearchError> {
        self.preflight(task)?;
        let sink = HistorySink::open(dir)?;
        let dir = sink.dir().clone();
        let write = |path: PathBuf, text: String| {
            fsutil::write_atomic(&path, text.as_bytes()).map_err(io_err(&path))
        };
        write(dir.task_file(), task.to_toml())?;
        write(dir.score_file(), self.score.to_toml())?;
        if let Some(text) = self.evaluators.config_toml() {
            write(dir.evaluator_file(), text)?;
        }

        let mut score_cfg = self.score.clone();
        let mut state = SearchState::default();
        let mut majors = Vec::new();
        let mut minors = Vec::new();
        let seed = task_seed(self.config.rng_seed, &task.task_id);
        for _ in 0..self.config.rounds {
            let (next, major, logged) = self.run_major_round(task, &state, &mut score_cfg, &sink, seed)?;
            state = next;
            sink.record_major(&major)?;
            majors.push(major);
            minors.extend(logged);
        }
        let final_record = state.current_major.clone();
        if let Some(rec) = &final_record {
            write(dir.root.join(BEST_FILE), rec.candidate.rtl_text.clone())?;
        }
        let summary = summarize_run(&task.task_id, &minors, &majors);
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write(dir.summary_file(), json + "\n")?;
        Ok(TaskOutcome {
            summary,
            final_record,
            majors,
            minors,
            run_dir: dir.root.clone(),
        })
    }

    /// One major round; returns the next state, its record, and the logged
    /// minors in `k` order.
    pub fn run_major_round(
        &self,
        task: &TaskSpec,
        state: &SearchState,
        score_cfg: &mut ScoreConfig,
        sink: &HistorySink,
        seed: u64,
    ) -> Result<(SearchState, MajorRecord, Vec<CandidateRecord>), SearchError> {
        let major = state.round + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(u64::from(major).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let has_baseline = state.current_major.is_some();
        let attempts: Vec<Attempt> = (1..=self.config.minors)
            .map(|k| {
                let (strategy, plan) = sample_attempt(
                    &self.config.strategy_pool,
                    k,
                    has_baseline,
                    state.feedback.structural_feedback,
                    &mut rng,
                );
                Attempt {
                    version: VersionId::new(major, k),
                    strategy,
                    plan,
                }
            })
            .collect();
        let early_stop = self.config.early_stop_for(score_cfg.mode);
        let prompt_feedback = state.prompt_feedback();
        let mut logged: Vec<CandidateRecord> = Vec::new();
        'batches: for batch in attempts.chunks(self.config.parallelism) {
            let results: Vec<Result<CandidateRecord, SearchError>> = if batch.len() == 1 {
                vec![self.run_minor(task, state, &prompt_feedback, score_cfg, &batch[0], sink)]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = batch
                        .iter()
                        .map(|a| {
                            let cfg = &*score_cfg;
                            let fb = &prompt_feedback;
                            s.spawn(move || self.run_minor(task, state, fb, cfg, a, sink))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("minor worker panicked"))
                        .collect()
                })
            };
            let mut stop_at = None;
            for (i, r) in results.into_iter().enumerate() {
                let record = r?;
                if stop_at.is_some() {
                    // computed concurrently past the early stop; not part of the round
                    let _ = std::fs::remove_dir_all(sink.dir().artifacts(record.version()));
                    continue;
                }
                sink.record_minor(&record)?;
                let eligible = record.eligible;
                logged.push(record);
                if early_stop && eligible {
                    stop_at = Some(i);
                }
            }
            if stop_at.is_some() {
                break 'batches;
            }
        }

        let mut next = state.clone();
        next.round = major;
        let selected = select_best(&logged).map(|i| &logged[i]);
        let improve = match (selected, state.major_score) {
            (Some(sel), Some(base)) => sel.score < base,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let gate_result = match (selected, &self.config.promotion_gate) {
            (Some(sel), Some(gate)) => {
                let scratch = sink.dir().artifacts(sel.version()).join("gate");
                Some(self.evaluators.run_gate(
                    gate,
                    &EvalInput {
                        rtl: &sel.candidate.rtl_text,
                        task,
                        version: sel.version(),
                        scratch: &scratch,
                    },
                )?)
            }
            _ => None,
        };
        let gate_ok = gate_result.as_ref().map_or(true, |g| g.passed);
        let promoted = selected.is_some() && improve && gate_ok;
        if let (true, Some(sel)) = (promoted, selected) {
            let mut rec = sel.clone();
            if state.current_major.is_none() && score_cfg.normalizer_source == NormalizerSource::FirstMajor {
                *score_cfg = score_cfg.with_reference_normalizers(&rec.merged_metrics());
                let rescored = score_results(&rec.results, None, score_cfg)?;
                rec.score = rescored.score;
            }
            next.major_score = Some(self.baseline_score(&rec, score_cfg)?);
            next.feedback = build_feedback_context(&rec, self.config.excerpt_cap);
            next.current_major = Some(rec);
        } else {
            let why = match (selected, improve, gate_ok) {
                (None, _, _) => "no eligible minor".to_string(),
                (Some(sel), false, _) => format!("best {} score {} did not improve", sel.version(), sel.score),
                (Some(sel), true, _) => format!("best {} failed the promotion gate", sel.version()),
            };
            next.failed_rounds.push(format!("round {major}: {why}"));
            let excess = next.failed_rounds.len().saturating_sub(2);
            next.failed_rounds.drain(..excess);
        }
        let record = MajorRecord {
            task_id: task.task_id.clone(),
            major,
            selected_minor: selected.map(|s| s.version().minor),
            promoted,
            score: selected.map(|s| s.score).or(state.major_score),
            previous_score: state.major_score,
            baseline_record: next.current_major.clone(),
            gate_result,
            minors_evaluated: logged.len() as u32,
            artifact: next
                .current_major
                .as_ref()
                .map(|r| sink.dir().artifacts(r.version()).join(CANDIDATE_FILE)),
            timestamp_ms: now_ms(),
        };
        Ok((next, record, logged))
    }

    /// Score of a new major as seen by later rounds; EDA deltas are taken
    /// against the major itself.
    fn baseline_score(&self, rec: &CandidateRecord, cfg: &ScoreConfig) -> Result<f64, SearchError> {
        Ok(match cfg.mode {
            ScoreMode::Eda => score_results(&rec.results, Some(&rec.results), cfg)?.score,
            _ => rec.score,
        })
    }

    fn retrieve_skills(&self, task: &TaskSpec, feedback: &FeedbackContext, plan: &DiversityPlan) -> Vec<crate::skills::Retrieved> {
        let Some(lib) = self.skills else {
            return Vec::new();
        };
        let text = format!("{} {} {}", task.task_id, task.description, task.tags.join(" "));
        retrieve(lib, &text, &feedback.hint_tags(), plan, &self.config.retrieval)
    }

    fn run_minor(
        &self,
        task: &TaskSpec,
        state: &SearchState,
        feedback: &FeedbackContext,
        score_cfg: &ScoreConfig,
        attempt: &Attempt,
        sink: &HistorySink,
    ) -> Result<CandidateRecord, SearchError> {
        let version = attempt.version;
        let art = sink.dir().artifacts(version);
        std::fs::create_dir_all(&art).map_err(io_err(&art))?;
        let retrieved = self.retrieve_skills(task, feedback, &attempt.plan);
        let skills: Vec<SkillFile> = retrieved.iter().map(|r| r.skill.clone()).collect();
        let mut candidate = RtlCandidate {
            version,
            rtl_text: String::new(),
            strategy: attempt.strategy,
            plan: attempt.plan,
            skill_refs: retrieved.iter().map(|r| r.as_ref()).collect(),
            parent: None,
            downgraded_from: None,
            generation_error: None,
            proposed_skills: Vec::new(),
        };
        let label = version.to_string();
        let key = PromptKey::new(task.task_id.clone(), label.clone());
        let mut transcript = String::new();
        let raw: Result<String, String> = (|| {
            let prompt: Prompt = match attempt.strategy {
                Strategy::Direct => build_generation_prompt(task, &skills, &attempt.plan),
                Strategy::Repair => {
                    let parent = state.current_major.as_ref().expect("repair requires a baseline");
                    candidate.parent = Some(parent.version());
                    build_repair_prompt(task, &parent.candidate.rtl_text, feedback, &skills, &attempt.plan)
                }
                Strategy::CBridge => {
                    let ref_prompt = build_cbridge_reference_prompt(task, &skills);
                    let ref_key = PromptKey::new(task.task_id.clone(), format!("{label}.cref"));
                    transcript.push_str(&format!("=== reference prompt\n{}\n", ref_prompt.user_text));
                    let reference = self
                        .provider
                        .generate(&ref_key, &ref_prompt)
                        .map_err(|e| e.to_string())?;
                    let reference = strip_fence(&reference);
                    transcript.push_str(&format!("=== reference\n{reference}\n"));
                    if reference.trim().is_empty() {
                        log::warn!("{}/{label}: empty C reference, falling back to direct", task.task_id);
                        candidate.strategy = Strategy::Direct;
                        candidate.downgraded_from = Some(Strategy::CBridge);
                        build_generation_prompt(task, &skills, &attempt.plan)
                    } else {
                        build_cbridge_verilog_prompt(task, &reference, &skills, &attempt.plan)
                    }
                }
            };
            transcript.push_str(&format!("=== system\n{}\n=== prompt\n{}\n", prompt.system_text, prompt.user_text));
            let text = self.provider.generate(&key, &prompt).map_err(|e| e.to_string())?;
            transcript.push_str(&format!("=== response\n{text}\n"));
            Ok(text)
        })();
        let transcript_path = art.join("transcript.txt");
        fsutil::write_atomic(&transcript_path, transcript.as_bytes()).map_err(io_err(&transcript_path))?;
        let rtl = raw.and_then(|text| {
            candidate.proposed_skills = parse_skill_proposals(&text);
            extract_rtl(&text, &task.module_header).map_err(|e| e.to_string())
        });
        let (results, artifacts, wall) = match rtl {
            Ok(rtl) => {
                candidate.rtl_text = rtl;
                let path = art.join(CANDIDATE_FILE);
                fsutil::write_atomic(&path, candidate.rtl_text.as_bytes()).map_err(io_err(&path))?;
                let out = self.evaluators.run_pool(&EvalInput {
                    rtl: &candidate.rtl_text,
                    task,
                    version,
                    scratch: &art,
                });
                (out.results, out.artifacts.files, out.wall_time_ms)
            }
            Err(msg) => {
                candidate.generation_error = Some(msg.clone());
                (self.evaluators.generation_failure(&msg), Default::default(), Default::default())
            }
        };
        let baseline = state.current_major.as_ref().map(|r| r.results.as_slice());
        let scored = score_results(&results, baseline, score_cfg)?;
        Ok(CandidateRecord {
            task_id: task.task_id.clone(),
            candidate,
            results,
            score: scored.score,
            eligible: scored.eligible,
            baseline: state.current_major.as_ref().map(|r| r.version()),
            artifacts,
            wall_time_ms: wall,
            timestamp_ms: now_ms(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_round_never_samples_repair() {
        let pool = [Strategy::Direct, Strategy::CBridge, Strategy::Repair];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 1..=50 {
            let (s, _) = sample_attempt(&pool, k, false, false, &mut rng);
            assert_ne!(s, Strategy::Repair);
        }
    }

    #[test]
    fn focus_rotates_and_path_needs_feedback() {
        let pool = [Strategy::Direct];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let focus: Vec<Focus> = (1..=3)
            .map(|k| sample_attempt(&pool, k, true, false, &mut rng).1.focus)
            .collect();
        assert_eq!(focus, vec![Focus::Combinational, Focus::Sequential, Focus::Mixed]);
        for k in 1..=5 {
            assert_eq!(sample_attempt(&pool, k, true, false, &mut rng).1.path_select, PathSelect::None);
            assert_ne!(sample_attempt(&pool, k, true, true, &mut rng).1.path_select, PathSelect::None);
        }
    }

    #[test]
    fn round_robin_precedes_random() {
        let pool = [Strategy::Direct, Strategy::CBridge, Strategy::Repair];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let first: Vec<Strategy> = (1..=3)
            .map(|k| sample_attempt(&pool, k, true, false, &mut rng).0)
            .collect();
        assert_eq!(first, pool.to_vec());
    }

    #[test]
    fn sampling_is_deterministic() {
        let pool = [Strategy::Direct, Strategy::CBridge, Strategy::Repair];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (1..=10)
                .map(|k| sample_attempt(&pool, k, true, true, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }
}
