// SPDX-License-Identifier: Apache-2.0

//! File-based validation queue, replay workers, and the publisher.
//!
//! Layout: `<queue>/<job_id>/job.doc`, `status.doc`, one
//! `result.<worker_id>.doc` per worker, and `claim.lock` while a worker
//! holds the job.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{EvalInput, EvaluatorConfig, EvaluatorPool, EvaluatorSuite, FUNCTIONAL};
use crate::fsutil::{self, LockFile};
use crate::llm::{build_generation_prompt, extract_rtl, LlmProvider, PromptKey};
use crate::model::{now_ms, DiversityPlan, Focus, Outcome, PathSelect, VersionId};
use crate::scoring::{score_open_results, ScoreConfig, ScoreMode};
use crate::skills::{write_skill, PublicationMode, SkillError, SkillFile, SkillLibrary, WriteOutcome};
use crate::task::TaskSpec;

pub const JOB_FILE: &str = "job.doc";
pub const STATUS_FILE: &str = "status.doc";
pub const CLAIM_FILE: &str = "claim.lock";
pub const MAX_REPLAY_CASES: usize = 8;
pub const CASES_PER_WORKER: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("job `{0}` already exists")]
    Duplicate(String),
    #[error("job `{0}` not found")]
    NotFound(String),
    #[error("worker `{worker}` already judged job `{job}`")]
    DuplicateResult { job: String, worker: String },
    #[error("queue {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("decoding {path}: {message}")]
    Decode { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ValidationError + '_ {
    move |source| ValidationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_results: usize,
    pub min_approvals: usize,
    pub min_mean_quality: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_results: 2,
            min_approvals: 2,
            min_mean_quality: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    CreateSkill,
    ImproveSkill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Published,
    Rejected,
}

/// A stored task to regenerate: the task document and the evaluator
/// configuration it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCase {
    pub case_id: String,
    pub task_file: PathBuf,
    #[serde(default)]
    pub evaluator_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationJob {
    pub job_id: String,
    pub skill_id: String,
    pub kind: JobKind,
    /// Rendered current skill; empty for a new skill.
    pub baseline_text: String,
    pub candidate_text: String,
    pub replay_cases: Vec<ReplayCase>,
    pub thresholds: Thresholds,
    #[serde(default)]
    pub created_ms: u64,
}

impl ValidationJob {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let bad = |m: String| Err(ValidationError::InvalidJob(m));
        if self.job_id.is_empty()
            || !self
                .job_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            || self.job_id.starts_with('.')
        {
            return bad(format!("job id `{}` is not a plain file name", self.job_id));
        }
        let n = self.replay_cases.len();
        if !(1..=MAX_REPLAY_CASES).contains(&n) {
            return bad(format!("{n} replay cases; expected 1..={MAX_REPLAY_CASES}"));
        }
        if SkillFile::parse(&self.candidate_text).is_err() {
            return bad("candidate text is not a valid skill file".into());
        }
        if (self.kind == JobKind::CreateSkill) != self.baseline_text.trim().is_empty() {
            return bad("baseline text must be empty exactly for create jobs".into());
        }
        let t = &self.thresholds;
        if t.min_results == 0 || t.min_approvals == 0 || !(0.0..=1.0).contains(&t.min_mean_quality) {
            return bad("thresholds out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorResult {
    pub worker_id: String,
    pub approved: bool,
    pub candidate_quality: f64,
    pub baseline_quality: f64,
    pub cases_replayed: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusDoc {
    pub status: JobStatus,
    #[serde(default)]
    pub reason: String,
    #[serde(default)]
    pub updated_ms: u64,
}

/// Approval rule for one worker's replay means.
pub fn approve(candidate_quality: f64, baseline_quality: f64, t: &Thresholds) -> bool {
    candidate_quality >= baseline_quality && candidate_quality > t.min_mean_quality
}

/// Publisher decision over persisted results.
pub fn judge(results: &[ValidatorResult], t: &Thresholds) -> (JobStatus, String) {
    if results.len() < t.min_results {
        return (
            JobStatus::Pending,
            format!("{} of {} results", results.len(), t.min_results),
        );
    }
    let approvals = results.iter().filter(|r| r.approved).count();
    let mean = results.iter().map(|r| r.candidate_quality).sum::<f64>() / results.len() as f64;
    if approvals < t.min_approvals {
        return (
            JobStatus::Rejected,
            format!("{approvals} approvals < {}", t.min_approvals),
        );
    }
    if mean < t.min_mean_quality {
        return (
            JobStatus::Rejected,
            format!("mean quality {mean:.3} < {}", t.min_mean_quality),
        );
    }
    (
        JobStatus::Published,
        format!("{approvals} approvals, mean quality {mean:.3}"),
    )
}

/// Quality of one replay: 1 on a functional pass, otherwise
/// `clamp(1 - score / p_max, 0, 1)`.
pub fn replay_quality(passed: bool, score: f64, p_max: f64) -> f64 {
    if passed {
        1.0
    } else {
        (1.0 - score / p_max).clamp(0.0, 1.0)
    }
}

fn read_doc<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ValidationError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ValidationError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn doc<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("queue documents serialize") + "\n"
}

/// Worker claim; the lock file is removed on drop.
#[derive(Debug)]
pub struct Claim {
    pub job_id: String,
    pub worker_id: String,
    _lock: LockFile,
}

#[derive(Debug, Clone)]
pub struct Queue {
    pub root: PathBuf,
}

fn result_file(worker_id: &str) -> String {
    format!("result.{worker_id}.doc")
}

fn valid_worker_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-'))
}

impl Queue {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn job_dir(&self, job_id: &str) -> PathBuf {
        self.root.join(job_id)
    }

    /// Persists a pending job. The job directory appears atomically.
    pub fn enqueue(&self, job: &ValidationJob) -> Result<String, ValidationError> {
        job.validate()?;
        let dest = self.job_dir(&job.job_id);
        if dest.exists() {
            return Err(ValidationError::Duplicate(job.job_id.clone()));
        }
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let staging = self.root.join(format!(".staging.{}.{}", job.job_id, std::process::id()));
        std::fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        let write = |name: &str, text: String| {
            let p = staging.join(name);
            fsutil::write_atomic(&p, text.as_bytes()).map_err(io_err(&p))
        };
        write(JOB_FILE, doc(job))?;
        write(
            STATUS_FILE,
            doc(&StatusDoc {
                status: JobStatus::Pending,
                reason: "enqueued".into(),
                updated_ms: now_ms(),
            }),
        )?;
        if let Err(e) = std::fs::rename(&staging, &dest) {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(if dest.exists() {
                ValidationError::Duplicate(job.job_id.clone())
            } else {
                ValidationError::Io { path: dest, source: e }
            });
        }
        Ok(job.job_id.clone())
    }

    /// Job ids in name order.
    pub fn job_ids(&self) -> Result<Vec<String>, ValidationError> {
        let mut ids = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(ids),
            Err(e) => return Err(ValidationError::Io { path: self.root.clone(), source: e }),
        };
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if !name.starts_with('.') && entry.path().join(JOB_FILE).is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn job(&self, job_id: &str) -> Result<ValidationJob, ValidationError> {
        let p = self.job_dir(job_id).join(JOB_FILE);
        if !p.is_file() {
            return Err(ValidationError::NotFound(job_id.to_string()));
        }
        read_doc(&p)
    }

    pub fn status(&self, job_id: &str) -> Result<StatusDoc, ValidationError> {
        read_doc(&self.job_dir(job_id).join(STATUS_FILE))
    }

    /// Results in worker-id order.
    pub fn results(&self, job_id: &str) -> Result<Vec<ValidatorResult>, ValidationError> {
        let dir = self.job_dir(job_id);
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name().is_some_and(|n| {
                    let n = n.to_string_lossy();
                    n.starts_with("result.") && n.ends_with(".doc")
                })
            })
            .collect();
        paths.sort();
        paths.iter().map(|p| read_doc(p)).collect()
    }

    pub fn has_result(&self, job_id: &str, worker_id: &str) -> bool {
        self.job_dir(job_id).join(result_file(worker_id)).exists()
    }

    /// Takes the exclusive claim on a pending job this worker has not yet
    /// judged; `None` when either does not hold or another worker holds it.
    pub fn claim(&self, job_id: &str, worker_id: &str) -> Result<Option<Claim>, ValidationError> {
        if !valid_worker_id(worker_id) {
            return Err(ValidationError::InvalidJob(format!("worker id `{worker_id}`")));
        }
        let eligible = |q: &Queue| -> Result<bool, ValidationError> {
            Ok(q.status(job_id)?.status == JobStatus::Pending && !q.has_result(job_id, worker_id))
        };
        if !eligible(self)? {
            return Ok(None);
        }
        let lock_path = self.job_dir(job_id).join(CLAIM_FILE);
        let Some(lock) = LockFile::try_acquire(&lock_path, worker_id).map_err(io_err(&lock_path))? else {
            return Ok(None);
        };
        if !eligible(self)? {
            return Ok(None);
        }
        Ok(Some(Claim {
            job_id: job_id.to_string(),
            worker_id: worker_id.to_string(),
            _lock: lock,
        }))
    }

    /// Stores the claimant's result; a second result from the same worker
    /// is refused.
    pub fn submit(&self, claim: &Claim, result: &ValidatorResult) -> Result<(), ValidationError> {
        let dir = self.job_dir(&claim.job_id);
        let dest = dir.join(result_file(&claim.worker_id));
        let tmp = dir.join(format!(".{}.tmp.{}", result_file(&claim.worker_id), std::process::id()));
        fsutil::write_atomic(&tmp, doc(result).as_bytes()).map_err(io_err(&tmp))?;
        let linked = std::fs::hard_link(&tmp, &dest);
        let _ = std::fs::remove_file(&tmp);
        match linked {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(ValidationError::DuplicateResult {
                job: claim.job_id.clone(),
                worker: claim.worker_id.clone(),
            }),
            Err(e) => Err(ValidationError::Io { path: dest, source: e }),
        }
    }

    fn set_status(&self, job_id: &str, status: JobStatus, reason: &str) -> Result<(), ValidationError> {
        let p = self.job_dir(job_id).join(STATUS_FILE);
        let current: StatusDoc = read_doc(&p)?;
        if current.status != JobStatus::Pending {
            return Ok(());
        }
        let next = StatusDoc {
            status,
            reason: reason.to_string(),
            updated_ms: now_ms(),
        };
        fsutil::write_atomic(&p, doc(&next).as_bytes()).map_err(io_err(&p))
    }
}

/// Replays a job's cases for one worker.
pub struct Replayer<'a> {
    pub provider: &'a dyn LlmProvider,
    /// Used when a case has no evaluator file.
    pub default_evaluator: EvaluatorConfig,
}

fn replay_plan() -> DiversityPlan {
    DiversityPlan {
        path_select: PathSelect::None,
        focus: Focus::Combinational,
    }
}

impl<'a> Replayer<'a> {
    fn load_case(&self, case: &ReplayCase) -> Result<(TaskSpec, EvaluatorPool), String> {
        let task = TaskSpec::load(&case.task_file).map_err(|e| e.to_string())?;
        let mut cfg = match &case.evaluator_file {
            Some(p) if p.is_file() => EvaluatorConfig::load(p).map_err(|e| e.to_string())?,
            _ => self.default_evaluator.clone(),
        };
        cfg.enabled = vec![FUNCTIONAL.to_string()];
        let pool = EvaluatorPool::new(cfg, None).map_err(|e| e.to_string())?;
        Ok((task, pool))
    }

    /// Quality of one side of one case.
    fn side(
        &self,
        job: &ValidationJob,
        case: &ReplayCase,
        task: &TaskSpec,
        pool: &EvaluatorPool,
        skill_text: &str,
        side: &str,
        scratch: &Path,
    ) -> Result<f64, String> {
        let skills: Vec<SkillFile> = if skill_text.trim().is_empty() {
            Vec::new()
        } else {
            vec![SkillFile::parse(skill_text)?]
        };
        let prompt = build_generation_prompt(task, &skills, &replay_plan());
        let key = PromptKey::new(
            task.task_id.clone(),
            format!("replay.{}.{}.{side}", job.job_id, case.case_id),
        );
        let raw = self
            .provider
            .generate_with_temperature(&key, &prompt, 0.0)
            .map_err(|e| e.to_string())?;
        let rtl = extract_rtl(&raw, &task.module_header).map_err(|e| e.to_string())?;
        let out = pool.run_pool(&EvalInput {
            rtl: &rtl,
            task,
            version: VersionId::new(0, 0),
            scratch,
        });
        let cfg = ScoreConfig::preset(ScoreMode::CorrectnessOnly);
        let p_max = cfg.penalty_table.values().copied().fold(0.0, f64::max);
        let scored = score_open_results(&out.results, &cfg).map_err(|e| e.to_string())?;
        let passed = out
            .results
            .iter()
            .find(|r| r.evaluator == FUNCTIONAL)
            .is_some_and(|r| r.outcome == Outcome::Passed);
        Ok(replay_quality(passed, scored.score, p_max))
    }

    /// Replays up to three cases with baseline and candidate guidance.
    pub fn replay(&self, job: &ValidationJob, worker_id: &str, scratch_root: &Path) -> ValidatorResult {
        let mut notes = Vec::new();
        let mut cand = Vec::new();
        let mut base = Vec::new();
        for case in job.replay_cases.iter().take(CASES_PER_WORKER) {
            match self.load_case(case) {
                Ok((task, pool)) => {
                    for (side, text, acc) in [
                        ("baseline", job.baseline_text.as_str(), &mut base),
                        ("candidate", job.candidate_text.as_str(), &mut cand),
                    ] {
                        let scratch = scratch_root.join(&case.case_id).join(side);
                        match self.side(job, case, &task, &pool, text, side, &scratch) {
                            Ok(q) => acc.push(q),
                            Err(e) => {
                                notes.push(format!("{} {side}: {e}", case.case_id));
                                acc.push(0.0);
                            }
                        }
                    }
                }
                Err(e) => {
                    notes.push(format!("{}: {e}", case.case_id));
                    base.push(0.0);
                    cand.push(0.0);
                }
            }
        }
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let (cq, bq) = (mean(&cand), mean(&base));
        ValidatorResult {
            worker_id: worker_id.to_string(),
            approved: approve(cq, bq, &job.thresholds),
            candidate_quality: cq,
            baseline_quality: bq,
            cases_replayed: cand.len(),
            notes,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct WorkerReport {
    pub processed: Vec<(String, ValidatorResult)>,
    pub diagnostics: Vec<String>,
}

/// Processes up to `max_jobs` claimable jobs in job-id order.
pub fn worker_process(
    queue: &Queue,
    worker_id: &str,
    max_jobs: usize,
    replayer: &Replayer<'_>,
) -> Result<WorkerReport, ValidationError> {
    let mut report = WorkerReport::default();
    for job_id in queue.job_ids()? {
        if report.processed.len() >= max_jobs {
            break;
        }
        let claim = match queue.claim(&job_id, worker_id) {
            Ok(Some(c)) => c,
            Ok(None) => continue,
            Err(e) => {
                report.diagnostics.push(format!("{job_id}: {e}"));
                continue;
            }
        };
        let job = match queue.job(&job_id) {
            Ok(j) => j,
            Err(e) => {
                report.diagnostics.push(format!("{job_id}: {e}"));
                continue;
            }
        };
        let scratch = queue.job_dir(&job_id).join(format!("scratch.{worker_id}"));
        let result = replayer.replay(&job, worker_id, &scratch);
        let _ = std::fs::remove_dir_all(&scratch);
        match queue.submit(&claim, &result) {
            Ok(()) => report.processed.push((job_id, result)),
            Err(e) => report.diagnostics.push(format!("{job_id}: {e}")),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishEntry {
    pub job_id: String,
    pub skill_id: String,
    pub status: JobStatus,
    pub reason: String,
    pub results: usize,
}

/// Applies the thresholds to every pending job; finished jobs are listed
/// unchanged.
pub fn publish(
    queue: &Queue,
    library: &mut SkillLibrary,
) -> Result<(Vec<PublishEntry>, Vec<String>), ValidationError> {
    let mut entries = Vec::new();
    let mut diags = Vec::new();
    for job_id in queue.job_ids()? {
        let loaded = queue
            .job(&job_id)
            .and_then(|j| Ok((j, queue.status(&job_id)?, queue.results(&job_id)?)));
        let (job, status, results) = match loaded {
            Ok(x) => x,
            Err(e) => {
                diags.push(format!("{job_id}: {e}"));
                continue;
            }
        };
        let mut entry = PublishEntry {
            job_id: job_id.clone(),
            skill_id: job.skill_id.clone(),
            status: status.status,
            reason: status.reason.clone(),
            results: results.len(),
        };
        if status.status == JobStatus::Pending {
            let (next, reason) = judge(&results, &job.thresholds);
            entry.reason = reason.clone();
            match next {
                JobStatus::Pending => {}
                JobStatus::Rejected => {
                    queue.set_status(&job_id, next, &reason)?;
                    entry.status = next;
                }
                JobStatus::Published => match publish_skill(library, &job) {
                    Ok(outcome) => {
                        let reason = match outcome {
                            WriteOutcome::Published(e) => format!("{reason}; version {}", e.current_hash),
                            WriteOutcome::Skipped => format!("{reason}; content already current"),
                        };
                        queue.set_status(&job_id, next, &reason)?;
                        entry.status = next;
                        entry.reason = reason;
                    }
                    Err(e) => diags.push(format!("{job_id}: registry write failed, job stays pending: {e}")),
                },
            }
        }
        entries.push(entry);
    }
    Ok((entries, diags))
}

fn publish_skill(library: &mut SkillLibrary, job: &ValidationJob) -> Result<WriteOutcome, SkillError> {
    let skill = SkillFile::parse(&job.candidate_text)
        .map_err(|message| SkillError::Invalid(format!("{}: {message}", job.skill_id)))?;
    write_skill(library, &skill, PublicationMode::Validated)
}
