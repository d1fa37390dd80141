// SPDX-License-Identifier: Apache-2.0

//! Skill evolution from run histories: ingest sessions, group them by
//! skill, apply the evidence gate, draft updates, and route them.
//!
//! Store layout under the evolver root: `sessions.log` (one session per
//! line), `drained.index` (one session id per line), `decisions.log`
//! (audit), and `evolver.lock` while a process owns the store.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::feedback::truncate;
use crate::fsutil::{self, LockFile};
use crate::history::{self, parse_history, Diagnostic};
use crate::llm::{render_template, strip_fence, LlmProvider, Prompt, PromptKey, DEFAULT_TOKEN_BUDGET};
use crate::model::{now_ms, EquivalenceRisk, SessionSummary, Strategy};
use crate::session::summarize_session;
use crate::skills::{
    write_skill, PublicationMode, SkillCategory, SkillError, SkillFile, SkillLibrary, WriteOutcome,
};
use crate::validation::{JobKind, Queue, ReplayCase, Thresholds, ValidationError, ValidationJob, MAX_REPLAY_CASES};

pub const SESSIONS_FILE: &str = "sessions.log";
pub const DRAINED_FILE: &str = "drained.index";
pub const DECISIONS_FILE: &str = "decisions.log";
pub const LOCK_FILE: &str = "evolver.lock";
/// Task id under which drafting requests are keyed.
pub const DRAFT_TASK: &str = "_evolver";
pub const DIGEST_CAP_CHARS: usize = 1500;

const DRAFT_TEMPLATE: &str = include_str!("../templates/draft_skill.txt");

#[derive(Debug, thiserror::Error)]
pub enum EvolverError {
    #[error("evolver store {0} is locked by another process")]
    Locked(PathBuf),
    #[error("evolver store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EvolverError + '_ {
    move |source| EvolverError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Exclusive handle on an evolver store.
#[derive(Debug)]
pub struct EvolverStore {
    pub root: PathBuf,
    _lock: LockFile,
}

impl EvolverStore {
    pub fn open(root: &Path) -> Result<Self, EvolverError> {
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        let lock_path = root.join(LOCK_FILE);
        match LockFile::try_acquire(&lock_path, &format!("pid {}", std::process::id())) {
            Ok(Some(lock)) => Ok(Self {
                root: root.to_path_buf(),
                _lock: lock,
            }),
            Ok(None) => Err(EvolverError::Locked(root.to_path_buf())),
            Err(e) => Err(EvolverError::Io { path: lock_path, source: e }),
        }
    }

    pub fn sessions(&self) -> (Vec<SessionSummary>, Vec<Diagnostic>) {
        let mut diags = Vec::new();
        let path = self.root.join(SESSIONS_FILE);
        if !path.exists() {
            return (Vec::new(), diags);
        }
        let sessions = history::read_lines(&path, &mut diags);
        (sessions, diags)
    }

    pub fn drained(&self) -> BTreeSet<String> {
        std::fs::read_to_string(self.root.join(DRAINED_FILE))
            .unwrap_or_default()
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    }

    fn append(&self, file: &str, line: &str) -> Result<(), EvolverError> {
        let p = self.root.join(file);
        fsutil::append_line(&p, line).map_err(io_err(&p))
    }
}

/// Task directories under `path`: the path itself when it holds a history,
/// otherwise its subdirectories that do, recursively.
pub fn task_dirs(path: &Path) -> Vec<PathBuf> {
    if path.join(history::MINORS_FILE).is_file() || path.join(history::MAJORS_FILE).is_file() {
        return vec![path.to_path_buf()];
    }
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(path) {
        let mut subs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
        subs.sort();
        for s in subs {
            if s.file_name().is_some_and(|n| n == "artifacts") {
                continue;
            }
            out.extend(task_dirs(&s));
        }
    }
    out
}

/// `<run_id>/<task_id>` from a task directory path.
pub fn session_id(task_dir: &Path) -> String {
    let name = |p: Option<&Path>| {
        p.and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default()
    };
    format!("{}/{}", name(task_dir.parent()), name(Some(task_dir)))
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub new_sessions: usize,
    pub diagnostics: Vec<String>,
}

/// Summarizes every unseen task directory below `runs` into the store.
pub fn ingest(store: &EvolverStore, runs: &[PathBuf]) -> Result<IngestReport, EvolverError> {
    let mut report = IngestReport::default();
    let mut drained = store.drained();
    for run in runs {
        let dirs = task_dirs(run);
        if dirs.is_empty() {
            report
                .diagnostics
                .push(format!("{}: no run history found", run.display()));
        }
        for dir in dirs {
            let id = session_id(&dir);
            if drained.contains(&id) {
                continue;
            }
            let h = parse_history(&dir);
            report
                .diagnostics
                .extend(h.diagnostics.iter().map(|d| d.to_string()));
            if h.minors.is_empty() {
                report
                    .diagnostics
                    .push(format!("{}: empty history, skipped", dir.display()));
                continue;
            }
            let mut summary = match summarize_session(&id, &h.minors, &h.majors) {
                Ok(s) => s,
                Err(e) => {
                    report.diagnostics.push(format!("{}: {e}", dir.display()));
                    continue;
                }
            };
            summary.run_dir = Some(std::fs::canonicalize(&dir).unwrap_or(dir.clone()));
            let line = history::encode_line(&summary).expect("session serializes");
            store.append(SESSIONS_FILE, &line)?;
            store.append(DRAINED_FILE, &id)?;
            drained.insert(id);
            report.new_sessions += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillGroup {
    pub skill_id: String,
    /// Keyed by a proposed id rather than a library reference.
    pub proposed: bool,
    pub sessions: Vec<SessionSummary>,
    pub n_pass: u32,
    pub n_promote: u32,
    pub mean_delta: f64,
    pub equivalence_risk: EquivalenceRisk,
}

impl SkillGroup {
    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.iter().map(|s| s.session_id.clone()).collect()
    }
}

/// Groups sessions by referenced skill, plus proposed ids absent from the
/// library. Sessions are de-duplicated by id.
pub fn aggregate(sessions: &[SessionSummary], library: Option<&SkillLibrary>) -> Vec<SkillGroup> {
    let mut seen = BTreeSet::new();
    let mut by_key: BTreeMap<String, (bool, Vec<SessionSummary>)> = BTreeMap::new();
    for s in sessions {
        if !seen.insert(s.session_id.clone()) {
            continue;
        }
        for id in &s.referenced_skills {
            by_key.entry(id.clone()).or_insert((false, Vec::new())).1.push(s.clone());
        }
        for id in s.proposed_skills.difference(&s.referenced_skills) {
            if library.is_some_and(|l| l.get(id).is_some()) {
                continue;
            }
            by_key.entry(id.clone()).or_insert((true, Vec::new())).1.push(s.clone());
        }
    }
    by_key
        .into_iter()
        .map(|(skill_id, (proposed, sessions))| {
            let deltas: Vec<f64> = sessions.iter().flat_map(|s| s.score_deltas.iter().copied()).collect();
            let mean_delta = if deltas.is_empty() {
                0.0
            } else {
                deltas.iter().sum::<f64>() / deltas.len() as f64
            };
            let equivalence_risk = match library.and_then(|l| l.get(&skill_id)) {
                Some(skill) => skill.equivalence_risk,
                None if proposed => EquivalenceRisk::High,
                None => sessions
                    .iter()
                    .map(|s| s.equivalence_risk)
                    .max()
                    .unwrap_or_default(),
            };
            SkillGroup {
                n_pass: sessions.iter().map(|s| s.pass_count).sum(),
                n_promote: sessions.iter().map(|s| s.promote_count).sum(),
                mean_delta,
                equivalence_risk,
                skill_id,
                proposed,
                sessions,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateThresholds {
    pub tau_pass: u32,
    pub tau_promote: u32,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self {
            tau_pass: 2,
            tau_promote: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: String,
}

/// Evidence gate over one group's statistics.
pub fn evidence_gate(
    n_pass: u32,
    n_promote: u32,
    mean_delta: f64,
    risk: EquivalenceRisk,
    t: &GateThresholds,
) -> Verdict {
    let reject = |reason: String| Verdict {
        accepted: false,
        reason,
    };
    if n_pass < t.tau_pass {
        return reject(format!("pass: n_pass {n_pass} < {}", t.tau_pass));
    }
    let promoted = n_promote >= t.tau_promote;
    let improved = mean_delta < 0.0;
    if !promoted && !improved {
        return reject(format!(
            "evidence: n_promote {n_promote} < {} and mean_delta {mean_delta} >= 0",
            t.tau_promote
        ));
    }
    if risk == EquivalenceRisk::High && n_promote < 1 {
        return reject("high risk: no promotion".into());
    }
    let clause = if promoted {
        format!("n_promote {n_promote} >= {}", t.tau_promote)
    } else {
        format!("mean_delta {mean_delta} < 0")
    };
    Verdict {
        accepted: true,
        reason: format!("n_pass {n_pass} >= {} and {clause}", t.tau_pass),
    }
}

pub fn verify(group: &SkillGroup, t: &GateThresholds) -> Verdict {
    evidence_gate(group.n_pass, group.n_promote, group.mean_delta, group.equivalence_risk, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    CreateSkill,
    ImproveSkill,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionDecision {
    pub kind: DecisionKind,
    pub group: SkillGroup,
    pub verdict: Verdict,
    pub candidate: Option<SkillFile>,
    pub rationale: String,
}

/// Evidence summary handed to the drafting model.
pub fn evidence_digest(group: &SkillGroup) -> String {
    let mut strategies: BTreeMap<Strategy, u32> = BTreeMap::new();
    let mut focus = BTreeMap::new();
    let mut tags: BTreeMap<String, u32> = BTreeMap::new();
    for s in &group.sessions {
        for (k, v) in &s.strategy_counts {
            *strategies.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &s.focus_counts {
            *focus.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &s.hint_tags {
            *tags.entry(k.clone()).or_insert(0) += v;
        }
    }
    let mut top: Vec<(String, u32)> = tags.into_iter().collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let deltas: Vec<f64> = group.sessions.iter().flat_map(|s| s.score_deltas.iter().copied()).collect();
    let min = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = vec![
        format!(
            "sessions: {}; passes: {}; promotions: {}",
            group.sessions.len(),
            group.n_pass,
            group.n_promote
        ),
        format!(
            "strategies: {}",
            strategies.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
        ),
        format!(
            "focus: {}",
            focus.iter().map(|(k, v)| format!("{}={v}", k.as_str())).collect::<Vec<_>>().join(", ")
        ),
        format!(
            "frequent feedback tags: {}",
            top.iter().take(5).map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
        ),
    ];
    if deltas.is_empty() {
        out.push("score deltas: none".into());
    } else {
        out.push(format!(
            "score deltas: {} promotions, mean {:.4}, best {:.4}",
            deltas.len(),
            group.mean_delta,
            min
        ));
    }
    truncate(&out.join("\n"), DIGEST_CAP_CHARS)
}

fn top_tags(group: &SkillGroup) -> Vec<String> {
    let mut tags: BTreeMap<String, u32> = BTreeMap::new();
    for s in &group.sessions {
        for (k, v) in &s.hint_tags {
            *tags.entry(k.clone()).or_insert(0) += v;
        }
    }
    let mut v: Vec<(String, u32)> = tags.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(k, _)| k).collect()
}

/// Skeleton for a new skill keyed by a proposed id.
fn new_skill_shell(group: &SkillGroup) -> SkillFile {
    let tags = top_tags(group);
    let category = if tags.iter().any(|t| t == crate::hints::SIMPLIFY || t == crate::hints::LATCH) {
        SkillCategory::SynthesisRewrite
    } else if !tags.is_empty() {
        SkillCategory::SimulatorRepair
    } else {
        SkillCategory::RtlOptimization
    };
    let mut triggers = vec![group.skill_id.replace(['_', '-'], " ")];
    triggers.extend(tags.into_iter().take(3));
    SkillFile {
        skill_id: group.skill_id.clone(),
        name: group.skill_id.replace(['_', '-'], " "),
        category,
        triggers,
        trigger_weights: BTreeMap::new(),
        guidance: String::new(),
        equivalence_risk: group.equivalence_risk,
        deprecated: false,
    }
}

pub fn draft_prompt(group: &SkillGroup, existing: Option<&SkillFile>) -> Prompt {
    let current = existing.map_or_else(|| "(new skill)".to_string(), |s| s.guidance.trim_end().to_string());
    let text = render_template(
        DRAFT_TEMPLATE,
        &[
            ("skill_id", group.skill_id.as_str()),
            ("current", current.as_str()),
            ("evidence", &evidence_digest(group)),
        ],
    );
    Prompt {
        system_text: "You maintain a library of reusable RTL design guidance.".into(),
        user_text: text,
        strategy: Strategy::Direct,
        attached_skill_ids: existing.map(|s| vec![s.skill_id.clone()]).unwrap_or_default(),
        token_budget_hint: DEFAULT_TOKEN_BUDGET,
    }
}

/// Turns a drafting reply into a skill: a full skill document is taken as
/// is (id forced to the group's), anything else becomes the guidance body.
fn drafted_skill(reply: &str, base: SkillFile) -> Result<SkillFile, String> {
    let body = strip_fence(reply);
    let mut skill = match SkillFile::parse(&body) {
        Ok(mut s) => {
            s.skill_id = base.skill_id.clone();
            s
        }
        Err(_) => SkillFile {
            guidance: body.trim().to_string(),
            ..base
        },
    };
    if skill.guidance.trim().is_empty() {
        return Err("drafted guidance is empty".into());
    }
    if !skill.guidance.ends_with('\n') {
        skill.guidance.push('\n');
    }
    skill.validate().map_err(|e| e.to_string())?;
    Ok(skill)
}

pub fn decide(
    group: &SkillGroup,
    verdict: &Verdict,
    library: &SkillLibrary,
    provider: &dyn LlmProvider,
) -> EvolutionDecision {
    let skip = |rationale: String| EvolutionDecision {
        kind: DecisionKind::Skip,
        group: group.clone(),
        verdict: verdict.clone(),
        candidate: None,
        rationale,
    };
    if !verdict.accepted {
        return skip(format!("rejected: {}", verdict.reason));
    }
    let existing = library.get(&group.skill_id);
    if existing.is_none() && !group.proposed {
        return skip(format!("referenced skill `{}` is not in the library", group.skill_id));
    }
    let (kind, base) = match existing {
        Some(s) => (DecisionKind::ImproveSkill, s.clone()),
        None => (DecisionKind::CreateSkill, new_skill_shell(group)),
    };
    let key = PromptKey::new(DRAFT_TASK, format!("draft.{}", group.skill_id));
    let reply = match provider.generate(&key, &draft_prompt(group, existing)) {
        Ok(r) => r,
        Err(e) => return skip(format!("drafting failed: {e}")),
    };
    match drafted_skill(&reply, base) {
        Ok(skill) => EvolutionDecision {
            kind,
            group: group.clone(),
            verdict: verdict.clone(),
            candidate: Some(skill),
            rationale: verdict.reason.clone(),
        },
        Err(e) => skip(format!("draft rejected: {e}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMode {
    Immediate,
    Validated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Routed {
    Published(WriteOutcome),
    Enqueued(String),
    AlreadyQueued(String),
}

/// Replay cases from the group's best-evidenced sessions: most promotions
/// first, then lowest average score.
pub fn replay_cases(group: &SkillGroup) -> Vec<ReplayCase> {
    let mut sessions: Vec<&SessionSummary> = group.sessions.iter().collect();
    sessions.sort_by(|a, b| {
        b.promote_count
            .cmp(&a.promote_count)
            .then(a.avg_score.total_cmp(&b.avg_score))
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    sessions
        .into_iter()
        .filter_map(|s| {
            let dir = s.run_dir.as_ref()?;
            let task_file = dir.join("task.toml");
            task_file.is_file().then(|| {
                let eval = dir.join("evaluator.toml");
                ReplayCase {
                    case_id: format!("case-{}", hex(&Sha256::digest(s.session_id.as_bytes())[..4])),
                    task_file,
                    evaluator_file: eval.is_file().then_some(eval),
                }
            })
        })
        .take(MAX_REPLAY_CASES)
        .collect()
}

pub fn route(
    decision: &EvolutionDecision,
    mode: RouteMode,
    library: &mut SkillLibrary,
    queue: Option<&Queue>,
) -> Result<Option<Routed>, EvolverError> {
    let Some(skill) = &decision.candidate else {
        return Ok(None);
    };
    match mode {
        RouteMode::Immediate => Ok(Some(Routed::Published(write_skill(
            library,
            skill,
            PublicationMode::Immediate,
        )?))),
        RouteMode::Validated => {
            let queue = queue.ok_or_else(|| ValidationError::InvalidJob("validated mode needs a queue".into()))?;
            let cases = replay_cases(&decision.group);
            let candidate_text = skill.render();
            let hash = hex(&Sha256::digest(candidate_text.as_bytes())[..6]);
            let (kind, baseline_text) = match decision.kind {
                DecisionKind::ImproveSkill => (
                    JobKind::ImproveSkill,
                    library.get(&skill.skill_id).map(|s| s.render()).unwrap_or_default(),
                ),
                _ => (JobKind::CreateSkill, String::new()),
            };
            let job = ValidationJob {
                job_id: format!("{}-{hash}", skill.skill_id),
                skill_id: skill.skill_id.clone(),
                kind,
                baseline_text,
                candidate_text,
                replay_cases: cases,
                thresholds: Thresholds::default(),
                created_ms: now_ms(),
            };
            match queue.enqueue(&job) {
                Ok(id) => Ok(Some(Routed::Enqueued(id))),
                Err(ValidationError::Duplicate(id)) => Ok(Some(Routed::AlreadyQueued(id))),
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One audit line per group decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp_ms: u64,
    pub skill_id: String,
    pub kind: DecisionKind,
    pub accepted: bool,
    pub reason: String,
    pub n_pass: u32,
    pub n_promote: u32,
    pub mean_delta: f64,
    pub sessions: Vec<String>,
    /// Registry hash written, job id queued, or empty.
    pub route: String,
}

#[derive(Debug, Clone, Default)]
pub struct EvolveReport {
    pub new_sessions: usize,
    pub entries: Vec<AuditEntry>,
    pub published: usize,
    pub enqueued: usize,
    pub diagnostics: Vec<String>,
}

pub struct Evolver<'a> {
    pub provider: &'a dyn LlmProvider,
    pub thresholds: GateThresholds,
    pub mode: RouteMode,
    pub queue: Option<Queue>,
}

impl<'a> Evolver<'a> {
    /// ingest, aggregate, verify, decide, route; every group is audited.
    pub fn evolve(
        &self,
        store: &EvolverStore,
        runs: &[PathBuf],
        library: &mut SkillLibrary,
    ) -> Result<EvolveReport, EvolverError> {
        let ingested = ingest(store, runs)?;
        let mut report = EvolveReport {
            new_sessions: ingested.new_sessions,
            diagnostics: ingested.diagnostics,
            ..Default::default()
        };
        let (sessions, diags) = store.sessions();
        report.diagnostics.extend(diags.iter().map(|d| d.to_string()));
        for group in aggregate(&sessions, Some(library)) {
            let verdict = verify(&group, &self.thresholds);
            let decision = decide(&group, &verdict, library, self.provider);
            let routed = route(&decision, self.mode, library, self.queue.as_ref())?;
            let route_text = match &routed {
                Some(Routed::Published(WriteOutcome::Published(e))) => {
                    report.published += 1;
                    format!("published {}", e.current_hash)
                }
                Some(Routed::Published(WriteOutcome::Skipped)) => "unchanged".into(),
                Some(Routed::Enqueued(id)) => {
                    report.enqueued += 1;
                    format!("enqueued {id}")
                }
                Some(Routed::AlreadyQueued(id)) => format!("already queued {id}"),
                None => String::new(),
            };
            let entry = AuditEntry {
                timestamp_ms: now_ms(),
                skill_id: group.skill_id.clone(),
                kind: decision.kind,
                accepted: verdict.accepted,
                reason: decision.rationale.clone(),
                n_pass: group.n_pass,
                n_promote: group.n_promote,
                mean_delta: group.mean_delta,
                sessions: group.session_ids(),
                route: route_text,
            };
            store.append(
                DECISIONS_FILE,
                &serde_json::to_string(&entry).expect("audit entry serializes"),
            )?;
            report.entries.push(entry);
        }
        Ok(report)
    }
}
