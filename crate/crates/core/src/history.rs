// SPDX-License-Identifier: Apache-2.0

//! Line-delimited run histories.
//!
//! Each task directory of a run holds `minors.log` (one [`CandidateRecord`]
//! per line) and `majors.log` (one [`MajorRecord`] per line). Lines are
//! JSON objects carrying a `schema_version` and are only ever appended.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fsutil;
use crate::model::{CandidateRecord, MajorRecord, VersionId};

pub const SCHEMA_VERSION: u32 = 1;
pub const MINORS_FILE: &str = "minors.log";
pub const MAJORS_FILE: &str = "majors.log";

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error("history sink {path}: {source}")]
    Storage { path: PathBuf, source: io::Error },
    #[error("serializing record: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    schema_version: u32,
    record: T,
}

/// Paths inside `runs/<run_id>/<task_id>/`.
#[derive(Debug, Clone)]
pub struct TaskRunDir {
    pub root: PathBuf,
}

impl TaskRunDir {
    pub fn new(runs_dir: &Path, run_id: &str, task_id: &str) -> Self {
        Self {
            root: runs_dir.join(run_id).join(task_id),
        }
    }

    pub fn minors(&self) -> PathBuf {
        self.root.join(MINORS_FILE)
    }

    pub fn majors(&self) -> PathBuf {
        self.root.join(MAJORS_FILE)
    }

    pub fn artifacts(&self, version: VersionId) -> PathBuf {
        self.root.join("artifacts").join(version.to_string())
    }

    pub fn task_file(&self) -> PathBuf {
        self.root.join("task.toml")
    }

    pub fn evaluator_file(&self) -> PathBuf {
        self.root.join("evaluator.toml")
    }

    pub fn score_file(&self) -> PathBuf {
        self.root.join("score.toml")
    }

    pub fn summary_file(&self) -> PathBuf {
        self.root.join("summary.json")
    }
}

/// Serialized append access to one run's history files.
#[derive(Debug)]
pub struct HistorySink {
    dir: TaskRunDir,
    lock: Mutex<()>,
}

impl HistorySink {
    pub fn open(dir: TaskRunDir) -> Result<Self, HistoryError> {
        std::fs::create_dir_all(&dir.root).map_err(|source| HistoryError::Storage {
            path: dir.root.clone(),
            source,
        })?;
        Ok(Self {
            dir,
            lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &TaskRunDir {
        &self.dir
    }

    pub fn record_minor(&self, record: &CandidateRecord) -> Result<(), HistoryError> {
        self.append(&self.dir.minors(), record)
    }

    pub fn record_major(&self, record: &MajorRecord) -> Result<(), HistoryError> {
        self.append(&self.dir.majors(), record)
    }

    fn append<T: Serialize>(&self, path: &Path, record: &T) -> Result<(), HistoryError> {
        let line = encode_line(record)?;
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        fsutil::append_line(path, &line).map_err(|source| HistoryError::Storage {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// One physical line; embedded newlines are escaped by the JSON encoder.
pub fn encode_line<T: Serialize>(record: &T) -> Result<String, serde_json::Error> {
    serde_json::to_string(&Line {
        schema_version: SCHEMA_VERSION,
        record,
    })
}

pub fn decode_line<T: DeserializeOwned>(line: &str) -> Result<T, String> {
    let mut value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(format!("unsupported schema_version {v}")),
        None => return Err("missing schema_version".into()),
    }
    let record = value
        .get_mut("record")
        .map(serde_json::Value::take)
        .ok_or("missing record")?;
    serde_json::from_value(record).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: PathBuf,
    /// 1-based; 0 for file-level warnings.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.file.display(), self.message)
        } else {
            write!(f, "{}:{}: {}", self.file.display(), self.line, self.message)
        }
    }
}

#[derive(Debug, Default)]
pub struct ParsedHistory {
    pub minors: Vec<CandidateRecord>,
    pub majors: Vec<MajorRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedHistory {
    pub fn is_empty(&self) -> bool {
        self.minors.is_empty() && self.majors.is_empty()
    }
}

/// Reads both history files of a task run directory. Missing files yield a
/// warning; malformed lines yield a diagnostic naming the line.
pub fn parse_history(dir: &Path) -> ParsedHistory {
    let mut out = ParsedHistory::default();
    out.minors = read_lines(&dir.join(MINORS_FILE), &mut out.diagnostics);
    out.majors = read_lines(&dir.join(MAJORS_FILE), &mut out.diagnostics);
    out
}

pub fn read_lines<T: DeserializeOwned>(path: &Path, diags: &mut Vec<Diagnostic>) -> Vec<T> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) => {
            diags.push(Diagnostic {
                file: path.to_path_buf(),
                line: 0,
                message: format!("missing history file: {e}"),
            });
            return Vec::new();
        }
    };
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                diags.push(Diagnostic {
                    file: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match decode_line(&line) {
            Ok(r) => records.push(r),
            Err(message) => diags.push(Diagnostic {
                file: path.to_path_buf(),
                line: idx + 1,
                message,
            }),
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn record(minor: u32, feedback: &str) -> CandidateRecord {
        CandidateRecord {
            task_id: "t".into(),
            candidate: RtlCandidate {
                version: VersionId::new(0, minor),
                rtl_text: "module m(); endmodule".into(),
                strategy: Strategy::Direct,
                plan: DiversityPlan {
                    path_select: PathSelect::None,
                    focus: Focus::Mixed,
                },
                skill_refs: vec![],
                parent: None,
                downgraded_from: None,
                generation_error: None,
                proposed_skills: vec![],
            },
            results: vec![EvaluatorResult::new("functional", Outcome::Mismatch)
                .with_metric("mismatch_count", 3.0)
                .with_feedback(feedback)],
            score: 3.0,
            eligible: false,
            baseline: None,
            artifacts: Default::default(),
            wall_time_ms: Default::default(),
            timestamp_ms: 1,
        }
    }

    #[test]
    fn empty_directory_warns() {
        let dir = tempfile::tempdir().unwrap();
        let h = parse_history(dir.path());
        assert!(h.is_empty());
        assert_eq!(h.diagnostics.len(), 2);
        assert!(h.diagnostics.iter().all(|d| d.line == 0));
    }

    #[test]
    fn multiline_feedback_is_one_physical_line() {
        let dir = tempfile::tempdir().unwrap();
        let sink = HistorySink::open(TaskRunDir {
            root: dir.path().to_path_buf(),
        })
        .unwrap();
        let r = record(1, "line one\nline two\n\tthree");
        sink.record_minor(&r).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MINORS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
        let h = parse_history(dir.path());
        assert_eq!(h.minors, vec![r]);
    }

    #[test]
    fn corrupted_line_reported_by_number() {
        let dir = tempfile::tempdir().unwrap();
        let sink = HistorySink::open(TaskRunDir {
            root: dir.path().to_path_buf(),
        })
        .unwrap();
        let records: Vec<_> = (1..=5).map(|k| record(k, "fb")).collect();
        for r in &records {
            sink.record_minor(r).unwrap();
        }
        // truncate the third line mid-object
        let path = dir.path().join(MINORS_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let half = lines[2].len() / 2;
        lines[2].truncate(half);
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();

        let h = parse_history(dir.path());
        assert_eq!(h.minors.len(), 4);
        let line_diags: Vec<_> = h.diagnostics.iter().filter(|d| d.line > 0).collect();
        assert_eq!(line_diags.len(), 1);
        assert_eq!(line_diags[0].line, 3);
        let kept: Vec<u32> = h.minors.iter().map(|r| r.candidate.version.minor).collect();
        assert_eq!(kept, vec![1, 2, 4, 5]);
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let line = r#"{"schema_version":7,"record":{}}"#;
        assert!(decode_line::<CandidateRecord>(line)
            .unwrap_err()
            .contains("schema_version"));
    }

    #[test]
    fn concurrent_appends_are_whole_lines() {
        let dir = tempfile::tempdir().unwrap();
        let sink = std::sync::Arc::new(
            HistorySink::open(TaskRunDir {
                root: dir.path().to_path_buf(),
            })
            .unwrap(),
        );
        let a = record(1, &"a".repeat(10_000));
        let b = record(2, &"b".repeat(10_000));
        std::thread::scope(|s| {
            for r in [&a, &b] {
                let sink = sink.clone();
                s.spawn(move || {
                    for _ in 0..20 {
                        sink.record_minor(r).unwrap();
                    }
                });
            }
        });
        let h = parse_history(dir.path());
        assert_eq!(h.minors.len(), 40);
        assert_eq!(h.minors.iter().filter(|r| **r == a).count(), 20);
        assert_eq!(h.minors.iter().filter(|r| **r == b).count(), 20);
    }
}
