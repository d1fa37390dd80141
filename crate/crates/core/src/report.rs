// SPDX-License-Identifier: Apache-2.0

//! Aggregate metrics over task run directories, computed from history
//! files alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{DOWNSTREAM, SYNTHESIS, TIMING};
use crate::evolver::{session_id, task_dirs};
use crate::history::parse_history;
use crate::model::CandidateRecord;
use crate::session::{summarize_run, RunSummary};

/// Hardware columns of the final design of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamColumns {
    pub cell_count: Option<f64>,
    pub mul_cells: Option<f64>,
    pub abc_delay_proxy: Option<f64>,
    pub adp_proxy: Option<f64>,
    pub downstream_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    /// `<run_id>/<task_id>`.
    pub id: String,
    pub summary: RunSummary,
    /// Present when the downstream evaluator ran for this task.
    pub downstream: Option<DownstreamColumns>,
}

/// Means over the tasks that carry each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamAggregate {
    pub tasks: usize,
    pub mean_cell_count: Option<f64>,
    pub mean_mul_cells: Option<f64>,
    pub mean_abc_delay_proxy: Option<f64>,
    pub mean_adp_proxy: Option<f64>,
    pub mean_downstream_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub tasks: usize,
    pub final_success_rate: f64,
    pub promotion_pass_rate: f64,
    pub compile_pass_rate: f64,
    pub avg_promoted_majors: f64,
    pub mean_best_functional_score: f64,
    pub downstream: Option<DownstreamAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub aggregate: Aggregate,
    pub tasks: Vec<TaskReport>,
    /// Task directories left out, with the reason.
    pub excluded: Vec<String>,
}

fn metric(record: &CandidateRecord, evaluator: &str, key: &str) -> Option<f64> {
    record
        .result(evaluator)
        .filter(|r| r.passed)
        .and_then(|r| r.metric(key))
}

fn downstream_columns(minors: &[CandidateRecord], final_record: Option<&CandidateRecord>) -> Option<DownstreamColumns> {
    if !minors.iter().any(|r| r.result(DOWNSTREAM).is_some()) {
        return None;
    }
    let get = |ev: &str, key: &str| final_record.and_then(|r| metric(r, ev, key));
    Some(DownstreamColumns {
        cell_count: get(SYNTHESIS, "cell_count"),
        mul_cells: get(DOWNSTREAM, "mul_cells"),
        abc_delay_proxy: get(TIMING, "abc_delay_proxy"),
        adp_proxy: get(DOWNSTREAM, "adp_proxy"),
        downstream_score: get(DOWNSTREAM, "downstream_score"),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Report for one task directory, or the reason it is excluded.
pub fn task_report(dir: &Path) -> Result<TaskReport, String> {
    let parsed = parse_history(dir);
    if let Some(d) = parsed.diagnostics.iter().find(|d| d.line > 0) {
        return Err(format!("unparseable history: {d}"));
    }
    if parsed.minors.is_empty() {
        return Err(format!("{}: empty history", dir.display()));
    }
    let task_id = parsed.minors[0].task_id.clone();
    let summary = summarize_run(&task_id, &parsed.minors, &parsed.majors);
    let final_record = parsed.majors.iter().rev().find_map(|m| m.baseline_record.as_ref());
    Ok(TaskReport {
        id: session_id(dir),
        summary,
        downstream: downstream_columns(&parsed.minors, final_record),
    })
}

fn aggregate(tasks: &[TaskReport]) -> Aggregate {
    let avg = |f: &dyn Fn(&RunSummary) -> f64| mean(tasks.iter().map(|t| f(&t.summary))).unwrap_or(0.0);
    let ds: Vec<&DownstreamColumns> = tasks.iter().filter_map(|t| t.downstream.as_ref()).collect();
    let col = |f: &dyn Fn(&DownstreamColumns) -> Option<f64>| mean(ds.iter().filter_map(|c| f(c)));
    Aggregate {
        tasks: tasks.len(),
        final_success_rate: avg(&|s| f64::from(u8::from(s.final_success))),
        promotion_pass_rate: avg(&|s| s.promotion_pass),
        compile_pass_rate: avg(&|s| s.compile_pass),
        avg_promoted_majors: avg(&|s| f64::from(s.promoted_major_count)),
        mean_best_functional_score: avg(&|s| s.best_functional_score),
        downstream: (!ds.is_empty()).then(|| DownstreamAggregate {
            tasks: ds.len(),
            mean_cell_count: col(&|c| c.cell_count),
            mean_mul_cells: col(&|c| c.mul_cells),
            mean_abc_delay_proxy: col(&|c| c.abc_delay_proxy),
            mean_adp_proxy: col(&|c| c.adp_proxy),
            mean_downstream_score: col(&|c| c.downstream_score),
        }),
    }
}

/// Builds the report over every task directory below `paths`, ordered by
/// task id.
pub fn build_report(paths: &[PathBuf]) -> Report {
    let mut dirs: Vec<PathBuf> = paths.iter().flat_map(|p| task_dirs(p)).collect();
    dirs.sort();
    dirs.dedup();
    let mut tasks = Vec::new();
    let mut excluded = Vec::new();
    for dir in &dirs {
        match task_report(dir) {
            Ok(t) => tasks.push(t),
            Err(e) => excluded.push(format!("{}: {e}", session_id(dir))),
        }
    }
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    Report {
        aggregate: aggregate(&tasks),
        tasks,
        excluded,
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Fixed-width table of the per-task columns followed by the aggregate.
    pub fn render_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let mut s = format!(
            "{:<32} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8}\n",
            "task", "success", "func", "promo", "compile", "promoted", "final"
        );
        for t in &self.tasks {
            let r = &t.summary;
            s.push_str(&format!(
                "{:<32} {:>7} {:>7.3} {:>7.3} {:>7.3} {:>8} {:>8}\n",
                t.id,
                if r.final_success { "yes" } else { "no" },
                r.best_functional_score,
                r.promotion_pass,
                r.compile_pass,
                r.promoted_major_count,
                opt(r.final_score),
            ));
        }
        let a = &self.aggregate;
        s.push_str(&format!(
            "tasks {}  final success {:.3}  promotion pass {:.3}  compile pass {:.3}  avg promoted majors {:.3}\n",
            a.tasks, a.final_success_rate, a.promotion_pass_rate, a.compile_pass_rate, a.avg_promoted_majors
        ));
        if let Some(d) = &a.downstream {
            s.push_str(&format!(
                "downstream tasks {}  cells {}  mul {}  abc delay {}  adp {}  score {}\n",
                d.tasks,
                opt(d.mean_cell_count),
                opt(d.mean_mul_cells),
                opt(d.mean_abc_delay_proxy),
                opt(d.mean_adp_proxy),
                opt(d.mean_downstream_score),
            ));
        }
        for e in &self.excluded {
            s.push_str(&format!("excluded {e}\n"));
        }
        s
    }
}
