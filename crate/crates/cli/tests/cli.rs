// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rtlevolve_core::gemm::{golden_rtl, GemmProfile};
use rtlevolve_core::history::parse_history;
use rtlevolve_core::skills::shipped_skills;
use rtlevolve_core::validation::{JobStatus, Queue};

fn rtlevolve(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtlevolve"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).to_string()
}

fn annotated(profile: GemmProfile, pragma: &str) -> String {
    let rtl = golden_rtl(profile);
    let at = rtl.rfind("endmodule").unwrap();
    format!("```verilog\n{}  // @eval {pragma}\n{}```\n", &rtl[..at], &rtl[at..])
}

/// Workspace with GEMM tasks, shipped skills, scripted replies and a
/// manifest using the annotated backend.
fn workspace(root: &Path, score_mode: &str) -> PathBuf {
    let o = rtlevolve(root, &["emit-gemm-tasks", "--out", "tasks"]);
    assert!(o.status.success(), "{o:?}");
    let o = rtlevolve(root, &["init-skills", "--skills-dir", "skills"]);
    assert!(o.status.success(), "{o:?}");
    let script = root.join("script");
    for p in GemmProfile::ALL {
        let d = script.join(p.id());
        std::fs::create_dir_all(&d).unwrap();
        for i in 1..=3 {
            for k in 1..=5 {
                let pragma = if k == 2 { "functional passed" } else { "functional mismatch mismatch_count=1 total_samples=4" };
                std::fs::write(d.join(format!("{i}.{k}.response")), annotated(p, pragma)).unwrap();
                std::fs::write(d.join(format!("{i}.{k}.cref.response")), "```c\nint f(int a) { return a; }\n```\n").unwrap();
            }
        }
    }
    let ev = script.join("_evolver");
    std::fs::create_dir_all(&ev).unwrap();
    for s in shipped_skills() {
        std::fs::write(
            ev.join(format!("draft.{}.response", s.skill_id)),
            "```markdown\n- Keep accumulator widths explicit.\n- Register outputs once.\n```\n",
        )
        .unwrap();
    }
    let manifest = format!(
        r#"run_id = "r1"
runs_dir = "runs"
tasks = ["tasks/int4_int8_mac_pe/task.toml", "tasks/mixed_precision_dot4/task.toml", "tasks/requantize_int32_to_int8/task.toml"]
score_mode = "{score_mode}"
skills_dir = "skills"

[search]
rng_seed = 7

[evaluators]
enabled = ["functional"]
backend = "annotated"

[provider]
kind = "scripted"
script_dir = "script"
"#
    );
    let path = root.join("manifest.toml");
    std::fs::write(&path, manifest).unwrap();
    path
}

#[test]
fn run_creates_one_history_per_task() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), "correctness_only");
    let o = rtlevolve(dir.path(), &["--config", "manifest.toml", "--jobs", "2", "run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("3 of 3 tasks completed"));
    for p in GemmProfile::ALL {
        let h = parse_history(&dir.path().join("runs/r1").join(p.id()));
        assert!(h.diagnostics.is_empty(), "{:?}", h.diagnostics);
        // early stop after the passing second minor in each round
        assert_eq!(h.minors.len(), 6);
        assert_eq!(h.majors.iter().filter(|m| m.promoted).count(), 1);
    }
    // the same run id is refused
    let again = rtlevolve(dir.path(), &["--config", "manifest.toml", "run"]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn invalid_score_mode_exits_2_without_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), "fastest");
    let o = rtlevolve(dir.path(), &["--config", "manifest.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown score mode"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn dry_run_touches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), "correctness_only");
    let o = rtlevolve(dir.path(), &["--config", "manifest.toml", "--dry-run", "--seed", "11", "run"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("rounds 3  minors 5  seed 11"), "{out}");
    assert!(out.contains("evaluators functional"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn missing_required_tool_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), "correctness_only");
    let m = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap().replace(
        "backend = \"annotated\"",
        "backend = \"tools\"\nsimulator = \"iverilog\"\n[evaluators.tools]\niverilog = [\"no-such-iverilog\"]\nvvp = [\"no-such-vvp\"]",
    );
    std::fs::write(dir.path().join("manifest.toml"), m).unwrap();
    let o = rtlevolve(dir.path(), &["--config", "manifest.toml", "run"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn evolve_immediate_then_rerun_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), "correctness_only");
    assert!(rtlevolve(dir.path(), &["--config", "manifest.toml", "run"]).status.success());
    let args = ["--config", "manifest.toml", "evolve", "--store", "store", "--runs", "runs"];
    let o = rtlevolve(dir.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("ingested 3 new session(s)"), "{out}");
    assert!(out.contains(" improve "), "{out}");
    assert!(!out.contains("published 0"), "{out}");
    let again = rtlevolve(dir.path(), &args);
    assert!(stdout(&again).contains("ingested 0 new session(s)"));

    // a held lock is reported with exit status 3
    std::fs::write(dir.path().join("store/evolver.lock"), "other").unwrap();
    assert_eq!(rtlevolve(dir.path(), &args).status.code(), Some(3));
}

#[test]
fn evolve_on_empty_runs_reports_no_groups() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), "correctness_only");
    std::fs::create_dir_all(dir.path().join("runs")).unwrap();
    let o = rtlevolve(dir.path(), &["--config", "manifest.toml", "evolve", "--store", "store", "--runs", "runs"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no groups"));
}

#[test]
fn validated_evolution_workers_and_publisher() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    workspace(root, "correctness_only");
    assert!(rtlevolve(root, &["--config", "manifest.toml", "run"]).status.success());
    let o = rtlevolve(
        root,
        &["--config", "manifest.toml", "evolve", "--store", "store", "--runs", "runs", "--mode", "validated", "--queue-dir", "queue"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("published 0"));
    let queue = Queue::new(root.join("queue"));
    let ids = queue.job_ids().unwrap();
    assert!(!ids.is_empty());
    let skills_before = std::fs::read_to_string(root.join("skills/registry.log")).unwrap_or_default();

    // candidate replies pass, baseline replies fail once per job
    for id in &ids {
        let job = queue.job(id).unwrap();
        for (n, case) in job.replay_cases.iter().enumerate() {
            let task = rtlevolve_core::task::TaskSpec::load(&case.task_file).unwrap();
            let p = GemmProfile::by_id(&task.task_id).unwrap();
            let d = root.join("script").join(&task.task_id);
            let base = if n == 0 { "functional compile_error # bad" } else { "functional passed" };
            std::fs::write(d.join(format!("replay.{id}.{}.baseline.response", case.case_id)), annotated(p, base)).unwrap();
            std::fs::write(d.join(format!("replay.{id}.{}.candidate.response", case.case_id)), annotated(p, "functional passed")).unwrap();
        }
    }
    let worker = |w: &str| rtlevolve(root, &["--config", "manifest.toml", "worker", "--queue-dir", "queue", "--worker-id", w, "--max-jobs", "100"]);
    let publish = || rtlevolve(root, &["publish", "--queue-dir", "queue", "--skills-dir", "skills"]);

    assert!(stdout(&worker("w1")).contains("approved"));
    let p = publish();
    assert!(p.status.success());
    assert!(stdout(&p).contains("pending"));
    assert!(ids.iter().all(|id| queue.status(id).unwrap().status == JobStatus::Pending));

    assert!(stdout(&worker("w2")).contains("approved"));
    assert!(stdout(&worker("w2")).contains("no jobs"));
    let p = publish();
    assert!(stdout(&p).contains("published"));
    assert!(ids.iter().all(|id| queue.status(id).unwrap().status == JobStatus::Published));
    let skills_after = std::fs::read_to_string(root.join("skills/registry.log")).unwrap();
    assert_ne!(skills_before, skills_after);
}

#[test]
fn worker_on_empty_queue_says_no_jobs() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), "correctness_only");
    let o = rtlevolve(dir.path(), &["--config", "manifest.toml", "worker", "--queue-dir", "queue", "--worker-id", "w1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no jobs"));
}

#[test]
fn report_is_deterministic_and_handles_zero_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = rtlevolve(dir.path(), &["report", "--format", "json"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"tasks\": 0"));

    workspace(dir.path(), "correctness_only");
    assert!(rtlevolve(dir.path(), &["--config", "manifest.toml", "run"]).status.success());
    let a = rtlevolve(dir.path(), &["report", "runs", "--format", "json"]);
    let b = rtlevolve(dir.path(), &["report", "runs", "--format", "json", "--out", "report.json"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(dir.path().join("report.json")).unwrap(), a.stdout);
    let doc: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["aggregate"]["tasks"], 3);
    assert_eq!(doc["aggregate"]["final_success_rate"], 1.0);
    // each round: minor 1 fails to match, minor 2 passes; 6 minors compile
    assert_eq!(doc["aggregate"]["compile_pass_rate"], 1.0);
    assert_eq!(doc["aggregate"]["avg_promoted_majors"], 1.0);
    assert!(doc["aggregate"]["downstream"].is_null());
}
