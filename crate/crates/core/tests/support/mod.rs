// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use rtlevolve_core::eval::{Backend, EvaluatorConfig, EvaluatorPool};
use rtlevolve_core::history::TaskRunDir;
use rtlevolve_core::llm::{PromptKey, ScriptedProvider};
use rtlevolve_core::scoring::{ScoreConfig, ScoreMode};
use rtlevolve_core::search::{SearchConfig, SearchEngine, TaskOutcome};
use rtlevolve_core::task::TaskSpec;

pub const HEADER: &str = "module top(input clk, input [3:0] a, output [3:0] y);";

pub fn task(id: &str) -> TaskSpec {
    TaskSpec {
        task_id: id.into(),
        description: "Register the input nibble.".into(),
        module_header: HEADER.into(),
        visible_testbench: None,
        heldout_profile: None,
        tags: vec![],
    }
}

/// Candidate module whose annotated evaluators report `pragmas`, e.g.
/// `functional passed`, `synthesis passed cell_count=200`.
pub fn rtl(tag: &str, pragmas: &[&str]) -> String {
    let mut s = format!("{HEADER}\n  // variant {tag}\n");
    for p in pragmas {
        s.push_str(&format!("  // @eval {p}\n"));
    }
    s.push_str("  reg [3:0] q;\n  always @(posedge clk) q <= a;\n  assign y = q;\nendmodule\n");
    s
}

/// Fenced model reply around `rtl`.
pub fn reply(rtl: &str) -> String {
    format!("Here is the design:\n```verilog\n{rtl}```\n")
}

/// Scripted provider serving `minors[(i, k)]` for `<i>.<k>`; every minor
/// also gets a C reference so any strategy resolves.
pub fn provider(task_id: &str, minors: &BTreeMap<(u32, u32), String>) -> ScriptedProvider {
    let mut map = BTreeMap::new();
    for ((i, k), text) in minors {
        map.insert(PromptKey::new(task_id, format!("{i}.{k}")), vec![reply(text)]);
        map.insert(
            PromptKey::new(task_id, format!("{i}.{k}.cref")),
            vec!["```c\nint top(int a) { return a; }\n```".to_string()],
        );
    }
    ScriptedProvider::from_map(map)
}

pub fn pool(enabled: &[&str], gate: Option<&str>) -> EvaluatorPool {
    let cfg = EvaluatorConfig {
        enabled: enabled.iter().map(|s| s.to_string()).collect(),
        backend: Backend::Annotated,
        ..Default::default()
    };
    EvaluatorPool::new(cfg, gate).unwrap()
}

pub struct Scenario<'a> {
    pub mode: ScoreMode,
    pub enabled: &'a [&'a str],
    pub gate: Option<&'a str>,
    pub seed: u64,
    pub early_stop: Option<bool>,
    pub parallelism: usize,
}

pub fn run(
    root: &Path,
    run_id: &str,
    task: &TaskSpec,
    minors: &BTreeMap<(u32, u32), String>,
    sc: &Scenario<'_>,
) -> TaskOutcome {
    let search = SearchConfig {
        promotion_gate: sc.gate.map(String::from),
        rng_seed: sc.seed,
        early_stop: sc.early_stop,
        parallelism: sc.parallelism.max(1),
        ..SearchConfig::default()
    };
    let score = ScoreConfig::preset(sc.mode);
    let pool = pool(sc.enabled, sc.gate);
    let provider = provider(&task.task_id, minors);
    let engine = SearchEngine {
        config: &search,
        score: &score,
        evaluators: &pool,
        provider: &provider,
        skills: None,
    };
    engine
        .run_task(task, TaskRunDir::new(root, run_id, &task.task_id))
        .unwrap()
}

pub mod records {
    use std::collections::BTreeMap;

    use rand::Rng;
    use rtlevolve_core::model::*;

    const TEXT: &[&str] = &["", "ok", "line one\nline two", "quote \" and \\ back", "tab\tsep", "ünïcødé ✓", "MISMATCH at t=5: y=1 expected 0"];
    const EVALS: &[&str] = &["functional", "synthesis", "timing", "downstream", "heldout", "eda"];

    fn pick<'a, T>(rng: &mut impl Rng, xs: &'a [T]) -> &'a T {
        &xs[rng.gen_range(0..xs.len())]
    }

    pub fn result(rng: &mut impl Rng, name: &str) -> EvaluatorResult {
        let outcome = *pick(rng, &Outcome::ALL);
        let mut r = EvaluatorResult::new(name, outcome).with_feedback(*pick(rng, TEXT));
        for key in ["cell_count", "wire_bits", "abc_delay_proxy", "mismatch_count", "total_samples", "wns"] {
            if rng.gen_bool(0.4) {
                let v = match rng.gen_range(0..3) {
                    0 => rng.gen_range(0..10_000) as f64,
                    1 => rng.gen_range(-1e6..1e6),
                    _ => rng.gen::<f64>() * 1e-9,
                };
                r.insert_metric(key, v);
            }
        }
        r
    }

    pub fn record(rng: &mut impl Rng, task: &str) -> CandidateRecord {
        let version = VersionId::new(rng.gen_range(1..4), rng.gen_range(1..6));
        let n = rng.gen_range(1..=EVALS.len());
        let results = EVALS[..n].iter().map(|e| result(rng, e)).collect();
        let skill_refs = (0..rng.gen_range(0..3))
            .map(|i| SkillRef {
                skill_id: format!("skill_{i}"),
                mode: if rng.gen() { RetrievalMode::Retrieved } else { RetrievalMode::Static },
                risk: if rng.gen() { EquivalenceRisk::High } else { EquivalenceRisk::Low },
            })
            .collect();
        let mut artifacts = BTreeMap::new();
        if rng.gen() {
            artifacts.insert("synthesis".to_string(), vec!["artifacts/1.1/netlist.json".into()]);
        }
        CandidateRecord {
            task_id: task.into(),
            candidate: RtlCandidate {
                version,
                rtl_text: format!("module top();\n// {}\nendmodule\n", pick(rng, TEXT)),
                strategy: *pick(rng, &[Strategy::Direct, Strategy::CBridge, Strategy::Repair]),
                plan: DiversityPlan {
                    path_select: *pick(rng, &[PathSelect::None, PathSelect::TimingCritical, PathSelect::StructurallyComplex, PathSelect::RandomExploration]),
                    focus: *pick(rng, &Focus::ROTATION),
                },
                skill_refs,
                parent: rng.gen::<bool>().then(|| VersionId::new(1, 2)),
                downgraded_from: rng.gen::<bool>().then_some(Strategy::CBridge),
                generation_error: rng.gen::<bool>().then(|| pick(rng, TEXT).to_string()),
                proposed_skills: if rng.gen() { vec!["carry_save".into()] } else { vec![] },
            },
            results,
            score: rng.gen_range(-100.0..100.0),
            eligible: rng.gen(),
            baseline: rng.gen::<bool>().then(|| VersionId::new(1, 3)),
            artifacts,
            wall_time_ms: [("functional".to_string(), rng.gen_range(0..5000))].into_iter().collect(),
            timestamp_ms: rng.gen_range(0..u64::MAX / 2),
        }
    }
}
