// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtlevolve_core::model::{
    CandidateRecord, DiversityPlan, EvaluatorResult, Focus, Outcome, PathSelect, RtlCandidate,
    Strategy, VersionId,
};
use rtlevolve_core::scoring::{
    pass_results, score_eda_results, score_open_results, select_best, ScoreConfig, ScoreMode,
};

fn res(name: &str, outcome: Outcome, metrics: &[(&str, f64)]) -> EvaluatorResult {
    let mut r = EvaluatorResult::new(name, outcome);
    for (k, v) in metrics {
        r.insert_metric(*k, *v);
    }
    r
}

fn record(minor: u32, score: f64, eligible: bool) -> CandidateRecord {
    CandidateRecord {
        task_id: "t".into(),
        candidate: RtlCandidate {
            version: VersionId::new(1, minor),
            rtl_text: String::new(),
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
        results: vec![],
        score,
        eligible,
        baseline: None,
        artifacts: BTreeMap::new(),
        wall_time_ms: BTreeMap::new(),
        timestamp_ms: 0,
    }
}

#[test]
fn all_terms_vanish() {
    let c = ScoreConfig::preset(ScoreMode::CorrectnessOnly);
    let s = score_open_results(&[res("functional", Outcome::Passed, &[])], &c).unwrap();
    assert_eq!(s.score, 0.0);
    assert!(s.eligible);
}

#[test]
fn mismatch_ratio_penalty() {
    let c = ScoreConfig::preset(ScoreMode::CorrectnessOnly);
    let r = res(
        "functional",
        Outcome::Mismatch,
        &[("mismatch_count", 3.0), ("total_samples", 10.0)],
    );
    let s = score_open_results(&[r], &c).unwrap();
    assert!((s.score - 3.0).abs() < 1e-12);
    assert!(!s.eligible);
}

#[test]
fn area_term_from_cell_count() {
    let mut c = ScoreConfig::preset(ScoreMode::Ppa);
    c.weights.wire = 0.0;
    let rs = [
        res("functional", Outcome::Passed, &[]),
        res("synthesis", Outcome::Passed, &[("cell_count", 150.0)]),
    ];
    let s = score_open_results(&rs, &c).unwrap();
    assert_eq!(s.breakdown["area"], 1.5);
    assert_eq!(s.score, 1.5);
}

#[test]
fn optional_failure_does_not_block() {
    let c = ScoreConfig::preset(ScoreMode::Ppa);
    let rs = [
        res("functional", Outcome::Passed, &[]),
        res("synthesis", Outcome::CompileError, &[]),
    ];
    assert!(pass_results(&rs, &c).unwrap());
    let rs = [res("functional", Outcome::Mismatch, &[])];
    assert!(!pass_results(&rs, &c).unwrap());
}

#[test]
fn sec_failure_is_a_hard_gate() {
    let c = ScoreConfig::preset(ScoreMode::Eda);
    let rs = [
        res("functional", Outcome::Passed, &[]),
        res("eda", Outcome::Mismatch, &[("sec_pass", 0.0), ("wns", 0.5)]),
    ];
    assert!(!pass_results(&rs, &c).unwrap());
    let base = [res("eda", Outcome::Passed, &[("sec_pass", 1.0), ("wns", -1.0)])];
    let s = score_eda_results(&rs, Some(&base), &c).unwrap();
    assert!(!s.eligible);
}

fn eda(wns: f64, tns: f64, area: f64) -> Vec<EvaluatorResult> {
    vec![
        res("functional", Outcome::Passed, &[]),
        res(
            "eda",
            Outcome::Passed,
            &[("sec_pass", 1.0), ("wns", wns), ("tns", tns), ("area", area)],
        ),
    ]
}

#[test]
fn eda_identical_metrics_score_zero() {
    let c = ScoreConfig::preset(ScoreMode::Eda);
    let s = score_eda_results(&eda(-0.4, -2.0, 900.0), Some(&eda(-0.4, -2.0, 900.0)), &c).unwrap();
    assert_eq!(s.score, 0.0);
    assert!(s.eligible);
}

#[test]
fn eda_wns_delta_convention() {
    let c = ScoreConfig::preset(ScoreMode::Eda);
    let s = score_eda_results(&eda(-0.2, -2.0, 900.0), Some(&eda(-0.4, -2.0, 900.0)), &c).unwrap();
    // -(−0.2 − −0.4)/(0.4 + 1e-6) = −0.4999987500031...
    let expected = 0.5 * -(0.2 / (0.4 + 1e-6));
    assert!((s.breakdown["wns"] - expected).abs() < 1e-12);
    assert!((s.score - -0.25).abs() < 1e-5);
}

#[test]
fn eda_first_round_has_no_deltas() {
    let c = ScoreConfig::preset(ScoreMode::Eda);
    let s = score_eda_results(&eda(-3.0, -9.0, 5000.0), None, &c).unwrap();
    assert_eq!(s.score, 0.0);
}

#[test]
fn select_best_examples() {
    let rs = vec![record(2, 1.5, true), record(4, 1.5, true)];
    assert_eq!(select_best(&rs).map(|i| rs[i].candidate.version.minor), Some(2));
    let rs = vec![record(4, 1.5, true), record(2, 1.5, true)];
    assert_eq!(select_best(&rs).map(|i| rs[i].candidate.version.minor), Some(2));
    assert_eq!(select_best(&[record(1, 0.0, false)]), None);
    let rs = vec![record(1, 3.0, true), record(3, 2.1, true), record(5, 2.6, true)];
    assert_eq!(select_best(&rs).map(|i| rs[i].candidate.version.minor), Some(3));
    let rs = vec![record(1, -5.0, false), record(2, 9.0, true)];
    assert_eq!(select_best(&rs), Some(1));
}

/// Independent restatement of the open objective with the shipped defaults.
fn reference_open(results: &[EvaluatorResult], lambda: [f64; 4]) -> f64 {
    let mut total = 0.0;
    for r in results {
        if r.evaluator == "functional" {
            total += match r.outcome {
                Outcome::Passed => 0.0,
                Outcome::Mismatch => {
                    let m = r.metrics.get("mismatch_count");
                    let n = r.metrics.get("total_samples");
                    match (m, n) {
                        (Some(m), Some(n)) if *n > 0.0 => 10.0 * m / n,
                        _ => 10.0,
                    }
                }
                Outcome::CompileError | Outcome::SyntaxError => 50.0,
                Outcome::Timeout => 40.0,
                Outcome::UnknownFailure | Outcome::ToolUnavailable => 60.0,
            };
        } else if !matches!(r.outcome, Outcome::Passed | Outcome::ToolUnavailable) {
            total += 5.0;
        }
    }
    let mut area = 0.0;
    let mut wire = 0.0;
    let mut timing = 0.0;
    let mut down = 0.0;
    let mut seen = BTreeMap::new();
    for r in results {
        for (k, v) in &r.metrics {
            seen.insert(k.clone(), *v);
        }
    }
    for (k, v) in &seen {
        match k.as_str() {
            "cell_count" => area += v / 100.0,
            "wire_count" => wire += v / 100.0,
            "wire_bits" => wire += v / 500.0,
            "abc_delay_proxy" => timing += v / 10.0,
            "downstream_score" => down += v / 5.0,
            _ => {}
        }
    }
    total + lambda[0] * area + lambda[1] * wire + lambda[2] * timing + lambda[3] * down
}

fn random_results(rng: &mut ChaCha8Rng) -> Vec<EvaluatorResult> {
    let names = ["functional", "synthesis", "timing", "downstream"];
    let keys = [
        "cell_count",
        "wire_count",
        "wire_bits",
        "abc_delay_proxy",
        "downstream_score",
        "mismatch_count",
        "total_samples",
    ];
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        if i > 0 && rng.gen_bool(0.3) {
            continue;
        }
        let outcome = Outcome::ALL[rng.gen_range(0..Outcome::ALL.len())];
        let mut r = EvaluatorResult::new(*name, outcome);
        for k in keys {
            if rng.gen_bool(0.4) {
                r.insert_metric(k, rng.gen_range(0.0..1000.0f64).round());
            }
        }
        out.push(r);
    }
    out
}

#[test]
fn open_score_matches_reference_on_random_records() {
    check_open_score_matches_reference_on_random_records();
}

pub fn check_open_score_matches_reference_on_random_records() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..1000 {
        let mode = [ScoreMode::CorrectnessOnly, ScoreMode::Ppa, ScoreMode::Timing, ScoreMode::Downstream][i % 4];
        let c = ScoreConfig::preset(mode);
        let w = c.weights;
        let rs = random_results(&mut rng);
        let got = score_open_results(&rs, &c).unwrap();
        let want = reference_open(&rs, [w.area, w.wire, w.timing, w.downstream]);
        assert!((got.score - want).abs() <= 1e-9 * want.abs().max(1.0), "{i}: {} vs {want}", got.score);
        let sum: f64 = got.breakdown.values().sum();
        assert!((got.score - sum).abs() <= 1e-9);
        assert_eq!(got.eligible, rs[0].outcome == Outcome::Passed);
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

proptest! {
    #[test]
    fn optional_toggle_shifts_by_penalty(cells in 0.0f64..1e4, bad in 0usize..5) {
        let c = ScoreConfig::preset(ScoreMode::Ppa);
        let fails = [Outcome::Mismatch, Outcome::CompileError, Outcome::SyntaxError, Outcome::Timeout, Outcome::UnknownFailure];
        let ok = [res("functional", Outcome::Passed, &[]), res("synthesis", Outcome::Passed, &[("cell_count", cells)])];
        let failed = [res("functional", Outcome::Passed, &[]), res("synthesis", fails[bad], &[])];
        let a = score_open_results(&ok, &c).unwrap();
        let b = score_open_results(&failed, &c).unwrap();
        prop_assert!((b.score - (a.score - a.breakdown["area"] + 5.0)).abs() < 1e-9);
        prop_assert_eq!(a.eligible, b.eligible);
    }

    #[test]
    fn weight_scaling_preserves_argmin(
        cells in proptest::collection::vec(1.0f64..1e4, 1..8),
        scale in 0.01f64..100.0,
    ) {
        let base = ScoreConfig::preset(ScoreMode::Ppa);
        let mut scaled = base.clone();
        scaled.weights = base.weights.scaled(scale);
        let pick = |c: &ScoreConfig| {
            let recs: Vec<CandidateRecord> = cells.iter().enumerate().map(|(i, cc)| {
                let rs = [res("functional", Outcome::Passed, &[]), res("synthesis", Outcome::Passed, &[("cell_count", *cc)])];
                let s = score_open_results(&rs, c).unwrap();
                record(i as u32 + 1, s.score, s.eligible)
            }).collect();
            select_best(&recs)
        };
        prop_assert_eq!(pick(&base), pick(&scaled));
    }

    #[test]
    fn selection_never_prefers_worse_or_ineligible(
        entries in proptest::collection::vec((-100.0f64..100.0, any::<bool>()), 0..12)
    ) {
        let recs: Vec<CandidateRecord> = entries.iter().enumerate()
            .map(|(i, (s, e))| record(i as u32 + 1, *s, *e)).collect();
        match select_best(&recs) {
            None => prop_assert!(recs.iter().all(|r| !r.eligible)),
            Some(i) => {
                prop_assert!(recs[i].eligible);
                for r in recs.iter().filter(|r| r.eligible) {
                    prop_assert!(r.score >= recs[i].score);
                }
            }
        }
    }
}
