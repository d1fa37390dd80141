// SPDX-License-Identifier: Apache-2.0

mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtlevolve_core::history::parse_history;
use rtlevolve_core::model::{Outcome, Strategy};
use rtlevolve_core::scoring::{pass_predicate, ScoreConfig, ScoreMode};
use support::{rtl, run, task, Scenario};

fn ppa_gated() -> Scenario<'static> {
    Scenario {
        mode: ScoreMode::Ppa,
        enabled: &["functional", "synthesis"],
        gate: Some("heldout"),
        seed: 5,
        early_stop: None,
        parallelism: 1,
    }
}

/// Round 1 promotes 1.3 over a tie with 1.4; round 2 only matches the
/// baseline score; round 3's best fails the held-out gate.
fn protocol_trace() -> BTreeMap<(u32, u32), String> {
    let pass = |tag: &str, cells: u32| {
        rtl(tag, &["functional passed", &format!("synthesis passed cell_count={cells}")])
    };
    let mut m = BTreeMap::new();
    m.insert((1, 1), rtl("1.1", &["functional mismatch mismatch_count=2 total_samples=8"]));
    m.insert((1, 2), pass("1.2", 300));
    m.insert((1, 3), pass("1.3", 200));
    m.insert((1, 4), pass("1.4", 200));
    m.insert((1, 5), rtl("1.5", &["functional compile_error # syntax error near q"]));
    m.insert((2, 1), pass("2.1", 200));
    for k in 2..=5 {
        m.insert((2, k), pass(&format!("2.{k}"), 250 + k * 10));
    }
    m.insert(
        (3, 1),
        rtl("3.1", &["functional passed", "synthesis passed cell_count=100", "heldout mismatch mismatch_count=3 total_samples=64"]),
    );
    for k in 2..=5 {
        m.insert((3, k), rtl(&format!("3.{k}"), &["functional timeout"]));
    }
    m
}

#[test]
fn promotion_protocol_trace_from_history() {
    check_promotion_protocol_trace_from_history();
}

pub fn check_promotion_protocol_trace_from_history() {
    let dir = tempfile::tempdir().unwrap();
    let t = task("trace");
    let out = run(dir.path(), "r1", &t, &protocol_trace(), &ppa_gated());
    let h = parse_history(&out.run_dir);
    assert!(h.diagnostics.is_empty(), "{:?}", h.diagnostics);
    assert_eq!(h.majors.len(), 3);
    assert_eq!(h.minors.len(), 15);

    let m1 = &h.majors[0];
    assert_eq!(m1.selected_minor, Some(3), "tie between 1.3 and 1.4 goes to 1.3");
    assert!(m1.promoted);
    assert_eq!(m1.score, Some(2.0));
    assert!(m1.gate_result.as_ref().unwrap().passed);

    let m2 = &h.majors[1];
    assert_eq!(m2.selected_minor, Some(1));
    assert_eq!(m2.score, Some(2.0));
    assert_eq!(m2.previous_score, Some(2.0));
    assert!(!m2.promoted, "equal score is not an improvement");

    let m3 = &h.majors[2];
    assert_eq!(m3.selected_minor, Some(1));
    assert_eq!(m3.score, Some(1.0));
    assert_eq!(m3.gate_result.as_ref().unwrap().outcome, Outcome::Mismatch);
    assert!(!m3.promoted, "held-out gate refuses");

    for m in &h.majors {
        assert_eq!(m.baseline_record.as_ref().unwrap().version().to_string(), "1.3");
    }
    assert_eq!(out.summary.promoted_major_count, 1);
    assert!(out.summary.final_success);
    assert_eq!(out.summary.promotion_pass, 2.0 / 3.0);
    assert_eq!(out.summary.compile_pass, 14.0 / 15.0);
    assert!(!h.minors.iter().take(5).any(|r| r.candidate.strategy == Strategy::Repair));
    assert_eq!(
        std::fs::read_to_string(out.run_dir.join("best.v")).unwrap(),
        protocol_trace()[&(1, 3)]
    );
}

#[test]
fn early_stop_counts() {
    check_early_stop_counts();
}

pub fn check_early_stop_counts() {
    let dir = tempfile::tempdir().unwrap();
    let t = task("early");
    let mut m = BTreeMap::new();
    for i in 1..=3 {
        for k in 1..=5 {
            m.insert((i, k), rtl(&format!("{i}.{k}"), &["functional mismatch mismatch_count=1 total_samples=4"]));
        }
    }
    m.insert((1, 2), rtl("1.2", &["functional passed"]));
    m.insert((2, 1), rtl("2.1", &["functional passed"]));
    let sc = Scenario {
        mode: ScoreMode::CorrectnessOnly,
        enabled: &["functional"],
        gate: None,
        seed: 1,
        early_stop: None,
        parallelism: 1,
    };
    let out = run(dir.path(), "r", &t, &m, &sc);
    let h = parse_history(&out.run_dir);
    let counts: Vec<u32> = h.majors.iter().map(|m| m.minors_evaluated).collect();
    assert_eq!(counts, vec![2, 1, 5]);
    assert_eq!(h.minors.len(), 8);
    assert!(h.majors[0].promoted);
    assert!(!h.majors[1].promoted, "score 0 does not improve on 0");
}

#[test]
fn no_passing_candidate_means_no_promotion() {
    let dir = tempfile::tempdir().unwrap();
    let t = task("never");
    let m: BTreeMap<_, _> = (1..=3)
        .flat_map(|i| (1..=5).map(move |k| ((i, k), rtl("x", &["functional syntax_error"]))))
        .collect();
    let sc = Scenario {
        mode: ScoreMode::CorrectnessOnly,
        enabled: &["functional"],
        gate: None,
        seed: 1,
        early_stop: None,
        parallelism: 1,
    };
    let out = run(dir.path(), "r", &t, &m, &sc);
    assert_eq!(out.majors.len(), 3);
    assert!(out.final_record.is_none());
    assert_eq!(out.summary.promoted_major_count, 0);
    assert!(!out.summary.final_success);
    assert!(!out.run_dir.join("best.v").exists());
}

#[test]
fn provider_failure_becomes_unknown_failure() {
    let dir = tempfile::tempdir().unwrap();
    let t = task("gaps");
    let mut m = BTreeMap::new();
    m.insert((1, 2), rtl("1.2", &["functional passed"]));
    let sc = Scenario {
        mode: ScoreMode::CorrectnessOnly,
        enabled: &["functional", "synthesis"],
        gate: None,
        seed: 1,
        early_stop: Some(false),
        parallelism: 1,
    };
    let out = run(dir.path(), "r", &t, &m, &sc);
    let first = &out.minors[0];
    assert!(first.candidate.generation_error.is_some());
    assert_eq!(first.results.len(), 2);
    assert!(first.results.iter().all(|r| r.outcome == Outcome::UnknownFailure));
    assert!(out.majors[0].promoted);
}

/// Random outcome and area per minor for the monotonicity property.
fn random_trace(seed: u64) -> BTreeMap<(u32, u32), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = BTreeMap::new();
    for i in 1..=3 {
        for k in 1..=5 {
            let func = ["passed", "passed", "mismatch mismatch_count=1 total_samples=4", "compile_error", "timeout"]
                [rng.gen_range(0..5)];
            let cells = rng.gen_range(1..6) * 50;
            let held = if rng.gen_bool(0.25) { "heldout mismatch" } else { "heldout passed" };
            m.insert(
                (i, k),
                rtl(
                    &format!("{i}.{k}"),
                    &[&format!("functional {func}"), &format!("synthesis passed cell_count={cells}"), held],
                ),
            );
        }
    }
    m
}

#[test]
fn promoted_scores_strictly_decrease_over_random_runs() {
    check_promoted_scores_strictly_decrease_over_random_runs();
}

pub fn check_promoted_scores_strictly_decrease_over_random_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScoreConfig::preset(ScoreMode::Ppa);
    let mut violations = 0;
    let mut promotions = 0;
    for seed in 0..100u64 {
        let t = task(&format!("rand{seed}"));
        let out = run(dir.path(), "mono", &t, &random_trace(seed), &ppa_gated());
        let h = parse_history(&out.run_dir);
        let mut last: Option<f64> = None;
        for m in h.majors.iter().filter(|m| m.promoted) {
            promotions += 1;
            let rec = m.baseline_record.as_ref().unwrap();
            let score = m.score.unwrap();
            if last.is_some_and(|l| score >= l)
                || !pass_predicate(rec, &cfg).unwrap()
                || !m.gate_result.as_ref().unwrap().passed
                || rec.score != score
            {
                violations += 1;
            }
            last = Some(score);
        }
        for m in h.majors.iter().filter(|m| !m.promoted) {
            let prev = h.majors.iter().filter(|p| p.major < m.major).last();
            assert_eq!(
                m.baseline_record,
                prev.and_then(|p| p.baseline_record.clone()),
                "non-promoting round changed the baseline"
            );
        }
    }
    assert_eq!(violations, 0);
    assert!(promotions > 100, "trace set too weak: {promotions}");
}

#[test]
fn same_seed_runs_are_identical() {
    check_same_seed_runs_are_identical();
}

pub fn check_same_seed_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let t = task("det");
    let trace = random_trace(42);
    let a = run(dir.path(), "a", &t, &trace, &ppa_gated());
    let b = run(dir.path(), "b", &t, &trace, &ppa_gated());
    let strip = |recs: &[rtlevolve_core::model::CandidateRecord]| {
        recs.iter()
            .map(|r| (r.candidate.clone(), r.results.clone(), r.score, r.eligible))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.minors), strip(&b.minors));
    assert_eq!(a.summary, b.summary);
    for r in &a.minors {
        let rel = format!("artifacts/{}/candidate.v", r.version());
        assert_eq!(
            std::fs::read(a.run_dir.join(&rel)).unwrap(),
            std::fs::read(b.run_dir.join(&rel)).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn budget_bound_holds(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let t = task("budget");
        let sc = Scenario { mode: ScoreMode::CorrectnessOnly, enabled: &["functional"], gate: None, seed, early_stop: None, parallelism: 1 };
        let out = run(dir.path(), "r", &t, &random_trace(seed), &sc);
        prop_assert!(out.minors.len() <= 15);
        for m in &out.majors {
            let round: Vec<_> = out.minors.iter().filter(|r| r.version().major == m.major).collect();
            if let Some(pos) = round.iter().position(|r| r.eligible) {
                prop_assert_eq!(round.len(), pos + 1);
            } else {
                prop_assert_eq!(round.len(), 5);
            }
        }
    }
}

#[test]
fn parallel_minors_match_sequential_history() {
    let dir = tempfile::tempdir().unwrap();
    let t = task("par");
    for early in [false, true] {
        let mut sc = Scenario {
            mode: ScoreMode::CorrectnessOnly,
            enabled: &["functional"],
            gate: None,
            seed: 9,
            early_stop: Some(early),
            parallelism: 1,
        };
        let seq = run(dir.path(), &format!("seq{early}"), &t, &random_trace(3), &sc);
        sc.parallelism = 4;
        let par = run(dir.path(), &format!("par{early}"), &t, &random_trace(3), &sc);
        let key = |o: &rtlevolve_core::search::TaskOutcome| {
            o.minors.iter().map(|r| (r.candidate.clone(), r.score)).collect::<Vec<_>>()
        };
        assert_eq!(key(&seq), key(&par));
        let logged = parse_history(&par.run_dir).minors.len();
        assert_eq!(logged, par.minors.len());
    }
}
