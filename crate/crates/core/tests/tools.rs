// SPDX-License-Identifier: Apache-2.0

//! Real simulator and Yosys checks against fixture designs. Each check
//! returns `Err(reason)` when its tool is not installed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rtlevolve_core::eval::functional::Simulator;
use rtlevolve_core::eval::yosys::{parse_abc_delay, ABC_SCRIPT};
use rtlevolve_core::eval::{EvalInput, EvaluatorConfig, EvaluatorPool, EvaluatorSuite, SYNTHESIS, TIMING};
use rtlevolve_core::model::{EvaluatorResult, Outcome, VersionId};
use rtlevolve_core::task::TaskSpec;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn pool(enabled: &[&str]) -> Result<EvaluatorPool, String> {
    let cfg = EvaluatorConfig {
        enabled: enabled.iter().map(|s| s.to_string()).collect(),
        ..EvaluatorConfig::default()
    };
    let pool = EvaluatorPool::new(cfg, None).unwrap();
    let missing = pool.missing_tools();
    if missing.is_empty() {
        Ok(pool)
    } else {
        Err(format!("missing {}", missing.join(", ")))
    }
}

/// Name of the simulator the default configuration resolves to.
pub fn simulator_name() -> Option<&'static str> {
    Simulator::resolve(&EvaluatorConfig::default()).map(|s| s.name())
}

fn task(top: &str, tb: Option<PathBuf>) -> TaskSpec {
    TaskSpec {
        task_id: format!("fixture_{top}"),
        description: "fixture".into(),
        module_header: format!("module {top}();"),
        visible_testbench: tb,
        heldout_profile: None,
        tags: vec![],
    }
}

fn evaluate(pool: &EvaluatorPool, task: &TaskSpec, rtl: &str) -> Vec<EvaluatorResult> {
    let scratch = tempfile::tempdir().unwrap();
    pool.run_pool(&EvalInput {
        rtl,
        task,
        version: VersionId::new(1, 1),
        scratch: scratch.path(),
    })
    .results
}

fn skip_note(r: Result<(), String>) {
    if let Err(reason) = r {
        eprintln!("skipped: {reason}");
    }
}

#[test]
fn functional_outcome_classification() {
    skip_note(check_functional_outcome_classification());
}

pub fn check_functional_outcome_classification() -> Result<(), String> {
    let pool = pool(&["functional"])?;
    let dir = fixtures().join("functional");
    let t = task("fx", Some(dir.join("tb.v")));
    let expected = [
        ("pass", Outcome::Passed),
        ("mismatch", Outcome::Mismatch),
        ("compile", Outcome::CompileError),
        ("syntax", Outcome::SyntaxError),
        ("timeout", Outcome::Timeout),
        ("no_module", Outcome::CompileError),
    ];
    for (name, want) in expected {
        let rtl = std::fs::read_to_string(dir.join(format!("{name}.v"))).unwrap();
        let r = &evaluate(&pool, &t, &rtl)[0];
        assert_eq!(r.outcome, want, "{name}: {}", r.feedback);
        match name {
            "pass" => {
                assert_eq!(r.metric("mismatch_count"), Some(0.0));
                assert_eq!(r.metric("total_samples"), Some(256.0));
            }
            // a | b equals a + b exactly when a & b == 0: 81 of 256 pairs
            "mismatch" => {
                assert_eq!(r.metric("mismatch_count"), Some(256.0 - 81.0));
                assert_eq!(r.metric("total_samples"), Some(256.0));
            }
            _ => assert!(!r.feedback.is_empty(), "{name} has no feedback"),
        }
    }
    Ok(())
}

#[test]
fn synthesis_metrics_match_pinned_goldens() {
    skip_note(check_synthesis_metrics_match_pinned_goldens());
}

pub fn check_synthesis_metrics_match_pinned_goldens() -> Result<(), String> {
    let pool = pool(&[SYNTHESIS])?;
    let dir = fixtures().join("synthesis");
    let t = task("top", None);
    for name in ["and4", "add8", "reg_mux"] {
        let rtl = std::fs::read_to_string(dir.join(format!("{name}.v"))).unwrap();
        let r = &evaluate(&pool, &t, &rtl)[0];
        assert_eq!(r.outcome, Outcome::Passed, "{name}: {}", r.feedback);
        let text = std::fs::read_to_string(dir.join(format!("{name}.golden.toml"))).unwrap();
        let golden: BTreeMap<String, f64> = toml::from_str(&text).unwrap();
        assert_eq!(r.metrics, golden, "{name}");
    }
    Ok(())
}

#[test]
fn abc_chain_delay_is_not_below_tree_delay() {
    skip_note(check_abc_chain_delay_is_not_below_tree_delay());
}

pub fn check_abc_chain_delay_is_not_below_tree_delay() -> Result<(), String> {
    let pool = pool(&[SYNTHESIS, TIMING])?;
    if !yosys_abc_works() {
        return Err("the installed Yosys exits during its ABC pass".into());
    }
    let dir = fixtures().join("synthesis");
    let t = task("top", None);
    let delay = |name: &str| {
        let rtl = std::fs::read_to_string(dir.join(format!("{name}.v"))).unwrap();
        let results = evaluate(&pool, &t, &rtl);
        let r = results.iter().find(|r| r.evaluator == TIMING).unwrap();
        assert_eq!(r.outcome, Outcome::Passed, "{name}: {}", r.feedback);
        r.metric("abc_delay_proxy").unwrap()
    };
    assert!(delay("xor_chain") >= delay("xor_tree"));
    Ok(())
}

/// Runs a one-gate design through ABC and checks for a delay report.
fn yosys_abc_works() -> bool {
    let Some(yosys) = rtlevolve_core::eval::process::resolve_any(&EvaluatorConfig::default().tools.yosys) else {
        return false;
    };
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("probe.v"), "module p(input a, input b, output y); assign y = a ^ b; endmodule\n").unwrap();
    std::fs::write(dir.path().join("probe.abc"), ABC_SCRIPT).unwrap();
    let script = "read_verilog probe.v; synth -noabc -top p; abc -script probe.abc";
    match rtlevolve_core::eval::process::run_tool(&yosys, ["-p", script], dir.path(), "probe", std::time::Duration::from_secs(60)) {
        Ok(run) => run.success() && parse_abc_delay(&run.combined()).is_some(),
        Err(_) => false,
    }
}
