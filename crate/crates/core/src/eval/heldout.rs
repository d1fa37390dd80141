// SPDX-License-Identifier: Apache-2.0

//! Promotion gate that replays seeded random cases from a task's GEMM profile.

use std::time::Duration;

use super::functional::{run_testbench, write_candidate, Simulator};
use super::{Artifacts, EvalError, EvalInput, Evaluator, EvaluatorConfig, HELDOUT};
use crate::gemm::{testbench, GemmProfile};
use crate::model::{EvaluatorResult, Outcome};
use crate::task::TaskSpec;

pub struct HeldoutEvaluator {
    simulator: Option<Simulator>,
    timeout: Duration,
    seed: u64,
    case_count: usize,
    feedback_lines: usize,
}

impl HeldoutEvaluator {
    pub fn new(config: &EvaluatorConfig) -> Self {
        Self {
            simulator: Simulator::resolve(config),
            timeout: config.timeout(HELDOUT),
            seed: config.heldout_seed,
            case_count: config.heldout_case_count,
            feedback_lines: config.feedback_lines,
        }
    }
}

fn failure(outcome: Outcome, feedback: impl Into<String>) -> EvaluatorResult {
    EvaluatorResult::new(HELDOUT, outcome).with_feedback(feedback)
}

impl Evaluator for HeldoutEvaluator {
    fn name(&self) -> &str {
        HELDOUT
    }

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult {
        let Some(sim) = &self.simulator else {
            return super::tool_missing(HELDOUT, "iverilog/vvp or verilator");
        };
        let profile = match input.task.heldout_profile.as_deref().map(GemmProfile::parse) {
            Some(Ok(p)) => p,
            Some(Err(e)) => return failure(Outcome::UnknownFailure, e.to_string()),
            None => return failure(Outcome::UnknownFailure, "task has no held-out profile"),
        };
        let cases = profile.generate_cases(self.seed, self.case_count);
        let tb_text = match testbench(profile, &cases) {
            Ok(t) => t,
            Err(e) => return failure(Outcome::UnknownFailure, e.to_string()),
        };
        let dir = input.scratch.join("heldout");
        let prepared = std::fs::create_dir_all(&dir)
            .and_then(|_| std::fs::write(dir.join("heldout_tb.v"), tb_text))
            .and_then(|_| write_candidate(input.scratch, input.rtl));
        let rtl = match prepared {
            Ok(p) => std::fs::canonicalize(&p).unwrap_or(p),
            Err(e) => return failure(Outcome::UnknownFailure, format!("preparing held-out run: {e}")),
        };
        let tb = dir.join("heldout_tb.v");
        let tb = std::fs::canonicalize(&tb).unwrap_or(tb);
        let mut r = run_testbench(sim, HELDOUT, &tb, &rtl, &dir, self.timeout, self.feedback_lines, artifacts);
        // case values stay out of feedback so they never reach a prompt
        if let (Some(m), Some(n)) = (r.metric("mismatch_count"), r.metric("total_samples")) {
            r.feedback = format!("held-out: {m} mismatches in {n} samples");
        }
        r
    }

    fn check_task(&self, task: &TaskSpec) -> Result<(), EvalError> {
        match task.heldout_profile.as_deref() {
            Some(id) => GemmProfile::parse(id)
                .map(|_| ())
                .map_err(|e| EvalError::Config(format!("task `{}`: {e}", task.task_id))),
            None => Err(EvalError::Config(format!(
                "task `{}`: held-out gate enabled but no heldout_profile given",
                task.task_id
            ))),
        }
    }

    fn missing_tools(&self) -> Vec<String> {
        if self.simulator.is_none() {
            vec!["iverilog/vvp or verilator".into()]
        } else {
            vec![]
        }
    }
}
