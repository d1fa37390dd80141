// SPDX-License-Identifier: Apache-2.0

//! Functional simulation against a testbench.
//!
//! The testbench reports `Mismatches: <n> in <m> samples` (the VerilogEval
//! convention). Icarus Verilog is the primary simulator (`iverilog -o <out>
//! <tb> <rtl>` then `vvp <out>`); Verilator `--binary --timing` is used when
//! Icarus is not installed.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;

use super::process::{self, ToolRun};
use super::{Artifacts, EvalError, EvalInput, Evaluator, EvaluatorConfig, SimulatorChoice, FUNCTIONAL};
use crate::hints;
use crate::model::{EvaluatorResult, Outcome};
use crate::task::TaskSpec;

#[derive(Debug, Clone)]
pub enum Simulator {
    Iverilog {
        iverilog: PathBuf,
        vvp: PathBuf,
        flags: Vec<String>,
    },
    Verilator {
        verilator: PathBuf,
        flags: Vec<String>,
        top: String,
    },
}

impl Simulator {
    pub fn resolve(config: &EvaluatorConfig) -> Option<Simulator> {
        let iverilog = || {
            let iv = process::resolve_any(&config.tools.iverilog)?;
            let vvp = process::resolve_any(&config.tools.vvp)?;
            Some(Simulator::Iverilog {
                iverilog: iv,
                vvp,
                flags: config.iverilog_flags.clone(),
            })
        };
        let verilator = || {
            Some(Simulator::Verilator {
                verilator: process::resolve_any(&config.tools.verilator)?,
                flags: config.verilator_flags.clone(),
                top: config.testbench_top.clone(),
            })
        };
        match config.simulator {
            SimulatorChoice::Iverilog => iverilog(),
            SimulatorChoice::Verilator => verilator(),
            SimulatorChoice::Auto => iverilog().or_else(verilator),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Simulator::Iverilog { .. } => "iverilog",
            Simulator::Verilator { .. } => "verilator",
        }
    }
}

fn summary_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Mismatches:\s*(\d+)\s+in\s+(\d+)\s+samples").unwrap())
}

/// Compiles and simulates `tb` with `rtl` inside `scratch`, classifying the
/// outcome for `evaluator`.
pub fn run_testbench(
    sim: &Simulator,
    evaluator: &str,
    tb: &Path,
    rtl: &Path,
    scratch: &Path,
    timeout: Duration,
    feedback_lines: usize,
    artifacts: &mut Artifacts,
) -> EvaluatorResult {
    let build = match sim {
        Simulator::Iverilog {
            iverilog, flags, ..
        } => {
            let mut args: Vec<String> = flags.clone();
            args.push("-o".into());
            args.push("sim.vvp".into());
            args.push(tb.display().to_string());
            args.push(rtl.display().to_string());
            process::run_tool(iverilog, &args, scratch, "compile", timeout)
        }
        Simulator::Verilator {
            verilator,
            flags,
            top,
        } => {
            let mut args: Vec<String> = vec!["--binary".into(), "--timing".into()];
            args.extend(flags.iter().cloned());
            args.extend(
                ["--top-module", top, "-Mdir", "obj", "-o", "simv"]
                    .iter()
                    .map(|s| s.to_string()),
            );
            args.push(tb.display().to_string());
            args.push(rtl.display().to_string());
            process::run_tool(verilator, &args, scratch, "compile", timeout)
        }
    };
    let build = match build {
        Ok(b) => b,
        Err(e) => {
            return EvaluatorResult::new(evaluator, Outcome::ToolUnavailable)
                .with_feedback(format!("failed to start {}: {e}", sim.name()))
        }
    };
    artifacts.add_file(evaluator, build.stdout_path.clone());
    artifacts.add_file(evaluator, build.stderr_path.clone());
    if build.timed_out {
        return EvaluatorResult::new(evaluator, Outcome::Timeout)
            .with_feedback(format!("compilation exceeded {} ms", timeout.as_millis()));
    }
    if !build.success() {
        return classify_compile_failure(evaluator, &build, feedback_lines);
    }

    let run = match sim {
        Simulator::Iverilog { vvp, .. } => {
            process::run_tool(vvp, ["sim.vvp"], scratch, "simulate", timeout)
        }
        Simulator::Verilator { .. } => process::run_tool(
            &scratch.join("obj").join("simv"),
            Vec::<String>::new(),
            scratch,
            "simulate",
            timeout,
        ),
    };
    let run = match run {
        Ok(r) => r,
        Err(e) => {
            return EvaluatorResult::new(evaluator, Outcome::UnknownFailure)
                .with_feedback(format!("failed to start simulation: {e}"))
        }
    };
    artifacts.add_file(evaluator, run.stdout_path.clone());
    artifacts.add_file(evaluator, run.stderr_path.clone());
    classify_simulation(evaluator, &run, timeout, feedback_lines)
}

fn classify_compile_failure(evaluator: &str, build: &ToolRun, feedback_lines: usize) -> EvaluatorResult {
    let text = build.combined();
    let lower = text.to_ascii_lowercase();
    let outcome = if lower.contains("syntax error") {
        Outcome::SyntaxError
    } else {
        Outcome::CompileError
    };
    let mut excerpt = process::excerpt(&text, feedback_lines);
    if excerpt.is_empty() {
        excerpt = format!("compiler exited with {:?}", build.status);
    }
    with_hints(EvaluatorResult::new(evaluator, outcome), excerpt)
}

/// Classifies simulator output; exposed for parser tests.
pub fn classify_simulation(
    evaluator: &str,
    run: &ToolRun,
    timeout: Duration,
    feedback_lines: usize,
) -> EvaluatorResult {
    if run.timed_out {
        return with_hints(
            EvaluatorResult::new(evaluator, Outcome::Timeout),
            format!("simulation exceeded {} ms", timeout.as_millis()),
        );
    }
    let text = run.combined();
    classify_output(evaluator, &text, run.success(), feedback_lines)
}

pub fn classify_output(evaluator: &str, text: &str, exited_ok: bool, feedback_lines: usize) -> EvaluatorResult {
    let last = summary_re().captures_iter(text).last();
    match last {
        Some(c) => {
            let mismatches: f64 = c[1].parse().unwrap_or(f64::NAN);
            let total: f64 = c[2].parse().unwrap_or(f64::NAN);
            if mismatches == 0.0 {
                EvaluatorResult::new(evaluator, Outcome::Passed)
                    .with_metric("mismatch_count", 0.0)
                    .with_metric("total_samples", total)
            } else {
                let r = EvaluatorResult::new(evaluator, Outcome::Mismatch)
                    .with_metric("mismatch_count", mismatches)
                    .with_metric("total_samples", total.max(mismatches));
                with_hints(r, process::excerpt(text, feedback_lines))
            }
        }
        None if text.contains("TIMEOUT") => with_hints(
            EvaluatorResult::new(evaluator, Outcome::Timeout),
            process::excerpt(text, feedback_lines),
        ),
        None => {
            let mut fb = process::excerpt(text, feedback_lines);
            if fb.is_empty() {
                fb = "testbench produced no mismatch summary".into();
            } else if exited_ok {
                fb = format!("testbench produced no mismatch summary\n{fb}");
            }
            with_hints(EvaluatorResult::new(evaluator, Outcome::UnknownFailure), fb)
        }
    }
}

/// Appends `[hint:<tag>] <text>` lines derived from the failure.
pub fn with_hints(mut result: EvaluatorResult, excerpt: String) -> EvaluatorResult {
    let tags = hints::derive_tags(&result.evaluator, result.outcome, &excerpt);
    let mut fb = excerpt;
    for tag in tags {
        if let Some(text) = hints::hint_text(&tag) {
            if !fb.is_empty() {
                fb.push('\n');
            }
            fb.push_str(&format!("[hint:{tag}] {text}"));
        }
    }
    result.feedback = fb;
    result
}

/// Hint tags previously embedded with [`with_hints`].
pub fn embedded_hint_tags(feedback: &str) -> Vec<String> {
    feedback
        .lines()
        .filter_map(|l| l.strip_prefix("[hint:"))
        .filter_map(|l| l.split_once(']'))
        .map(|(tag, _)| tag.to_string())
        .collect()
}

pub struct FunctionalEvaluator {
    simulator: Option<Simulator>,
    timeout: Duration,
    feedback_lines: usize,
}

impl FunctionalEvaluator {
    pub fn new(config: &EvaluatorConfig) -> Self {
        Self {
            simulator: Simulator::resolve(config),
            timeout: config.timeout(FUNCTIONAL),
            feedback_lines: config.feedback_lines,
        }
    }

    pub fn simulator(&self) -> Option<&Simulator> {
        self.simulator.as_ref()
    }
}

pub(crate) fn write_candidate(scratch: &Path, rtl: &str) -> std::io::Result<PathBuf> {
    let path = scratch.join("candidate.v");
    std::fs::write(&path, rtl)?;
    Ok(path)
}

impl Evaluator for FunctionalEvaluator {
    fn name(&self) -> &str {
        FUNCTIONAL
    }

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult {
        let Some(sim) = &self.simulator else {
            return super::tool_missing(FUNCTIONAL, "iverilog/vvp or verilator");
        };
        let Some(tb) = &input.task.visible_testbench else {
            return EvaluatorResult::new(FUNCTIONAL, Outcome::UnknownFailure)
                .with_feedback("task has no visible testbench");
        };
        let rtl = match write_candidate(input.scratch, input.rtl) {
            Ok(p) => p,
            Err(e) => {
                return EvaluatorResult::new(FUNCTIONAL, Outcome::UnknownFailure)
                    .with_feedback(format!("writing candidate: {e}"))
            }
        };
        let tb = std::fs::canonicalize(tb).unwrap_or_else(|_| tb.clone());
        let dir = input.scratch.join("functional");
        if let Err(e) = std::fs::create_dir_all(&dir) {
            return EvaluatorResult::new(FUNCTIONAL, Outcome::UnknownFailure)
                .with_feedback(format!("creating {}: {e}", dir.display()));
        }
        let rtl = std::fs::canonicalize(&rtl).unwrap_or(rtl);
        run_testbench(
            sim,
            FUNCTIONAL,
            &tb,
            &rtl,
            &dir,
            self.timeout,
            self.feedback_lines,
            artifacts,
        )
    }

    fn check_task(&self, task: &TaskSpec) -> Result<(), EvalError> {
        match &task.visible_testbench {
            Some(tb) if tb.is_file() => Ok(()),
            Some(tb) => Err(EvalError::Config(format!(
                "task `{}`: testbench {} does not exist",
                task.task_id,
                tb.display()
            ))),
            None => Err(EvalError::Config(format!(
                "task `{}`: functional evaluator enabled but no testbench given",
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
