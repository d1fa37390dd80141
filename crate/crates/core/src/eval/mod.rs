// SPDX-License-Identifier: Apache-2.0

//! The pluggable evaluator pool.
//!
//! Each evaluator maps a candidate to an [`EvaluatorResult`]. The pool runs
//! every enabled evaluator once per candidate, schedules synthesis ahead of
//! the evaluators that consume its netlist, and returns results in the
//! declared order. Promotion-only gates (held-out testing) are kept apart and
//! run on demand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{EvaluatorResult, Outcome, VersionId};
use crate::task::TaskSpec;

pub mod annotated;
pub mod downstream;
pub mod eda;
pub mod functional;
pub mod heldout;
pub mod netlist;
pub mod process;
pub mod yosys;

pub const FUNCTIONAL: &str = "functional";
pub const SYNTHESIS: &str = "synthesis";
pub const TIMING: &str = "timing";
pub const DOWNSTREAM: &str = "downstream";
pub const HELDOUT: &str = "heldout";
pub const EDA: &str = "eda";

pub const KNOWN_EVALUATORS: [&str; 6] = [FUNCTIONAL, SYNTHESIS, TIMING, DOWNSTREAM, HELDOUT, EDA];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("evaluator configuration: {0}")]
    Config(String),
    #[error("scratch directory {path}: {source}")]
    Scratch {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Real tool invocations.
    #[default]
    Tools,
    /// Outcomes read from `// @eval` pragmas in the candidate text; used for
    /// scripted runs and tests that must not depend on installed tools.
    Annotated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimulatorChoice {
    /// iverilog/vvp when installed, otherwise Verilator.
    #[default]
    Auto,
    Iverilog,
    Verilator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolNames {
    pub iverilog: Vec<String>,
    pub vvp: Vec<String>,
    pub verilator: Vec<String>,
    pub yosys: Vec<String>,
}

impl Default for ToolNames {
    fn default() -> Self {
        Self {
            iverilog: vec!["iverilog".into()],
            vvp: vec!["vvp".into()],
            verilator: vec!["verilator".into(), "verilator-cli".into()],
            yosys: vec!["yosys".into(), "yowasp-yosys".into()],
        }
    }
}

/// Case-insensitive substrings used to classify netlist cell types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellClasses {
    pub multiplier: Vec<String>,
    pub adder: Vec<String>,
    pub dff: Vec<String>,
    pub mux: Vec<String>,
}

impl Default for CellClasses {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            multiplier: v(&["mul", "macc"]),
            adder: v(&["add", "sub", "alu", "$fa", "$lcu"]),
            dff: v(&["dff", "latch"]),
            mux: v(&["mux"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorConfig {
    pub enabled: Vec<String>,
    pub backend: Backend,
    pub simulator: SimulatorChoice,
    pub tools: ToolNames,
    /// Per-evaluator budgets in milliseconds.
    pub timeouts_ms: BTreeMap<String, u64>,
    pub iverilog_flags: Vec<String>,
    pub verilator_flags: Vec<String>,
    /// Top module of testbenches.
    pub testbench_top: String,
    pub heldout_seed: u64,
    pub heldout_case_count: usize,
    /// Parse-only EDA reports: `<dir>/<task_id>/<major>.<minor>.rpt` or
    /// `<dir>/<task_id>.rpt`.
    pub eda_report_dir: Option<PathBuf>,
    pub cell_classes: CellClasses,
    /// Longest feedback excerpt kept per evaluator, in lines.
    pub feedback_lines: usize,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        let timeouts_ms = [
            (FUNCTIONAL, 30_000),
            (SYNTHESIS, 60_000),
            (TIMING, 60_000),
            (DOWNSTREAM, 10_000),
            (HELDOUT, 60_000),
            (EDA, 10_000),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            enabled: vec![FUNCTIONAL.into()],
            backend: Backend::Tools,
            simulator: SimulatorChoice::Auto,
            tools: ToolNames::default(),
            timeouts_ms,
            iverilog_flags: vec![],
            verilator_flags: vec![
                "-Wno-fatal".into(),
                "-Wno-lint".into(),
                "-Wno-style".into(),
                "-MAKEFLAGS".into(),
                "PYTHON3=python3".into(),
                "--output-split".into(),
                "0".into(),
            ],
            testbench_top: "tb".into(),
            heldout_seed: 2024,
            heldout_case_count: 64,
            eda_report_dir: None,
            cell_classes: CellClasses::default(),
            feedback_lines: 20,
        }
    }
}

impl EvaluatorConfig {
    pub fn timeout(&self, evaluator: &str) -> Duration {
        Duration::from_millis(self.timeouts_ms.get(evaluator).copied().unwrap_or(30_000))
    }

    pub fn is_enabled(&self, evaluator: &str) -> bool {
        self.enabled.iter().any(|e| e == evaluator)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.enabled.is_empty() {
            return Err(EvalError::Config("no evaluators enabled".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.enabled {
            if !KNOWN_EVALUATORS.contains(&e.as_str()) {
                return Err(EvalError::Config(format!("unknown evaluator `{e}`")));
            }
            if !seen.insert(e) {
                return Err(EvalError::Config(format!("evaluator `{e}` listed twice")));
            }
        }
        if let Some((k, _)) = self.timeouts_ms.iter().find(|(_, v)| **v == 0) {
            return Err(EvalError::Config(format!("timeout for `{k}` must be > 0")));
        }
        if self.heldout_case_count == 0 {
            return Err(EvalError::Config("heldout_case_count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("evaluator config serializes")
    }
}

/// What an evaluator sees of a candidate.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub rtl: &'a str,
    pub task: &'a TaskSpec,
    pub version: VersionId,
    /// Per-candidate scratch directory; every tool runs inside it.
    pub scratch: &'a Path,
}

/// Artifacts produced while evaluating one candidate, shared with later
/// evaluators in the same pool run.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub netlist: Option<PathBuf>,
    pub metrics: BTreeMap<String, f64>,
    pub files: BTreeMap<String, Vec<PathBuf>>,
}

impl Artifacts {
    pub fn add_file(&mut self, evaluator: &str, path: PathBuf) {
        self.files.entry(evaluator.to_string()).or_default().push(path);
    }
}

pub trait Evaluator: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult;

    /// Configuration problems that must stop a run before round 1.
    fn check_task(&self, _task: &TaskSpec) -> Result<(), EvalError> {
        Ok(())
    }

    /// External tools this evaluator would need but cannot find.
    fn missing_tools(&self) -> Vec<String> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Default)]
pub struct PoolOutput {
    pub results: Vec<EvaluatorResult>,
    pub artifacts: Artifacts,
    pub wall_time_ms: BTreeMap<String, u64>,
}

/// Evaluates candidates; the orchestrator only depends on this trait.
pub trait EvaluatorSuite: Send + Sync {
    fn enabled(&self) -> Vec<String>;

    fn run_pool(&self, input: &EvalInput<'_>) -> PoolOutput;

    fn run_gate(&self, gate: &str, input: &EvalInput<'_>) -> Result<EvaluatorResult, EvalError>;

    fn check_task(&self, task: &TaskSpec) -> Result<(), EvalError>;

    /// Configuration snapshot stored with each run, when there is one.
    fn config_toml(&self) -> Option<String> {
        None
    }

    /// Results recorded for every enabled evaluator when no RTL could be
    /// produced for a minor.
    fn generation_failure(&self, message: &str) -> Vec<EvaluatorResult> {
        self.enabled()
            .into_iter()
            .map(|e| EvaluatorResult::new(e, Outcome::UnknownFailure).with_feedback(message))
            .collect()
    }
}

pub struct EvaluatorPool {
    config: EvaluatorConfig,
    evaluators: Vec<Box<dyn Evaluator>>,
    gates: BTreeMap<String, Box<dyn Evaluator>>,
}

/// Execution rank: producers of shared artifacts first.
fn schedule_rank(name: &str) -> u8 {
    match name {
        SYNTHESIS => 0,
        TIMING => 1,
        DOWNSTREAM => 2,
        _ => 3,
    }
}

impl EvaluatorPool {
    /// Builds the pool for `config.enabled` plus an optional promotion gate.
    pub fn new(config: EvaluatorConfig, gate: Option<&str>) -> Result<Self, EvalError> {
        config.validate()?;
        let evaluators = config
            .enabled
            .iter()
            .map(|name| build_evaluator(name, &config))
            .collect::<Result<Vec<_>, _>>()?;
        let mut gates = BTreeMap::new();
        if let Some(g) = gate {
            gates.insert(g.to_string(), build_evaluator(g, &config)?);
        }
        Ok(Self {
            config,
            evaluators,
            gates,
        })
    }

    pub fn config(&self) -> &EvaluatorConfig {
        &self.config
    }

    pub fn missing_tools(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .evaluators
            .iter()
            .chain(self.gates.values())
            .flat_map(|e| e.missing_tools())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Missing tools keyed by evaluator, including the gate.
    pub fn missing_tools_by_evaluator(&self) -> BTreeMap<String, Vec<String>> {
        self.evaluators
            .iter()
            .chain(self.gates.values())
            .map(|e| (e.name().to_string(), e.missing_tools()))
            .filter(|(_, m)| !m.is_empty())
            .collect()
    }
}

fn build_evaluator(name: &str, config: &EvaluatorConfig) -> Result<Box<dyn Evaluator>, EvalError> {
    if config.backend == Backend::Annotated {
        if !KNOWN_EVALUATORS.contains(&name) {
            return Err(EvalError::Config(format!("unknown evaluator `{name}`")));
        }
        return Ok(Box::new(annotated::AnnotatedEvaluator::new(name)));
    }
    Ok(match name {
        FUNCTIONAL => Box::new(functional::FunctionalEvaluator::new(config)),
        SYNTHESIS => Box::new(yosys::SynthesisEvaluator::new(config)),
        TIMING => Box::new(yosys::TimingEvaluator::new(config)),
        DOWNSTREAM => Box::new(downstream::DownstreamEvaluator::new(config)),
        HELDOUT => Box::new(heldout::HeldoutEvaluator::new(config)),
        EDA => Box::new(eda::EdaEvaluator::new(config)),
        other => return Err(EvalError::Config(format!("unknown evaluator `{other}`"))),
    })
}

impl EvaluatorSuite for EvaluatorPool {
    fn enabled(&self) -> Vec<String> {
        self.config.enabled.clone()
    }

    fn run_pool(&self, input: &EvalInput<'_>) -> PoolOutput {
        let mut out = PoolOutput::default();
        if let Err(e) = std::fs::create_dir_all(input.scratch) {
            out.results = self.generation_failure(&format!(
                "cannot create scratch directory {}: {e}",
                input.scratch.display()
            ));
            return out;
        }
        let mut order: Vec<usize> = (0..self.evaluators.len()).collect();
        order.sort_by_key(|&i| (schedule_rank(self.evaluators[i].name()), i));
        let mut slots: Vec<Option<EvaluatorResult>> = vec![None; self.evaluators.len()];
        for i in order {
            let ev = &self.evaluators[i];
            let start = Instant::now();
            let result = ev.evaluate(input, &mut out.artifacts);
            out.wall_time_ms
                .insert(ev.name().to_string(), start.elapsed().as_millis() as u64);
            for (k, v) in &result.metrics {
                out.artifacts.metrics.insert(k.clone(), *v);
            }
            slots[i] = Some(result);
        }
        out.results = slots.into_iter().map(|r| r.expect("every slot filled")).collect();
        out
    }

    fn run_gate(&self, gate: &str, input: &EvalInput<'_>) -> Result<EvaluatorResult, EvalError> {
        let ev = self
            .gates
            .get(gate)
            .ok_or_else(|| EvalError::Config(format!("gate `{gate}` not configured")))?;
        std::fs::create_dir_all(input.scratch).map_err(|source| EvalError::Scratch {
            path: input.scratch.to_path_buf(),
            source,
        })?;
        let mut artifacts = Artifacts::default();
        Ok(ev.evaluate(input, &mut artifacts))
    }

    fn config_toml(&self) -> Option<String> {
        Some(self.config.to_toml())
    }

    fn check_task(&self, task: &TaskSpec) -> Result<(), EvalError> {
        for ev in self.evaluators.iter().chain(self.gates.values()) {
            ev.check_task(task)?;
        }
        Ok(())
    }
}

/// Result for an evaluator whose input artifact is missing.
pub(crate) fn unmet_dependency(evaluator: &str, what: &str) -> EvaluatorResult {
    EvaluatorResult::new(evaluator, Outcome::ToolUnavailable).with_feedback(format!(
        "{evaluator} requires {what}; enable the synthesis evaluator and make sure it succeeds"
    ))
}

pub(crate) fn tool_missing(evaluator: &str, tool: &str) -> EvaluatorResult {
    EvaluatorResult::new(evaluator, Outcome::ToolUnavailable)
        .with_feedback(format!("{tool} not found on PATH"))
}
