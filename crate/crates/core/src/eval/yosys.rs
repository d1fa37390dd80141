// SPDX-License-Identifier: Apache-2.0

//! Yosys-driven synthesis statistics and the ABC timing proxy.
//!
//! Both evaluators write a script file into their own subdirectory of the
//! candidate scratch directory and run Yosys there with relative paths only,
//! so sandboxed Yosys builds that can only see their working directory work
//! too.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::process;
use super::{Artifacts, EvalInput, Evaluator, EvaluatorConfig, SYNTHESIS, TIMING};
use crate::eval::functional::with_hints;
use crate::model::{EvaluatorResult, Outcome};

/// Totals from `stat -json`.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
pub struct StatTotals {
    #[serde(default)]
    pub num_wires: u64,
    #[serde(default)]
    pub num_wire_bits: u64,
    #[serde(default)]
    pub num_cells: u64,
    #[serde(default)]
    pub num_cells_by_type: BTreeMap<String, u64>,
}

#[derive(Deserialize)]
struct StatJson {
    #[serde(default)]
    design: Option<StatTotals>,
    #[serde(default)]
    modules: BTreeMap<String, StatTotals>,
}

/// Parses `stat -json` output, preferring the hierarchy-wide `design` block.
pub fn parse_stat_json(text: &str) -> Result<StatTotals, String> {
    let parsed: StatJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let Some(d) = parsed.design {
        return Ok(d);
    }
    match parsed.modules.len() {
        1 => Ok(parsed.modules.into_values().next().unwrap()),
        0 => Err("stat report lists no modules".into()),
        _ => Err("stat report lists several modules and no design totals".into()),
    }
}

pub fn synthesis_metrics(stat: &StatTotals) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("cell_count".to_string(), stat.num_cells as f64);
    m.insert("wire_count".to_string(), stat.num_wires as f64);
    m.insert("wire_bits".to_string(), stat.num_wire_bits as f64);
    for (ty, n) in &stat.num_cells_by_type {
        m.insert(format!("cell_type:{ty}"), *n as f64);
    }
    m
}

fn delay_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bdelay\s*=\s*([0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?)").unwrap())
}

fn lev_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\blev\s*=\s*([0-9]+)").unwrap())
}

/// Delay estimate from the last ABC `print_stats` line in a Yosys log; the
/// logic level count stands in when no delay is printed.
pub fn parse_abc_delay(log: &str) -> Option<f64> {
    let stats_lines: Vec<&str> = log
        .lines()
        .filter(|l| l.contains("ABC") || l.contains("lev ="))
        .collect();
    for line in stats_lines.iter().rev() {
        if let Some(c) = delay_re().captures(line) {
            return c[1].parse().ok();
        }
    }
    for line in stats_lines.iter().rev() {
        if let Some(c) = lev_re().captures(line) {
            return c[1].parse().ok();
        }
    }
    None
}

fn yosys_errors(text: &str, lines: usize) -> String {
    let errs: Vec<&str> = text
        .lines()
        .filter(|l| l.contains("ERROR") || l.contains("rror:"))
        .collect();
    if errs.is_empty() {
        process::excerpt(text, lines)
    } else {
        let start = errs.len().saturating_sub(lines);
        errs[start..].join("\n")
    }
}

struct YosysRun {
    dir: PathBuf,
    log: String,
    ok: bool,
    timed_out: bool,
}

fn run_script(
    yosys: &Path,
    scratch: &Path,
    subdir: &str,
    rtl: &str,
    script: &str,
    timeout: Duration,
    artifacts: &mut Artifacts,
    evaluator: &str,
) -> std::io::Result<YosysRun> {
    let dir = scratch.join(subdir);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("candidate.v"), rtl)?;
    std::fs::write(dir.join("flow.ys"), script)?;
    let run = process::run_tool(yosys, ["-s", "flow.ys"], &dir, "yosys", timeout)?;
    artifacts.add_file(evaluator, run.stdout_path.clone());
    Ok(YosysRun {
        log: run.combined(),
        ok: run.success(),
        timed_out: run.timed_out,
        dir,
    })
}

pub struct SynthesisEvaluator {
    yosys: Option<PathBuf>,
    timeout: Duration,
    feedback_lines: usize,
}

impl SynthesisEvaluator {
    pub fn new(config: &EvaluatorConfig) -> Self {
        Self {
            yosys: process::resolve_any(&config.tools.yosys),
            timeout: config.timeout(SYNTHESIS),
            feedback_lines: config.feedback_lines,
        }
    }

    pub fn script(top: &str) -> String {
        format!(
            "read_verilog -sv candidate.v\n\
             hierarchy -check -top {top}\n\
             proc\n\
             flatten\n\
             opt\n\
             memory -nomap\n\
             opt_clean\n\
             tee -q -o stat.json stat -json\n\
             write_json netlist.json\n"
        )
    }
}

impl Evaluator for SynthesisEvaluator {
    fn name(&self) -> &str {
        SYNTHESIS
    }

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult {
        let Some(yosys) = &self.yosys else {
            return super::tool_missing(SYNTHESIS, "yosys");
        };
        let script = Self::script(input.task.module_name());
        let run = match run_script(
            yosys,
            input.scratch,
            "synthesis",
            input.rtl,
            &script,
            self.timeout,
            artifacts,
            SYNTHESIS,
        ) {
            Ok(r) => r,
            Err(e) => {
                return EvaluatorResult::new(SYNTHESIS, Outcome::ToolUnavailable)
                    .with_feedback(format!("running yosys: {e}"))
            }
        };
        if run.timed_out {
            return EvaluatorResult::new(SYNTHESIS, Outcome::Timeout)
                .with_feedback(format!("yosys exceeded {} ms", self.timeout.as_millis()));
        }
        if !run.ok {
            return with_hints(
                EvaluatorResult::new(SYNTHESIS, Outcome::CompileError),
                yosys_errors(&run.log, self.feedback_lines),
            );
        }
        let stat = std::fs::read_to_string(run.dir.join("stat.json"))
            .map_err(|e| e.to_string())
            .and_then(|t| parse_stat_json(&t));
        let stat = match stat {
            Ok(s) => s,
            Err(e) => {
                return EvaluatorResult::new(SYNTHESIS, Outcome::UnknownFailure)
                    .with_feedback(format!("reading yosys statistics: {e}"))
            }
        };
        let netlist = run.dir.join("netlist.json");
        if netlist.is_file() {
            artifacts.add_file(SYNTHESIS, netlist.clone());
            artifacts.netlist = Some(netlist);
        }
        let mut result = EvaluatorResult::new(SYNTHESIS, Outcome::Passed);
        for (k, v) in synthesis_metrics(&stat) {
            result.insert_metric(k, v);
        }
        result
    }

    fn missing_tools(&self) -> Vec<String> {
        if self.yosys.is_none() {
            vec!["yosys".into()]
        } else {
            vec![]
        }
    }
}

pub struct TimingEvaluator {
    yosys: Option<PathBuf>,
    timeout: Duration,
    feedback_lines: usize,
}

pub const ABC_SCRIPT: &str = "strash\ndc2\nmap\nprint_stats\n";

impl TimingEvaluator {
    pub fn new(config: &EvaluatorConfig) -> Self {
        Self {
            yosys: process::resolve_any(&config.tools.yosys),
            timeout: config.timeout(TIMING),
            feedback_lines: config.feedback_lines,
        }
    }

    pub fn script(top: &str, abc_script: &Path) -> String {
        format!(
            "read_verilog -sv candidate.v\n\
             hierarchy -check -top {top}\n\
             synth -flatten -noabc -top {top}\n\
             abc -script {}\n\
             opt_clean\n\
             tee -q -o stat.json stat -json\n",
            abc_script.display()
        )
    }
}

/// Splits mapped-cell counts into (logic cells, flip-flops).
pub fn split_dff(stat: &StatTotals) -> (u64, u64) {
    let dff: u64 = stat
        .num_cells_by_type
        .iter()
        .filter(|(ty, _)| ty.to_ascii_uppercase().contains("DFF"))
        .map(|(_, n)| *n)
        .sum();
    (stat.num_cells.saturating_sub(dff), dff)
}

impl Evaluator for TimingEvaluator {
    fn name(&self) -> &str {
        TIMING
    }

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult {
        if artifacts.netlist.is_none() {
            return super::unmet_dependency(TIMING, "a synthesized netlist");
        }
        let Some(yosys) = &self.yosys else {
            return super::tool_missing(TIMING, "yosys");
        };
        let dir = input.scratch.join("timing");
        if let Err(e) = std::fs::create_dir_all(&dir) {
            return EvaluatorResult::new(TIMING, Outcome::UnknownFailure)
                .with_feedback(format!("creating {}: {e}", dir.display()));
        }
        let abc_path = std::fs::canonicalize(&dir)
            .unwrap_or_else(|_| dir.clone())
            .join("map.abc");
        if let Err(e) = std::fs::write(&abc_path, ABC_SCRIPT) {
            return EvaluatorResult::new(TIMING, Outcome::UnknownFailure)
                .with_feedback(format!("writing ABC script: {e}"));
        }
        let script = Self::script(input.task.module_name(), &abc_path);
        let run = match run_script(
            yosys,
            input.scratch,
            "timing",
            input.rtl,
            &script,
            self.timeout,
            artifacts,
            TIMING,
        ) {
            Ok(r) => r,
            Err(e) => {
                return EvaluatorResult::new(TIMING, Outcome::ToolUnavailable)
                    .with_feedback(format!("running yosys: {e}"))
            }
        };
        if run.timed_out {
            return EvaluatorResult::new(TIMING, Outcome::Timeout)
                .with_feedback(format!("ABC flow exceeded {} ms", self.timeout.as_millis()));
        }
        let stat = std::fs::read_to_string(run.dir.join("stat.json"))
            .map_err(|e| e.to_string())
            .and_then(|t| parse_stat_json(&t));
        let delay = parse_abc_delay(&run.log);
        match (run.ok, stat, delay) {
            (true, Ok(stat), Some(delay)) => {
                let (logic, dff) = split_dff(&stat);
                EvaluatorResult::new(TIMING, Outcome::Passed)
                    .with_metric("abc_logic_cells", logic as f64)
                    .with_metric("abc_dff_count", dff as f64)
                    .with_metric("abc_delay_proxy", delay)
            }
            _ => EvaluatorResult::new(TIMING, Outcome::UnknownFailure).with_feedback(format!(
                "ABC mapping did not report statistics\n{}",
                yosys_errors(&run.log, self.feedback_lines)
            )),
        }
    }

    fn missing_tools(&self) -> Vec<String> {
        if self.yosys.is_none() {
            vec!["yosys".into()]
        } else {
            vec![]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STAT: &str = r#"{
   "creator": "Yosys",
   "modules": {
      "\\t": { "num_wires": 6, "num_wire_bits": 61, "num_cells": 3,
               "num_cells_by_type": { "$add": 1, "$dff": 1, "$mul": 1 } }
   },
      "design": { "num_wires": 6, "num_wire_bits": 61, "num_cells": 3,
               "num_cells_by_type": { "$add": 1, "$dff": 1, "$mul": 1 } }
}"#;

    #[test]
    fn stat_json_totals() {
        let s = parse_stat_json(STAT).unwrap();
        assert_eq!(s.num_cells, 3);
        let m = synthesis_metrics(&s);
        assert_eq!(m["cell_count"], 3.0);
        assert_eq!(m["wire_count"], 6.0);
        assert_eq!(m["wire_bits"], 61.0);
        assert_eq!(m["cell_type:$mul"], 1.0);
    }

    #[test]
    fn stat_json_single_module_without_design() {
        let text = r#"{"modules": {"\\m": {"num_wires": 2, "num_wire_bits": 2, "num_cells": 0}}}"#;
        assert_eq!(parse_stat_json(text).unwrap().num_wires, 2);
        assert!(parse_stat_json("{}").is_err());
    }

    #[test]
    fn abc_delay_from_print_stats() {
        let log = "3.1. Executing ABC\n\
                   ABC: top  : i/o =    2/    1  lat =    0  nd =     1  edge =      2  area =1.00  delay =1.00  lev = 1\n\
                   ABC: top  : i/o =    8/    1  lat =    0  nd =     7  edge =     14  area =12.50  delay =6.40  lev = 7\n";
        assert_eq!(parse_abc_delay(log), Some(6.4));
        let lev_only = "ABC: top : i/o = 2/ 1 lat = 0 and = 3 lev = 4\n";
        assert_eq!(parse_abc_delay(lev_only), Some(4.0));
        assert_eq!(parse_abc_delay("no abc here"), None);
    }

    #[test]
    fn dff_split() {
        let mut s = StatTotals {
            num_cells: 10,
            ..Default::default()
        };
        s.num_cells_by_type.insert("$_DFF_P_".into(), 4);
        s.num_cells_by_type.insert("$_AND_".into(), 6);
        assert_eq!(split_dff(&s), (6, 4));
    }
}
