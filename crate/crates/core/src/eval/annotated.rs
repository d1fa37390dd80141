// SPDX-License-Identifier: Apache-2.0

//! Evaluator that reads its verdict from pragmas embedded in the candidate:
//!
//! ```text
//! // @eval functional mismatch mismatch_count=3 total_samples=10 # y wrong after reset
//! // @eval synthesis passed cell_count=150
//! ```
//!
//! An evaluator without a pragma passes with no metrics. Scripted runs use
//! this to replay fixed evaluator outcomes without any installed tools.

use super::{Artifacts, EvalInput, Evaluator};
use crate::model::{EvaluatorResult, Outcome};

pub struct AnnotatedEvaluator {
    name: String,
}

impl AnnotatedEvaluator {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
        }
    }
}

/// Parses the first `// @eval <name> ...` pragma for `name`.
pub fn parse_pragma(rtl: &str, name: &str) -> Option<EvaluatorResult> {
    for line in rtl.lines() {
        let Some(rest) = line.trim_start().strip_prefix("// @eval") else {
            continue;
        };
        let (spec, feedback) = match rest.split_once('#') {
            Some((s, f)) => (s, f.trim()),
            None => (rest, ""),
        };
        let mut words = spec.split_whitespace();
        if words.next() != Some(name) {
            continue;
        }
        let outcome = words
            .next()
            .and_then(|w| w.parse::<Outcome>().ok())
            .unwrap_or(Outcome::UnknownFailure);
        let mut result = EvaluatorResult::new(name, outcome).with_feedback(feedback);
        for kv in words {
            if let Some((k, v)) = kv.split_once('=') {
                if let Ok(v) = v.parse::<f64>() {
                    result.insert_metric(k, v);
                }
            }
        }
        if !result.passed && result.feedback.is_empty() {
            result.feedback = format!("{name}: {outcome}");
        }
        return Some(result);
    }
    None
}

impl Evaluator for AnnotatedEvaluator {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult {
        let result = parse_pragma(input.rtl, &self.name)
            .unwrap_or_else(|| EvaluatorResult::new(self.name.clone(), Outcome::Passed));
        if self.name == super::SYNTHESIS && result.passed {
            artifacts.netlist = Some(input.scratch.join("netlist.json"));
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_outcome_metrics_and_feedback() {
        let rtl = "module m();\n// @eval functional mismatch mismatch_count=3 total_samples=10 # y wrong\nendmodule";
        let r = parse_pragma(rtl, "functional").unwrap();
        assert_eq!(r.outcome, Outcome::Mismatch);
        assert!(!r.passed);
        assert_eq!(r.metric("mismatch_count"), Some(3.0));
        assert_eq!(r.metric("total_samples"), Some(10.0));
        assert_eq!(r.feedback, "y wrong");
    }

    #[test]
    fn absent_pragma_is_none() {
        assert!(parse_pragma("module m(); endmodule", "synthesis").is_none());
    }

    #[test]
    fn other_names_are_ignored() {
        let rtl = "// @eval synthesis compile_error\n// @eval functional passed";
        assert_eq!(parse_pragma(rtl, "functional").unwrap().outcome, Outcome::Passed);
        assert_eq!(
            parse_pragma(rtl, "synthesis").unwrap().outcome,
            Outcome::CompileError
        );
    }
}
