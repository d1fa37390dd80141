// SPDX-License-Identifier: Apache-2.0

//! Pattern tables that turn tool output into repair hint tags.
//!
//! Tags are short identifiers shared by feedback contexts, skill retrieval
//! and prompt construction. The tables are plain data so callers can extend
//! them.

use std::collections::BTreeSet;

use crate::model::Outcome;

pub const RESET: &str = "reset";
pub const SIGNEDNESS: &str = "signedness";
pub const BITWIDTH: &str = "bitwidth";
pub const SIMPLIFY: &str = "simplify_constructs";
pub const DECLARATION: &str = "declaration";
pub const PORTS: &str = "ports";
pub const TERMINATION: &str = "termination";
pub const LATCH: &str = "latch";

/// (substring of lowercased tool output, tag)
pub const FUNCTIONAL_PATTERNS: &[(&str, &str)] = &[
    ("reset", RESET),
    ("rst", RESET),
    ("signed", SIGNEDNESS),
    ("sign", SIGNEDNESS),
    ("width", BITWIDTH),
    ("truncat", BITWIDTH),
    ("padding", BITWIDTH),
    ("not declared", DECLARATION),
    ("undeclared", DECLARATION),
    ("unable to bind", DECLARATION),
    ("implicit", DECLARATION),
    ("is not a port", PORTS),
    ("port", PORTS),
    ("latch", LATCH),
];

pub const SYNTHESIS_PATTERNS: &[(&str, &str)] = &[
    ("initial", SIMPLIFY),
    ("$display", SIMPLIFY),
    ("not supported", SIMPLIFY),
    ("unsupported", SIMPLIFY),
    ("non-synthesizable", SIMPLIFY),
    ("latch", LATCH),
    ("width", BITWIDTH),
    ("not declared", DECLARATION),
];

fn scan(text: &str, table: &[(&str, &'static str)], tags: &mut BTreeSet<&'static str>) {
    let lower = text.to_ascii_lowercase();
    for (pat, tag) in table {
        if lower.contains(pat) {
            tags.insert(tag);
        }
    }
}

/// Hint tags for a failed evaluator outcome.
pub fn derive_tags(evaluator: &str, outcome: Outcome, feedback: &str) -> Vec<String> {
    let mut tags = BTreeSet::new();
    match (evaluator, outcome) {
        (_, Outcome::Passed) | (_, Outcome::ToolUnavailable) => {}
        (crate::eval::FUNCTIONAL | crate::eval::HELDOUT, Outcome::Mismatch) => {
            scan(feedback, FUNCTIONAL_PATTERNS, &mut tags);
            tags.retain(|t| [RESET, SIGNEDNESS, BITWIDTH].contains(t));
            if tags.is_empty() {
                tags.extend([RESET, SIGNEDNESS, BITWIDTH]);
            }
        }
        (_, Outcome::Timeout) => {
            tags.insert(TERMINATION);
        }
        (crate::eval::SYNTHESIS | crate::eval::TIMING, _) => {
            tags.insert(SIMPLIFY);
            scan(feedback, SYNTHESIS_PATTERNS, &mut tags);
        }
        _ => scan(feedback, FUNCTIONAL_PATTERNS, &mut tags),
    }
    tags.into_iter().map(str::to_string).collect()
}

/// Human-readable guidance for a tag, embedded in repair prompts.
pub fn hint_text(tag: &str) -> Option<&'static str> {
    Some(match tag {
        RESET => "Check reset behaviour: which registers are reset, to what value, and whether reset is synchronous or asynchronous as the description requires.",
        SIGNEDNESS => "Check signedness: declare signed operands explicitly and use $signed() where mixed-sign arithmetic or sign extension is intended.",
        BITWIDTH => "Check bit widths: size intermediate results so that products and sums do not truncate, and slice outputs to the declared width.",
        SIMPLIFY => "Simplify constructs the synthesis flow does not support: remove initial blocks, system tasks and delays from the design module.",
        DECLARATION => "Declare every signal before use and avoid implicit nets.",
        PORTS => "Match the required module declaration exactly: port names, directions and widths.",
        TERMINATION => "The simulation did not finish: look for combinational loops or logic that never settles.",
        LATCH => "Avoid inferred latches: assign every output on every path of combinational always blocks.",
        _ => return None,
    })
}
