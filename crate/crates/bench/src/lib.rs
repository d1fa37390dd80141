// SPDX-License-Identifier: Apache-2.0

//! Deterministic inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtlevolve_core::model::{
    CandidateRecord, DiversityPlan, EvaluatorResult, Focus, Outcome, PathSelect, RtlCandidate, Strategy,
    VersionId,
};

/// `n` records with functional, synthesis and timing results.
pub fn records(n: usize, seed: u64) -> Vec<CandidateRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let functional = if rng.gen_bool(0.7) {
                EvaluatorResult::new("functional", Outcome::Passed)
            } else {
                EvaluatorResult::new("functional", Outcome::Mismatch)
                    .with_metric("mismatch_count", f64::from(rng.gen_range(1..10u8)))
                    .with_metric("total_samples", 10.0)
            };
            let synthesis = EvaluatorResult::new("synthesis", Outcome::Passed)
                .with_metric("cell_count", f64::from(rng.gen_range(10..500u16)))
                .with_metric("wire_count", f64::from(rng.gen_range(10..300u16)))
                .with_metric("wire_bits", f64::from(rng.gen_range(10..2000u16)));
            let timing = EvaluatorResult::new("timing", Outcome::Passed)
                .with_metric("abc_delay_proxy", rng.gen_range(1.0..40.0));
            CandidateRecord {
                task_id: "bench".into(),
                candidate: RtlCandidate {
                    version: VersionId::new(1, (i % 5) as u32 + 1),
                    rtl_text: "module top(input a, output y);\n  assign y = a;\nendmodule\n".into(),
                    strategy: Strategy::Direct,
                    plan: DiversityPlan {
                        path_select: PathSelect::None,
                        focus: Focus::Combinational,
                    },
                    skill_refs: vec![],
                    parent: None,
                    downgraded_from: None,
                    generation_error: None,
                    proposed_skills: vec![],
                },
                results: vec![functional, synthesis, timing],
                score: 0.0,
                eligible: false,
                baseline: None,
                artifacts: Default::default(),
                wall_time_ms: Default::default(),
                timestamp_ms: 0,
            }
        })
        .collect()
}

/// A model reply of roughly `lines` lines wrapping one module.
pub fn reply(lines: usize) -> String {
    let mut s = String::from("Here is the design.\n```verilog\nmodule top(input clk, input [7:0] a, output reg [7:0] y);\n");
    for i in 0..lines {
        s.push_str(&format!("  // step {i}\n"));
    }
    s.push_str("  always @(posedge clk) y <= a;\nendmodule\n```\nDone.\n");
    s
}
