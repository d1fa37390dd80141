// SPDX-License-Identifier: Apache-2.0

//! Verilog testbench emission and reference RTL for the GEMM profiles.

use std::fmt::Write as _;

use super::{GemmError, GemmProfile};

const MAC_GOLDEN: &str = include_str!("../../fixtures/gemm/int4_int8_mac_pe.v");
const DOT4_GOLDEN: &str = include_str!("../../fixtures/gemm/mixed_precision_dot4.v");
const REQUANT_GOLDEN: &str = include_str!("../../fixtures/gemm/requantize_int32_to_int8.v");

/// Hand-written RTL that passes both the visible and held-out testbenches.
pub fn golden_rtl(profile: GemmProfile) -> &'static str {
    match profile {
        GemmProfile::Int4Int8MacPe => MAC_GOLDEN,
        GemmProfile::MixedPrecisionDot4 => DOT4_GOLDEN,
        GemmProfile::RequantizeInt32ToInt8 => REQUANT_GOLDEN,
    }
}

fn lit(width: u32, value: i64) -> String {
    let mask = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
    format!("{width}'h{:x}", (value as u64) & mask)
}

/// Packs operand `j` of `lanes` equal-width lanes starting at lane 0 in the LSBs.
fn pack(width: u32, lanes: &[i64]) -> i64 {
    let mask = (1i64 << width) - 1;
    lanes
        .iter()
        .enumerate()
        .fold(0i64, |acc, (j, v)| acc | ((v & mask) << (width as usize * j)))
}

/// Port-level stimulus for one case, as `(port, width, value)`.
fn stimulus(profile: GemmProfile, case: &[i64]) -> Vec<(&'static str, u32, i64)> {
    match profile {
        GemmProfile::Int4Int8MacPe => vec![("a", 4, case[0]), ("b", 8, case[1])],
        GemmProfile::MixedPrecisionDot4 => vec![
            ("a", 16, pack(4, &case[0..4])),
            ("b", 32, pack(8, &case[4..8])),
        ],
        GemmProfile::RequantizeInt32ToInt8 => vec![("x", 32, case[0]), ("shift", 4, case[1])],
    }
}

fn output_port(profile: GemmProfile) -> &'static str {
    match profile {
        GemmProfile::Int4Int8MacPe => "acc",
        _ => "y",
    }
}

/// Self-checking testbench that prints `Mismatches: N in M samples`.
pub fn testbench(profile: GemmProfile, cases: &[Vec<i64>]) -> Result<String, GemmError> {
    let expected = profile.expected_outputs(cases)?;
    let out = output_port(profile);
    let ow = profile.output_width();
    let mut s = String::new();
    s.push_str("`timescale 1ns/1ps\nmodule tb;\n");
    match profile {
        GemmProfile::Int4Int8MacPe => {
            s.push_str("  reg clk;\n  reg rst;\n  reg [3:0] a;\n  reg [7:0] b;\n  wire [31:0] acc;\n");
            s.push_str("  int4_int8_mac_pe dut(.clk(clk), .rst(rst), .a(a), .b(b), .acc(acc));\n");
            s.push_str("  always #5 clk = ~clk;\n");
        }
        GemmProfile::MixedPrecisionDot4 => {
            s.push_str("  reg [15:0] a;\n  reg [31:0] b;\n  wire [31:0] y;\n");
            s.push_str("  mixed_precision_dot4 dut(.a(a), .b(b), .y(y));\n");
        }
        GemmProfile::RequantizeInt32ToInt8 => {
            s.push_str("  reg [31:0] x;\n  reg [3:0] shift;\n  wire [7:0] y;\n");
            s.push_str("  requantize_int32_to_int8 dut(.x(x), .shift(shift), .y(y));\n");
        }
    }
    s.push_str("  integer mismatches;\n  integer samples;\n  initial begin\n");
    s.push_str("    mismatches = 0;\n    samples = 0;\n");
    if profile.is_sequential() {
        s.push_str("    clk = 0;\n    rst = 1;\n    a = 0;\n    b = 0;\n");
        s.push_str("    @(posedge clk);\n    #1;\n    rst = 0;\n");
    }
    for (i, (case, exp)) in cases.iter().zip(&expected).enumerate() {
        for (port, w, v) in stimulus(profile, case) {
            let _ = writeln!(s, "    {port} = {};", lit(w, v));
        }
        if profile.is_sequential() {
            s.push_str("    @(posedge clk);\n    #1;\n");
        } else {
            s.push_str("    #1;\n");
        }
        let e = lit(ow, *exp);
        let _ = writeln!(s, "    samples = samples + 1;");
        let _ = writeln!(
            s,
            "    if ({out} !== {e}) begin mismatches = mismatches + 1; $display(\"MISMATCH case {i}: {out}=%0d expected %0d\", $signed({out}), $signed({e})); end"
        );
    }
    s.push_str("    $display(\"Mismatches: %0d in %0d samples\", mismatches, samples);\n");
    s.push_str("    $finish;\n  end\nendmodule\n");
    Ok(s)
}

/// RTL that memorizes the visible cases and is wrong elsewhere.
pub fn overfit_rtl(profile: GemmProfile) -> String {
    let cases = profile.visible_cases();
    let expected = profile
        .expected_outputs(&cases)
        .expect("visible cases are in-domain");
    let mut s = String::new();
    match profile {
        GemmProfile::Int4Int8MacPe => {
            s.push_str("module int4_int8_mac_pe(input clk, input rst, input signed [3:0] a, input signed [7:0] b, output reg signed [31:0] acc);\n");
            s.push_str("  reg [4:0] step;\n  always @(posedge clk) begin\n");
            s.push_str("    if (rst) begin step <= 5'd0; acc <= 32'd0; end\n    else begin\n      step <= step + 5'd1;\n      case (step)\n");
            for (i, e) in expected.iter().enumerate() {
                let _ = writeln!(s, "        5'd{i}: acc <= {};", lit(32, *e));
            }
            s.push_str("        default: acc <= 32'd0;\n      endcase\n    end\n  end\nendmodule\n");
        }
        GemmProfile::MixedPrecisionDot4 | GemmProfile::RequantizeInt32ToInt8 => {
            let (header, key, kw, ow) = if profile == GemmProfile::MixedPrecisionDot4 {
                (
                    "module mixed_precision_dot4(input [15:0] a, input [31:0] b, output reg [31:0] y);",
                    "{a, b}",
                    48,
                    32,
                )
            } else {
                (
                    "module requantize_int32_to_int8(input signed [31:0] x, input [3:0] shift, output reg signed [7:0] y);",
                    "{x, shift}",
                    36,
                    8,
                )
            };
            let _ = writeln!(s, "{header}\n  always @* begin\n    case ({key})");
            for (case, e) in cases.iter().zip(&expected) {
                let st = stimulus(profile, case);
                let k = (st[0].2 & ((1i64 << st[0].1) - 1)) << st[1].1 | (st[1].2 & ((1i64 << st[1].1) - 1));
                let _ = writeln!(s, "      {}: y = {};", lit(kw, k), lit(ow, *e));
            }
            let _ = writeln!(s, "      default: y = {ow}'d0;\n    endcase\n  end\nendmodule");
        }
    }
    s
}
