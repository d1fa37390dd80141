// SPDX-License-Identifier: Apache-2.0

//! Built-in mixed-precision GEMM task profiles.
//!
//! | profile | interface | function |
//! |---|---|---|
//! | `int4_int8_mac_pe` | `clk, rst, a[3:0], b[7:0] -> acc[31:0]` | `acc <= acc + a*b`, wrapping |
//! | `mixed_precision_dot4` | `a[15:0], b[31:0] -> y[31:0]` | sum of four int4 x int8 products |
//! | `requantize_int32_to_int8` | `x[31:0], shift[3:0] -> y[7:0]` | `x / 2^shift`, round half to even, saturate |
//!
//! All operands are two's complement except `shift`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::netlist::DownstreamParams;
use crate::task::TaskSpec;

mod testbench;

pub use testbench::{golden_rtl, overfit_rtl, testbench};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GemmProfile {
    Int4Int8MacPe,
    MixedPrecisionDot4,
    RequantizeInt32ToInt8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operand {
    pub name: &'static str,
    pub width: u32,
    pub signed: bool,
    /// Inclusive value range accepted by the reference model.
    pub min: i64,
    pub max: i64,
}

const fn signed(name: &'static str, width: u32) -> Operand {
    Operand {
        name,
        width,
        signed: true,
        min: -(1i64 << (width - 1)),
        max: (1i64 << (width - 1)) - 1,
    }
}

const MAC_OPERANDS: [Operand; 2] = [signed("a", 4), signed("b", 8)];
const DOT4_OPERANDS: [Operand; 8] = [
    signed("a0", 4),
    signed("a1", 4),
    signed("a2", 4),
    signed("a3", 4),
    signed("b0", 8),
    signed("b1", 8),
    signed("b2", 8),
    signed("b3", 8),
];
const REQUANT_OPERANDS: [Operand; 2] = [
    signed("x", 32),
    Operand {
        name: "shift",
        width: 4,
        signed: false,
        min: 0,
        max: 8,
    },
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GemmError {
    #[error("unsupported GEMM profile `{0}`")]
    UnsupportedProfile(String),
    #[error("operand {name} = {value} outside [{min}, {max}]")]
    Domain {
        name: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("expected {expected} operands, got {got}")]
    Arity { expected: usize, got: usize },
}

impl GemmProfile {
    pub const ALL: [GemmProfile; 3] = [
        GemmProfile::Int4Int8MacPe,
        GemmProfile::MixedPrecisionDot4,
        GemmProfile::RequantizeInt32ToInt8,
    ];

    pub fn id(self) -> &'static str {
        match self {
            GemmProfile::Int4Int8MacPe => "int4_int8_mac_pe",
            GemmProfile::MixedPrecisionDot4 => "mixed_precision_dot4",
            GemmProfile::RequantizeInt32ToInt8 => "requantize_int32_to_int8",
        }
    }

    pub fn by_id(id: &str) -> Option<GemmProfile> {
        Self::ALL.into_iter().find(|p| p.id() == id)
    }

    pub fn parse(id: &str) -> Result<GemmProfile, GemmError> {
        Self::by_id(id).ok_or_else(|| GemmError::UnsupportedProfile(id.to_string()))
    }

    /// Per-case operands driven by the testbench.
    pub fn operands(self) -> &'static [Operand] {
        match self {
            GemmProfile::Int4Int8MacPe => &MAC_OPERANDS,
            GemmProfile::MixedPrecisionDot4 => &DOT4_OPERANDS,
            GemmProfile::RequantizeInt32ToInt8 => &REQUANT_OPERANDS,
        }
    }

    pub fn is_sequential(self) -> bool {
        self == GemmProfile::Int4Int8MacPe
    }

    pub fn output_width(self) -> u32 {
        match self {
            GemmProfile::RequantizeInt32ToInt8 => 8,
            _ => 32,
        }
    }

    pub fn module_header(self) -> &'static str {
        match self {
            GemmProfile::Int4Int8MacPe => "module int4_int8_mac_pe(input clk, input rst, input signed [3:0] a, input signed [7:0] b, output reg signed [31:0] acc);",
            GemmProfile::MixedPrecisionDot4 => "module mixed_precision_dot4(input [15:0] a, input [31:0] b, output [31:0] y);",
            GemmProfile::RequantizeInt32ToInt8 => "module requantize_int32_to_int8(input signed [31:0] x, input [3:0] shift, output signed [7:0] y);",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            GemmProfile::Int4Int8MacPe => "Implement a multiply-accumulate processing element for mixed-precision GEMM. \
On every rising clock edge, if rst is high the 32-bit accumulator acc is cleared to zero (synchronous reset); \
otherwise acc is updated to acc + a*b, where a is a signed 4-bit operand and b is a signed 8-bit operand, \
both sign-extended. The accumulator wraps around on overflow (two's-complement, no saturation).",
            GemmProfile::MixedPrecisionDot4 => "Implement a combinational mixed-precision dot product of four int4 x int8 pairs. \
Input a packs four signed 4-bit values (a[3:0] is element 0, a[15:12] element 3) and input b packs four \
signed 8-bit values (b[7:0] is element 0, b[31:24] element 3). Output y is the signed 32-bit sum of the \
four sign-extended products.",
            GemmProfile::RequantizeInt32ToInt8 => "Implement a combinational requantizer from int32 to int8. Divide the signed 32-bit \
input x by 2^shift (shift in 0..8), rounding to the nearest integer with ties going to the even value, \
then saturate the result to the signed 8-bit range [-128, 127] and drive it on y.",
        }
    }

    pub fn preferred_widths(self) -> Vec<u32> {
        match self {
            GemmProfile::Int4Int8MacPe => vec![4, 8, 32],
            GemmProfile::MixedPrecisionDot4 => vec![4, 8, 16, 32],
            GemmProfile::RequantizeInt32ToInt8 => vec![8, 32],
        }
    }

    pub fn downstream_params(self) -> DownstreamParams {
        let (expected_bw_hits, target_depth) = match self {
            GemmProfile::Int4Int8MacPe => (3, 1),
            GemmProfile::MixedPrecisionDot4 => (3, 0),
            GemmProfile::RequantizeInt32ToInt8 => (2, 0),
        };
        DownstreamParams {
            preferred_widths: self.preferred_widths(),
            expected_bw_hits,
            target_depth,
            ..DownstreamParams::default()
        }
    }

    fn check_domain(self, operands: &[Operand], values: &[i64]) -> Result<(), GemmError> {
        if operands.len() != values.len() {
            return Err(GemmError::Arity {
                expected: operands.len(),
                got: values.len(),
            });
        }
        for (op, &v) in operands.iter().zip(values) {
            if v < op.min || v > op.max {
                return Err(GemmError::Domain {
                    name: op.name,
                    value: v,
                    min: op.min,
                    max: op.max,
                });
            }
        }
        Ok(())
    }

    /// Software reference model. For the MAC PE the inputs are
    /// `[acc, a, b]` and the result is the next accumulator value; for the
    /// combinational profiles they are the operands in [`operands`] order.
    ///
    /// [`operands`]: GemmProfile::operands
    pub fn reference_eval(self, inputs: &[i64]) -> Result<i64, GemmError> {
        match self {
            GemmProfile::Int4Int8MacPe => {
                const ACC: [Operand; 3] = [signed("acc", 32), signed("a", 4), signed("b", 8)];
                self.check_domain(&ACC, inputs)?;
                Ok(mac_step(inputs[0], inputs[1], inputs[2]))
            }
            GemmProfile::MixedPrecisionDot4 => {
                self.check_domain(&DOT4_OPERANDS, inputs)?;
                let sum: i64 = (0..4).map(|j| inputs[j] * inputs[4 + j]).sum();
                Ok(wrap32(sum))
            }
            GemmProfile::RequantizeInt32ToInt8 => {
                self.check_domain(&REQUANT_OPERANDS, inputs)?;
                Ok(requantize(inputs[0], inputs[1] as u32))
            }
        }
    }

    /// Expected output after each case, as checked by the testbench. The MAC
    /// PE starts from a reset accumulator and carries state across cases.
    pub fn expected_outputs(self, cases: &[Vec<i64>]) -> Result<Vec<i64>, GemmError> {
        match self {
            GemmProfile::Int4Int8MacPe => {
                let mut acc = 0;
                cases
                    .iter()
                    .map(|c| {
                        acc = self.reference_eval(&[acc, c[0], c[1]])?;
                        Ok(acc)
                    })
                    .collect()
            }
            _ => cases.iter().map(|c| self.reference_eval(c)).collect(),
        }
    }

    /// Fixed small case set of the visible testbench.
    pub fn visible_cases(self) -> Vec<Vec<i64>> {
        match self {
            GemmProfile::Int4Int8MacPe => vec![
                vec![1, 1],
                vec![2, 3],
                vec![-1, 5],
                vec![7, 127],
                vec![-8, -128],
                vec![3, -7],
                vec![0, 99],
                vec![-4, 64],
            ],
            GemmProfile::MixedPrecisionDot4 => vec![
                vec![1, 1, 1, 1, 1, 1, 1, 1],
                vec![0, 0, 0, 0, 5, 6, 7, 8],
                vec![1, 2, 3, 4, 10, 20, 30, 40],
                vec![-1, -2, -3, -4, 10, 20, 30, 40],
                vec![7, 7, 7, 7, 127, 127, 127, 127],
                vec![-8, -8, -8, -8, -128, -128, -128, -128],
                vec![-8, 7, -1, 2, 127, -128, 3, -5],
                vec![5, -6, 0, 1, -9, 11, 100, -100],
            ],
            GemmProfile::RequantizeInt32ToInt8 => vec![
                vec![0, 0],
                vec![100, 0],
                vec![300, 0],
                vec![5, 1],
                vec![7, 1],
                vec![-5, 1],
                vec![1000, 4],
                vec![-1000, 4],
                vec![24, 4],
                vec![40, 4],
                vec![2_000_000, 8],
                vec![-2_000_000, 8],
            ],
        }
    }

    /// Seeded random cases with boosted corner values.
    pub fn generate_cases(self, seed: u64, n: usize) -> Vec<Vec<i64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ profile_salt(self));
        (0..n)
            .map(|_| {
                let mut case: Vec<i64> = self
                    .operands()
                    .iter()
                    .map(|op| draw_operand(&mut rng, op))
                    .collect();
                if self == GemmProfile::RequantizeInt32ToInt8 && rng.gen_bool(0.35) {
                    // keep the quotient near the int8 range so rounding is exercised
                    let s = case[1] as u32;
                    let span = 1i64 << (s + 8);
                    case[0] = rng.gen_range(-span..span);
                }
                case
            })
            .collect()
    }

    /// Writes `<out>/<profile>/task.toml` and `tb.v` and returns the task.
    pub fn emit_task_spec(self, out_dir: &Path) -> std::io::Result<TaskSpec> {
        let dir = out_dir.join(self.id());
        std::fs::create_dir_all(&dir)?;
        let tb_path = dir.join("tb.v");
        let cases = self.visible_cases();
        let tb = testbench(self, &cases).expect("visible cases are in-domain");
        std::fs::write(&tb_path, tb)?;
        let task = TaskSpec {
            task_id: self.id().to_string(),
            description: self.description().to_string(),
            module_header: self.module_header().to_string(),
            visible_testbench: Some(PathBuf::from("tb.v")),
            heldout_profile: Some(self.id().to_string()),
            tags: vec!["gemm".into(), "mixed_precision".into()],
        };
        std::fs::write(dir.join("task.toml"), task.to_toml())?;
        Ok(TaskSpec {
            visible_testbench: Some(tb_path),
            ..task
        })
    }
}

fn profile_salt(p: GemmProfile) -> u64 {
    match p {
        GemmProfile::Int4Int8MacPe => 0x6d61_6370,
        GemmProfile::MixedPrecisionDot4 => 0x646f_7434,
        GemmProfile::RequantizeInt32ToInt8 => 0x7271_7538,
    }
}

fn draw_operand(rng: &mut ChaCha8Rng, op: &Operand) -> i64 {
    if rng.gen_bool(0.25) {
        let corners = [op.min, op.max, 0, if op.signed { -1 } else { 1 }];
        corners[rng.gen_range(0..corners.len())]
    } else {
        rng.gen_range(op.min..=op.max)
    }
}

fn wrap32(v: i64) -> i64 {
    v as i32 as i64
}

fn mac_step(acc: i64, a: i64, b: i64) -> i64 {
    wrap32(acc + a * b)
}

/// Divides by `2^shift` rounding half to even, then saturates to int8.
pub fn requantize(x: i64, shift: u32) -> i64 {
    let divisor = 1i64 << shift;
    let q = x.div_euclid(divisor);
    let twice_rem = 2 * x.rem_euclid(divisor);
    let rounded = if twice_rem > divisor || (twice_rem == divisor && q.rem_euclid(2) == 1) {
        q + 1
    } else {
        q
    };
    rounded.clamp(-128, 127)
}
