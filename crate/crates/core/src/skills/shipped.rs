// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use super::{SkillError, SkillFile};
use crate::fsutil;

const SHIPPED: [(&str, &str); 6] = [
    (
        "functional_generation/reset_and_state_discipline.skill",
        include_str!("../../skills/functional_generation/reset_and_state_discipline.skill"),
    ),
    (
        "simulator_repair/signedness_and_width_repair.skill",
        include_str!("../../skills/simulator_repair/signedness_and_width_repair.skill"),
    ),
    (
        "synthesis_rewrite/synthesizable_constructs.skill",
        include_str!("../../skills/synthesis_rewrite/synthesizable_constructs.skill"),
    ),
    (
        "timing_rewrite/critical_path_balancing.skill",
        include_str!("../../skills/timing_rewrite/critical_path_balancing.skill"),
    ),
    (
        "rtl_optimization/resource_sharing.skill",
        include_str!("../../skills/rtl_optimization/resource_sharing.skill"),
    ),
    (
        "downstream_codesign/mixed_precision_gemm.skill",
        include_str!("../../skills/downstream_codesign/mixed_precision_gemm.skill"),
    ),
];

/// The six built-in skills, one per category.
pub fn shipped_skills() -> Vec<SkillFile> {
    SHIPPED
        .iter()
        .map(|(_, text)| SkillFile::parse(text).expect("shipped skill parses"))
        .collect()
}

/// Writes the shipped skills under `root`, leaving existing files alone.
/// Returns the number of files written.
pub fn install_shipped(root: &Path) -> Result<usize, SkillError> {
    let mut written = 0;
    for (rel, text) in SHIPPED {
        let path = root.join(rel);
        if path.exists() {
            continue;
        }
        fsutil::write_atomic(&path, text.as_bytes()).map_err(|source| SkillError::Io {
            path: path.clone(),
            source,
        })?;
        written += 1;
    }
    Ok(written)
}
