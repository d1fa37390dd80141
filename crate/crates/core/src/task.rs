// SPDX-License-Identifier: Apache-2.0

//! Design tasks and module-header handling.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("reading task file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing task file {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("task `{0}`: {1}")]
    Invalid(String, String),
}

/// A design task: natural-language description plus the module declaration
/// the generated RTL must implement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(rename = "id")]
    pub task_id: String,
    pub description: String,
    pub module_header: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_testbench: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_profile: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

fn module_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)").unwrap())
}

/// Name declared by a module header, e.g. `top` for `module top(input a);`.
pub fn module_name(header: &str) -> Option<&str> {
    module_name_re()
        .captures(header)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str())
}

impl TaskSpec {
    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut task: TaskSpec = toml::from_str(&text).map_err(|source| TaskError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(tb) = &task.visible_testbench {
            if tb.is_relative() {
                task.visible_testbench = Some(base.join(tb));
            }
        }
        task.validate()?;
        Ok(task)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task spec serializes")
    }

    pub fn module_name(&self) -> &str {
        module_name(&self.module_header).unwrap_or("top_module")
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let invalid = |msg: &str| Err(TaskError::Invalid(self.task_id.clone(), msg.to_string()));
        if self.task_id.trim().is_empty() {
            return invalid("empty task id");
        }
        if self.description.trim().is_empty() {
            return invalid("empty description");
        }
        let header = &self.module_header;
        let count = module_name_re().find_iter(header).count();
        if count != 1 {
            return invalid("module header must declare exactly one module");
        }
        if header.contains("endmodule") {
            return invalid("module header must not contain a module body");
        }
        if !header.contains('(') {
            return invalid("module header lacks a port list");
        }
        Ok(())
    }
}

/// Validates a batch: every task valid and ids unique.
pub fn validate_batch(tasks: &[TaskSpec]) -> Result<(), TaskError> {
    let mut seen = std::collections::BTreeSet::new();
    for t in tasks {
        t.validate()?;
        if !seen.insert(t.task_id.as_str()) {
            return Err(TaskError::Invalid(
                t.task_id.clone(),
                "duplicate task id in batch".into(),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(header: &str) -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            description: "and gate".into(),
            module_header: header.into(),
            visible_testbench: None,
            heldout_profile: None,
            tags: vec![],
        }
    }

    #[test]
    fn header_name() {
        assert_eq!(
            module_name("module top_module(input a, output y);"),
            Some("top_module")
        );
        assert_eq!(module_name("wire x;"), None);
    }

    #[test]
    fn header_validation() {
        assert!(task("module m(input a, output y);").validate().is_ok());
        assert!(task("module m(input a); endmodule").validate().is_err());
        assert!(task("module a(); module b();").validate().is_err());
        assert!(task("module m;").validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let t = task("module m(input a);");
        assert!(validate_batch(&[t.clone(), t]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut t = task("module m(input a, output y);");
        t.heldout_profile = Some("mixed_precision_dot4".into());
        let back: TaskSpec = toml::from_str(&t.to_toml()).unwrap();
        assert_eq!(back, t);
    }
}
