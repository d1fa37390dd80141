// SPDX-License-Identifier: Apache-2.0

//! Declarative run configuration: tasks, search, scoring, evaluators,
//! provider and skills in one TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::EvaluatorConfig;
use crate::llm::ProviderConfig;
use crate::scoring::{ScoreConfig, ScoreMode};
use crate::search::SearchConfig;
use crate::task::TaskSpec;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: Option<String>,
    pub runs_dir: PathBuf,
    /// Task documents.
    pub tasks: Vec<PathBuf>,
    pub score_mode: String,
    /// Optional score file; its section named `score_mode` is merged over
    /// the preset.
    pub score_file: Option<PathBuf>,
    pub skills_dir: Option<PathBuf>,
    pub search: SearchConfig,
    pub evaluators: EvaluatorConfig,
    pub provider: ProviderConfig,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            run_id: None,
            runs_dir: PathBuf::from("runs"),
            tasks: Vec::new(),
            score_mode: ScoreMode::CorrectnessOnly.as_str().to_string(),
            score_file: None,
            skills_dir: None,
            search: SearchConfig::default(),
            evaluators: EvaluatorConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

/// A validated manifest with paths resolved against its directory.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: RunManifest,
    pub base: PathBuf,
    pub score: ScoreConfig,
    pub tasks: Vec<TaskSpec>,
}

impl RunManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ManifestError> {
        toml::from_str(text).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn score_mode(&self) -> Result<ScoreMode, ManifestError> {
        self.score_mode.parse().map_err(|_| {
            let names: Vec<&str> = ScoreMode::ALL.iter().map(|m| m.as_str()).collect();
            ManifestError::Invalid(format!(
                "unknown score mode `{}`; expected one of {}",
                self.score_mode,
                names.join(", ")
            ))
        })
    }

    /// Loads and checks everything except tool availability. Tasks are
    /// required only when `need_tasks` is set.
    pub fn load(path: &Path, need_tasks: bool) -> Result<LoadedManifest, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest = Self::parse(&text, path)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        manifest.resolve(base, need_tasks)
    }

    pub fn resolve(self, base: PathBuf, need_tasks: bool) -> Result<LoadedManifest, ManifestError> {
        let invalid = |e: &dyn std::fmt::Display| ManifestError::Invalid(e.to_string());
        let mode = self.score_mode()?;
        let score = match &self.score_file {
            Some(f) => ScoreConfig::load(&base.join(f), mode.as_str()).map_err(|e| invalid(&e))?,
            None => ScoreConfig::preset(mode),
        };
        if score.mode != mode {
            return Err(ManifestError::Invalid(format!(
                "score file section `{}` declares mode `{}`",
                self.score_mode,
                score.mode.as_str()
            )));
        }
        self.search.validate().map_err(|e| invalid(&e))?;
        self.evaluators.validate().map_err(|e| invalid(&e))?;
        self.provider.validate().map_err(|e| invalid(&e))?;
        if let Some(dir) = &self.provider.script_dir {
            if !base.join(dir).is_dir() {
                return Err(ManifestError::Invalid(format!(
                    "provider script_dir {} does not exist",
                    base.join(dir).display()
                )));
            }
        }
        if let Some(dir) = &self.skills_dir {
            if !base.join(dir).is_dir() {
                return Err(ManifestError::Invalid(format!(
                    "skills_dir {} does not exist",
                    base.join(dir).display()
                )));
            }
        }
        if need_tasks && self.tasks.is_empty() {
            return Err(ManifestError::Invalid("manifest lists no tasks".into()));
        }
        let tasks = self
            .tasks
            .iter()
            .map(|t| TaskSpec::load(&base.join(t)).map_err(|e| invalid(&e)))
            .collect::<Result<Vec<_>, _>>()?;
        crate::task::validate_batch(&tasks).map_err(|e| invalid(&e))?;
        Ok(LoadedManifest {
            manifest: self,
            base,
            score,
            tasks,
        })
    }
}

impl LoadedManifest {
    pub fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.path(&self.manifest.runs_dir)
    }

    pub fn skills_dir(&self) -> Option<PathBuf> {
        self.manifest.skills_dir.as_ref().map(|d| self.path(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_score_mode_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            score_mode: "fastest".into(),
            ..RunManifest::default()
        };
        let err = m.resolve(dir.path().to_path_buf(), false).unwrap_err();
        assert!(err.to_string().contains("unknown score mode `fastest`"));
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let m = RunManifest::default();
        let back = RunManifest::parse(&m.to_toml(), Path::new("m.toml")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunManifest::parse("tasks = []\nroundz = 3\n", Path::new("m.toml")).is_err());
    }

    #[test]
    fn missing_task_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            tasks: vec!["nope.toml".into()],
            provider: ProviderConfig::scripted("."),
            ..RunManifest::default()
        };
        assert!(m.resolve(dir.path().to_path_buf(), true).is_err());
    }
}
