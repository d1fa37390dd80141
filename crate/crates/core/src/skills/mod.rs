// SPDX-License-Identifier: Apache-2.0

//! Skill files, the versioned skill registry, and retrieval.
//!
//! Layout: `skills/<category>/<skill_id>.skill` plus the append-only
//! `skills/registry.log`. A skill file is TOML front matter between `+++`
//! lines followed by the free-text guidance body.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fsutil;
use crate::model::{now_ms, DiversityPlan, EquivalenceRisk, RetrievalMode, SkillRef};

mod shipped;

pub use shipped::{install_shipped, shipped_skills};

pub const REGISTRY_FILE: &str = "registry.log";
pub const SKILL_EXT: &str = "skill";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillCategory {
    FunctionalGeneration,
    SimulatorRepair,
    SynthesisRewrite,
    TimingRewrite,
    RtlOptimization,
    DownstreamCodesign,
}

impl SkillCategory {
    pub const ALL: [SkillCategory; 6] = [
        SkillCategory::FunctionalGeneration,
        SkillCategory::SimulatorRepair,
        SkillCategory::SynthesisRewrite,
        SkillCategory::TimingRewrite,
        SkillCategory::RtlOptimization,
        SkillCategory::DownstreamCodesign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkillCategory::FunctionalGeneration => "functional_generation",
            SkillCategory::SimulatorRepair => "simulator_repair",
            SkillCategory::SynthesisRewrite => "synthesis_rewrite",
            SkillCategory::TimingRewrite => "timing_rewrite",
            SkillCategory::RtlOptimization => "rtl_optimization",
            SkillCategory::DownstreamCodesign => "downstream_codesign",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SkillError {
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("duplicate skill id `{id}` in {first} and {second}")]
    Duplicate {
        id: String,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("skills directory {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid skill: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrontMatter {
    id: String,
    name: String,
    category: SkillCategory,
    triggers: Vec<String>,
    #[serde(default)]
    risk: EquivalenceRisk,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    trigger_weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    deprecated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillFile {
    pub skill_id: String,
    pub name: String,
    pub category: SkillCategory,
    pub triggers: Vec<String>,
    /// Per-trigger match weight; absent triggers weigh 1.0.
    pub trigger_weights: BTreeMap<String, f64>,
    pub guidance: String,
    pub equivalence_risk: EquivalenceRisk,
    pub deprecated: bool,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

impl SkillFile {
    /// sha256 over name, triggers, and guidance.
    pub fn version_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0]);
        for t in &self.triggers {
            h.update(t.as_bytes());
            h.update([0]);
        }
        h.update(self.guidance.as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn validate(&self) -> Result<(), SkillError> {
        if !valid_id(&self.skill_id) {
            return Err(SkillError::Invalid(format!(
                "skill id `{}` must be lowercase [a-z0-9_-]+",
                self.skill_id
            )));
        }
        if self.name.trim().is_empty() {
            return Err(SkillError::Invalid(format!("skill `{}` has no name", self.skill_id)));
        }
        if self.triggers.is_empty() || self.triggers.iter().any(|t| t.trim().is_empty()) {
            return Err(SkillError::Invalid(format!(
                "skill `{}` needs non-empty triggers",
                self.skill_id
            )));
        }
        if self.guidance.trim().is_empty() {
            return Err(SkillError::Invalid(format!(
                "skill `{}` has no guidance",
                self.skill_id
            )));
        }
        if self
            .trigger_weights
            .values()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(SkillError::Invalid(format!(
                "skill `{}` has a negative or non-finite trigger weight",
                self.skill_id
            )));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<SkillFile, String> {
        let rest = text
            .strip_prefix("+++\n")
            .or_else(|| text.strip_prefix("+++\r\n"))
            .ok_or("missing `+++` front matter")?;
        let end = rest.find("\n+++").ok_or("unterminated front matter")?;
        let header = &rest[..end];
        let body = rest[end + 4..].trim_start_matches(['\r', '\n']);
        let fm: FrontMatter = toml::from_str(header).map_err(|e| e.to_string())?;
        let skill = SkillFile {
            skill_id: fm.id,
            name: fm.name,
            category: fm.category,
            triggers: fm.triggers,
            trigger_weights: fm.trigger_weights,
            guidance: body.trim_end().to_string(),
            equivalence_risk: fm.risk,
            deprecated: fm.deprecated,
        };
        skill.validate().map_err(|e| e.to_string())?;
        Ok(skill)
    }

    pub fn render(&self) -> String {
        let fm = FrontMatter {
            id: self.skill_id.clone(),
            name: self.name.clone(),
            category: self.category,
            triggers: self.triggers.clone(),
            risk: self.equivalence_risk,
            trigger_weights: self.trigger_weights.clone(),
            deprecated: self.deprecated,
        };
        let header = toml::to_string(&fm).expect("front matter serializes");
        format!("+++\n{header}+++\n{}\n", self.guidance.trim_end())
    }

    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(self.category.as_str()).join(format!("{}.{SKILL_EXT}", self.skill_id))
    }

    fn weight(&self, trigger: &str) -> f64 {
        self.trigger_weights.get(trigger).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublicationMode {
    Immediate,
    Validated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryVersion {
    pub skill_id: String,
    pub hash: String,
    pub timestamp_ms: u64,
    pub mode: PublicationMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRegistryEntry {
    pub skill_id: String,
    pub current_hash: String,
    pub history: Vec<RegistryVersion>,
    pub validated_count: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkillRegistry {
    pub entries: BTreeMap<String, SkillRegistryEntry>,
}

impl SkillRegistry {
    fn apply(&mut self, v: RegistryVersion) {
        let e = self
            .entries
            .entry(v.skill_id.clone())
            .or_insert_with(|| SkillRegistryEntry {
                skill_id: v.skill_id.clone(),
                current_hash: v.hash.clone(),
                history: Vec::new(),
                validated_count: 0,
            });
        if v.mode == PublicationMode::Validated {
            e.validated_count += 1;
        }
        e.current_hash = v.hash.clone();
        e.history.push(v);
    }

    /// Replays `registry.log`; malformed lines become diagnostics.
    pub fn load(path: &Path) -> (SkillRegistry, Vec<String>) {
        let mut reg = SkillRegistry::default();
        let mut diags = Vec::new();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return (reg, diags),
            Err(e) => {
                diags.push(format!("{}: {e}", path.display()));
                return (reg, diags);
            }
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RegistryVersion>(line) {
                Ok(v) => reg.apply(v),
                Err(e) => diags.push(format!("{}:{}: {e}", path.display(), i + 1)),
            }
        }
        (reg, diags)
    }

    pub fn validated_count(&self, skill_id: &str) -> u32 {
        self.entries.get(skill_id).map_or(0, |e| e.validated_count)
    }

    pub fn get(&self, skill_id: &str) -> Option<&SkillRegistryEntry> {
        self.entries.get(skill_id)
    }
}

#[derive(Debug, Clone)]
pub struct LoadedSkill {
    pub skill: SkillFile,
    pub path: PathBuf,
}

/// A loaded skill directory.
#[derive(Debug, Clone, Default)]
pub struct SkillLibrary {
    pub root: PathBuf,
    pub skills: BTreeMap<String, LoadedSkill>,
    pub registry: SkillRegistry,
    pub diagnostics: Vec<String>,
}

fn skill_paths(root: &Path) -> Result<Vec<PathBuf>, SkillError> {
    let io = |source| SkillError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == SKILL_EXT)
                && !path
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with('.'))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

impl SkillLibrary {
    pub fn load(root: &Path) -> Result<SkillLibrary, SkillError> {
        if !root.is_dir() {
            return Err(SkillError::Io {
                path: root.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            });
        }
        let mut lib = SkillLibrary {
            root: root.to_path_buf(),
            ..Default::default()
        };
        for path in skill_paths(root)? {
            let parsed = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| SkillFile::parse(&t));
            match parsed {
                Ok(skill) => {
                    if let Some(prev) = lib.skills.get(&skill.skill_id) {
                        return Err(SkillError::Duplicate {
                            id: skill.skill_id,
                            first: prev.path.clone(),
                            second: path,
                        });
                    }
                    lib.skills
                        .insert(skill.skill_id.clone(), LoadedSkill { skill, path });
                }
                Err(message) => lib.diagnostics.push(format!("{}: {message}", path.display())),
            }
        }
        let (registry, diags) = SkillRegistry::load(&root.join(REGISTRY_FILE));
        lib.registry = registry;
        lib.diagnostics.extend(diags);
        Ok(lib)
    }

    pub fn get(&self, skill_id: &str) -> Option<&SkillFile> {
        self.skills.get(skill_id).map(|l| &l.skill)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// `false` returns `static_ids` in order with mode `static`.
    pub enabled: bool,
    pub limit: usize,
    /// Registry boost per validated version.
    pub boost_per_validated: f64,
    pub boost_cap: f64,
    pub static_ids: Vec<String>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            limit: 3,
            boost_per_validated: 0.5,
            boost_cap: 2.0,
            static_ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub skill: SkillFile,
    pub score: f64,
    pub mode: RetrievalMode,
}

impl Retrieved {
    pub fn as_ref(&self) -> SkillRef {
        SkillRef {
            skill_id: self.skill.skill_id.clone(),
            mode: self.mode,
            risk: self.skill.equivalence_risk,
        }
    }
}

/// Lowercase word tokens; `snake_case` words also contribute their parts.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for word in text
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
    {
        let w = word.to_ascii_lowercase();
        if w.contains('_') {
            out.extend(w.split('_').filter(|p| !p.is_empty()).map(String::from));
        }
        out.insert(w);
    }
    out
}

/// Sum of weights of triggers whose words all occur in `context`; trigger
/// words split on whitespace, `_`, and `-`.
pub fn trigger_score(skill: &SkillFile, context: &BTreeSet<String>) -> f64 {
    skill
        .triggers
        .iter()
        .filter(|t| {
            let mut words = t
                .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
                .filter(|w| !w.is_empty())
                .peekable();
            words.peek().is_some() && words.all(|w| context.contains(&w.to_ascii_lowercase()))
        })
        .map(|t| skill.weight(t))
        .sum()
}

/// Ranked subset `S_{i,k}` for one minor attempt.
pub fn retrieve(
    library: &SkillLibrary,
    task_text: &str,
    hint_tags: &[String],
    plan: &DiversityPlan,
    config: &RetrievalConfig,
) -> Vec<Retrieved> {
    if !config.enabled {
        return config
            .static_ids
            .iter()
            .filter_map(|id| library.get(id))
            .take(config.limit)
            .map(|s| Retrieved {
                skill: s.clone(),
                score: 0.0,
                mode: RetrievalMode::Static,
            })
            .collect();
    }
    if config.limit == 0 {
        return Vec::new();
    }
    let mut context = tokenize(task_text);
    for t in hint_tags.iter().cloned().chain(plan.tags()) {
        context.extend(tokenize(&t));
        context.insert(t.to_ascii_lowercase());
    }
    let mut scored: Vec<Retrieved> = library
        .skills
        .values()
        .map(|l| &l.skill)
        .filter(|s| !s.deprecated)
        .filter_map(|s| {
            let matched = trigger_score(s, &context);
            if matched <= 0.0 {
                return None;
            }
            let boost = (config.boost_per_validated
                * library.registry.validated_count(&s.skill_id) as f64)
                .min(config.boost_cap);
            Some(Retrieved {
                skill: s.clone(),
                score: matched + boost,
                mode: RetrievalMode::Retrieved,
            })
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.skill.skill_id.cmp(&b.skill.skill_id))
    });
    scored.truncate(config.limit);
    scored
}

#[derive(Debug, Clone, PartialEq)]
pub enum WriteOutcome {
    Published(SkillRegistryEntry),
    /// Content identical to the current version.
    Skipped,
}

/// Persists `skill` atomically and appends a registry version.
pub fn write_skill(
    library: &mut SkillLibrary,
    skill: &SkillFile,
    mode: PublicationMode,
) -> Result<WriteOutcome, SkillError> {
    skill.validate()?;
    let hash = skill.version_hash();
    let current = library
        .registry
        .get(&skill.skill_id)
        .map(|e| e.current_hash.clone())
        .or_else(|| library.get(&skill.skill_id).map(|s| s.version_hash()));
    if current.as_deref() == Some(hash.as_str()) {
        return Ok(WriteOutcome::Skipped);
    }
    let path = library.root.join(skill.relative_path());
    let io = |source| SkillError::Io {
        path: path.clone(),
        source,
    };
    fsutil::write_atomic(&path, skill.render().as_bytes()).map_err(io)?;
    if let Some(prev) = library.skills.get(&skill.skill_id) {
        if prev.path != path {
            let _ = std::fs::remove_file(&prev.path);
        }
    }
    let version = RegistryVersion {
        skill_id: skill.skill_id.clone(),
        hash,
        timestamp_ms: now_ms(),
        mode,
    };
    let line = serde_json::to_string(&version).expect("registry line serializes");
    fsutil::append_line(&library.root.join(REGISTRY_FILE), &line).map_err(io)?;
    library.registry.apply(version);
    library.skills.insert(
        skill.skill_id.clone(),
        LoadedSkill {
            skill: skill.clone(),
            path,
        },
    );
    Ok(WriteOutcome::Published(
        library.registry.get(&skill.skill_id).cloned().expect("just applied"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Focus, PathSelect};

    fn skill(id: &str, triggers: &[&str]) -> SkillFile {
        SkillFile {
            skill_id: id.into(),
            name: format!("{id} name"),
            category: SkillCategory::TimingRewrite,
            triggers: triggers.iter().map(|s| s.to_string()).collect(),
            trigger_weights: BTreeMap::new(),
            guidance: format!("guidance for {id}"),
            equivalence_risk: EquivalenceRisk::Low,
            deprecated: false,
        }
    }

    fn plan() -> DiversityPlan {
        DiversityPlan {
            path_select: PathSelect::None,
            focus: Focus::Mixed,
        }
    }

    #[test]
    fn render_parse_round_trip() {
        let mut s = skill("pipe", &["pipeline", "critical path"]);
        s.trigger_weights.insert("pipeline".into(), 2.0);
        s.equivalence_risk = EquivalenceRisk::High;
        let back = SkillFile::parse(&s.render()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.version_hash(), s.version_hash());
    }

    #[test]
    fn hash_ignores_category_and_risk() {
        let a = skill("a", &["x"]);
        let mut b = a.clone();
        b.category = SkillCategory::RtlOptimization;
        b.equivalence_risk = EquivalenceRisk::High;
        assert_eq!(a.version_hash(), b.version_hash());
        b.guidance.push('!');
        assert_ne!(a.version_hash(), b.version_hash());
    }

    #[test]
    fn missing_triggers_rejected() {
        let text = "+++\nid = \"x\"\nname = \"x\"\ncategory = \"timing_rewrite\"\ntriggers = []\n+++\nbody\n";
        assert!(SkillFile::parse(text).unwrap_err().contains("triggers"));
    }

    #[test]
    fn tokenize_splits_snake_case() {
        let t = tokenize("A timing_critical Pipeline-stage");
        for w in ["a", "timing_critical", "timing", "critical", "pipeline", "stage"] {
            assert!(t.contains(w), "{w}");
        }
    }

    #[test]
    fn multiword_trigger_needs_all_words() {
        let s = skill("a", &["critical path"]);
        assert_eq!(trigger_score(&s, &tokenize("the critical path")), 1.0);
        assert_eq!(trigger_score(&s, &tokenize("critical only")), 0.0);
    }

    #[test]
    fn limit_zero_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = SkillLibrary::load(dir.path()).unwrap();
        write_skill(&mut lib, &skill("a", &["pipeline"]), PublicationMode::Immediate).unwrap();
        let cfg = RetrievalConfig {
            limit: 0,
            ..Default::default()
        };
        assert!(retrieve(&lib, "pipeline", &[], &plan(), &cfg).is_empty());
    }

    #[test]
    fn static_mode_returns_configured_subset() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = SkillLibrary::load(dir.path()).unwrap();
        write_skill(&mut lib, &skill("a", &["x"]), PublicationMode::Immediate).unwrap();
        write_skill(&mut lib, &skill("b", &["y"]), PublicationMode::Immediate).unwrap();
        let cfg = RetrievalConfig {
            enabled: false,
            static_ids: vec!["b".into(), "missing".into()],
            ..Default::default()
        };
        let got = retrieve(&lib, "", &[], &plan(), &cfg);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].skill.skill_id, "b");
        assert_eq!(got[0].mode, RetrievalMode::Static);
    }
}
