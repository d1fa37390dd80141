// SPDX-License-Identifier: Apache-2.0

//! Scalar objective and eligibility for evaluated candidates.
//!
//! Open-source modes minimize
//! `P_func + P_opt + λ_a·A + λ_w·W + λ_t·T + λ_d·D`; the EDA mode minimizes
//! `0.5·ΔWNS + 0.35·ΔTNS + 0.15·ΔArea + P_area + P_SEC` against the baseline
//! major. Lower is better in every mode.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::{EDA, FUNCTIONAL};
use crate::model::{CandidateRecord, EvaluatorResult, Outcome};

pub const PRESETS_TOML: &str = include_str!("../presets/score.toml");

pub const TERM_FUNC: &str = "p_func";
pub const TERM_OPT: &str = "p_opt";
pub const TERM_AREA: &str = "area";
pub const TERM_WIRE: &str = "wire";
pub const TERM_TIMING: &str = "timing";
pub const TERM_DOWNSTREAM: &str = "downstream";
pub const TERM_WNS: &str = "wns";
pub const TERM_TNS: &str = "tns";
pub const TERM_EDA_AREA: &str = "eda_area";
pub const TERM_AREA_CAP: &str = "p_area";
pub const TERM_SEC: &str = "p_sec";

const METRIC_TERMS: [&str; 4] = [TERM_AREA, TERM_WIRE, TERM_TIMING, TERM_DOWNSTREAM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    CorrectnessOnly,
    Ppa,
    Timing,
    Downstream,
    Eda,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 5] = [
        ScoreMode::CorrectnessOnly,
        ScoreMode::Ppa,
        ScoreMode::Timing,
        ScoreMode::Downstream,
        ScoreMode::Eda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::CorrectnessOnly => "correctness_only",
            ScoreMode::Ppa => "ppa",
            ScoreMode::Timing => "timing",
            ScoreMode::Downstream => "downstream",
            ScoreMode::Eda => "eda",
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScoreMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ScoreError::Config(format!("unknown score mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub area: f64,
    pub wire: f64,
    pub timing: f64,
    pub downstream: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            area: 0.0,
            wire: 0.0,
            timing: 0.0,
            downstream: 0.0,
        }
    }
}

impl Weights {
    pub fn get(&self, term: &str) -> f64 {
        match term {
            TERM_AREA => self.area,
            TERM_WIRE => self.wire,
            TERM_TIMING => self.timing,
            TERM_DOWNSTREAM => self.downstream,
            _ => 0.0,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            area: self.area * c,
            wire: self.wire * c,
            timing: self.timing * c,
            downstream: self.downstream * c,
        }
    }
}

/// Where metric normalizers come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerSource {
    /// The fixed references in `normalizers`.
    #[default]
    Fixed,
    /// Metrics of the task's first scored major, falling back to `normalizers`.
    FirstMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdaParams {
    pub w_wns: f64,
    pub w_tns: f64,
    pub w_area: f64,
    pub epsilon: f64,
    pub sec_penalty: f64,
    pub area_cap: Option<f64>,
    pub area_cap_penalty: f64,
}

impl Default for EdaParams {
    fn default() -> Self {
        Self {
            w_wns: 0.5,
            w_tns: 0.35,
            w_area: 0.15,
            epsilon: 1e-6,
            sec_penalty: 1e6,
            area_cap: None,
            area_cap_penalty: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub mode: ScoreMode,
    pub weights: Weights,
    /// Penalty per non-passed outcome of the functional evaluator.
    pub penalty_table: BTreeMap<Outcome, f64>,
    /// `c_mm`: mismatch penalty per unit mismatch ratio.
    pub mismatch_coefficient: f64,
    /// `P_opt` per genuinely failed optional evaluator.
    pub optional_fail_penalty: f64,
    pub required: BTreeSet<String>,
    /// Metric keys that must be present and non-zero, e.g. `sec_pass`.
    pub hard_gates: BTreeSet<String>,
    pub normalizers: BTreeMap<String, f64>,
    pub normalizer_source: NormalizerSource,
    /// Objective term to contributing metric keys.
    pub metric_keys: BTreeMap<String, Vec<String>>,
    pub eda: EdaParams,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        let penalty_table = [
            (Outcome::Mismatch, 10.0),
            (Outcome::CompileError, 50.0),
            (Outcome::SyntaxError, 50.0),
            (Outcome::Timeout, 40.0),
            (Outcome::UnknownFailure, 60.0),
            (Outcome::ToolUnavailable, 60.0),
        ]
        .into_iter()
        .collect();
        let normalizers = [
            ("cell_count", 100.0),
            ("wire_count", 100.0),
            ("wire_bits", 500.0),
            ("abc_delay_proxy", 10.0),
            ("downstream_score", 5.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let metric_keys = [
            (TERM_AREA, vec!["cell_count"]),
            (TERM_WIRE, vec!["wire_count", "wire_bits"]),
            (TERM_TIMING, vec!["abc_delay_proxy"]),
            (TERM_DOWNSTREAM, vec!["downstream_score"]),
        ]
        .into_iter()
        .map(|(t, ks)| (t.to_string(), ks.into_iter().map(String::from).collect()))
        .collect();
        Self {
            mode: ScoreMode::CorrectnessOnly,
            weights: Weights::default(),
            penalty_table,
            mismatch_coefficient: 10.0,
            optional_fail_penalty: 5.0,
            required: [FUNCTIONAL.to_string()].into_iter().collect(),
            hard_gates: BTreeSet::new(),
            normalizers,
            normalizer_source: NormalizerSource::Fixed,
            metric_keys,
            eda: EdaParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("score configuration: {0}")]
    Config(String),
    #[error("required evaluator `{0}` has no result")]
    MissingRequired(String),
    #[error("normalizer for `{0}` is zero or missing")]
    ZeroNormalizer(String),
    #[error("EDA scoring requires a baseline record after the first round")]
    MissingBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub score: f64,
    pub eligible: bool,
    pub breakdown: BTreeMap<String, f64>,
}

impl ScoreResult {
    fn from_terms(terms: Vec<(&str, f64)>, eligible: bool) -> Self {
        let score = terms.iter().map(|(_, v)| v).sum();
        Self {
            score,
            eligible,
            breakdown: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn sections(text: &str) -> Result<toml::Table, ScoreError> {
    text.parse::<toml::Table>()
        .map_err(|e| ScoreError::Config(e.to_string()))
}

impl ScoreConfig {
    pub fn preset(mode: ScoreMode) -> Self {
        let all = sections(PRESETS_TOML).expect("shipped presets parse");
        let table = all
            .get(mode.as_str())
            .and_then(|v| v.as_table())
            .cloned()
            .expect("every mode has a preset");
        let cfg: ScoreConfig = toml::Value::Table(table)
            .try_into()
            .expect("shipped preset deserializes");
        cfg.validate().expect("shipped preset is valid");
        cfg
    }

    /// Loads section `name` from a score file, merged over the preset of the
    /// section's `mode` (or of the mode called `name`).
    pub fn from_toml_section(text: &str, name: &str) -> Result<Self, ScoreError> {
        let all = sections(text)?;
        let section = all
            .get(name)
            .and_then(|v| v.as_table())
            .cloned()
            .ok_or_else(|| ScoreError::Config(format!("no section `[{name}]`")))?;
        let mode: ScoreMode = match section.get("mode").and_then(|v| v.as_str()) {
            Some(m) => m.parse()?,
            None => name.parse()?,
        };
        let mut base = match toml::Value::try_from(Self::preset(mode)) {
            Ok(toml::Value::Table(t)) => t,
            Ok(_) => unreachable!("struct serializes to a table"),
            Err(e) => return Err(ScoreError::Config(e.to_string())),
        };
        merge_tables(&mut base, section);
        base.insert("mode".into(), toml::Value::String(mode.as_str().into()));
        let cfg: ScoreConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| ScoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, name: &str) -> Result<Self, ScoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScoreError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_section(&text, name)
            .map_err(|e| ScoreError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("score config serializes")
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        let w = &self.weights;
        for (name, v) in [
            ("area", w.area),
            ("wire", w.wire),
            ("timing", w.timing),
            ("downstream", w.downstream),
            ("mismatch_coefficient", self.mismatch_coefficient),
            ("optional_fail_penalty", self.optional_fail_penalty),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ScoreError::Config(format!("{name} must be finite and >= 0")));
            }
        }
        for o in Outcome::ALL {
            if o == Outcome::Passed {
                continue;
            }
            match self.penalty_table.get(&o) {
                Some(p) if p.is_finite() => {}
                _ => {
                    return Err(ScoreError::Config(format!(
                        "penalty_table has no finite entry for `{o}`"
                    )))
                }
            }
        }
        if self.mode == ScoreMode::Eda && !self.hard_gates.contains("sec_pass") {
            return Err(ScoreError::Config("eda mode requires the sec_pass hard gate".into()));
        }
        for term in METRIC_TERMS {
            if self.weights.get(term) == 0.0 {
                continue;
            }
            for key in self.metric_keys.get(term).into_iter().flatten() {
                match self.normalizers.get(key) {
                    Some(n) if n.is_finite() && *n != 0.0 => {}
                    _ => return Err(ScoreError::ZeroNormalizer(key.clone())),
                }
            }
        }
        Ok(())
    }

    /// Copy whose normalizers are replaced by positive reference metrics,
    /// used with [`NormalizerSource::FirstMajor`].
    pub fn with_reference_normalizers(&self, reference: &BTreeMap<String, f64>) -> Self {
        let mut cfg = self.clone();
        for (key, norm) in cfg.normalizers.iter_mut() {
            if let Some(v) = reference.get(key) {
                if v.is_finite() && *v > 0.0 {
                    *norm = *v;
                }
            }
        }
        cfg
    }

    /// Evaluators whose success is not required.
    fn is_optional(&self, evaluator: &str) -> bool {
        !self.required.contains(evaluator)
    }
}

fn merged_metrics(results: &[EvaluatorResult]) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for r in results {
        m.extend(r.metrics.iter().map(|(k, v)| (k.clone(), *v)));
    }
    m
}

fn gate_holds(metrics: &BTreeMap<String, f64>, gate: &str) -> bool {
    metrics.get(gate).is_some_and(|v| *v != 0.0)
}

/// Every required evaluator passed and every hard gate holds.
pub fn pass_results(results: &[EvaluatorResult], config: &ScoreConfig) -> Result<bool, ScoreError> {
    let mut ok = true;
    for req in &config.required {
        match results.iter().find(|r| &r.evaluator == req) {
            Some(r) => ok &= r.passed,
            None => return Err(ScoreError::MissingRequired(req.clone())),
        }
    }
    let metrics = merged_metrics(results);
    Ok(ok && config.hard_gates.iter().all(|g| gate_holds(&metrics, g)))
}

pub fn pass_predicate(record: &CandidateRecord, config: &ScoreConfig) -> Result<bool, ScoreError> {
    pass_results(&record.results, config)
}

fn functional_penalty(result: Option<&EvaluatorResult>, config: &ScoreConfig) -> f64 {
    let Some(r) = result else {
        return 0.0;
    };
    match r.outcome {
        Outcome::Passed => 0.0,
        Outcome::Mismatch => match (r.metric("mismatch_count"), r.metric("total_samples")) {
            (Some(m), Some(n)) if n > 0.0 => config.mismatch_coefficient * (m / n),
            _ => config.penalty_table[&Outcome::Mismatch],
        },
        other => config.penalty_table[&other],
    }
}

/// Open-source objective over one candidate's results.
pub fn score_open_results(
    results: &[EvaluatorResult],
    config: &ScoreConfig,
) -> Result<ScoreResult, ScoreError> {
    if config.mode == ScoreMode::Eda {
        return Err(ScoreError::Config("score_open called in eda mode".into()));
    }
    let eligible = pass_results(results, config)?;
    let p_func = functional_penalty(results.iter().find(|r| r.evaluator == FUNCTIONAL), config);
    let failed_optional = results
        .iter()
        .filter(|r| r.evaluator != FUNCTIONAL && config.is_optional(&r.evaluator) && r.outcome.is_failure())
        .count();
    let p_opt = config.optional_fail_penalty * failed_optional as f64;
    let metrics = merged_metrics(results);
    let mut terms = vec![(TERM_FUNC, p_func), (TERM_OPT, p_opt)];
    for term in METRIC_TERMS {
        let weight = config.weights.get(term);
        let mut normalized = 0.0;
        if weight != 0.0 {
            for key in config.metric_keys.get(term).into_iter().flatten() {
                let Some(v) = metrics.get(key) else { continue };
                let norm = match config.normalizers.get(key) {
                    Some(n) if *n != 0.0 && n.is_finite() => *n,
                    _ => return Err(ScoreError::ZeroNormalizer(key.clone())),
                };
                normalized += v / norm;
            }
        }
        terms.push((term, weight * normalized));
    }
    Ok(ScoreResult::from_terms(terms, eligible))
}

pub fn score_open(record: &CandidateRecord, config: &ScoreConfig) -> Result<ScoreResult, ScoreError> {
    score_open_results(&record.results, config)
}

fn eda_metric(results: &[EvaluatorResult], key: &str) -> Option<f64> {
    results
        .iter()
        .find(|r| r.evaluator == EDA)
        .and_then(|r| r.metric(key))
}

/// Relative change `(cand - base) / (|base| + ε)`, or 0 when either side is
/// absent.
fn delta(cand: Option<f64>, base: Option<f64>, eps: f64) -> f64 {
    match (cand, base) {
        (Some(c), Some(b)) => (c - b) / (b.abs() + eps),
        _ => 0.0,
    }
}

/// EDA objective against the baseline major; `None` baseline means the
/// first round, where all deltas are zero.
pub fn score_eda_results(
    results: &[EvaluatorResult],
    baseline: Option<&[EvaluatorResult]>,
    config: &ScoreConfig,
) -> Result<ScoreResult, ScoreError> {
    if config.mode != ScoreMode::Eda {
        return Err(ScoreError::Config("score_eda called outside eda mode".into()));
    }
    let p = &config.eda;
    let mut eligible = pass_results(results, config)?;
    let sec_ok = eda_metric(results, "sec_pass").is_some_and(|v| v != 0.0);
    let (d_wns, d_tns, d_area) = match baseline {
        Some(base) => (
            // slack improves toward +inf, so its delta is negated
            -delta(eda_metric(results, "wns"), eda_metric(base, "wns"), p.epsilon),
            -delta(eda_metric(results, "tns"), eda_metric(base, "tns"), p.epsilon),
            delta(eda_metric(results, "area"), eda_metric(base, "area"), p.epsilon),
        ),
        None => (0.0, 0.0, 0.0),
    };
    let p_area = match (p.area_cap, eda_metric(results, "area")) {
        (Some(cap), Some(area)) if area > cap => p.area_cap_penalty,
        _ => 0.0,
    };
    let p_sec = if sec_ok { 0.0 } else { p.sec_penalty };
    if !sec_ok {
        eligible = false;
    }
    Ok(ScoreResult::from_terms(
        vec![
            (TERM_WNS, p.w_wns * d_wns),
            (TERM_TNS, p.w_tns * d_tns),
            (TERM_EDA_AREA, p.w_area * d_area),
            (TERM_AREA_CAP, p_area),
            (TERM_SEC, p_sec),
        ],
        eligible,
    ))
}

pub fn score_eda(
    record: &CandidateRecord,
    baseline: Option<&CandidateRecord>,
    config: &ScoreConfig,
) -> Result<ScoreResult, ScoreError> {
    score_eda_results(&record.results, baseline.map(|b| b.results.as_slice()), config)
}

/// Dispatches on the configured mode.
pub fn score_results(
    results: &[EvaluatorResult],
    baseline: Option<&[EvaluatorResult]>,
    config: &ScoreConfig,
) -> Result<ScoreResult, ScoreError> {
    match config.mode {
        ScoreMode::Eda => score_eda_results(results, baseline, config),
        _ => score_open_results(results, config),
    }
}

/// Index of the eligible record with the lowest score; ties go to the
/// smaller minor index.
pub fn select_best(records: &[CandidateRecord]) -> Option<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.eligible && !r.score.is_nan())
        .min_by(|(_, a), (_, b)| {
            a.score
                .total_cmp(&b.score)
                .then(a.candidate.version.minor.cmp(&b.candidate.version.minor))
        })
        .map(|(i, _)| i)
}
