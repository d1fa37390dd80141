// SPDX-License-Identifier: Apache-2.0

//! Prompt construction, providers, and RTL extraction.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::feedback::{truncate, FeedbackContext};
use crate::model::{DiversityPlan, Focus, PathSelect, Strategy};
use crate::skills::SkillFile;
use crate::task::TaskSpec;

mod provider;

pub use provider::{
    ChatTransport, HttpProvider, LlmError, LlmProvider, PromptKey, ProviderConfig, ProviderKind,
    ReqwestTransport, ScriptedProvider, TransportError,
};

const SYSTEM: &str = include_str!("../../templates/system.txt");
const GENERATE: &str = include_str!("../../templates/generate.txt");
const CBRIDGE_REFERENCE: &str = include_str!("../../templates/cbridge_reference.txt");
const CBRIDGE_VERILOG: &str = include_str!("../../templates/cbridge_verilog.txt");
const REPAIR: &str = include_str!("../../templates/repair.txt");
const OPTIMIZE: &str = include_str!("../../templates/optimize.txt");

pub const DEFAULT_TOKEN_BUDGET: usize = 4096;
/// Characters of feedback embedded in a repair or optimization prompt.
pub const FEEDBACK_CAP_CHARS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub user_text: String,
    pub strategy: Strategy,
    pub attached_skill_ids: Vec<String>,
    pub token_budget_hint: usize,
}

/// Substitutes `{{name}}` placeholders in one pass; inserted values are
/// never re-scanned.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => panic!("template placeholder `{name}` has no value"),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn focus_directive(focus: Focus) -> &'static str {
    match focus {
        Focus::Combinational => "FOCUS (combinational): restructure and simplify the combinational logic; keep register boundaries unchanged.",
        Focus::Sequential => "FOCUS (sequential): revisit register placement, reset handling, and state updates while keeping cycle-level behavior.",
        Focus::Mixed => "FOCUS (mixed): consider both combinational structure and register organization.",
    }
}

pub fn path_directive(path: PathSelect) -> Option<&'static str> {
    match path {
        PathSelect::TimingCritical => Some("PATH (timing_critical): target the worst timing path reported by the evaluators."),
        PathSelect::StructurallyComplex => Some("PATH (structurally_complex): target the region with the most cells reported by synthesis."),
        PathSelect::RandomExploration => Some("PATH (random_exploration): try a different implementation style for one part of the design."),
        PathSelect::None => None,
    }
}

fn directives(plan: &DiversityPlan) -> String {
    let mut s = format!("\n{}\n", focus_directive(plan.focus));
    if let Some(p) = path_directive(plan.path_select) {
        s.push_str(p);
        s.push('\n');
    }
    s
}

fn skills_section(skills: &[SkillFile]) -> String {
    if skills.is_empty() {
        return String::new();
    }
    let mut s = String::from("\nRelevant skills:\n");
    for sk in skills {
        s.push_str(&format!("\n[skill {}] {}\n{}\n", sk.skill_id, sk.name, sk.guidance.trim_end()));
    }
    s
}

fn prompt(user_text: String, strategy: Strategy, skills: &[SkillFile], budget: usize) -> Prompt {
    Prompt {
        system_text: SYSTEM.trim_end().to_string(),
        user_text,
        strategy,
        attached_skill_ids: skills.iter().map(|s| s.skill_id.clone()).collect(),
        token_budget_hint: budget,
    }
}

pub fn build_generation_prompt(task: &TaskSpec, skills: &[SkillFile], plan: &DiversityPlan) -> Prompt {
    let text = render_template(
        GENERATE,
        &[
            ("task_id", &task.task_id),
            ("description", task.description.trim()),
            ("header", &task.module_header),
            ("skills", &skills_section(skills)),
            ("directives", &directives(plan)),
        ],
    );
    prompt(text, Strategy::Direct, skills, DEFAULT_TOKEN_BUDGET)
}

pub fn build_cbridge_reference_prompt(task: &TaskSpec, skills: &[SkillFile]) -> Prompt {
    let text = render_template(
        CBRIDGE_REFERENCE,
        &[
            ("task_id", &task.task_id),
            ("description", task.description.trim()),
            ("header", &task.module_header),
            ("skills", &skills_section(skills)),
        ],
    );
    prompt(text, Strategy::CBridge, skills, DEFAULT_TOKEN_BUDGET)
}

/// Strips one surrounding code fence, if any.
pub fn strip_fence(text: &str) -> String {
    let t = text.trim();
    if let Some(open) = t.find("```") {
        let after = &t[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        if let Some(close) = body.find("```") {
            return body[..close].trim_end().to_string();
        }
    }
    t.to_string()
}

/// Verilog prompt guided by a C reference; the reference is cut to half the
/// token budget at four characters per token.
pub fn build_cbridge_verilog_prompt(
    task: &TaskSpec,
    reference: &str,
    skills: &[SkillFile],
    plan: &DiversityPlan,
) -> Prompt {
    let budget = DEFAULT_TOKEN_BUDGET;
    let reference = truncate(reference.trim(), budget * 2);
    let text = render_template(
        CBRIDGE_VERILOG,
        &[
            ("task_id", &task.task_id),
            ("description", task.description.trim()),
            ("header", &task.module_header),
            ("reference", &reference),
            ("skills", &skills_section(skills)),
            ("directives", &directives(plan)),
        ],
    );
    prompt(text, Strategy::CBridge, skills, budget)
}

/// Repair prompt for a failing parent, optimization prompt for a passing one.
pub fn build_repair_prompt(
    task: &TaskSpec,
    parent_rtl: &str,
    feedback: &FeedbackContext,
    skills: &[SkillFile],
    plan: &DiversityPlan,
) -> Prompt {
    let template = if feedback.has_failures() { REPAIR } else { OPTIMIZE };
    let text = render_template(
        template,
        &[
            ("task_id", &task.task_id),
            ("description", task.description.trim()),
            ("header", &task.module_header),
            ("parent", parent_rtl.trim_end()),
            ("feedback", &feedback.render(FEEDBACK_CAP_CHARS)),
            ("skills", &skills_section(skills)),
            ("directives", &directives(plan)),
        ],
    );
    prompt(text, Strategy::Repair, skills, DEFAULT_TOKEN_BUDGET)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no module in output")]
    NoModule,
}

fn module_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)\s*[#(;].*?\bendmodule\b").unwrap()
    })
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)```").unwrap())
}

fn looks_like_body(text: &str) -> bool {
    let re = {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"\b(assign|always|always_ff|always_comb|reg|wire|endmodule)\b").unwrap())
    };
    re.is_match(text)
}

/// Pulls the module matching `module_header`'s name out of raw model text.
///
/// Preference order: first module whose name matches, else the first module;
/// with no module at all, a body (fenced or bare) is wrapped in the header.
pub fn extract_rtl(raw: &str, module_header: &str) -> Result<String, ExtractError> {
    let wanted = crate::task::module_name(module_header);
    let modules: Vec<(String, &str)> = module_re()
        .captures_iter(raw)
        .map(|c| (c[1].to_string(), c.get(0).unwrap().as_str()))
        .collect();
    if let Some((_, text)) = modules
        .iter()
        .find(|(name, _)| Some(name.as_str()) == wanted)
        .or_else(|| modules.first())
    {
        return Ok(format!("{}\n", text.trim()));
    }
    let body = fence_re()
        .captures(raw)
        .map(|c| c[1].to_string())
        .unwrap_or_else(|| raw.to_string());
    if !looks_like_body(&body) {
        return Err(ExtractError::NoModule);
    }
    let body = body.trim();
    let body = body.strip_suffix("endmodule").unwrap_or(body).trim_end();
    Ok(format!("{}\n{}\nendmodule\n", module_header.trim(), body))
}

/// Identifiers announced with `SKILL-PROPOSAL: <id>` lines.
pub fn parse_skill_proposals(raw: &str) -> Vec<String> {
    let mut out: Vec<String> = raw
        .lines()
        .filter_map(|l| {
            let l = l.trim().trim_start_matches(['/', '*', '#', ' ']);
            l.strip_prefix("SKILL-PROPOSAL:")
        })
        .map(|id| id.trim().to_ascii_lowercase())
        .filter(|id| {
            !id.is_empty()
                && id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        })
        .collect();
    out.sort();
    out.dedup();
    out
}
