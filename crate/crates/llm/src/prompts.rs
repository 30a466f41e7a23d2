//! Prompt templates with `{{slot}}` placeholders.
//!
//! Every rendered user message starts with a `task: <template>` line so that
//! transcripts and offline policies can tell the prompts apart.

use std::collections::BTreeMap;

use crate::rag::Retrieved;
use crate::{ChatExchange, LlmError, Message};

pub const TASK_PREFIX: &str = "task: ";

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub system: &'static str,
    pub body: &'static str,
}

const SCENARIO_ROLE: &str = "You are an expert in power system transient stability assessment. \
Your task is to generate realistic fault scenarios for a power system with the following characteristics: \
{{system_description}}. Based on the system topology, load distribution, and critical operating points, \
propose fault scenarios that comprehensively test the system's stability.";

const FACTUALITY: &str = "Simulation factuality rules: use only buses, lines and generators that exist in the \
system description or the retrieved context. Never invent measurements, simulation results or element ids. \
If a requested element does not exist, say so instead of substituting another. Answer with exactly the \
structured block requested, preceded by at most a short rationale.";

const DESIGN_ROLE: &str = "You are an expert in neural network design for power system transient stability \
assessment. You design dense classifiers for feature vectors extracted from post-fault trajectories, \
trading accuracy against parameter count and inference latency.";

const TEMPLATES: [PromptTemplate; 9] = [
    PromptTemplate {
        name: "role",
        system: "{{role}}\n\n{{factuality}}",
        body: "System description: {{system_description}}\n\n\
Think step by step: (1) identify the critical buses and corridors; (2) choose fault types and locations that \
stress them; (3) choose clearing times around the expected critical clearing time. List the scenarios you propose.",
    },
    PromptTemplate {
        name: "factuality",
        system: "{{role}}",
        body: "{{factuality}}\n\nConfirm these rules and restate the element ranges of the system: {{system_description}}",
    },
    PromptTemplate {
        name: "conversion",
        system: "{{role}}\n\n{{factuality}}",
        body: "Break the following study request into independent sub-requests, one per simulation intent.\n\n\
Request:\n{{request}}\n\n\
Each sub-request has an intent (fault_scenario, sweep or dataset_goal) and constraints. Reply with one \
```subrequests/v1``` block holding a [[subrequests]] array of tables with fields:\n{{schema}}",
    },
    PromptTemplate {
        name: "architecture",
        system: "{{role}}\n\n{{factuality}}",
        body: "Draft one simulation scenario for this sub-request.\n\nSub-request:\n{{sub_request}}\n\n\
Work step by step: (1) pick the fault type and its location; (2) set inception and clearing times in seconds; \
(3) set the fault impedance in ohms and the clearing action; (4) set the load level. Then reply with one \
```scenario/v1``` block using the fields:\n{{schema}}",
    },
    PromptTemplate {
        name: "feedback",
        system: "{{role}}\n\n{{factuality}}",
        body: "The previous scenario generation failed with error: {{error_message}}. The issue is likely related to \
{{diagnosis}}. To fix this, please: (1) Verify the element numbering matches the {{case_name}} system; \
(2) Ensure the fault duration is within the valid simulation time; (3) Check that the clearing action is properly \
defined.\n\nPrevious response:\n{{previous_response}}\n\nGenerate the corrected ```scenario/v1``` block.",
    },
    PromptTemplate {
        name: "strategist",
        system: "{{design_role}}\n\n{{factuality}}\n\nYou are the Strategist. You keep the full history of evaluated \
architectures and decide the direction of the next search round.",
    body: "Requirements:\n{{requirements}}\n\nSearch space:\n{{search_space}}\n\n\
History of evaluated architectures:\n{{history}}\n\nLatest performance feedback:\n{{feedback}}\n\n\
Reply with a short direction and one ```strategy/v1``` block that may narrow the menus of the search space.",
    },
    PromptTemplate {
        name: "generator",
        system: "{{design_role}}\n\n{{factuality}}\n\nYou are the Generator. You turn the current strategy into \
concrete candidate architectures and know nothing else about the search.",
        body: "Current strategy:\n{{strategy}}\n\nSearch space:\n{{search_space}}\n\n\
Propose up to {{count}} candidates, each as one ```architecture/v1``` block with the fields:\n{{schema}}",
    },
    PromptTemplate {
        name: "operator",
        system: "{{design_role}}\n\nYou are the Operator. You check candidates for legality and coordinate their evaluation.",
        body: "Iteration {{iteration}} candidates:\n{{candidates}}\n\nValidation outcome:\n{{outcome}}",
    },
    PromptTemplate {
        name: "perf_feedback",
        system: "{{design_role}}",
        body: "Performance Analysis: {{analysis}}\n\nImprovement Recommendations:\n{{recommendations}}",
    },
];

pub fn template_names() -> Vec<&'static str> {
    TEMPLATES.iter().map(|t| t.name).collect()
}

pub fn template(name: &str) -> Result<PromptTemplate, LlmError> {
    TEMPLATES.iter().copied().find(|t| t.name == name).ok_or_else(|| LlmError::UnknownTemplate(name.to_string()))
}

/// Values bound automatically unless the caller overrides them. The scenario
/// role preamble is filled in place because it has its own slots.
fn standard_bindings() -> Bindings {
    let mut b = Bindings::new();
    b.insert("design_role".into(), DESIGN_ROLE.into());
    b.insert("factuality".into(), FACTUALITY.into());
    b
}

/// Single-pass substitution; bound values are not rescanned.
fn fill(template: &str, name: &str, bindings: &Bindings) -> Result<String, LlmError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or_else(|| LlmError::UnboundSlot {
            template: name.to_string(),
            slot: after.chars().take(20).collect(),
        })?;
        let slot = &after[..close];
        if slot == "role" && !bindings.contains_key(slot) {
            out.push_str(&fill(SCENARIO_ROLE, name, bindings)?);
            rest = &after[close + 2..];
            continue;
        }
        let value = bindings
            .get(slot)
            .ok_or_else(|| LlmError::UnboundSlot { template: name.to_string(), slot: slot.to_string() })?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Fixed syntax-normalization pass applied to every rendered prompt:
/// trailing spaces removed, runs of blank lines collapsed.
fn normalize(text: &str) -> String {
    let mut out = Vec::new();
    let mut blank = 0;
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            blank += 1;
            if blank > 1 {
                continue;
            }
        } else {
            blank = 0;
        }
        out.push(line);
    }
    out.join("\n").trim().to_string()
}

/// Renders a template into a two-message exchange. Retrieved chunks are
/// appended to the user message in a delimited section with their source
/// and kind.
pub fn render(name: &str, bindings: &Bindings, context: &[Retrieved]) -> Result<ChatExchange, LlmError> {
    let t = template(name)?;
    let mut all = standard_bindings();
    for (k, v) in bindings {
        all.insert(k.clone(), v.clone());
    }
    let system = normalize(&fill(t.system, name, &all)?);
    let mut user = format!("{TASK_PREFIX}{name}\n\n{}", fill(t.body, name, &all)?);
    if !context.is_empty() {
        user.push_str("\n\n----- retrieved context -----\n");
        for r in context {
            user.push_str(&format!("[{} | {}]\n{}\n\n", r.source_id, r.kind.as_str(), r.text));
        }
        user.push_str("----- end of context -----");
    }
    Ok(ChatExchange::new(vec![Message::system(system), Message::user(normalize(&user))]))
}

/// Template name from the leading `task:` line of a user message.
pub fn task_of(user_text: &str) -> Option<&str> {
    user_text.lines().next()?.strip_prefix(TASK_PREFIX).map(str::trim)
}
