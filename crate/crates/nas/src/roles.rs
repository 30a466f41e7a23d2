use serde::{Deserialize, Serialize};
use tsa_llm::{
    extract_blocks, parse_block, parse_single_block, render, render_block, Bindings, ChatExchange, LlmBackend,
    LlmError, TASK_PREFIX,
};
use tsa_nn::{ArchitectureDescriptor, ARCHITECTURE_SCHEMA};

use crate::history::{Archive, History};
use crate::requirements::Requirements;
use crate::space::{canonical_digest, Narrowing, SearchSpace, SPACE_SCHEMA};

/// Fenced-block tag of a Strategist reply.
pub const STRATEGY_SCHEMA: &str = "strategy/v1";

/// Field guide shown to the Generator.
pub const ARCHITECTURE_FIELDS: &str = "\
family = \"mlp\" | \"multi_branch\"
hidden = [widths]                      # mlp only
[branches.temporal] widths = [...]     # multi_branch only, likewise spatial and frequency
fusion_dim = n                         # multi_branch only
attention = { enabled = bool, heads = n }
head = [widths]                        # multi_branch only
dropout, batch_norm, epochs, batch_size, patience, seed
loss = { kind = \"ce\" | \"weighted_ce\" | \"focal\", alpha, gamma }
optim = { lr, weight_decay }
schedule = { max_lr }                  # one-cycle, max_lr equal to optim.lr
Every value must come from the search space menus.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub direction: String,
    #[serde(default)]
    pub narrow: Narrowing,
}

/// A parsed strategy and the space it leaves to the Generator.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub space: SearchSpace,
    /// Proposed menu values that fell outside the space.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleName {
    Strategist,
    Generator,
}

/// One model call made by a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmCall {
    pub iteration: usize,
    pub role: RoleName,
    /// True for the single reformat follow-up.
    pub reformat: bool,
    pub prompt_digest: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RoleError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("strategy could not be parsed after one reformat round: {0}")]
    Strategy(String),
    #[error("no parseable candidate after one reformat round: {}", .0.join("; "))]
    NoCandidates(Vec<String>),
}

fn call(
    backend: &dyn LlmBackend,
    ex: &ChatExchange,
    iteration: usize,
    role: RoleName,
    reformat: bool,
    log: &mut Vec<LlmCall>,
) -> Result<String, LlmError> {
    let response = backend.chat(ex)?;
    log.push(LlmCall {
        iteration,
        role,
        reformat,
        prompt_digest: ex.digest(),
        prompt: ex.last_user().to_string(),
        response: response.clone(),
    });
    Ok(response)
}

fn reformat_request(error: &str, schema: &str, what: &str) -> String {
    format!("{TASK_PREFIX}reformat\n\nThe reply could not be used: {error}. Reply again with {what} in ```{schema}``` blocks.")
}

/// Asks the Strategist for the next direction. The prompt carries the full
/// history and the latest feedback; proposed menus are clipped to `space`.
pub fn strategist_step(
    backend: &dyn LlmBackend,
    history: &History,
    req: &Requirements,
    space: &SearchSpace,
    feedback: &str,
    iteration: usize,
    log: &mut Vec<LlmCall>,
) -> Result<StrategyOutcome, RoleError> {
    let mut b = Bindings::new();
    b.insert("requirements".into(), req.describe());
    b.insert("search_space".into(), render_block(SPACE_SCHEMA, space));
    b.insert("history".into(), history.table(req));
    b.insert("feedback".into(), feedback.to_string());
    let ex = render("strategist", &b, &[])?;
    let reply = call(backend, &ex, iteration, RoleName::Strategist, false, log)?;
    let strategy = match parse_single_block::<Strategy>(&reply, STRATEGY_SCHEMA) {
        Ok(s) => s,
        Err(e) => {
            let follow = ex.continued(
                &reply,
                reformat_request(&e.to_string(), STRATEGY_SCHEMA, "a `direction` string and an optional [narrow] table"),
            );
            let retry = call(backend, &follow, iteration, RoleName::Strategist, true, log)?;
            parse_single_block::<Strategy>(&retry, STRATEGY_SCHEMA).map_err(|e| RoleError::Strategy(e.to_string()))?
        }
    };
    let (narrowed, warnings) = space.narrow(&strategy.narrow);
    for w in &warnings {
        log::warn!("strategy clipped to the search space: {w}");
    }
    Ok(StrategyOutcome { strategy, space: narrowed, warnings })
}

/// Descriptors in `reply` that parse and validate, plus the errors of the rest.
pub fn parse_candidates(reply: &str) -> (Vec<ArchitectureDescriptor>, Vec<String>) {
    let blocks = match extract_blocks(reply) {
        Ok(b) => b,
        Err(e) => return (Vec::new(), vec![e.to_string()]),
    };
    let mut found = Vec::new();
    let mut errors = Vec::new();
    for block in blocks.iter().filter(|b| b.schema == ARCHITECTURE_SCHEMA) {
        match parse_block::<ArchitectureDescriptor>(block) {
            Ok(d) => match d.validate() {
                Ok(()) => found.push(d),
                Err(e) => errors.push(e.to_string()),
            },
            Err(e) => errors.push(e.to_string()),
        }
    }
    if found.is_empty() && errors.is_empty() {
        errors.push(format!("no ```{ARCHITECTURE_SCHEMA} block found in the response"));
    }
    (found, errors)
}

/// Asks the Generator for up to `count` candidates. The prompt holds the
/// strategy and its narrowed space only, never the history.
pub fn generator_step(
    backend: &dyn LlmBackend,
    strategy: &StrategyOutcome,
    count: usize,
    iteration: usize,
    log: &mut Vec<LlmCall>,
) -> Result<Vec<ArchitectureDescriptor>, RoleError> {
    let mut b = Bindings::new();
    b.insert("strategy".into(), strategy.strategy.direction.clone());
    b.insert("search_space".into(), render_block(SPACE_SCHEMA, &strategy.space));
    b.insert("count".into(), count.to_string());
    b.insert("schema".into(), ARCHITECTURE_FIELDS.into());
    let ex = render("generator", &b, &[])?;
    let reply = call(backend, &ex, iteration, RoleName::Generator, false, log)?;
    let (mut found, errors) = parse_candidates(&reply);
    if found.is_empty() {
        let follow = ex.continued(&reply, reformat_request(&errors.join("; "), ARCHITECTURE_SCHEMA, "the candidates"));
        let retry = call(backend, &follow, iteration, RoleName::Generator, true, log)?;
        let (again, errors) = parse_candidates(&retry);
        if again.is_empty() {
            return Err(RoleError::NoCandidates(errors));
        }
        found = again;
    }
    if found.len() > count {
        log::warn!("generator proposed {} candidates, keeping the first {count}", found.len());
        found.truncate(count);
    }
    Ok(found)
}

/// Legality check: every field in its menu and the design not yet archived.
pub fn operator_validate(desc: &ArchitectureDescriptor, space: &SearchSpace, archive: &Archive) -> bool {
    space.contains(desc) && !archive.contains(&canonical_digest(desc))
}
