//! LLM-guided architecture search for stability classifiers.
//!
//! A Strategist keeps the full history and narrows the search space each
//! round, a stateless Generator turns the strategy into descriptor blocks,
//! and the Operator checks legality, trains the survivors under a fixed
//! epoch budget and folds a performance report back to the Strategist.

mod evaluate;
mod feedback;
mod history;
mod policy;
mod requirements;
mod roles;
mod search;
mod space;

pub use evaluate::{candidate_seed, evaluate_candidate, Budget, Evaluation, Evaluator, TrainingEvaluator};
pub use feedback::{feedback_report, Feedback, MINORITY_RECALL, OVERFIT_GAP};
pub use history::{parse_table, summarize, Archive, History, Record, Status, TableRow, SHORT_DIGEST};
pub use policy::SearchPolicy;
pub use requirements::{Requirements, RequirementsError, Task};
pub use roles::{
    generator_step, operator_validate, parse_candidates, strategist_step, LlmCall, RoleError, RoleName, Strategy,
    StrategyOutcome, ARCHITECTURE_FIELDS, STRATEGY_SCHEMA,
};
pub use search::{
    search, search_dataset, select_best, CandidateLog, IterationLog, SearchConfig, SearchError, SearchResult,
    StopReason, Verdict, SPLIT_FRACTIONS,
};
pub use space::{canonical, canonical_digest, Axis, Narrowing, Point, SearchSpace, SpaceError, SPACE_SCHEMA};
