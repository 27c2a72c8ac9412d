//! Control blocks: input filter, output guard, bias injection, emergency
//! stop, logic bomb, and the splitter/aggregator flow primitives.

pub mod aggregate;
pub mod bias;
pub mod expr;
pub mod filter;
pub mod guard;
pub mod logic_bomb;
pub mod shutdown;
pub mod split;

use thiserror::Error;

pub use aggregate::{aggregate, AggregationRecord, AggregationStrategy};
pub use bias::{bias_inject, BiasConfig, BiasRecord};
pub use expr::{Clause, Comparison, Condition, Literal, Test};
pub use filter::{nongoal_filter, FilterRule, FilterVerdict};
pub use guard::{rule_guard, DecisionTemplate, GuardRule, GuardRuleSet, OverrideRecord};
pub use logic_bomb::{logic_bomb_check, BombCheck, BoundaryAction, BoundaryPredicate};
pub use shutdown::{ShutdownAck, ShutdownState, ShutdownSwitch};
pub use split::{split, SplitMode};

use crate::payload::PayloadError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("invalid rule field `{field}`: {message}")]
    InvalidRule { field: String, message: String },
    #[error("rule id `{0}` already exists")]
    DuplicateRuleId(String),
    #[error("priority {0} is already used")]
    DuplicatePriority(i64),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
    #[error("condition reads the decision, but none is available")]
    NoDecision,
    #[error("branch outputs have different class sets")]
    ClassSetMismatch,
    #[error("aggregation needs at least 2 branch outputs, got {0}")]
    EmptyBranches(usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("feature `{0}` appears in more than one partition")]
    OverlappingPartitions(String),
    #[error("missing feature `{0}`")]
    MissingFeature(String),
    #[error("no partition configured for child `{0}`")]
    MissingPartition(String),
    #[error(transparent)]
    Payload(#[from] PayloadError),
}
