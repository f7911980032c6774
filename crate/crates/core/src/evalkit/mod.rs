//! Answer scoring, the benchmark runner and reference models, including
//! the controlled-accuracy "perfect tools".

mod harness;
mod models;
mod scoring;
mod tools;

pub use harness::{run_benchmark, score_answer, EvalReport, FailureCause, ItemRow, Metric, MetricRow, ModelAnswer, ModelUnderTest, TaskRow};
pub use models::{ConstantModel, EndpointModel, PoolEchoOracle};
pub use scoring::{
    choice_accuracy, f1, keyword_score, pair_f1, parse_categorical, parse_categorical_with, parse_groups, parse_number,
    relative_accuracy, tokens, ChoiceOutcome, SynonymTable,
};
pub use tools::{perfect_tool, tool_for, ToolAnswer, ToolAnswerer, ToolKind, ToolQuery, UNKNOWN_ANSWER};
