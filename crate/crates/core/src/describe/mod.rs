//! Attribute descriptions and template Q&A items.
//!
//! Every generated item carries a [`Query`]: a machine-readable statement
//! of what is being asked. Gold answers are obtained by evaluating the query
//! against pools and rendered series, so they can be re-derived (and
//! re-checked) by anyone holding the same data.

mod facts;
mod qa;
mod query;
mod templates;

pub use facts::{correlation_facts, describe, fact_truth, pool_facts, sig4, fmt_num, AttributeDescription, Fact, FactKind, FactValue};
pub use qa::{
    gen_alignment_qa, gen_instruct_qa, gen_mts_qa, gen_numeric_qa, gen_reasoning_qa, shares_relation, verify_gold,
    GoldChoice, GoldLabels, GoldNumber, LineageStep, Provenance, QaRecord, TaskKind, DEFAULT_NUMBER_TOLERANCE, SERIES_SLOT,
};
pub use query::{answer_text, evaluate_query, Query, QueryContext, Truth};
