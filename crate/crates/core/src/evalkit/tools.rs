use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::harness::{ModelAnswer, ModelUnderTest};
use crate::datasets::CorpusRecord;
use crate::describe::{answer_text, evaluate_query, Query, QueryContext, Truth};
use crate::error::{Error, Result};
use crate::rng::{split_seed, stable_hash, SeedStream};
use crate::taxonomy::Category;

/// Reply of the tool answerer when the needed tool is disabled.
pub const UNKNOWN_ANSWER: &str = "unknown";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Trend,
    Seasonality,
    Fluctuation,
    Correlation,
    PointValue,
    RangeStats,
}

impl ToolKind {
    pub const ALL: [ToolKind; 6] = [
        ToolKind::Trend,
        ToolKind::Seasonality,
        ToolKind::Fluctuation,
        ToolKind::Correlation,
        ToolKind::PointValue,
        ToolKind::RangeStats,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ToolKind::Trend => "trend",
            ToolKind::Seasonality => "seasonality",
            ToolKind::Fluctuation => "fluctuation",
            ToolKind::Correlation => "correlation",
            ToolKind::PointValue => "point_value",
            ToolKind::RangeStats => "range_stats",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }
}

/// Tool that answers `query`, if any. Noise questions go to range_stats,
/// which reports the residual noise kind alongside its statistics.
pub fn tool_for(query: &Query) -> Option<ToolKind> {
    Some(match query {
        Query::Category { category, .. } => match category {
            Category::Trend => ToolKind::Trend,
            Category::Season => ToolKind::Seasonality,
            Category::Noise => ToolKind::RangeStats,
            Category::Local => ToolKind::Fluctuation,
        },
        Query::Max { .. } | Query::Min { .. } | Query::SegmentAvg { .. } => ToolKind::RangeStats,
        Query::ValueAt { .. } => ToolKind::PointValue,
        Query::FluctAmplitude { .. } | Query::FluctPosition { .. } => ToolKind::Fluctuation,
        Query::Period { .. } => ToolKind::Seasonality,
        Query::Related { .. } | Query::Partition => ToolKind::Correlation,
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolQuery {
    pub tool: ToolKind,
    pub query: Query,
}

impl ToolQuery {
    pub fn new(query: Query) -> Result<Self> {
        let tool = tool_for(&query).ok_or_else(|| Error::arg(format!("no tool answers {query:?}")))?;
        Ok(Self { tool, query })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolAnswer {
    pub tool: ToolKind,
    pub payload: Truth,
    /// False when the payload was deliberately corrupted.
    pub truthful: bool,
}

fn corrupt_labels(labels: &[String], vocab: &[String], rng: &mut SeedStream) -> Vec<String> {
    let others: Vec<&String> = vocab.iter().filter(|l| !labels.contains(l)).collect();
    let mut out = labels.to_vec();
    match (others.is_empty(), out.is_empty()) {
        (false, false) => {
            let i = rng.below(out.len());
            out[i] = rng.pick(&others).to_string();
        }
        (false, true) => out.push(rng.pick(&others).to_string()),
        (true, _) => {
            out.pop();
        }
    }
    out.sort();
    out.dedup();
    out
}

fn corrupt_groups(groups: &[Vec<String>], rng: &mut SeedStream) -> Vec<Vec<String>> {
    let mut out = groups.to_vec();
    let movable: Vec<(usize, usize)> = out
        .iter()
        .enumerate()
        .flat_map(|(g, m)| (0..m.len()).map(move |i| (g, i)))
        .filter(|&(g, _)| out.len() > 1 || groups[g].len() > 1)
        .collect();
    if movable.is_empty() {
        return out;
    }
    let (g, i) = *rng.pick(&movable);
    let name = out[g].remove(i);
    let targets: Vec<usize> = (0..out.len()).filter(|t| *t != g).collect();
    if targets.is_empty() {
        out.push(vec![name]);
    } else {
        let t = *rng.pick(&targets);
        out[t].push(name);
    }
    out.retain(|m| !m.is_empty());
    out.iter_mut().for_each(|m| m.sort());
    out.sort();
    out
}

fn corrupt_number(v: f64, rng: &mut SeedStream) -> f64 {
    let step = rng.uniform(0.2, 1.0) * rng.sign();
    if v == 0.0 {
        step
    } else {
        v * (1.0 + step)
    }
}

fn corrupt(query: &Query, truth: &Truth, ctx: &QueryContext<'_>, rng: &mut SeedStream) -> Truth {
    match truth {
        Truth::Labels(labels) => {
            let vocab = match query {
                Query::Category { category, .. } => category.vocabulary(),
                _ => ctx.pools.iter().map(|p| p.metric.name.clone()).collect(),
            };
            Truth::Labels(corrupt_labels(labels, &vocab, rng))
        }
        Truth::Number(v) => Truth::Number(corrupt_number(*v, rng)),
        Truth::Groups(g) => Truth::Groups(corrupt_groups(g, rng)),
        other => other.clone(),
    }
}

/// Answers with pool truth when `truthful`, otherwise with a plausible
/// corruption drawn from `corrupt_seed`.
fn answer_as(query: &ToolQuery, ctx: &QueryContext<'_>, truthful: bool, corrupt_seed: u64) -> Result<ToolAnswer> {
    if tool_for(&query.query) != Some(query.tool) {
        return Err(Error::arg(format!("tool {} cannot answer {:?}", query.tool.id(), query.query)));
    }
    let truth = evaluate_query(&query.query, ctx)?;
    let payload = if truthful {
        truth
    } else {
        corrupt(&query.query, &truth, ctx, &mut SeedStream::new(corrupt_seed))
    };
    Ok(ToolAnswer {
        tool: query.tool,
        payload,
        truthful,
    })
}

/// Oracle tool: with probability `accuracy` the exact pool truth, otherwise
/// a wrong kind from the same category or a number off by 20 to 100%.
/// Deterministic in `seed`.
pub fn perfect_tool(query: &ToolQuery, ctx: &QueryContext<'_>, accuracy: f64, seed: u64) -> Result<ToolAnswer> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::arg(format!("accuracy {accuracy} outside [0, 1]")));
    }
    let truthful = SeedStream::new(seed).unit() < accuracy;
    answer_as(query, ctx, truthful, split_seed(seed, 1))
}

/// Scripted reference model answering alignment questions only through
/// perfect tools.
///
/// Each item's truthful/corrupt draw depends on the item id and the seed,
/// never on the accuracy, so raising the accuracy only turns corrupt
/// answers truthful. After [`ToolAnswerer::stratify`] the draws are
/// spread evenly over the given records, which pins the truthful share to
/// the accuracy within one item.
pub struct ToolAnswerer {
    accuracy: f64,
    tools: BTreeSet<ToolKind>,
    seed: u64,
    draws: HashMap<String, f64>,
    calls: AtomicUsize,
    truthful: AtomicUsize,
}

impl ToolAnswerer {
    pub fn new(accuracy: f64, tools: &[ToolKind], seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::arg(format!("accuracy {accuracy} outside [0, 1]")));
        }
        if tools.is_empty() {
            return Err(Error::arg("tool answerer needs at least one tool"));
        }
        Ok(Self {
            accuracy,
            tools: tools.iter().copied().collect(),
            seed,
            draws: HashMap::new(),
            calls: AtomicUsize::new(0),
            truthful: AtomicUsize::new(0),
        })
    }

    fn key(&self, id: &str) -> u64 {
        split_seed(self.seed, stable_hash(id.as_bytes()))
    }

    fn enabled_tool(&self, record: &CorpusRecord) -> Option<ToolKind> {
        let tool = tool_for(record.gold_labels.query.as_ref()?)?;
        self.tools.contains(&tool).then_some(tool)
    }

    /// Assigns the records that will call a tool evenly spaced draws in
    /// a seed-determined order.
    pub fn stratify(mut self, records: &[CorpusRecord]) -> Self {
        let mut keyed: Vec<(u64, &str)> = records
            .iter()
            .filter(|r| self.enabled_tool(r).is_some())
            .map(|r| (self.key(&r.id), r.id.as_str()))
            .collect();
        keyed.sort_unstable();
        keyed.dedup_by(|a, b| a.1 == b.1);
        let n = keyed.len() as f64;
        self.draws = keyed
            .iter()
            .enumerate()
            .map(|(rank, (_, id))| (id.to_string(), (rank as f64 + 0.5) / n))
            .collect();
        self
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn truthful_calls(&self) -> usize {
        self.truthful.load(Ordering::Relaxed)
    }

    /// Share of tool calls answered truthfully so far.
    pub fn truthful_fraction(&self) -> Option<f64> {
        let c = self.calls();
        (c > 0).then(|| self.truthful_calls() as f64 / c as f64)
    }

    /// Consults the tool for `record`. `None` when the question needs no
    /// tool or a disabled one.
    pub fn consult(&self, record: &CorpusRecord) -> Result<Option<ToolAnswer>> {
        let Some(tool) = self.enabled_tool(record) else {
            return Ok(None);
        };
        let query = ToolQuery {
            tool,
            query: record.gold_labels.query.clone().expect("enabled_tool checked the query"),
        };
        let key = self.key(&record.id);
        let u = match self.draws.get(&record.id) {
            Some(u) => *u,
            None => SeedStream::new(key).unit(),
        };
        let pools = record.pools();
        let series = record.values();
        let ctx = QueryContext {
            pools: &pools,
            series: &series,
            correlations: &record.correlation_pool,
        };
        let answer = answer_as(&query, &ctx, u < self.accuracy, split_seed(key, 1))?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        if answer.truthful {
            self.truthful.fetch_add(1, Ordering::Relaxed);
        }
        Ok(Some(answer))
    }
}

impl ModelUnderTest for ToolAnswerer {
    fn name(&self) -> String {
        format!("tools@{}", self.accuracy)
    }

    fn answer(&self, record: &CorpusRecord, prompt: &str) -> Result<ModelAnswer> {
        let text = match self.consult(record)? {
            None => UNKNOWN_ANSWER.to_string(),
            Some(a) => {
                let query = record.gold_labels.query.as_ref().expect("consulted records have a query");
                // Label-only rendering: the tool payload is all the model knows.
                let blind = QueryContext {
                    pools: &[],
                    series: &[],
                    correlations: &[],
                };
                answer_text(query, &a.payload, &blind)
            }
        };
        Ok(ModelAnswer::counted(prompt, text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genpool::{sample_pool, AttributeSubset};
    use crate::synth::render;
    use crate::taxonomy::metric_catalog;

    fn fixture() -> (Vec<crate::genpool::AttributePool>, Vec<crate::synth::TimeSeries>) {
        let metric = metric_catalog(None).unwrap().remove(0);
        let pool = sample_pool(&AttributeSubset::full(metric), 256, 9).unwrap();
        let series = render(&pool);
        (vec![pool], vec![series])
    }

    #[test]
    fn accuracy_bounds() {
        let (pools, series) = fixture();
        let ctx = QueryContext {
            pools: &pools,
            series: &series,
            correlations: &[],
        };
        let q = ToolQuery::new(Query::Max { series: 0 }).unwrap();
        let truth = evaluate_query(&q.query, &ctx).unwrap();
        for seed in 0..200 {
            let a = perfect_tool(&q, &ctx, 1.0, seed).unwrap();
            assert!(a.truthful);
            assert_eq!(a.payload, truth);
            let b = perfect_tool(&q, &ctx, 0.0, seed).unwrap();
            assert!(!b.truthful);
            assert_ne!(b.payload, truth);
        }
    }

    #[test]
    fn truthful_rate_at_point_nine() {
        let (pools, series) = fixture();
        let ctx = QueryContext {
            pools: &pools,
            series: &series,
            correlations: &[],
        };
        let q = ToolQuery::new(Query::Category {
            series: 0,
            category: Category::Local,
        })
        .unwrap();
        let hits = (0..10_000u64)
            .filter(|s| perfect_tool(&q, &ctx, 0.9, *s).unwrap().truthful)
            .count();
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.9).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn corrupt_numbers_move_twenty_to_hundred_percent() {
        let mut rng = SeedStream::new(4);
        for _ in 0..1000 {
            let c = corrupt_number(50.0, &mut rng);
            let rel = (c - 50.0).abs() / 50.0;
            assert!((0.2..=1.0).contains(&rel), "{rel}");
        }
    }

    #[test]
    fn corrupt_labels_stay_in_category() {
        let vocab = Category::Local.vocabulary();
        let mut rng = SeedStream::new(5);
        let truth = vec!["upward_spike".to_string()];
        for _ in 0..100 {
            let c = corrupt_labels(&truth, &vocab, &mut rng);
            assert_ne!(c, truth);
            assert!(c.iter().all(|l| vocab.contains(l)));
        }
    }

    #[test]
    fn corrupt_groups_changes_partition() {
        let g = vec![vec!["a".to_string(), "b".to_string()], vec!["c".to_string()]];
        let mut rng = SeedStream::new(6);
        for _ in 0..100 {
            assert_ne!(corrupt_groups(&g, &mut rng), g);
        }
    }

    #[test]
    fn unknown_series_is_an_argument_error() {
        let (pools, series) = fixture();
        let ctx = QueryContext {
            pools: &pools,
            series: &series,
            correlations: &[],
        };
        let q = ToolQuery::new(Query::Max { series: 3 }).unwrap();
        assert!(matches!(perfect_tool(&q, &ctx, 1.0, 0), Err(Error::Argument(_))));
        let mismatched = ToolQuery {
            tool: ToolKind::Trend,
            query: Query::Max { series: 0 },
        };
        assert!(matches!(perfect_tool(&mismatched, &ctx, 1.0, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn empty_tool_set_is_rejected() {
        assert!(ToolAnswerer::new(0.9, &[], 0).is_err());
        assert!(ToolAnswerer::new(1.1, &ToolKind::ALL, 0).is_err());
    }
}
