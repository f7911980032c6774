use serde::{Deserialize, Serialize};

use super::facts::{correlation_facts, fmt_num, pool_facts, sig4, Fact, FactKind};
use super::query::{answer_text, evaluate_query, Query, QueryContext, Truth};
use super::templates::{self, fill};
use crate::error::{Error, Result};
use crate::genpool::{AttributePool, CorrelationKind, CorrelationPool, RelationFact};
use crate::rng::{stable_hash, SeedStream};
use crate::synth::TimeSeries;
use crate::taxonomy::{Category, Effect, FluctuationKind, NoiseKind, SeasonKind, TrendKind};

/// Relative tolerance attached to gold numbers.
pub const DEFAULT_NUMBER_TOLERANCE: f64 = 0.05;

/// Placeholder marking where a series is inserted in a question.
pub const SERIES_SLOT: &str = "<ts>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "trend")]
    Trend,
    #[serde(rename = "season")]
    Season,
    #[serde(rename = "noise")]
    Noise,
    #[serde(rename = "local")]
    Local,
    #[serde(rename = "correlation")]
    Correlation,
    #[serde(rename = "cluster")]
    Cluster,
    #[serde(rename = "numeric.max")]
    NumericMax,
    #[serde(rename = "numeric.min")]
    NumericMin,
    #[serde(rename = "numeric.segment_avg")]
    NumericSegmentAvg,
    #[serde(rename = "numeric.fluct_amplitude")]
    NumericFluctAmplitude,
    #[serde(rename = "numeric.fluct_position")]
    NumericFluctPosition,
    #[serde(rename = "numeric.period")]
    NumericPeriod,
    #[serde(rename = "numeric.value_at")]
    NumericValueAt,
    #[serde(rename = "inductive")]
    Inductive,
    #[serde(rename = "deductive")]
    Deductive,
    #[serde(rename = "causal")]
    Causal,
    #[serde(rename = "comparison")]
    Comparison,
    #[serde(rename = "instruct_follow")]
    InstructFollow,
}

impl TaskKind {
    pub const ALL: &'static [TaskKind] = &[
        TaskKind::Trend,
        TaskKind::Season,
        TaskKind::Noise,
        TaskKind::Local,
        TaskKind::Correlation,
        TaskKind::Cluster,
        TaskKind::NumericMax,
        TaskKind::NumericMin,
        TaskKind::NumericSegmentAvg,
        TaskKind::NumericFluctAmplitude,
        TaskKind::NumericFluctPosition,
        TaskKind::NumericPeriod,
        TaskKind::NumericValueAt,
        TaskKind::Inductive,
        TaskKind::Deductive,
        TaskKind::Causal,
        TaskKind::Comparison,
        TaskKind::InstructFollow,
    ];

    pub const ALIGNMENT: &'static [TaskKind] = &[TaskKind::Trend, TaskKind::Season, TaskKind::Noise, TaskKind::Local];

    pub const NUMERIC: &'static [TaskKind] = &[
        TaskKind::NumericMax,
        TaskKind::NumericMin,
        TaskKind::NumericSegmentAvg,
        TaskKind::NumericFluctAmplitude,
        TaskKind::NumericFluctPosition,
        TaskKind::NumericPeriod,
        TaskKind::NumericValueAt,
    ];

    pub const REASONING: &'static [TaskKind] =
        &[TaskKind::Inductive, TaskKind::Deductive, TaskKind::Causal, TaskKind::Comparison];

    pub fn id(self) -> &'static str {
        match self {
            TaskKind::Trend => "trend",
            TaskKind::Season => "season",
            TaskKind::Noise => "noise",
            TaskKind::Local => "local",
            TaskKind::Correlation => "correlation",
            TaskKind::Cluster => "cluster",
            TaskKind::NumericMax => "numeric.max",
            TaskKind::NumericMin => "numeric.min",
            TaskKind::NumericSegmentAvg => "numeric.segment_avg",
            TaskKind::NumericFluctAmplitude => "numeric.fluct_amplitude",
            TaskKind::NumericFluctPosition => "numeric.fluct_position",
            TaskKind::NumericPeriod => "numeric.period",
            TaskKind::NumericValueAt => "numeric.value_at",
            TaskKind::Inductive => "inductive",
            TaskKind::Deductive => "deductive",
            TaskKind::Causal => "causal",
            TaskKind::Comparison => "comparison",
            TaskKind::InstructFollow => "instruct_follow",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.id() == id)
    }

    pub fn is_numeric(self) -> bool {
        Self::NUMERIC.contains(&self)
    }

    pub fn category(self) -> Option<Category> {
        match self {
            TaskKind::Trend => Some(Category::Trend),
            TaskKind::Season => Some(Category::Season),
            TaskKind::Noise => Some(Category::Noise),
            TaskKind::Local => Some(Category::Local),
            _ => None,
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldNumber {
    pub value: f64,
    /// Relative tolerance.
    pub tolerance: f64,
    /// Scale for near-zero labels: the series value range, or the series
    /// length for index-valued answers.
    pub value_range: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldChoice {
    pub answer: String,
    pub options: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Label set the answer is parsed against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<GoldNumber>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<GoldChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<Query>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<Fact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineageStep {
    pub parent: String,
    pub evolution: crate::tsevol::EvolutionType,
    pub round: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lineage: Vec<LineageStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub task: TaskKind,
    pub question: String,
    pub answer: String,
    pub gold: GoldLabels,
    pub series_refs: Vec<String>,
    pub provenance: Provenance,
}

struct Builder<'a> {
    task: TaskKind,
    ctx: QueryContext<'a>,
    seed: u64,
    rng: SeedStream,
    template: usize,
}

impl<'a> Builder<'a> {
    fn new(task: TaskKind, ctx: QueryContext<'a>, seed: u64) -> Self {
        let mut rng = SeedStream::new(seed);
        let bank = templates::bank(task);
        let template = if bank.is_empty() { 0 } else { rng.below(bank.len()) };
        Self {
            task,
            ctx,
            seed,
            rng,
            template,
        }
    }

    fn base_vars(&self, series: usize) -> Vec<(&'static str, String)> {
        let pool = &self.ctx.pools[series];
        vec![
            ("metric", pool.metric.name.clone()),
            ("n", pool.length.to_string()),
            ("ts", SERIES_SLOT.to_string()),
        ]
    }

    fn finish(self, query: Query, vars: &[(&str, String)], facts: Vec<Fact>) -> Result<QaRecord> {
        let bank = templates::bank(self.task);
        let question = fill(bank[self.template], vars);
        let truth = evaluate_query(&query, &self.ctx)?;
        let answer = answer_text(&query, &truth, &self.ctx);
        let gold = gold_from(&query, truth, &self.ctx, facts);
        let series_refs: Vec<String> = self.ctx.pools.iter().map(|p| p.id.clone()).collect();
        Ok(QaRecord {
            id: record_id(self.task, &series_refs, self.seed),
            task: self.task,
            question,
            answer,
            gold,
            series_refs,
            provenance: Provenance {
                template: Some(format!("{}/{}", self.task.id(), self.template)),
                ..Provenance::default()
            },
        })
    }
}

fn record_id(task: TaskKind, refs: &[String], seed: u64) -> String {
    let key = format!("{}|{}|{seed}", task.id(), refs.join(","));
    format!("{}-{:016x}", task.id().replace('.', "_"), stable_hash(key.as_bytes()))
}

fn series_range(ctx: &QueryContext<'_>, series: usize) -> f64 {
    let s = &ctx.series[series];
    let r = s.max() - s.min();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

fn query_series(query: &Query) -> Option<usize> {
    match query {
        Query::Category { series, .. }
        | Query::Max { series }
        | Query::Min { series }
        | Query::SegmentAvg { series, .. }
        | Query::ValueAt { series, .. }
        | Query::FluctAmplitude { series, .. }
        | Query::FluctPosition { series, .. }
        | Query::Period { series }
        | Query::Compare { series, .. }
        | Query::Explain { series, .. }
        | Query::Summary { series } => Some(*series),
        Query::Exceeds { quantity, .. } => query_series(quantity),
        Query::Related { .. } | Query::Partition | Query::Fixed { .. } => None,
    }
}

fn gold_from(query: &Query, truth: Truth, ctx: &QueryContext<'_>, facts: Vec<Fact>) -> GoldLabels {
    let names = || ctx.pools.iter().map(|p| p.metric.name.clone()).collect::<Vec<_>>();
    let mut gold = GoldLabels {
        query: Some(query.clone()),
        facts,
        ..GoldLabels::default()
    };
    match truth {
        Truth::Labels(labels) => {
            gold.vocabulary = Some(match query {
                Query::Category { category, .. } => category.vocabulary(),
                _ => names(),
            });
            gold.labels = Some(labels);
        }
        Truth::Number(value) => {
            let series = query_series(query).unwrap_or(0);
            let value_range = match query {
                Query::FluctPosition { .. } | Query::Period { .. } => ctx.pools[series].length as f64,
                _ => series_range(ctx, series),
            };
            gold.number = Some(GoldNumber {
                value,
                tolerance: DEFAULT_NUMBER_TOLERANCE,
                value_range,
            });
        }
        Truth::Groups(groups) => {
            gold.vocabulary = Some(names());
            gold.groups = Some(groups);
        }
        Truth::Choice(answer) => {
            let options = if answer == "True" || answer == "False" {
                vec!["True".to_string(), "False".to_string()]
            } else {
                vec!["A".to_string(), "B".to_string()]
            };
            gold.choice = Some(GoldChoice { answer, options });
        }
        Truth::Keywords(k) => gold.keywords = Some(k),
    }
    gold
}

fn category_facts(pool: &AttributePool, category: Category) -> Vec<Fact> {
    pool_facts(pool, 0)
        .into_iter()
        .filter(|f| {
            use FactKind as K;
            match category {
                Category::Trend => matches!(f.kind, K::TrendKind | K::TrendDirection | K::SegmentStart | K::SegmentEnd),
                Category::Season => matches!(f.kind, K::SeasonKind | K::SeasonPeriod),
                Category::Noise => matches!(f.kind, K::NoiseKind | K::NoiseLevel),
                Category::Local => matches!(f.kind, K::FluctKind | K::FluctPosition),
            }
        })
        .collect()
}

fn fluct_facts(pool: &AttributePool, fluct: usize) -> Vec<Fact> {
    pool_facts(pool, 0)
        .into_iter()
        .filter(|f| f.index == Some(fluct) && matches!(f.kind, FactKind::FluctKind | FactKind::FluctPosition | FactKind::FluctAmplitude))
        .collect()
}

fn single<'a>(pool: &'a AttributePool, series: &'a TimeSeries) -> Result<(&'a [AttributePool], &'a [TimeSeries])> {
    if pool.length != series.len() {
        return Err(Error::arg(format!(
            "series of {} values for pool {} of length {}",
            series.len(),
            pool.id,
            pool.length
        )));
    }
    Ok((std::slice::from_ref(pool), std::slice::from_ref(series)))
}

/// Categorical question about one attribute category. A category that is
/// absent yields the "none" variant.
pub fn gen_alignment_qa(pool: &AttributePool, series: &TimeSeries, task: TaskKind, template_seed: u64) -> Result<QaRecord> {
    let category = task
        .category()
        .ok_or_else(|| Error::arg(format!("{task} is not an alignment task")))?;
    let (pools, list) = single(pool, series)?;
    let ctx = QueryContext {
        pools,
        series: list,
        correlations: &[],
    };
    let b = Builder::new(task, ctx, template_seed);
    let vars = b.base_vars(0);
    b.finish(Query::Category { series: 0, category }, &vars, category_facts(pool, category))
}

/// Numerical question. `Ok(None)` when the task does not apply to the pool
/// (no fluctuation with an amplitude, no seasonality, ...).
pub fn gen_numeric_qa(pool: &AttributePool, series: &TimeSeries, task: TaskKind, template_seed: u64) -> Result<Option<QaRecord>> {
    if !task.is_numeric() {
        return Err(Error::arg(format!("{task} is not a numeric task")));
    }
    let (pools, list) = single(pool, series)?;
    let ctx = QueryContext {
        pools,
        series: list,
        correlations: &[],
    };
    let mut b = Builder::new(task, ctx, template_seed);
    let mut vars = b.base_vars(0);
    let n = pool.length;
    let mut facts = Vec::new();
    let query = match task {
        TaskKind::NumericMax => Query::Max { series: 0 },
        TaskKind::NumericMin => Query::Min { series: 0 },
        TaskKind::NumericSegmentAvg => {
            let (start, end) = if pool.trend.len() > 1 {
                let s = b.rng.pick(&pool.trend);
                (s.start_idx, s.end_idx)
            } else {
                let len = b.rng.int_in(8, n / 2);
                let start = b.rng.int_in(0, n - len);
                (start, start + len)
            };
            vars.push(("start", start.to_string()));
            vars.push(("end", (end - 1).to_string()));
            Query::SegmentAvg { series: 0, start, end }
        }
        TaskKind::NumericValueAt => {
            let t = b.rng.below(n);
            vars.push(("t", t.to_string()));
            Query::ValueAt { series: 0, t }
        }
        TaskKind::NumericFluctAmplitude => {
            let candidates: Vec<usize> = (0..pool.fluctuations.len())
                .filter(|i| pool.fluctuations[*i].kind.traits().grounds_amplitude)
                .collect();
            if candidates.is_empty() {
                return Ok(None);
            }
            let i = *b.rng.pick(&candidates);
            let f = &pool.fluctuations[i];
            vars.push(("fluct", f.kind.phrase()));
            vars.push(("pos", f.position.to_string()));
            facts = fluct_facts(pool, i);
            Query::FluctAmplitude { series: 0, fluct: i }
        }
        TaskKind::NumericFluctPosition => {
            // The question names the kind only, so it must be unique.
            let candidates: Vec<usize> = (0..pool.fluctuations.len())
                .filter(|i| {
                    let k = pool.fluctuations[*i].kind;
                    pool.fluctuations.iter().filter(|f| f.kind == k).count() == 1
                })
                .collect();
            if candidates.is_empty() {
                return Ok(None);
            }
            let i = *b.rng.pick(&candidates);
            vars.push(("fluct", pool.fluctuations[i].kind.phrase()));
            facts = fluct_facts(pool, i);
            Query::FluctPosition { series: 0, fluct: i }
        }
        TaskKind::NumericPeriod => {
            if pool.seasonality.is_none() {
                return Ok(None);
            }
            facts = category_facts(pool, Category::Season);
            Query::Period { series: 0 }
        }
        _ => unreachable!("checked by is_numeric"),
    };
    b.finish(query, &vars, facts).map(Some)
}

fn series_list(pools: &[AttributePool]) -> String {
    pools
        .iter()
        .map(|p| format!("{} {SERIES_SLOT}", p.metric.name))
        .collect::<Vec<_>>()
        .join(", ")
}

fn merged_directions(pool: &AttributePool) -> Vec<i8> {
    let mut d = pool.trend_directions();
    d.dedup();
    d
}

/// Whether `candidate` would plausibly be read as taking part in the
/// relation of `corr`. Deliberately generous: used to reject groups whose
/// gold answer would be ambiguous.
pub fn shares_relation(corr: &CorrelationPool, candidate: &AttributePool) -> bool {
    match &corr.relation {
        RelationFact::SharedTrend { directions, .. } => {
            let mut d = directions.clone();
            d.dedup();
            merged_directions(candidate) == d
        }
        RelationFact::SharedFluctuation { position, duration, .. } => {
            let (a, b) = (position.saturating_sub(*duration), position + 2 * duration);
            candidate
                .fluctuations
                .iter()
                .any(|f| f.kind.traits().effect == Effect::Additive && !f.kind.traits().persistent && f.position < b && f.end() > a)
        }
    }
}

fn look_alike(kind: CorrelationKind, a: &AttributePool, b: &AttributePool) -> bool {
    match kind {
        CorrelationKind::Shape => merged_directions(a) == merged_directions(b),
        CorrelationKind::Local => a.fluctuations.iter().any(|fa| {
            b.fluctuations
                .iter()
                .any(|fb| fa.kind == fb.kind && fa.position < fb.end() + fb.duration && fb.position < fa.end() + fa.duration)
        }),
    }
}

/// Multivariate question over `pools` (in prompt order). Every series not
/// in a group must be distinguishable from that group, or the gold answer
/// would be ambiguous; such inputs are rejected.
pub fn gen_mts_qa(
    correlations: &[CorrelationPool],
    pools: &[AttributePool],
    series: &[TimeSeries],
    task: TaskKind,
    template_seed: u64,
) -> Result<QaRecord> {
    if !matches!(task, TaskKind::Correlation | TaskKind::Cluster) {
        return Err(Error::arg(format!("{task} is not a multivariate task")));
    }
    if pools.len() < 2 || pools.len() != series.len() {
        return Err(Error::arg(format!(
            "multivariate question needs at least 2 series, got {} pools and {} series",
            pools.len(),
            series.len()
        )));
    }
    if correlations.is_empty() {
        return Err(Error::arg("multivariate question without a correlation group"));
    }
    let mut names: Vec<&str> = pools.iter().map(|p| p.metric.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("series names in a multivariate question must be distinct"));
    }
    let group_of = |p: &AttributePool| correlations.iter().position(|c| c.members.contains(&p.id));
    for (ci, corr) in correlations.iter().enumerate() {
        for p in pools.iter().filter(|p| group_of(p) != Some(ci)) {
            if shares_relation(corr, p) {
                return Err(Error::invalid(format!("{} also matches group {}", p.metric.name, corr.group_id)));
            }
        }
    }
    for (i, a) in pools.iter().enumerate() {
        for b in &pools[i + 1..] {
            let (ga, gb) = (group_of(a), group_of(b));
            if (ga != gb || ga.is_none()) && look_alike(correlations[0].kind, a, b) {
                return Err(Error::invalid(format!(
                    "{} and {} look related but sit in different groups",
                    a.metric.name, b.metric.name
                )));
            }
        }
    }
    let ctx = QueryContext {
        pools,
        series,
        correlations,
    };
    let b = Builder::new(task, ctx, template_seed);
    let vars = vec![("series_list", series_list(pools))];
    let query = match task {
        TaskKind::Correlation => Query::Related { group: 0 },
        _ => Query::Partition,
    };
    let mut facts = Vec::new();
    for corr in correlations {
        let idx: Vec<usize> = corr
            .members
            .iter()
            .filter_map(|m| pools.iter().position(|p| &p.id == m))
            .collect();
        facts.extend(correlation_facts(corr, &idx));
        if task == TaskKind::Correlation {
            break;
        }
    }
    b.finish(query, &vars, facts)
}

fn quantity_phrase(q: &Query, pool: &AttributePool) -> String {
    match q {
        Query::Max { .. } => "maximum value".into(),
        Query::Min { .. } => "minimum value".into(),
        Query::Period { .. } => "seasonal period".into(),
        Query::SegmentAvg { start, end, .. } => format!("average value from t={start} to t={}", end - 1),
        Query::FluctAmplitude { fluct, .. } => {
            let f = &pool.fluctuations[*fluct];
            format!("amplitude of the {} near t={}", f.kind.phrase(), f.position)
        }
        _ => "value".into(),
    }
}

/// Reasoning-style question with a mechanically derived gold answer.
/// `Ok(None)` when the pool offers nothing to reason about for this task.
pub fn gen_reasoning_qa(pool: &AttributePool, series: &TimeSeries, task: TaskKind, template_seed: u64) -> Result<Option<QaRecord>> {
    if !TaskKind::REASONING.contains(&task) {
        return Err(Error::arg(format!("{task} is not a reasoning task")));
    }
    let (pools, list) = single(pool, series)?;
    let ctx = QueryContext {
        pools,
        series: list,
        correlations: &[],
    };
    let mut b = Builder::new(task, ctx, template_seed);
    let mut vars = b.base_vars(0);
    let n = pool.length;
    let range = series_range(&ctx, 0);
    let query = match task {
        TaskKind::Inductive => Query::Summary { series: 0 },
        TaskKind::Causal => {
            if pool.fluctuations.is_empty() {
                return Ok(None);
            }
            let i = b.rng.below(pool.fluctuations.len());
            vars.push(("pos", pool.fluctuations[i].position.to_string()));
            Query::Explain { series: 0, fluct: i }
        }
        TaskKind::Deductive => {
            let mut options = vec![
                Query::Max { series: 0 },
                Query::Min { series: 0 },
                Query::SegmentAvg {
                    series: 0,
                    start: 0,
                    end: n / 2,
                },
            ];
            if pool.seasonality.is_some() {
                options.push(Query::Period { series: 0 });
            }
            for (i, f) in pool.fluctuations.iter().enumerate() {
                if f.kind.traits().grounds_amplitude {
                    options.push(Query::FluctAmplitude { series: 0, fluct: i });
                }
            }
            let quantity = b.rng.pick(&options).clone();
            let Truth::Number(v) = evaluate_query(&quantity, &ctx)? else {
                unreachable!("numeric quantity")
            };
            let scale = if matches!(quantity, Query::Period { .. }) { n as f64 } else { range };
            let margin = (0.2 * v.abs()).max(0.05 * scale);
            let threshold = sig4(v + b.rng.sign() * margin);
            vars.push(("quantity", quantity_phrase(&quantity, pool)));
            vars.push(("threshold", fmt_num(threshold)));
            Query::Exceeds {
                quantity: Box::new(quantity),
                threshold,
            }
        }
        TaskKind::Comparison => {
            let values = &series.values;
            let len = n / 4;
            let mean = |a: usize| values[a..a + len].iter().sum::<f64>() / len as f64;
            let mut found = None;
            for _ in 0..8 {
                let a = b.rng.int_in(0, n - 2 * len);
                let c = b.rng.int_in(a + len, n - len);
                if (mean(a) - mean(c)).abs() >= 0.05 * range {
                    found = Some(if b.rng.chance(0.5) { (a, c) } else { (c, a) });
                    break;
                }
            }
            let Some((a, c)) = found else {
                return Ok(None);
            };
            vars.push(("a", format!("{a}..{}", a + len - 1)));
            vars.push(("b", format!("{c}..{}", c + len - 1)));
            Query::Compare {
                series: 0,
                a: [a, a + len],
                b: [c, c + len],
            }
        }
        _ => unreachable!("checked above"),
    };
    let facts = match &query {
        Query::Explain { fluct, .. } => fluct_facts(pool, *fluct),
        _ => Vec::new(),
    };
    b.finish(query, &vars, facts).map(Some)
}

/// Series-free format-compliance item.
pub fn gen_instruct_qa(template_seed: u64) -> QaRecord {
    let mut rng = SeedStream::new(template_seed);
    let template = rng.below(templates::INSTRUCT.len());
    let seasons: Vec<String> = SeasonKind::ALL.iter().map(|k| k.phrase()).collect();
    let flucts: Vec<String> = FluctuationKind::ALL.iter().map(|k| k.phrase()).collect();
    let trends: Vec<String> = TrendKind::ALL.iter().map(|k| k.phrase()).collect();
    let noises: Vec<String> = NoiseKind::ALL.iter().map(|k| k.phrase()).collect();
    let pair = |rng: &mut SeedStream, right: &[String], wrong: &[String]| -> (Vec<(&'static str, String)>, String) {
        let r = rng.pick(right).clone();
        let w = rng.pick(wrong).clone();
        if rng.chance(0.5) {
            (vec![("a", r), ("b", w)], "A".to_string())
        } else {
            (vec![("a", w), ("b", r)], "B".to_string())
        }
    };
    let (vars, answer) = match template {
        0 => pair(&mut rng, &seasons, &flucts),
        2 => pair(&mut rng, &trends, &seasons),
        4 => pair(&mut rng, &noises[1..], &trends),
        1 => {
            let local = rng.chance(0.5);
            let a = if local { rng.pick(&flucts).clone() } else { rng.pick(&seasons).clone() };
            (vec![("a", a)], if local { "True" } else { "False" }.to_string())
        }
        3 => {
            let i = rng.below(noises.len());
            (vec![("a", noises[i].clone())], if i == 0 { "True" } else { "False" }.to_string())
        }
        _ => {
            let season = rng.chance(0.5);
            let a = if season { rng.pick(&seasons).clone() } else { rng.pick(&flucts).clone() };
            (vec![("a", a)], if season { "True" } else { "False" }.to_string())
        }
    };
    let question = fill(templates::INSTRUCT[template], &vars);
    let query = Query::Fixed { choice: answer.clone() };
    let ctx = QueryContext {
        pools: &[],
        series: &[],
        correlations: &[],
    };
    let truth = Truth::Choice(answer);
    let answer_text = answer_text(&query, &truth, &ctx);
    QaRecord {
        id: record_id(TaskKind::InstructFollow, &[], template_seed),
        task: TaskKind::InstructFollow,
        question,
        answer: answer_text,
        gold: gold_from(&query, truth, &ctx, Vec::new()),
        series_refs: Vec::new(),
        provenance: Provenance {
            template: Some(format!("instruct_follow/{template}")),
            ..Provenance::default()
        },
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Re-derives the gold labels of `record` from its data. Returns the list
/// of disagreements (empty when sound).
pub fn verify_gold(record: &QaRecord, ctx: &QueryContext<'_>) -> Vec<String> {
    let mut problems = Vec::new();
    let gold = &record.gold;
    if record.task != TaskKind::InstructFollow && record.series_refs.is_empty() {
        problems.push("record references no series".into());
    }
    for (i, id) in record.series_refs.iter().enumerate() {
        if ctx.pools.get(i).map(|p| &p.id) != Some(id) {
            problems.push(format!("series_refs[{i}] = {id} does not match the embedded pool"));
        }
    }
    let pool_refs: Vec<&AttributePool> = ctx.pools.iter().collect();
    for fact in &gold.facts {
        match super::facts::fact_truth(fact, &pool_refs, ctx.correlations) {
            None => problems.push(format!("fact {:?} cannot be checked", fact.kind)),
            Some(truth) => {
                let ok = match (&truth, &fact.value) {
                    (super::FactValue::Number(a), super::FactValue::Number(b)) => close(*a, *b),
                    (a, b) => a == b,
                };
                if !ok {
                    problems.push(format!("fact {:?} claims {} but truth is {}", fact.kind, fact.value, truth));
                }
            }
        }
    }
    let Some(query) = &gold.query else {
        return problems;
    };
    let truth = match evaluate_query(query, ctx) {
        Ok(t) => t,
        Err(e) => {
            problems.push(format!("query cannot be evaluated: {e}"));
            return problems;
        }
    };
    let ok = match &truth {
        Truth::Labels(l) => gold.labels.as_ref() == Some(l),
        Truth::Number(v) => gold.number.as_ref().is_some_and(|g| close(g.value, *v)),
        Truth::Groups(g) => gold.groups.as_ref() == Some(g),
        Truth::Choice(c) => gold
            .choice
            .as_ref()
            .is_some_and(|g| &g.answer == c && g.options.contains(c)),
        Truth::Keywords(k) => gold.keywords.as_ref() == Some(k),
    };
    if !ok {
        problems.push(format!("gold disagrees with re-derived {truth:?}"));
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genpool::{build_correlation_group, sample_pool, AttributeSubset, LocalFluctuation, NoiseAttr, TrendSegment};
    use crate::synth::render;
    use crate::taxonomy::MetricSpec;

    fn metric(name: &str) -> MetricSpec {
        MetricSpec {
            name: name.into(),
            domain_tag: "aiops".into(),
            value_range_hint: [0.0, 100.0],
            nonneg: true,
        }
    }

    fn steady(name: &str, n: usize, level: f64) -> AttributePool {
        AttributePool {
            id: format!("p-{name}"),
            metric: metric(name),
            length: n,
            trend: vec![TrendSegment {
                kind: TrendKind::Steady,
                start_idx: 0,
                end_idx: n,
                start_value: level,
                end_value: level,
                curvature: None,
            }],
            seasonality: None,
            noise: NoiseAttr::none(),
            fluctuations: vec![],
            generation_seed: 0,
        }
    }

    fn ctx_of<'a>(pools: &'a [AttributePool], series: &'a [TimeSeries], corr: &'a [CorrelationPool]) -> QueryContext<'a> {
        QueryContext {
            pools,
            series,
            correlations: corr,
        }
    }

    #[test]
    fn task_ids_round_trip() {
        for t in TaskKind::ALL {
            assert_eq!(TaskKind::from_id(t.id()), Some(*t));
            let json = serde_json::to_string(t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.id()));
        }
        assert_eq!(TaskKind::ALL.len(), 18);
    }

    #[test]
    fn at_least_five_templates_per_task() {
        for t in TaskKind::ALL {
            let n = if *t == TaskKind::InstructFollow {
                templates::INSTRUCT.len()
            } else {
                templates::bank(*t).len()
            };
            assert!(n >= 5, "{t}: {n}");
        }
    }

    #[test]
    fn local_spike_labels() {
        let mut pool = steady("m", 256, 10.0);
        pool.fluctuations.push(LocalFluctuation {
            kind: FluctuationKind::UpwardSpike,
            position: 100,
            duration: 1,
            amplitude: 5.0,
            factor: None,
        });
        let series = render(&pool);
        let r = gen_alignment_qa(&pool, &series, TaskKind::Local, 1).unwrap();
        assert_eq!(r.gold.labels, Some(vec!["upward_spike".to_string()]));
        assert!(r.answer.contains("upward spike"));
        assert_eq!(r.question.matches(SERIES_SLOT).count(), 1);
    }

    #[test]
    fn missing_season_gives_none_variant() {
        let pool = steady("m", 128, 3.0);
        let r = gen_alignment_qa(&pool, &render(&pool), TaskKind::Season, 9).unwrap();
        assert_eq!(r.gold.labels, Some(vec!["none".to_string()]));
        assert!(r.answer.contains("no periodic fluctuation"));
        assert!(gen_numeric_qa(&pool, &render(&pool), TaskKind::NumericPeriod, 9).unwrap().is_none());
        assert!(gen_numeric_qa(&pool, &render(&pool), TaskKind::NumericFluctAmplitude, 9).unwrap().is_none());
    }

    #[test]
    fn segment_average_of_two_levels() {
        let mut pool = steady("m", 256, 5.0);
        pool.trend = vec![
            TrendSegment {
                kind: TrendKind::Steady,
                start_idx: 0,
                end_idx: 128,
                start_value: 5.0,
                end_value: 5.0,
                curvature: None,
            },
            TrendSegment {
                kind: TrendKind::Steady,
                start_idx: 128,
                end_idx: 256,
                start_value: 9.0,
                end_value: 9.0,
                curvature: None,
            },
        ];
        let series = render(&pool);
        for seed in 0..20 {
            let r = gen_numeric_qa(&pool, &series, TaskKind::NumericSegmentAvg, seed).unwrap().unwrap();
            let Some(Query::SegmentAvg { start, .. }) = r.gold.query else { panic!() };
            let expected = if start == 0 { 5.0 } else { 9.0 };
            assert_eq!(r.gold.number.unwrap().value, expected);
        }
    }

    #[test]
    fn max_tie_reports_value_and_smallest_index() {
        let mut pool = steady("m", 256, 10.0);
        pool.fluctuations.push(LocalFluctuation {
            kind: FluctuationKind::UpwardSpike,
            position: 100,
            duration: 1,
            amplitude: 5.0,
            factor: None,
        });
        let series = render(&pool);
        let r = gen_numeric_qa(&pool, &series, TaskKind::NumericMax, 0).unwrap().unwrap();
        assert_eq!(r.gold.number.as_ref().unwrap().value, 15.0);
        assert_eq!(series.argmax(), 100);
        assert!(r.answer.ends_with("15."));
    }

    #[test]
    fn mts_needs_two_series() {
        let pool = steady("a", 64, 1.0);
        let s = render(&pool);
        let corr = CorrelationPool {
            group_id: "g".into(),
            kind: CorrelationKind::Local,
            members: vec![pool.id.clone()],
            relation: RelationFact::SharedFluctuation {
                kind: FluctuationKind::UpwardSpike,
                position: 3,
                duration: 1,
            },
        };
        let err = gen_mts_qa(&[corr], &[pool], &[s], TaskKind::Correlation, 0).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn local_group_plus_independent() {
        let names = ["disk_io", "net_in", "net_out"];
        let subsets: Vec<AttributeSubset> = names.iter().map(|n| {
            let mut s = AttributeSubset::full(metric(n));
            s.fluctuations.clear();
            s
        }).collect();
        let (corr, mut pools) = build_correlation_group(CorrelationKind::Local, &subsets, 256, 5).unwrap();
        let mut lone = AttributeSubset::full(metric("queue_depth"));
        lone.fluctuations.clear();
        pools.push(sample_pool(&lone, 256, 77).unwrap());
        let series: Vec<TimeSeries> = pools.iter().map(render).collect();
        let r = gen_mts_qa(std::slice::from_ref(&corr), &pools, &series, TaskKind::Correlation, 3).unwrap();
        let mut expected: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        expected.sort();
        assert_eq!(r.gold.labels, Some(expected));
        assert_eq!(r.question.matches(SERIES_SLOT).count(), 4);
        assert!(verify_gold(&r, &ctx_of(&pools, &series, std::slice::from_ref(&corr))).is_empty());
        assert!(crate::genpool::verify_correlation(&corr, &pools).is_empty());
    }

    #[test]
    fn cluster_of_two_groups() {
        let mk = |names: &[&str], seed| {
            let subsets: Vec<AttributeSubset> = names.iter().map(|n| {
                let mut s = AttributeSubset::full(metric(n));
                s.fluctuations.clear();
                s
            }).collect();
            build_correlation_group(CorrelationKind::Local, &subsets, 128, seed).unwrap()
        };
        let mut found = false;
        for seed in 0..50u64 {
            let (ca, pa) = mk(&["a1", "a2"], seed * 2);
            let (cb, pb) = mk(&["b1", "b2"], seed * 2 + 1);
            let pools: Vec<AttributePool> = pa.into_iter().chain(pb).collect();
            let series: Vec<TimeSeries> = pools.iter().map(render).collect();
            let corrs = [ca, cb];
            if let Ok(r) = gen_mts_qa(&corrs, &pools, &series, TaskKind::Cluster, seed) {
                let g = r.gold.groups.clone().unwrap();
                assert_eq!(g, vec![vec!["a1".to_string(), "a2".into()], vec!["b1".to_string(), "b2".into()]]);
                assert!(verify_gold(&r, &ctx_of(&pools, &series, &corrs)).is_empty());
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn generated_records_verify_and_are_deterministic() {
        let subset = AttributeSubset::full(metric("cpu_utilization"));
        for seed in 0..200u64 {
            let pool = sample_pool(&subset, 64 + (seed as usize * 41) % 960, seed).unwrap();
            let series = render(&pool);
            let pools = [pool.clone()];
            let list = [series.clone()];
            let ctx = ctx_of(&pools, &list, &[]);
            let mut records = Vec::new();
            for t in TaskKind::ALIGNMENT {
                records.push(gen_alignment_qa(&pool, &series, *t, seed).unwrap());
            }
            for t in TaskKind::NUMERIC {
                records.extend(gen_numeric_qa(&pool, &series, *t, seed).unwrap());
            }
            for t in TaskKind::REASONING {
                records.extend(gen_reasoning_qa(&pool, &series, *t, seed).unwrap());
            }
            for r in &records {
                assert!(verify_gold(r, &ctx).is_empty(), "{:?}: {:?}", r.task, verify_gold(r, &ctx));
                assert_eq!(r.question.matches(SERIES_SLOT).count(), 1, "{}", r.question);
            }
            let again = gen_alignment_qa(&pool, &series, TaskKind::Trend, seed).unwrap();
            assert_eq!(again, records[0]);
        }
    }

    #[test]
    fn instruct_items_are_series_free() {
        for seed in 0..50 {
            let r = gen_instruct_qa(seed);
            assert!(r.series_refs.is_empty());
            assert!(!r.question.contains(SERIES_SLOT));
            let c = r.gold.choice.as_ref().unwrap();
            assert!(c.options.contains(&c.answer));
            assert!(r.answer.contains(&c.answer));
        }
    }

    #[test]
    fn corrupted_gold_is_detected() {
        let pool = steady("m", 128, 4.0);
        let series = render(&pool);
        let mut r = gen_numeric_qa(&pool, &series, TaskKind::NumericMax, 1).unwrap().unwrap();
        r.gold.number.as_mut().unwrap().value = 5.0;
        let pools = [pool];
        let list = [series];
        assert!(!verify_gold(&r, &ctx_of(&pools, &list, &[])).is_empty());
    }
}
