use serde::{Deserialize, Serialize};

use super::facts::fmt_num;
use crate::error::{Error, Result};
use crate::genpool::{AttributePool, CorrelationPool};
use crate::synth::TimeSeries;
use crate::taxonomy::{Category, NoiseKind, NONE_LABEL};

/// What a Q&A item asks, in terms of the item's series list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    Category { series: usize, category: Category },
    Max { series: usize },
    Min { series: usize },
    /// Mean over `[start, end)`.
    SegmentAvg { series: usize, start: usize, end: usize },
    ValueAt { series: usize, t: usize },
    FluctAmplitude { series: usize, fluct: usize },
    FluctPosition { series: usize, fluct: usize },
    Period { series: usize },
    /// Names of the members of correlation group `group`.
    Related { group: usize },
    /// Partition of all series into correlated groups.
    Partition,
    /// Which window has the higher mean: "A" or "B".
    Compare { series: usize, a: [usize; 2], b: [usize; 2] },
    /// "True" iff the quantity is strictly above `threshold`.
    Exceeds { quantity: Box<Query>, threshold: f64 },
    Explain { series: usize, fluct: usize },
    Summary { series: usize },
    /// Series-free item with a fixed correct option.
    Fixed { choice: String },
}

/// Data a query is evaluated against. `pools[i]` renders to `series[i]`.
#[derive(Clone, Copy, Debug)]
pub struct QueryContext<'a> {
    pub pools: &'a [AttributePool],
    pub series: &'a [TimeSeries],
    pub correlations: &'a [CorrelationPool],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Truth {
    Labels(Vec<String>),
    Number(f64),
    Groups(Vec<Vec<String>>),
    Choice(String),
    Keywords(Vec<String>),
}

fn sorted_unique(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v.dedup();
    v
}

impl<'a> QueryContext<'a> {
    fn pool(&self, i: usize) -> Result<&'a AttributePool> {
        self.pools
            .get(i)
            .ok_or_else(|| Error::arg(format!("query references series {i} of {}", self.pools.len())))
    }

    fn values(&self, i: usize) -> Result<&'a [f64]> {
        self.series
            .get(i)
            .map(|s| s.values.as_slice())
            .ok_or_else(|| Error::arg(format!("query references series {i} of {}", self.series.len())))
    }

    fn name(&self, i: usize) -> String {
        self.pools[i].metric.name.clone()
    }

    fn series_of(&self, pool_id: &str) -> Result<usize> {
        self.pools
            .iter()
            .position(|p| p.id == pool_id)
            .ok_or_else(|| Error::arg(format!("correlation member {pool_id} not among the series")))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn window(values: &[f64], start: usize, end: usize) -> Result<&[f64]> {
    if start >= end || end > values.len() {
        return Err(Error::arg(format!("window [{start}, {end}) outside series of {}", values.len())));
    }
    Ok(&values[start..end])
}

/// Category labels of one pool: kind identifiers, or `none`.
pub(crate) fn category_labels(pool: &AttributePool, category: Category) -> Vec<String> {
    let labels = match category {
        Category::Trend => pool.trend.iter().map(|s| s.kind.id().to_string()).collect(),
        Category::Season => vec![pool
            .seasonality
            .as_ref()
            .map_or(NONE_LABEL, |s| s.kind.id())
            .to_string()],
        Category::Noise => vec![pool.noise.kind.id().to_string()],
        Category::Local if pool.fluctuations.is_empty() => vec![NONE_LABEL.to_string()],
        Category::Local => pool.fluctuations.iter().map(|f| f.kind.id().to_string()).collect(),
    };
    sorted_unique(labels)
}

fn summary_keywords(pool: &AttributePool) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in &pool.trend {
        let p = s.kind.phrase();
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if let Some(s) = &pool.seasonality {
        out.push(s.kind.phrase());
    }
    for f in &pool.fluctuations {
        let p = f.kind.phrase();
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

pub fn evaluate_query(query: &Query, ctx: &QueryContext<'_>) -> Result<Truth> {
    Ok(match query {
        Query::Category { series, category } => Truth::Labels(category_labels(ctx.pool(*series)?, *category)),
        Query::Max { series } => Truth::Number(ctx.values(*series)?.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        Query::Min { series } => Truth::Number(ctx.values(*series)?.iter().copied().fold(f64::INFINITY, f64::min)),
        Query::SegmentAvg { series, start, end } => Truth::Number(mean(window(ctx.values(*series)?, *start, *end)?)),
        Query::ValueAt { series, t } => Truth::Number(
            *ctx.values(*series)?
                .get(*t)
                .ok_or_else(|| Error::arg(format!("t={t} outside series")))?,
        ),
        Query::FluctAmplitude { series, fluct } | Query::FluctPosition { series, fluct } => {
            let f = ctx
                .pool(*series)?
                .fluctuations
                .get(*fluct)
                .ok_or_else(|| Error::arg(format!("fluctuation {fluct} missing")))?;
            Truth::Number(if matches!(query, Query::FluctAmplitude { .. }) {
                f.amplitude
            } else {
                f.position as f64
            })
        }
        Query::Period { series } => Truth::Number(
            ctx.pool(*series)?
                .seasonality
                .as_ref()
                .ok_or_else(|| Error::arg("period asked of a series without seasonality"))?
                .period as f64,
        ),
        Query::Related { group } => {
            let corr = ctx
                .correlations
                .get(*group)
                .ok_or_else(|| Error::arg(format!("correlation group {group} missing")))?;
            let mut names = Vec::new();
            for m in &corr.members {
                names.push(ctx.name(ctx.series_of(m)?));
            }
            Truth::Labels(sorted_unique(names))
        }
        Query::Partition => {
            let mut assigned = vec![false; ctx.pools.len()];
            let mut groups = Vec::new();
            for corr in ctx.correlations {
                let mut g = Vec::new();
                for m in &corr.members {
                    let i = ctx.series_of(m)?;
                    assigned[i] = true;
                    g.push(ctx.name(i));
                }
                groups.push(sorted_unique(g));
            }
            for (i, done) in assigned.iter().enumerate() {
                if !done {
                    groups.push(vec![ctx.name(i)]);
                }
            }
            groups.sort();
            Truth::Groups(groups)
        }
        Query::Compare { series, a, b } => {
            let v = ctx.values(*series)?;
            let ma = mean(window(v, a[0], a[1])?);
            let mb = mean(window(v, b[0], b[1])?);
            Truth::Choice(if ma > mb { "A" } else { "B" }.into())
        }
        Query::Exceeds { quantity, threshold } => match evaluate_query(quantity, ctx)? {
            Truth::Number(v) => Truth::Choice(if v > *threshold { "True" } else { "False" }.into()),
            other => return Err(Error::arg(format!("threshold condition over non-numeric {other:?}"))),
        },
        Query::Explain { series, fluct } => {
            let f = ctx
                .pool(*series)?
                .fluctuations
                .get(*fluct)
                .ok_or_else(|| Error::arg(format!("fluctuation {fluct} missing")))?;
            Truth::Keywords(vec![f.kind.phrase(), f.position.to_string()])
        }
        Query::Summary { series } => Truth::Keywords(summary_keywords(ctx.pool(*series)?)),
        Query::Fixed { choice } => Truth::Choice(choice.clone()),
    })
}

fn join_names(names: &[String]) -> String {
    match names.len() {
        0 => String::new(),
        1 => names[0].clone(),
        n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
    }
}

fn fluct_name(ctx: &QueryContext<'_>, series: usize, fluct: usize) -> String {
    ctx.pools
        .get(series)
        .and_then(|p| p.fluctuations.get(fluct))
        .map_or_else(|| "fluctuation".to_string(), |f| f.kind.phrase())
}

/// Canonical answer sentence for `truth`. Label-bearing answers spell kinds
/// as phrases; numeric answers end with the number.
pub fn answer_text(query: &Query, truth: &Truth, ctx: &QueryContext<'_>) -> String {
    match (query, truth) {
        (Query::Category { series, category }, Truth::Labels(labels)) => {
            let pool = ctx.pools.get(*series);
            match category {
                Category::Trend => match pool {
                    Some(p) => {
                        let parts: Vec<String> = p
                            .trend
                            .iter()
                            .map(|s| format!("{} from t={} to t={}", s.kind.phrase(), s.start_idx, s.end_idx - 1))
                            .collect();
                        format!("The trend is {}.", parts.join(", then "))
                    }
                    None => format!("The trend is {}.", phrases(labels).join(" and ")),
                },
                Category::Season => {
                    if labels.iter().any(|l| l == NONE_LABEL) {
                        "There is no periodic fluctuation.".into()
                    } else {
                        let period = pool.and_then(|p| p.seasonality.as_ref()).map(|s| s.period);
                        match period {
                            Some(p) => format!("The series shows a {} periodic pattern with a period of {p} steps.", phrases(labels).join(" ")),
                            None => format!("The series shows a {} periodic pattern.", phrases(labels).join(" ")),
                        }
                    }
                }
                Category::Noise => {
                    if labels.iter().any(|l| l == NoiseKind::None.id()) {
                        "The series is smooth and noise-free.".into()
                    } else {
                        format!("The series carries {} noise.", phrases(labels).join(" "))
                    }
                }
                Category::Local => {
                    if labels.iter().any(|l| l == NONE_LABEL) {
                        "There is no local fluctuation.".into()
                    } else {
                        match pool {
                            Some(p) => {
                                let parts: Vec<String> = p
                                    .fluctuations
                                    .iter()
                                    .map(|f| format!("a {} at t={}", f.kind.phrase(), f.position))
                                    .collect();
                                format!("The series contains {}.", join_names(&parts))
                            }
                            None => format!("The series contains {}.", join_names(&phrases(labels))),
                        }
                    }
                }
            }
        }
        (q, Truth::Number(v)) => {
            let v = fmt_num(*v);
            match q {
                Query::Max { .. } => format!("The maximum value is {v}."),
                Query::Min { .. } => format!("The minimum value is {v}."),
                Query::SegmentAvg { start, end, .. } => {
                    format!("The average value from t={start} to t={} is {v}.", end - 1)
                }
                Query::ValueAt { t, .. } => format!("At t={t} the value is {v}."),
                Query::FluctAmplitude { series, fluct } => {
                    format!("The {} has an amplitude of {v}.", fluct_name(ctx, *series, *fluct))
                }
                Query::FluctPosition { series, fluct } => {
                    format!("The {} starts at t={v}.", fluct_name(ctx, *series, *fluct))
                }
                Query::Period { .. } => format!("The period is {v} steps."),
                _ => format!("The answer is {v}."),
            }
        }
        (_, Truth::Labels(names)) => format!("The related series are {}.", join_names(names)),
        (_, Truth::Groups(groups)) => {
            let parts: Vec<String> = groups
                .iter()
                .enumerate()
                .map(|(i, g)| format!("Group {}: {}", i + 1, g.join(", ")))
                .collect();
            format!("{}.", parts.join("; "))
        }
        (Query::Exceeds { .. } | Query::Fixed { .. } | Query::Compare { .. }, Truth::Choice(c)) => {
            if c == "True" || c == "False" {
                format!("{c}.")
            } else {
                format!("Answer: {c}.")
            }
        }
        (_, Truth::Choice(c)) => format!("Answer: {c}."),
        (Query::Explain { .. }, Truth::Keywords(k)) => {
            format!("The change is explained by a {} starting at t={}.", k[0], k.get(1).map_or("", String::as_str))
        }
        (Query::Summary { series }, Truth::Keywords(k)) => match ctx.pools.get(*series) {
            Some(p) => {
                let mut trend: Vec<String> = Vec::new();
                for s in &p.trend {
                    if !trend.contains(&s.kind.phrase()) {
                        trend.push(s.kind.phrase());
                    }
                }
                let season = p
                    .seasonality
                    .as_ref()
                    .map_or("no periodic pattern".to_string(), |s| format!("a {} seasonal pattern", s.kind.phrase()));
                let local: Vec<String> = p.fluctuations.iter().map(|f| format!("a {} at t={}", f.kind.phrase(), f.position)).collect();
                let local = if local.is_empty() {
                    "no local events stand out".to_string()
                } else {
                    format!("local events include {}", join_names(&local))
                };
                format!("Overall the trend is {}, with {season}; {local}.", trend.join(" then "))
            }
            None => format!("Overall: {}.", k.join(", ")),
        },
        (_, Truth::Keywords(k)) => k.join(", "),
    }
}

fn phrases(labels: &[String]) -> Vec<String> {
    labels.iter().map(|l| l.replace('_', " ")).collect()
}
