use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::genpool::{AttributePool, CorrelationKind, CorrelationPool, RelationFact, TrendSegment};
use crate::taxonomy::{Effect, FluctuationKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactKind {
    TrendKind,
    TrendDirection,
    SegmentStart,
    SegmentEnd,
    TrendStartValue,
    TrendEndValue,
    SeasonKind,
    SeasonPeriod,
    SeasonAmplitude,
    SeasonPhase,
    NoiseKind,
    NoiseLevel,
    FluctKind,
    FluctPosition,
    FluctDuration,
    FluctAmplitude,
    FluctFactor,
    CorrelationKind,
    SharedPosition,
}

impl FactKind {
    pub fn is_numeric(self) -> bool {
        !matches!(
            self,
            FactKind::TrendKind
                | FactKind::TrendDirection
                | FactKind::SeasonKind
                | FactKind::NoiseKind
                | FactKind::FluctKind
                | FactKind::CorrelationKind
        )
    }

    /// Facts addressing one segment or fluctuation need an `index`.
    pub fn is_indexed(self) -> bool {
        matches!(
            self,
            FactKind::TrendKind
                | FactKind::TrendDirection
                | FactKind::SegmentStart
                | FactKind::SegmentEnd
                | FactKind::TrendStartValue
                | FactKind::TrendEndValue
                | FactKind::FluctKind
                | FactKind::FluctPosition
                | FactKind::FluctDuration
                | FactKind::FluctAmplitude
                | FactKind::FluctFactor
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactValue {
    Number(f64),
    Label(String),
}

impl FactValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FactValue::Number(v) => Some(*v),
            FactValue::Label(_) => None,
        }
    }
}

impl std::fmt::Display for FactValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactValue::Number(v) => f.write_str(&fmt_num(*v)),
            FactValue::Label(l) => f.write_str(l),
        }
    }
}

/// One structured statement about a series. `series` indexes the list of
/// series the fact is read against; `index` picks the trend segment or
/// fluctuation for per-item kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub kind: FactKind,
    pub value: FactValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    pub series: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl Fact {
    fn num(kind: FactKind, value: f64, units: Option<&str>, series: usize, index: Option<usize>) -> Self {
        Self {
            kind,
            value: FactValue::Number(value),
            units: units.map(str::to_string),
            series,
            index,
        }
    }

    fn label(kind: FactKind, value: &str, series: usize, index: Option<usize>) -> Self {
        Self {
            kind,
            value: FactValue::Label(value.to_string()),
            units: None,
            series,
            index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeDescription {
    pub text: String,
    pub facts: Vec<Fact>,
}

/// Rounds to four significant digits.
pub fn sig4(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.3e}").parse().unwrap_or(x)
}

/// Text form of a number: four significant digits, no exponent.
pub fn fmt_num(x: f64) -> String {
    let r = sig4(x);
    if r == 0.0 {
        return "0".into();
    }
    format!("{r}")
}

pub(crate) fn direction_label(d: i8) -> &'static str {
    match d {
        1 => "increasing",
        -1 => "decreasing",
        _ => "flat",
    }
}

const STEPS: Option<&str> = Some("steps");
const VALUE: Option<&str> = Some("value");

/// Every attribute of `pool` as structured facts read against series
/// number `series`.
pub fn pool_facts(pool: &AttributePool, series: usize) -> Vec<Fact> {
    let mut out = Vec::new();
    for (i, s) in pool.trend.iter().enumerate() {
        let idx = Some(i);
        out.push(Fact::label(FactKind::TrendKind, s.kind.id(), series, idx));
        out.push(Fact::label(FactKind::TrendDirection, direction_label(s.direction()), series, idx));
        out.push(Fact::num(FactKind::SegmentStart, s.start_idx as f64, STEPS, series, idx));
        out.push(Fact::num(FactKind::SegmentEnd, s.end_idx as f64, STEPS, series, idx));
        out.push(Fact::num(FactKind::TrendStartValue, s.start_value, VALUE, series, idx));
        out.push(Fact::num(FactKind::TrendEndValue, s.end_value, VALUE, series, idx));
    }
    match &pool.seasonality {
        Some(season) => {
            out.push(Fact::label(FactKind::SeasonKind, season.kind.id(), series, None));
            out.push(Fact::num(FactKind::SeasonPeriod, season.period as f64, STEPS, series, None));
            out.push(Fact::num(FactKind::SeasonAmplitude, season.amplitude, VALUE, series, None));
            out.push(Fact::num(FactKind::SeasonPhase, season.phase as f64, STEPS, series, None));
        }
        None => out.push(Fact::label(FactKind::SeasonKind, crate::taxonomy::NONE_LABEL, series, None)),
    }
    out.push(Fact::label(FactKind::NoiseKind, pool.noise.kind.id(), series, None));
    out.push(Fact::num(FactKind::NoiseLevel, pool.noise.sigma_or_halfwidth, VALUE, series, None));
    for (i, f) in pool.fluctuations.iter().enumerate() {
        let idx = Some(i);
        let traits = f.kind.traits();
        out.push(Fact::label(FactKind::FluctKind, f.kind.id(), series, idx));
        out.push(Fact::num(FactKind::FluctPosition, f.position as f64, STEPS, series, idx));
        if traits.grounds_duration {
            out.push(Fact::num(FactKind::FluctDuration, f.duration as f64, STEPS, series, idx));
        }
        if traits.grounds_amplitude {
            out.push(Fact::num(FactKind::FluctAmplitude, f.amplitude, VALUE, series, idx));
        }
        if let Some(factor) = f.factor {
            let units = if f.kind == FluctuationKind::PhaseShift { STEPS } else { Some("ratio") };
            out.push(Fact::num(FactKind::FluctFactor, factor, units, series, idx));
        }
    }
    out
}

/// Group-level facts, one set per member. `member_series[i]` is the series
/// number of `corr.members[i]`.
pub fn correlation_facts(corr: &CorrelationPool, member_series: &[usize]) -> Vec<Fact> {
    let kind = match corr.kind {
        CorrelationKind::Shape => "shape",
        CorrelationKind::Local => "local",
    };
    let mut out = Vec::new();
    for &s in member_series {
        out.push(Fact::label(FactKind::CorrelationKind, kind, s, None));
        if let RelationFact::SharedFluctuation { position, .. } = &corr.relation {
            out.push(Fact::num(FactKind::SharedPosition, *position as f64, STEPS, s, None));
        }
    }
    out
}

/// Ground truth for `fact`: `None` when the fact cannot be checked against
/// the given pools (unknown series, missing index, absent attribute).
pub fn fact_truth(fact: &Fact, pools: &[&AttributePool], correlations: &[CorrelationPool]) -> Option<FactValue> {
    let pool = pools.get(fact.series)?;
    let num = |v: f64| Some(FactValue::Number(v));
    let label = |v: &str| Some(FactValue::Label(v.to_string()));
    let segment = || -> Option<&TrendSegment> { pool.trend.get(fact.index?) };
    let fluct = || pool.fluctuations.get(fact.index?);
    match fact.kind {
        FactKind::TrendKind => label(segment()?.kind.id()),
        FactKind::TrendDirection => label(direction_label(segment()?.direction())),
        FactKind::SegmentStart => num(segment()?.start_idx as f64),
        FactKind::SegmentEnd => num(segment()?.end_idx as f64),
        FactKind::TrendStartValue => num(segment()?.start_value),
        FactKind::TrendEndValue => num(segment()?.end_value),
        FactKind::SeasonKind => match &pool.seasonality {
            Some(s) => label(s.kind.id()),
            None => label(crate::taxonomy::NONE_LABEL),
        },
        FactKind::SeasonPeriod => num(pool.seasonality.as_ref()?.period as f64),
        FactKind::SeasonAmplitude => num(pool.seasonality.as_ref()?.amplitude),
        FactKind::SeasonPhase => num(pool.seasonality.as_ref()?.phase as f64),
        FactKind::NoiseKind => label(pool.noise.kind.id()),
        FactKind::NoiseLevel => num(pool.noise.sigma_or_halfwidth),
        FactKind::FluctKind => label(fluct()?.kind.id()),
        FactKind::FluctPosition => num(fluct()?.position as f64),
        FactKind::FluctDuration => {
            let f = fluct()?;
            f.kind.traits().grounds_duration.then_some(())?;
            num(f.duration as f64)
        }
        FactKind::FluctAmplitude => {
            let f = fluct()?;
            f.kind.traits().grounds_amplitude.then_some(())?;
            num(f.amplitude)
        }
        FactKind::FluctFactor => num(fluct()?.factor?),
        FactKind::CorrelationKind | FactKind::SharedPosition => {
            let corr = correlations.iter().find(|c| c.members.contains(&pool.id))?;
            match (fact.kind, &corr.relation) {
                (FactKind::CorrelationKind, _) => label(match corr.kind {
                    CorrelationKind::Shape => "shape",
                    CorrelationKind::Local => "local",
                }),
                (_, RelationFact::SharedFluctuation { position, .. }) => num(*position as f64),
                _ => None,
            }
        }
    }
}

fn segment_sentence(s: &TrendSegment) -> String {
    let span = format!("from t={} to t={}", s.start_idx, s.end_idx - 1);
    match s.direction() {
        0 => format!("{span} the trend is steady at {}", fmt_num(s.start_value)),
        d => {
            let verb = if d > 0 { "rising" } else { "falling" };
            let shape = match s.curvature {
                Some(c) => format!("curved ({})", if c == crate::genpool::Curvature::Convex { "convex" } else { "concave" }),
                None => s.kind.phrase(),
            };
            format!(
                "{span} the trend is {shape}, {verb} from {} to {}",
                fmt_num(s.start_value),
                fmt_num(s.end_value)
            )
        }
    }
}

pub(crate) fn fluct_sentence(f: &crate::genpool::LocalFluctuation) -> String {
    let traits = f.kind.traits();
    let mut s = format!("a {} at t={}", f.kind.phrase(), f.position);
    if traits.grounds_duration {
        let _ = write!(s, " lasting {} steps", f.duration);
    }
    match traits.effect {
        Effect::Additive => {
            let _ = write!(s, " with amplitude {}", fmt_num(f.amplitude));
        }
        Effect::SeasonGain => {
            let _ = write!(s, " with amplitude {}", fmt_num(f.amplitude));
            if let Some(k) = f.factor {
                let _ = write!(s, " (seasonal swing scaled by {})", fmt_num(k));
            }
        }
        Effect::NoiseScale => {
            let _ = write!(s, " where noise is scaled by {}", fmt_num(f.factor.unwrap_or(1.0)));
        }
        Effect::SeasonTiming if f.kind == FluctuationKind::PhaseShift => {
            let _ = write!(s, " shifting the cycle by {} steps", fmt_num(f.factor.unwrap_or(0.0)));
        }
        Effect::SeasonTiming => {
            let _ = write!(s, " stretching the period by a factor of {}", fmt_num(f.factor.unwrap_or(1.0)));
        }
        Effect::Pinned => {}
    }
    s
}

/// Canonical text plus structured facts for one pool.
pub fn describe(pool: &AttributePool) -> AttributeDescription {
    let mut text = format!("The series {} has {} points. ", pool.metric.name, pool.length);
    let segments: Vec<String> = pool.trend.iter().map(segment_sentence).collect();
    let _ = write!(text, "Trend: {}. ", segments.join("; "));
    match &pool.seasonality {
        Some(s) => {
            let _ = write!(
                text,
                "Seasonality: a {} pattern with period {} and amplitude {} (phase {}). ",
                s.kind.phrase(),
                s.period,
                fmt_num(s.amplitude),
                s.phase
            );
        }
        None => text.push_str("Seasonality: no periodic fluctuation. "),
    }
    match pool.noise.kind {
        crate::taxonomy::NoiseKind::None => text.push_str("Noise: the series is smooth and noise-free. "),
        crate::taxonomy::NoiseKind::Gaussian => {
            let _ = write!(text, "Noise: gaussian noise with sigma {}. ", fmt_num(pool.noise.sigma_or_halfwidth));
        }
        crate::taxonomy::NoiseKind::Uniform => {
            let _ = write!(text, "Noise: uniform noise with half-width {}. ", fmt_num(pool.noise.sigma_or_halfwidth));
        }
    }
    if pool.fluctuations.is_empty() {
        text.push_str("Local fluctuations: none.");
    } else {
        let parts: Vec<String> = pool.fluctuations.iter().map(fluct_sentence).collect();
        let _ = write!(text, "Local fluctuations: {}.", parts.join("; "));
    }
    AttributeDescription {
        text,
        facts: pool_facts(pool, 0),
    }
}
