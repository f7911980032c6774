//! Ground-truth attribute pools.
//!
//! A pool is sampled in a fixed order so that amplitudes can be budgeted:
//! seasonality, noise, trend segment boundaries, local fluctuations, and
//! finally the trend values, which are placed inside the corridor left over
//! by everything else. With the hint caps enforced by [`AttributeSubset::sanitize`]
//! every rendered value lands inside the metric's `value_range_hint`, which
//! also keeps nonneg metrics nonnegative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{split_seed, SeedStream};
use crate::taxonomy::{
    AttributeTaxonomy, Direction, Effect, FluctuationKind, MetricSpec, NoiseKind, SeasonKind, TrendKind,
};

pub const MIN_LENGTH: usize = 64;
pub const MAX_LENGTH: usize = 1024;
pub const MAX_FLUCTUATIONS: usize = 3;
pub const MAX_SEGMENTS: usize = 4;
pub const MIN_GROUP: usize = 2;
pub const MAX_GROUP: usize = 16;

/// Upper bounds on the amplitude hints, as fractions of the metric span.
/// Together they leave at least 40% of the span for the trend corridor.
pub const SEASON_AMPLITUDE_CAP: f64 = 0.08;
pub const NOISE_LEVEL_CAP: f64 = 0.008;
pub const FLUCTUATION_AMPLITUDE_CAP: f64 = 0.12;

/// Ratio between truncated-gaussian std and the nominal sigma when draws are
/// clipped at three sigma.
pub const TRUNCATED_GAUSSIAN_STD: f64 = 0.986_603_3;
pub const NOISE_CLIP_SIGMAS: f64 = 3.0;

/// Minimum gap between two fluctuation windows.
const WINDOW_GAP: usize = 3;
/// Samples kept free at both ends of the series for transient windows.
const EDGE_MARGIN: usize = 2;
/// Unmasked samples each trend segment must keep for verification.
const MIN_FREE_PER_SEGMENT: usize = 8;
/// Minimum clean sample pairs at the seasonal lag.
const MIN_SEASON_PAIRS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    /// Accelerating change: `u^2` profile.
    Convex,
    /// Decelerating change: `2u - u^2` profile.
    Concave,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendSegment {
    pub kind: TrendKind,
    pub start_idx: usize,
    pub end_idx: usize,
    pub start_value: f64,
    /// Value the segment reaches at `end_idx`, i.e. the next segment's start.
    pub end_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Curvature>,
}

impl TrendSegment {
    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean change per step across the segment.
    pub fn slope(&self) -> f64 {
        (self.end_value - self.start_value) / self.len() as f64
    }

    /// -1, 0 or +1.
    pub fn direction(&self) -> i8 {
        let d = self.end_value - self.start_value;
        if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    }

    /// Trend value at absolute index `t` (inside the segment).
    pub fn value_at(&self, t: usize) -> f64 {
        let u = (t - self.start_idx) as f64 / self.len() as f64;
        let g = match self.curvature {
            Some(Curvature::Convex) => u * u,
            Some(Curvature::Concave) => 2.0 * u - u * u,
            None => u,
        };
        self.start_value + (self.end_value - self.start_value) * g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityAttr {
    pub kind: SeasonKind,
    pub period: usize,
    /// Scale of the waveform, whose normalized shape spans `[-1, 1]`.
    pub amplitude: f64,
    pub phase: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseAttr {
    pub kind: NoiseKind,
    /// Gaussian sigma (draws clipped at 3 sigma) or uniform half-width.
    pub sigma_or_halfwidth: f64,
}

impl NoiseAttr {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma_or_halfwidth: 0.0,
        }
    }

    /// Standard deviation of the realized noise.
    pub fn std(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => self.sigma_or_halfwidth * TRUNCATED_GAUSSIAN_STD,
            NoiseKind::Uniform => self.sigma_or_halfwidth / 3f64.sqrt(),
        }
    }

    /// Largest absolute noise value that can be drawn.
    pub fn envelope(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => NOISE_CLIP_SIGMAS * self.sigma_or_halfwidth,
            NoiseKind::Uniform => self.sigma_or_halfwidth,
        }
    }

    /// "3 sigma" with sigma taken as the nominal noise level.
    pub fn three_sigma(&self) -> f64 {
        3.0 * self.std()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFluctuation {
    pub kind: FluctuationKind,
    pub position: usize,
    pub duration: usize,
    /// Signed offset from the noise-free baseline at the peak, in metric
    /// units. For seasonal-gain kinds: `(gain - 1) * season amplitude`.
    /// Zero for kinds that do not ground an amplitude.
    pub amplitude: f64,
    /// Kind-specific multiplier: seasonal gain, noise scale, period
    /// stretch, or phase shift in steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
}

impl LocalFluctuation {
    pub fn end(&self) -> usize {
        self.position + self.duration
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.position && t < self.end()
    }

    /// Offset of the characteristic point (largest excursion) from `position`.
    pub fn peak_offset(&self) -> usize {
        use FluctuationKind as K;
        let d = self.duration;
        match self.kind {
            K::TransientRise | K::TransientDip | K::ConvexShapedElevation | K::ConcaveShapedDepression => {
                (d - 1) / 2
            }
            K::RapidRiseSlowDecline => d / 5,
            K::SlowRiseRapidDecline => d - 1 - d / 5,
            K::OscillationBurst => 1,
            _ => 0,
        }
    }

    pub fn peak_index(&self) -> usize {
        self.position + self.peak_offset()
    }

    /// Normalized additive shape at window offset `k`; exactly 1 at
    /// [`peak_offset`](Self::peak_offset). Zero for non-additive kinds.
    pub fn shape(&self, k: usize) -> f64 {
        use FluctuationKind as K;
        let d = self.duration;
        match self.kind {
            K::UpwardSpike | K::DownwardSpike | K::UpwardLevelShift | K::DownwardLevelShift => 1.0,
            K::TransientRise | K::TransientDip => {
                let c = ((d - 1) / 2) as f64;
                1.0 - (k as f64 - c).abs() / (c + 1.0)
            }
            K::ConvexShapedElevation | K::ConcaveShapedDepression => {
                (std::f64::consts::PI * (k + 1) as f64 / (d + 1) as f64).sin()
            }
            K::RapidRiseSlowDecline | K::SlowRiseRapidDecline => {
                let peak = self.peak_offset();
                if k <= peak {
                    (k + 1) as f64 / (peak + 1) as f64
                } else {
                    1.0 - (k - peak) as f64 / (d - peak) as f64
                }
            }
            K::OscillationBurst => (std::f64::consts::FRAC_PI_2 * k as f64).sin(),
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributePool {
    pub id: String,
    pub metric: MetricSpec,
    pub length: usize,
    pub trend: Vec<TrendSegment>,
    #[serde(default)]
    pub seasonality: Option<SeasonalityAttr>,
    pub noise: NoiseAttr,
    pub fluctuations: Vec<LocalFluctuation>,
    pub generation_seed: u64,
}

impl AttributePool {
    pub fn is_noise_free(&self) -> bool {
        self.noise.kind == NoiseKind::None
    }

    pub fn segment_at(&self, t: usize) -> Option<&TrendSegment> {
        self.trend.iter().find(|s| t >= s.start_idx && t < s.end_idx)
    }

    pub fn trend_directions(&self) -> Vec<i8> {
        self.trend.iter().map(TrendSegment::direction).collect()
    }

    /// Checks the structural invariants that do not need a rendered array.
    pub fn validate(&self) -> Result<()> {
        let n = self.length;
        let fail = |m: String| Err(Error::invalid(format!("pool {}: {m}", self.id)));
        if !(MIN_LENGTH..=MAX_LENGTH).contains(&n) {
            return fail(format!("length {n} outside [{MIN_LENGTH}, {MAX_LENGTH}]"));
        }
        if self.trend.is_empty() || self.trend.len() > MAX_SEGMENTS {
            return fail(format!("{} trend segments", self.trend.len()));
        }
        let mut cursor = 0;
        for s in &self.trend {
            if s.start_idx != cursor || s.end_idx <= s.start_idx {
                return fail(format!("trend segments do not tile at index {cursor}"));
            }
            cursor = s.end_idx;
            if !(s.start_value.is_finite() && s.end_value.is_finite()) {
                return fail("non-finite trend value".into());
            }
        }
        if cursor != n {
            return fail(format!("trend covers [0, {cursor}) instead of [0, {n})"));
        }
        if let Some(season) = &self.seasonality {
            if season.period < 4 || season.period > n / 2 {
                return fail(format!("period {} outside [4, {}]", season.period, n / 2));
            }
            if season.amplitude < 0.0 || season.phase >= season.period {
                return fail("bad seasonal amplitude or phase".into());
            }
        }
        match self.noise.kind {
            NoiseKind::None if self.noise.sigma_or_halfwidth != 0.0 => {
                return fail("noise kind none with nonzero level".into())
            }
            NoiseKind::Gaussian | NoiseKind::Uniform if self.noise.sigma_or_halfwidth <= 0.0 => {
                return fail("noise level must be positive".into())
            }
            _ => {}
        }
        if self.fluctuations.len() > MAX_FLUCTUATIONS {
            return fail(format!("{} fluctuations", self.fluctuations.len()));
        }
        let mut windows: Vec<(usize, usize)> = Vec::new();
        for f in &self.fluctuations {
            if f.duration == 0 || f.end() > n {
                return fail(format!("{} window [{}, {}) out of range", f.kind, f.position, f.end()));
            }
            let traits = f.kind.traits();
            if traits.needs_season && self.seasonality.is_none() {
                return fail(format!("{} without seasonality", f.kind));
            }
            if traits.needs_noise && self.is_noise_free() {
                return fail(format!("{} without noise", f.kind));
            }
            if windows.iter().any(|&(a, b)| f.position < b && a < f.end()) {
                return fail(format!("{} overlaps another fluctuation", f.kind));
            }
            windows.push((f.position, f.end()));
        }
        Ok(())
    }
}

/// Per-subset constraints on sampled values. Amplitude bounds are fractions
/// of the metric span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintHints {
    pub season_probability: f64,
    pub season_amplitude: [f64; 2],
    pub noise_level: [f64; 2],
    pub fluctuation_amplitude: [f64; 2],
    /// Smallest total change of a non-steady trend segment.
    pub min_trend_change: f64,
    pub max_fluctuations: usize,
}

impl Default for ConstraintHints {
    fn default() -> Self {
        Self {
            season_probability: 0.6,
            season_amplitude: [0.02, SEASON_AMPLITUDE_CAP],
            noise_level: [0.001, NOISE_LEVEL_CAP],
            fluctuation_amplitude: [0.06, FLUCTUATION_AMPLITUDE_CAP],
            min_trend_change: 0.08,
            max_fluctuations: MAX_FLUCTUATIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSubset {
    pub metric: MetricSpec,
    pub trends: Vec<TrendKind>,
    pub seasons: Vec<SeasonKind>,
    pub noises: Vec<NoiseKind>,
    pub fluctuations: Vec<FluctuationKind>,
    pub hints: ConstraintHints,
}

impl AttributeSubset {
    /// Every kind allowed, default hints.
    pub fn full(metric: MetricSpec) -> Self {
        Self {
            metric,
            trends: TrendKind::ALL.to_vec(),
            seasons: SeasonKind::ALL.to_vec(),
            noises: NoiseKind::ALL.to_vec(),
            fluctuations: FluctuationKind::ALL.to_vec(),
            hints: ConstraintHints::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.metric.validate()?;
        if self.trends.is_empty() {
            return Err(Error::invalid("subset allows no trend kind"));
        }
        if self.noises.is_empty() {
            return Err(Error::invalid("subset allows no noise kind"));
        }
        let h = &self.hints;
        if !(0.0..=1.0).contains(&h.season_probability) {
            return Err(Error::invalid("season_probability outside [0, 1]"));
        }
        for (name, [lo, hi]) in [
            ("season_amplitude", h.season_amplitude),
            ("noise_level", h.noise_level),
            ("fluctuation_amplitude", h.fluctuation_amplitude),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid(format!("hint {name} [{lo}, {hi}] is not a positive interval")));
            }
        }
        if h.max_fluctuations > MAX_FLUCTUATIONS {
            return Err(Error::invalid("max_fluctuations above 3"));
        }
        if !(h.min_trend_change > 0.0 && h.min_trend_change <= 0.1) {
            return Err(Error::invalid("min_trend_change outside (0, 0.1]"));
        }
        Ok(())
    }

    /// Clamps hints to the hard caps and removes duplicate kinds. Applied to
    /// every subset regardless of which selector produced it.
    pub fn sanitize(mut self) -> Self {
        fn clamp(range: [f64; 2], cap: f64) -> [f64; 2] {
            let hi = range[1].min(cap);
            let lo = range[0].min(hi);
            [lo, hi]
        }
        self.hints.season_amplitude = clamp(self.hints.season_amplitude, SEASON_AMPLITUDE_CAP);
        self.hints.noise_level = clamp(self.hints.noise_level, NOISE_LEVEL_CAP);
        self.hints.fluctuation_amplitude = clamp(self.hints.fluctuation_amplitude, FLUCTUATION_AMPLITUDE_CAP);
        self.hints.max_fluctuations = self.hints.max_fluctuations.min(MAX_FLUCTUATIONS);
        self.hints.season_probability = self.hints.season_probability.clamp(0.0, 1.0);
        self.hints.min_trend_change = self.hints.min_trend_change.clamp(0.01, 0.1);
        dedup(&mut self.trends);
        dedup(&mut self.seasons);
        dedup(&mut self.noises);
        dedup(&mut self.fluctuations);
        self
    }
}

fn dedup<T: Ord + Copy>(v: &mut Vec<T>) {
    let mut seen = std::collections::BTreeSet::new();
    v.retain(|k| seen.insert(*k));
}

/// Chooses which attribute kinds make physical sense for a metric.
pub trait SubsetSelector {
    fn propose(&self, metric: &MetricSpec, taxonomy: &AttributeTaxonomy) -> AttributeSubset;
}

/// Keyword-table selector that runs offline.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleBasedSelector;

impl SubsetSelector for RuleBasedSelector {
    fn propose(&self, metric: &MetricSpec, taxonomy: &AttributeTaxonomy) -> AttributeSubset {
        use FluctuationKind as F;
        use SeasonKind as S;
        let name = metric.name.as_str();
        let has = |keys: &[&str]| keys.iter().any(|k| name.contains(k));
        let mut subset = AttributeSubset {
            metric: metric.clone(),
            trends: taxonomy.trend_types.clone(),
            seasons: taxonomy.season_types.clone(),
            noises: taxonomy.noise_types.clone(),
            fluctuations: taxonomy.fluctuation_types.clone(),
            hints: ConstraintHints::default(),
        };
        subset.hints.season_probability = match metric.domain_tag.as_str() {
            "weather" => 0.85,
            "traffic" => 0.8,
            "finance" => 0.3,
            "iot" => 0.5,
            _ => 0.6,
        };
        if has(&["temperature", "solar", "light", "sunshine", "uv_index", "ridership", "heart_rate"]) {
            subset.hints.season_probability = 0.9;
            subset.seasons = vec![S::Sine, S::Triangle, S::HarmonicMixture, S::AmplitudeModulatedSine];
        }
        if has(&["count", "transactions", "requests", "qps", "admissions", "pickups", "trips", "dispatches"]) {
            subset.seasons = vec![S::Sine, S::Square, S::PulseTrain, S::HarmonicMixture, S::Sawtooth];
            subset.hints.fluctuation_amplitude = [0.08, FLUCTUATION_AMPLITUDE_CAP];
        }
        if has(&["price", "yield", "fx_rate", "market_cap", "portfolio", "balance"]) {
            subset.noises = vec![NoiseKind::Gaussian, NoiseKind::Uniform];
            subset.fluctuations.retain(|k| {
                !matches!(k, F::OscillationBurst | F::PeriodLengthening | F::Gap)
            });
        }
        if has(&["latency", "_time", "wait", "queue"]) {
            subset.seasons.retain(|k| *k != S::Sawtooth);
        }
        if has(&["utilization", "usage", "occupancy", "level"]) {
            subset.hints.noise_level = [0.001, 0.006];
        }
        subset
    }
}

/// Result of [`select_subset`]: the sanitized subset and, when the
/// selector's proposal was rejected, the reason.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetSelection {
    pub subset: AttributeSubset,
    pub warning: Option<String>,
}

pub fn select_subset(metric: &MetricSpec, selector: &dyn SubsetSelector) -> Result<SubsetSelection> {
    metric.validate()?;
    let taxonomy = crate::taxonomy::registry();
    let mut proposal = selector.propose(metric, &taxonomy);
    proposal.metric = metric.clone();
    let proposal = proposal.sanitize();
    match proposal.validate() {
        Ok(()) => Ok(SubsetSelection {
            subset: proposal,
            warning: None,
        }),
        Err(e) => {
            let warning = format!("selector proposal for {} rejected ({e}); using default subset", metric.name);
            log::warn!("{warning}");
            Ok(SubsetSelection {
                subset: AttributeSubset::full(metric.clone()),
                warning: Some(warning),
            })
        }
    }
}

/// Trend shape forced onto correlation-group members.
#[derive(Clone, Debug, PartialEq)]
struct TrendTemplate {
    bounds: Vec<(usize, usize)>,
    kinds: Vec<TrendKind>,
    directions: Vec<i8>,
    curvature: Vec<Option<Curvature>>,
}

#[derive(Clone, Debug, Default)]
struct PoolConstraints {
    trend: Option<TrendTemplate>,
    forced: Option<(FluctuationKind, usize, usize)>,
}

pub fn sample_pool(subset: &AttributeSubset, length: usize, seed: u64) -> Result<AttributePool> {
    sample_constrained(subset, length, seed, format!("p{seed:016x}"), &PoolConstraints::default())
}

fn check_length(length: usize) -> Result<()> {
    if !(MIN_LENGTH..=MAX_LENGTH).contains(&length) {
        return Err(Error::arg(format!("length {length} outside [{MIN_LENGTH}, {MAX_LENGTH}]")));
    }
    Ok(())
}

fn sample_constrained(
    subset: &AttributeSubset,
    n: usize,
    seed: u64,
    id: String,
    constraints: &PoolConstraints,
) -> Result<AttributePool> {
    check_length(n)?;
    subset.validate()?;
    let metric = subset.metric.clone();
    let span = metric.span();
    let hints = &subset.hints;
    let mut rng = SeedStream::derived(seed, 0);

    // Seasonality.
    let seasonality = if !subset.seasons.is_empty() && rng.chance(hints.season_probability) {
        let kind = *rng.pick(&subset.seasons);
        let max_period = (n / 4).max(8);
        let period = rng.log_uniform(8.0, max_period as f64 + 1.0).floor() as usize;
        let period = period.clamp(8, max_period);
        let [lo, hi] = hints.season_amplitude;
        Some(SeasonalityAttr {
            kind,
            period,
            amplitude: rng.log_uniform(lo, hi) * span,
            phase: rng.below(period),
        })
    } else {
        None
    };
    let period = seasonality.as_ref().map_or(0, |s| s.period);

    // Noise.
    let noise_kind = *rng.pick(&subset.noises);
    let noise = match noise_kind {
        NoiseKind::None => NoiseAttr::none(),
        kind => {
            let [lo, hi] = hints.noise_level;
            let std = rng.log_uniform(lo, hi) * span;
            let level = match kind {
                NoiseKind::Uniform => std * 3f64.sqrt(),
                _ => std,
            };
            NoiseAttr {
                kind,
                sigma_or_halfwidth: level,
            }
        }
    };

    // Segment boundaries.
    let bounds = match &constraints.trend {
        Some(t) => t.bounds.clone(),
        None => sample_bounds(&mut rng, n),
    };

    // Local fluctuations.
    let mut fluctuations: Vec<LocalFluctuation> = Vec::new();
    if let Some((kind, position, duration)) = constraints.forced {
        let f = fill_fluctuation(&mut rng, kind, position, duration, hints, span, &seasonality, &noise);
        fluctuations.push(f);
    }
    let wanted = rng.int_in(0, hints.max_fluctuations);
    let applicable: Vec<FluctuationKind> = subset
        .fluctuations
        .iter()
        .copied()
        .filter(|k| {
            let t = k.traits();
            (!t.needs_season || seasonality.is_some()) && (!t.needs_noise || !noise.kind.eq(&NoiseKind::None))
        })
        .collect();
    // A failed placement consumes its slot.
    for _ in fluctuations.len()..wanted {
        if applicable.is_empty() {
            break;
        }
        let kind = *rng.pick(&applicable);
        if let Some((position, duration)) = place_fluctuation(&mut rng, kind, n, period, &bounds, &fluctuations) {
            let f = fill_fluctuation(&mut rng, kind, position, duration, hints, span, &seasonality, &noise);
            fluctuations.push(f);
        }
    }
    fluctuations.sort_by_key(|f| f.position);

    // Envelope of everything except the trend.
    let season_gain = fluctuations
        .iter()
        .filter(|f| f.kind.traits().effect == Effect::SeasonGain)
        .filter_map(|f| f.factor)
        .fold(1.0_f64, f64::max);
    let noise_scale = fluctuations
        .iter()
        .filter(|f| f.kind.traits().effect == Effect::NoiseScale)
        .filter_map(|f| f.factor)
        .fold(1.0_f64, f64::max);
    let season_env = seasonality.as_ref().map_or(0.0, |s| s.amplitude * season_gain);
    let noise_env = noise.envelope() * noise_scale;
    let mut up = 0.0_f64;
    let mut down = 0.0_f64;
    for f in fluctuations.iter().filter(|f| f.kind.traits().effect == Effect::Additive) {
        match f.kind.traits().direction {
            Direction::Up => up = up.max(f.amplitude),
            Direction::Down => down = down.max(-f.amplitude),
            Direction::Neutral => {
                up = up.max(f.amplitude.abs());
                down = down.max(f.amplitude.abs());
            }
        }
    }
    let corridor_lo = metric.low() + season_env + noise_env + down;
    let corridor_hi = metric.high() - season_env - noise_env - up;
    let corridor = corridor_hi - corridor_lo;
    debug_assert!(corridor > 0.0, "corridor collapsed for {}", metric.name);

    // Trend values.
    let (kinds, directions, curvature) = match &constraints.trend {
        Some(t) => (t.kinds.clone(), t.directions.clone(), t.curvature.clone()),
        None => sample_trend_kinds(&mut rng, &subset.trends, bounds.len()),
    };
    let moving = directions.iter().filter(|d| **d != 0).count().max(1);
    let max_change = 0.95 * corridor / moving as f64;
    let mut min_change = (hints.min_trend_change * span).max(10.0 * noise.std());
    if min_change > max_change {
        min_change = 0.5 * max_change;
    }
    let mut offsets = vec![0.0];
    for d in &directions {
        let change = if *d == 0 {
            0.0
        } else {
            f64::from(*d) * rng.uniform(min_change, max_change)
        };
        offsets.push(offsets.last().unwrap() + change);
    }
    let path_lo = offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let path_hi = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = rng.uniform(corridor_lo - path_lo, (corridor_hi - path_hi).max(corridor_lo - path_lo));
    let trend = bounds
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| TrendSegment {
            kind: kinds[i],
            start_idx: a,
            end_idx: b,
            start_value: start + offsets[i],
            end_value: start + offsets[i + 1],
            curvature: curvature[i],
        })
        .collect();

    let pool = AttributePool {
        id,
        metric,
        length: n,
        trend,
        seasonality,
        noise,
        fluctuations,
        generation_seed: split_seed(seed, 1),
    };
    pool.validate()?;
    Ok(pool)
}

/// Segment boundaries by stick-breaking with exponential weights (a
/// Dirichlet(1) split of the slack above the minimum segment length).
fn sample_bounds(rng: &mut SeedStream, n: usize) -> Vec<(usize, usize)> {
    let min_len = 16.max(n / 10);
    let max_k = (n / min_len).clamp(1, MAX_SEGMENTS);
    let k = rng.int_in(1, max_k);
    let weights: Vec<f64> = (0..k).map(|_| -(1.0 - rng.unit()).ln()).collect();
    let total: f64 = weights.iter().sum();
    let slack = n - k * min_len;
    let mut bounds = Vec::with_capacity(k);
    let mut cursor = 0;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        let end = if i + 1 == k {
            n
        } else {
            (i + 1) * min_len + ((acc / total) * slack as f64).floor() as usize
        };
        bounds.push((cursor, end));
        cursor = end;
    }
    bounds
}

type TrendPlan = (Vec<TrendKind>, Vec<i8>, Vec<Option<Curvature>>);

fn sample_trend_kinds(rng: &mut SeedStream, allowed: &[TrendKind], k: usize) -> TrendPlan {
    let mut kinds: Vec<TrendKind> = Vec::with_capacity(k);
    for _ in 0..k {
        let options: Vec<TrendKind> = allowed.iter().copied().filter(|t| kinds.last() != Some(t)).collect();
        let options = if options.is_empty() { allowed.to_vec() } else { options };
        kinds.push(*rng.pick(&options));
    }
    let mut directions = Vec::with_capacity(k);
    let mut curvature = Vec::with_capacity(k);
    for kind in &kinds {
        let (d, c) = match kind {
            TrendKind::Steady => (0, None),
            TrendKind::LinearIncrease => (1, None),
            TrendKind::LinearDecrease => (-1, None),
            TrendKind::Curved => {
                let d = if rng.chance(0.5) { 1 } else { -1 };
                let c = if rng.chance(0.5) { Curvature::Convex } else { Curvature::Concave };
                (d, Some(c))
            }
        };
        directions.push(d);
        curvature.push(c);
    }
    (kinds, directions, curvature)
}

/// Duration range `[lo, hi]` of a transient kind, given series length and period.
fn duration_range(kind: FluctuationKind, n: usize, period: usize) -> (usize, usize) {
    use FluctuationKind as K;
    match kind {
        K::UpwardSpike | K::DownwardSpike => (1, 1),
        K::TransientRise | K::TransientDip => (3, 9),
        K::ConvexShapedElevation | K::ConcaveShapedDepression => (9, 31.min(n / 4).max(9)),
        K::RapidRiseSlowDecline | K::SlowRiseRapidDecline => (8, 32.min(n / 4).max(8)),
        K::OscillationBurst => (8, 24),
        K::AmplifiedSeasonalAmplitude | K::DiminishedSeasonalAmplitude => (period, (2 * period).min(n / 3).max(period)),
        K::IncreasedNoiseSegment | K::DecreasedNoiseSegment => (16, (n / 4).max(16)),
        K::TemporaryFlatline | K::Gap => (4, (n / 8).max(4)),
        // Persistent kinds run to the end of the series.
        K::UpwardLevelShift | K::DownwardLevelShift | K::PeriodLengthening | K::PhaseShift => (0, 0),
    }
}

fn odd(d: usize) -> usize {
    if d.is_multiple_of(2) {
        d + 1
    } else {
        d
    }
}

/// Whether the kind hides samples from the trend fit during verification.
pub(crate) fn masks_trend_fit(kind: FluctuationKind) -> bool {
    matches!(kind.traits().effect, Effect::Additive | Effect::Pinned) && !kind.traits().persistent
}

/// Picks a window for a new fluctuation that keeps the pool verifiable:
/// no overlap, a small gap to other windows, enough unmasked samples per
/// trend segment, and level shifts away from segment boundaries.
fn place_fluctuation(
    rng: &mut SeedStream,
    kind: FluctuationKind,
    n: usize,
    period: usize,
    bounds: &[(usize, usize)],
    existing: &[LocalFluctuation],
) -> Option<(usize, usize)> {
    let traits = kind.traits();
    let candidates: Vec<(usize, usize)> = if traits.persistent {
        if existing.iter().any(|f| f.kind.traits().persistent) {
            return None;
        }
        let min_tail = if traits.effect == Effect::SeasonTiming { period.max(8) } else { 8 };
        let lo = (n / 2).max(2 * period + WINDOW_GAP);
        let hi = n.saturating_sub(min_tail);
        (lo..=hi)
            .filter(|&p| {
                traits.effect != Effect::Additive
                    || bounds.iter().any(|&(a, b)| p >= a + 4 && p + 4 <= b)
            })
            .map(|p| (p, n - p))
            .collect()
    } else {
        let (dlo, dhi) = duration_range(kind, n, period);
        let mut d = rng.int_in(dlo, dhi);
        if matches!(
            kind,
            FluctuationKind::TransientRise
                | FluctuationKind::TransientDip
                | FluctuationKind::ConvexShapedElevation
                | FluctuationKind::ConcaveShapedDepression
        ) {
            d = odd(d).min(odd(dhi));
        }
        if d + 2 * EDGE_MARGIN > n {
            return None;
        }
        (EDGE_MARGIN..=n - d - EDGE_MARGIN).map(|p| (p, d)).collect()
    };
    let free: Vec<(usize, usize)> = candidates
        .into_iter()
        .filter(|&(p, d)| {
            existing
                .iter()
                .all(|f| p + d + WINDOW_GAP <= f.position || f.end() + WINDOW_GAP <= p)
        })
        .filter(|&(p, d)| !masks_trend_fit(kind) || keeps_segments_fittable(bounds, existing, (p, d)))
        .filter(|&(p, d)| period == 0 || !masks_season(kind) || keeps_season_observable(n, period, existing, (p, d)))
        .collect();
    if free.is_empty() {
        return None;
    }
    Some(*rng.pick(&free))
}

/// Whether the kind can hide samples from the period estimate. Gain
/// windows are rescaled only when the gain is moderate, so shrinking
/// windows count as masking.
fn masks_season(kind: FluctuationKind) -> bool {
    let traits = kind.traits();
    !(traits.effect == Effect::Additive && traits.persistent) && kind != FluctuationKind::AmplifiedSeasonalAmplitude
}

/// Enough sample pairs one period (plus one step) apart must stay clean
/// for the autocorrelation peak to be found.
fn keeps_season_observable(n: usize, period: usize, existing: &[LocalFluctuation], extra: (usize, usize)) -> bool {
    let mut clean = vec![true; n];
    let windows = existing
        .iter()
        .filter(|f| masks_season(f.kind))
        .map(|f| (f.position, f.end()))
        .chain(std::iter::once((extra.0, extra.0 + extra.1)));
    for (p, e) in windows {
        clean[p.min(n)..e.min(n)].fill(false);
    }
    let lag = period + 1;
    let pairs = (0..n.saturating_sub(lag)).filter(|&t| clean[t] && clean[t + lag]).count();
    pairs >= MIN_SEASON_PAIRS.max(2 * period)
}

fn keeps_segments_fittable(bounds: &[(usize, usize)], existing: &[LocalFluctuation], extra: (usize, usize)) -> bool {
    let windows: Vec<(usize, usize)> = existing
        .iter()
        .filter(|f| masks_trend_fit(f.kind))
        .map(|f| (f.position, f.end()))
        .chain(std::iter::once((extra.0, extra.0 + extra.1)))
        .collect();
    bounds.iter().all(|&(a, b)| {
        let masked: usize = windows
            .iter()
            .map(|&(p, e)| e.min(b).saturating_sub(p.max(a)))
            .sum();
        b - a - masked >= MIN_FREE_PER_SEGMENT
    })
}

#[allow(clippy::too_many_arguments)]
fn fill_fluctuation(
    rng: &mut SeedStream,
    kind: FluctuationKind,
    position: usize,
    duration: usize,
    hints: &ConstraintHints,
    span: f64,
    seasonality: &Option<SeasonalityAttr>,
    noise: &NoiseAttr,
) -> LocalFluctuation {
    use FluctuationKind as K;
    let traits = kind.traits();
    let [lo, hi] = hints.fluctuation_amplitude;
    let season_amp = seasonality.as_ref().map_or(0.0, |s| s.amplitude);
    let period = seasonality.as_ref().map_or(0, |s| s.period);
    let (amplitude, factor) = match traits.effect {
        Effect::Additive => {
            let floor = 8.0 * noise.std();
            let magnitude = rng.log_uniform(lo, hi) * span;
            let magnitude = magnitude.max(floor);
            let signed = match traits.direction {
                Direction::Down => -magnitude,
                _ => magnitude,
            };
            (signed, None)
        }
        Effect::SeasonGain => {
            let gain = if kind == K::AmplifiedSeasonalAmplitude {
                rng.uniform(1.5, 2.5)
            } else {
                rng.uniform(0.2, 0.6)
            };
            ((gain - 1.0) * season_amp, Some(gain))
        }
        Effect::NoiseScale => {
            let scale = if kind == K::IncreasedNoiseSegment {
                rng.uniform(2.5, 4.0)
            } else {
                rng.uniform(0.1, 0.3)
            };
            (0.0, Some(scale))
        }
        Effect::Pinned => (0.0, None),
        Effect::SeasonTiming => {
            let factor = if kind == K::PeriodLengthening {
                rng.uniform(1.5, 2.0)
            } else {
                let lo = (period / 4).max(1);
                rng.int_in(lo, (3 * period / 4).max(lo)) as f64
            };
            (0.0, Some(factor))
        }
    };
    LocalFluctuation {
        kind,
        position,
        duration,
        amplitude,
        factor,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    /// Members share the sequence of trend directions.
    Shape,
    /// Members share a fluctuation kind at a common position.
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RelationFact {
    SharedTrend {
        directions: Vec<i8>,
        bounds: Vec<[usize; 2]>,
        /// Per member, the summed absolute trend change in metric units.
        scales: Vec<f64>,
    },
    SharedFluctuation {
        kind: FluctuationKind,
        position: usize,
        duration: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPool {
    pub group_id: String,
    pub kind: CorrelationKind,
    pub members: Vec<String>,
    pub relation: RelationFact,
}

/// Fluctuation kinds eligible as the shared event of a local group.
pub const SHARED_LOCAL_KINDS: &[FluctuationKind] = &[
    FluctuationKind::UpwardSpike,
    FluctuationKind::DownwardSpike,
    FluctuationKind::TransientRise,
    FluctuationKind::TransientDip,
    FluctuationKind::ConvexShapedElevation,
    FluctuationKind::ConcaveShapedDepression,
    FluctuationKind::RapidRiseSlowDecline,
    FluctuationKind::SlowRiseRapidDecline,
    FluctuationKind::OscillationBurst,
];

/// Builds a correlated group with one member per subset.
pub fn build_correlation_group(
    kind: CorrelationKind,
    subsets: &[AttributeSubset],
    length: usize,
    seed: u64,
) -> Result<(CorrelationPool, Vec<AttributePool>)> {
    let size = subsets.len();
    if !(MIN_GROUP..=MAX_GROUP).contains(&size) {
        return Err(Error::arg(format!("group size {size} outside [{MIN_GROUP}, {MAX_GROUP}]")));
    }
    check_length(length)?;
    let group_id = format!("g{seed:016x}");
    let member_id = |i: usize| format!("{group_id}-m{i}");
    let mut rng = SeedStream::derived(seed, 0);
    let mut pools = Vec::with_capacity(size);
    let relation = match kind {
        CorrelationKind::Shape => {
            let first = sample_constrained(&subsets[0], length, split_seed(seed, 1), member_id(0), &PoolConstraints::default())?;
            let template = TrendTemplate {
                bounds: first.trend.iter().map(|s| (s.start_idx, s.end_idx)).collect(),
                kinds: first.trend.iter().map(|s| s.kind).collect(),
                directions: first.trend_directions(),
                curvature: first.trend.iter().map(|s| s.curvature).collect(),
            };
            pools.push(first);
            let constraints = PoolConstraints {
                trend: Some(template.clone()),
                forced: None,
            };
            for (i, subset) in subsets.iter().enumerate().skip(1) {
                pools.push(sample_constrained(subset, length, split_seed(seed, 1 + i as u64), member_id(i), &constraints)?);
            }
            RelationFact::SharedTrend {
                directions: template.directions,
                bounds: template.bounds.iter().map(|&(a, b)| [a, b]).collect(),
                scales: pools.iter().map(trend_scale).collect(),
            }
        }
        CorrelationKind::Local => {
            let common: Vec<FluctuationKind> = SHARED_LOCAL_KINDS
                .iter()
                .copied()
                .filter(|k| subsets.iter().all(|s| s.fluctuations.contains(k)))
                .collect();
            let shared = if common.is_empty() {
                FluctuationKind::UpwardSpike
            } else {
                *rng.pick(&common)
            };
            let (dlo, dhi) = duration_range(shared, length, 0);
            let mut duration = rng.int_in(dlo, dhi);
            if matches!(
                shared,
                FluctuationKind::TransientRise
                    | FluctuationKind::TransientDip
                    | FluctuationKind::ConvexShapedElevation
                    | FluctuationKind::ConcaveShapedDepression
            ) {
                duration = odd(duration).min(odd(dhi));
            }
            let position = rng.int_in(EDGE_MARGIN, length - duration - EDGE_MARGIN);
            let constraints = PoolConstraints {
                trend: None,
                forced: Some((shared, position, duration)),
            };
            for (i, subset) in subsets.iter().enumerate() {
                pools.push(sample_member_with_forced(subset, length, split_seed(seed, 1 + i as u64), member_id(i), &constraints)?);
            }
            RelationFact::SharedFluctuation {
                kind: shared,
                position,
                duration,
            }
        }
    };
    let corr = CorrelationPool {
        group_id,
        kind,
        members: pools.iter().map(|p| p.id.clone()).collect(),
        relation,
    };
    Ok((corr, pools))
}

/// Local-group members must keep every trend segment fittable around the
/// forced window; redraw the member seed until that holds.
fn sample_member_with_forced(
    subset: &AttributeSubset,
    length: usize,
    seed: u64,
    id: String,
    constraints: &PoolConstraints,
) -> Result<AttributePool> {
    let mut last = None;
    for attempt in 0..32 {
        let pool = sample_constrained(subset, length, split_seed(seed, 1000 + attempt), id.clone(), constraints)?;
        let bounds: Vec<(usize, usize)> = pool.trend.iter().map(|s| (s.start_idx, s.end_idx)).collect();
        let masked: Vec<LocalFluctuation> = pool.fluctuations.clone();
        let ok = bounds.iter().all(|&(a, b)| {
            let hidden: usize = masked
                .iter()
                .filter(|f| masks_trend_fit(f.kind))
                .map(|f| f.end().min(b).saturating_sub(f.position.max(a)))
                .sum();
            b - a - hidden >= MIN_FREE_PER_SEGMENT
        });
        if ok {
            return Ok(pool);
        }
        last = Some(pool);
    }
    Ok(last.expect("at least one attempt"))
}

pub fn trend_scale(pool: &AttributePool) -> f64 {
    pool.trend.iter().map(|s| (s.end_value - s.start_value).abs()).sum()
}

/// Re-checks every relation fact of `corr` against the member pools.
/// Returns the list of violations (empty when sound).
pub fn verify_correlation(corr: &CorrelationPool, pools: &[AttributePool]) -> Vec<String> {
    let mut problems = Vec::new();
    if corr.members.len() < MIN_GROUP {
        problems.push(format!("group {} has {} member(s)", corr.group_id, corr.members.len()));
    }
    let members: Vec<&AttributePool> = corr
        .members
        .iter()
        .filter_map(|id| {
            let found = pools.iter().find(|p| &p.id == id);
            if found.is_none() {
                problems.push(format!("member {id} not found"));
            }
            found
        })
        .collect();
    match &corr.relation {
        RelationFact::SharedTrend {
            directions,
            bounds,
            scales,
        } => {
            if scales.len() != members.len() {
                problems.push("scale count differs from member count".into());
            }
            for (i, pool) in members.iter().enumerate() {
                if &pool.trend_directions() != directions {
                    problems.push(format!("{}: trend directions {:?} != {:?}", pool.id, pool.trend_directions(), directions));
                }
                let own: Vec<[usize; 2]> = pool.trend.iter().map(|s| [s.start_idx, s.end_idx]).collect();
                if &own != bounds {
                    problems.push(format!("{}: segment bounds differ", pool.id));
                }
                if let Some(expected) = scales.get(i) {
                    let actual = trend_scale(pool);
                    if (actual - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                        problems.push(format!("{}: trend scale {actual} != {expected}", pool.id));
                    }
                }
            }
        }
        RelationFact::SharedFluctuation {
            kind,
            position,
            duration,
        } => {
            for pool in &members {
                let hit = pool
                    .fluctuations
                    .iter()
                    .any(|f| f.kind == *kind && f.position == *position && f.duration == *duration);
                if !hit {
                    problems.push(format!("{}: no {kind} at {position}", pool.id));
                }
            }
        }
    }
    problems
}
