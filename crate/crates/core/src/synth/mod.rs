//! Rendering pools into value arrays, value-preserved normalization, and
//! the consistency verifier.

mod verify;

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::genpool::{AttributePool, LocalFluctuation, SeasonalityAttr, NOISE_CLIP_SIGMAS};
use crate::rng::SeedStream;
use crate::taxonomy::{Effect, FluctuationKind, NoiseKind, SeasonKind};

pub use verify::{verify, verify_with, Check, ConsistencyReport, Tolerances};

/// Relative depth of the envelope of an amplitude-modulated sine.
pub const AM_DEPTH: f64 = 0.4;
/// Envelope period of an amplitude-modulated sine, in carrier periods.
pub const AM_CYCLES: f64 = 3.0;
/// Fraction of each period a pulse-train spends high.
pub const PULSE_DUTY: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub metric: String,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the maximum; ties resolve to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Index of the minimum; ties resolve to the smallest index.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Writes `t,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,value")?;
        for (t, v) in self.values.iter().enumerate() {
            writeln!(out, "{t},{v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub values: Vec<f64>,
    pub value_scaling: f64,
    pub value_offset: f64,
}

/// Min-max scaling to `[0, 1]`. A constant series maps to zeros with
/// scaling 1 and offset equal to the constant.
pub fn normalize(series: &TimeSeries) -> NormalizedSeries {
    if series.is_empty() {
        return NormalizedSeries {
            values: Vec::new(),
            value_scaling: 1.0,
            value_offset: 0.0,
        };
    }
    let lo = series.min();
    let hi = series.max();
    let scaling = if hi > lo { hi - lo } else { 1.0 };
    let values = series
        .values
        .iter()
        .map(|v| ((v - lo) / scaling).clamp(0.0, 1.0))
        .collect();
    NormalizedSeries {
        values,
        value_scaling: scaling,
        value_offset: lo,
    }
}

pub fn denormalize(n: &NormalizedSeries, metric: &str) -> TimeSeries {
    TimeSeries {
        metric: metric.to_string(),
        values: n.values.iter().map(|v| v * n.value_scaling + n.value_offset).collect(),
    }
}

/// Waveform with values in `[-1, 1]`, evaluated at `cycles` carrier
/// periods since the origin. `frac` must equal `cycles.fract()`; integer
/// callers pass it separately so periodic samples stay bit-identical.
pub fn waveform(kind: SeasonKind, cycles: f64, frac: f64) -> f64 {
    match kind {
        SeasonKind::Sine => (TAU * frac).sin(),
        SeasonKind::Square => {
            if frac < 0.5 {
                1.0
            } else {
                -1.0
            }
        }
        SeasonKind::Triangle => 1.0 - 4.0 * (frac - 0.5).abs(),
        SeasonKind::Sawtooth => 2.0 * frac - 1.0,
        SeasonKind::HarmonicMixture => {
            let (lo, hi) = harmonic_extrema();
            (2.0 * raw_harmonic(frac) - (hi + lo)) / (hi - lo)
        }
        SeasonKind::AmplitudeModulatedSine => {
            let envelope = (1.0 + AM_DEPTH * (TAU * cycles / AM_CYCLES).sin()) / (1.0 + AM_DEPTH);
            (TAU * frac).sin() * envelope
        }
        SeasonKind::PulseTrain => {
            if frac < PULSE_DUTY {
                1.0
            } else {
                -1.0
            }
        }
    }
}

fn raw_harmonic(u: f64) -> f64 {
    (TAU * u).sin() + 0.5 * (2.0 * TAU * u + 1.0).sin() + 0.25 * (3.0 * TAU * u + 2.0).sin()
}

fn harmonic_extrema() -> (f64, f64) {
    static EXTREMA: OnceLock<(f64, f64)> = OnceLock::new();
    *EXTREMA.get_or_init(|| {
        const GRID: usize = 1 << 16;
        (0..GRID).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = raw_harmonic(i as f64 / GRID as f64);
            (lo.min(v), hi.max(v))
        })
    })
}

/// Seasonal component at `t`, including timing changes (period lengthening,
/// phase shift) but not seasonal gain windows.
pub(crate) fn season_at(season: &SeasonalityAttr, timing: Option<&LocalFluctuation>, t: usize) -> f64 {
    let p = season.period;
    let (cycles, frac) = match timing {
        Some(f) if t >= f.position => {
            let factor = f.factor.unwrap_or(1.0);
            let c = match f.kind {
                FluctuationKind::PeriodLengthening => {
                    (f.position + season.phase) as f64 / p as f64
                        + (t - f.position) as f64 / (factor * p as f64)
                }
                _ => (t + season.phase) as f64 / p as f64 + factor / p as f64,
            };
            (c, c.fract())
        }
        _ => {
            let k = t + season.phase;
            (k as f64 / p as f64, (k % p) as f64 / p as f64)
        }
    };
    season.amplitude * waveform(season.kind, cycles, frac)
}

pub(crate) fn timing_fluctuation(pool: &AttributePool) -> Option<&LocalFluctuation> {
    pool.fluctuations
        .iter()
        .find(|f| f.kind.traits().effect == Effect::SeasonTiming)
}

/// One noise sample of unit scale for the pool's noise kind.
fn draw_noise(rng: &mut SeedStream, kind: NoiseKind) -> f64 {
    match kind {
        NoiseKind::None => 0.0,
        NoiseKind::Gaussian => loop {
            let z = rng.standard_normal();
            if z.abs() <= NOISE_CLIP_SIGMAS {
                break z;
            }
        },
        NoiseKind::Uniform => 2.0 * rng.unit() - 1.0,
    }
}

/// Renders the series described by `pool`:
/// trend + seasonality (with gain/timing changes) + noise (scaled inside
/// noise windows), then additive fluctuation overlays, then pinned windows.
pub fn render(pool: &AttributePool) -> TimeSeries {
    let n = pool.length;
    let mut values = vec![0.0; n];
    for seg in &pool.trend {
        for (t, v) in values.iter_mut().enumerate().take(seg.end_idx).skip(seg.start_idx) {
            *v = seg.value_at(t);
        }
    }
    if let Some(season) = &pool.seasonality {
        let timing = timing_fluctuation(pool);
        for (t, v) in values.iter_mut().enumerate() {
            let gain = pool
                .fluctuations
                .iter()
                .filter(|f| f.kind.traits().effect == Effect::SeasonGain && f.contains(t))
                .map(|f| f.factor.unwrap_or(1.0))
                .product::<f64>();
            *v += gain * season_at(season, timing, t);
        }
    }
    let pinned_value: Vec<Option<f64>> = pool
        .fluctuations
        .iter()
        .map(|f| match f.kind {
            FluctuationKind::TemporaryFlatline => Some(values[f.position]),
            FluctuationKind::Gap => Some(pool.metric.low()),
            _ => None,
        })
        .collect();
    if pool.noise.kind != NoiseKind::None {
        let mut rng = SeedStream::new(pool.generation_seed);
        for (t, v) in values.iter_mut().enumerate() {
            // Always draw so the stream stays aligned with the index.
            let z = draw_noise(&mut rng, pool.noise.kind) * pool.noise.sigma_or_halfwidth;
            let scale = pool
                .fluctuations
                .iter()
                .filter(|f| f.contains(t) && f.kind.traits().effect == Effect::NoiseScale)
                .map(|f| f.factor.unwrap_or(1.0))
                .product::<f64>();
            *v += z * scale;
        }
    }
    for f in pool.fluctuations.iter().filter(|f| f.kind.traits().effect == Effect::Additive) {
        for k in 0..f.duration {
            values[f.position + k] += f.amplitude * f.shape(k);
        }
    }
    for (f, pin) in pool.fluctuations.iter().zip(&pinned_value) {
        if let Some(value) = pin {
            for v in &mut values[f.position..f.end()] {
                *v = *value;
            }
        }
    }
    TimeSeries {
        metric: pool.metric.name.clone(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genpool::{NoiseAttr, TrendSegment};
    use crate::taxonomy::{MetricSpec, TrendKind};

    fn base_pool(n: usize, level: f64) -> AttributePool {
        AttributePool {
            id: "t".into(),
            metric: MetricSpec {
                name: "m".into(),
                domain_tag: "aiops".into(),
                value_range_hint: [0.0, 100.0],
                nonneg: true,
            },
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
            generation_seed: 1,
        }
    }

    #[test]
    fn steady_noise_free_is_constant() {
        let s = render(&base_pool(128, 5.0));
        assert!(s.values.iter().all(|v| *v == 5.0));
    }

    #[test]
    fn sine_is_periodic_with_exact_swing() {
        let mut pool = base_pool(256, 10.0);
        pool.seasonality = Some(SeasonalityAttr {
            kind: SeasonKind::Sine,
            period: 32,
            amplitude: 2.0,
            phase: 0,
        });
        let s = render(&pool);
        for i in 0..256 - 32 {
            assert_eq!(s.values[i + 32], s.values[i]);
        }
        assert!((s.max() - s.min() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn spike_lands_at_position() {
        let mut pool = base_pool(256, 10.0);
        pool.fluctuations.push(LocalFluctuation {
            kind: FluctuationKind::UpwardSpike,
            position: 100,
            duration: 1,
            amplitude: 5.0,
            factor: None,
        });
        let s = render(&pool);
        // brute-force scan
        let mut best = (0, f64::MIN);
        for (i, v) in s.values.iter().enumerate() {
            if *v > best.1 {
                best = (i, *v);
            }
        }
        assert_eq!(best.0, 100);
        assert_eq!(s.values[100] - 10.0, 5.0);
    }

    #[test]
    fn normalize_direct_formula() {
        let s = TimeSeries { metric: "m".into(), values: vec![2.0, 4.0, 6.0] };
        let n = normalize(&s);
        assert_eq!(n.values, vec![0.0, 0.5, 1.0]);
        assert_eq!(n.value_scaling, 4.0);
        assert_eq!(n.value_offset, 2.0);
        assert_eq!(denormalize(&n, "m").values, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_series_degenerate_rule() {
        let s = TimeSeries { metric: "m".into(), values: vec![7.0; 3] };
        let n = normalize(&s);
        assert_eq!(n.values, vec![0.0; 3]);
        assert_eq!(n.value_scaling, 1.0);
        assert_eq!(n.value_offset, 7.0);
        assert_eq!(denormalize(&n, "m").values, vec![7.0; 3]);
    }

    #[test]
    fn waveforms_stay_in_unit_band() {
        for kind in SeasonKind::ALL {
            for i in 0..1000 {
                let c = i as f64 / 97.0;
                let v = waveform(*kind, c, c.fract());
                assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v), "{kind} {v}");
            }
        }
    }

    #[test]
    fn csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        TimeSeries { metric: "m".into(), values: vec![1.5, 2.0] }.write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "t,value\n0,1.5\n1,2\n");
    }
}
