//! Pool/series consistency checks.
//!
//! The verifier measures facts from the array with generic estimators and
//! compares them with what the pool claims. It takes the claimed segment
//! boundaries, windows and seasonal waveform as hypotheses, and fits:
//!
//! - per trend segment, least squares on the deseasonalized samples outside
//!   transient windows, with a step regressor for a level shift starting
//!   inside the segment and a gain regressor for seasonal-gain windows;
//! - the period from the autocorrelation of the detrended series;
//! - each transient fluctuation's deviation from the fitted baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{waveform, TimeSeries};
use crate::error::{Error, Result};
use crate::genpool::{masks_trend_fit, AttributePool, LocalFluctuation, SeasonalityAttr};
use crate::taxonomy::{Direction, Effect, FluctuationKind, TrendKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance for noise-free amplitude facts.
    pub exact_rel: f64,
    /// Noise multiplier for noisy amplitude facts.
    pub noise_sigmas: f64,
    /// Fraction of the series value range accepted for noisy amplitudes.
    pub range_fraction: f64,
    pub period_steps: usize,
    /// Accepted relative deviation of the measured noise level.
    pub noise_level_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exact_rel: 1e-6,
            noise_sigmas: 3.0,
            range_fraction: 0.01,
            period_steps: 1,
            noise_level_rel: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ConsistencyReport {
    fn new(checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { checks, passed }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn verify(pool: &AttributePool, series: &TimeSeries) -> Result<ConsistencyReport> {
    verify_with(pool, series, &Tolerances::default())
}

/// Claimed seasonal value at `t` with timing changes applied.
fn claimed_season(season: &SeasonalityAttr, pool: &AttributePool, t: usize, with_timing: bool) -> f64 {
    let p = season.period as f64;
    let mut cycles = (t + season.phase) as f64 / p;
    let mut frac = ((t + season.phase) % season.period) as f64 / p;
    if with_timing {
        for f in &pool.fluctuations {
            if t < f.position {
                continue;
            }
            let factor = f.factor.unwrap_or(1.0);
            match f.kind {
                FluctuationKind::PhaseShift => {
                    cycles += factor / p;
                    frac = cycles.fract();
                }
                FluctuationKind::PeriodLengthening => {
                    let start = (f.position + season.phase) as f64 / p;
                    cycles = start + (t - f.position) as f64 / (p * factor);
                    frac = cycles.fract();
                }
                _ => {}
            }
        }
    }
    season.amplitude * waveform(season.kind, cycles, frac)
}

struct SegmentFit {
    /// Trend-only fitted values over the segment.
    trend: Vec<f64>,
    delta: f64,
    delta_se: f64,
    /// (fluctuation index, fitted step) for a level shift inside the segment.
    step: Option<(usize, f64)>,
    /// (fluctuation index, fitted amplitude, weight) per gain window.
    gains: Vec<(usize, f64, f64)>,
    params: usize,
}

fn fit_segment(
    pool: &AttributePool,
    seg_idx: usize,
    y: &[f64],
    season: &[f64],
    fit_mask: &[bool],
) -> Option<SegmentFit> {
    let seg = &pool.trend[seg_idx];
    let (a, b) = (seg.start_idx, seg.end_idx);
    let len = (b - a) as f64;
    let curved = seg.kind == TrendKind::Curved;
    let step = pool.fluctuations.iter().enumerate().find(|(_, f)| {
        f.kind.traits().effect == Effect::Additive && f.kind.traits().persistent && f.position > a && f.position < b
    });
    let amp = pool.seasonality.as_ref().map_or(1.0, |s| s.amplitude.max(f64::MIN_POSITIVE));
    let gains: Vec<(usize, &LocalFluctuation)> = pool
        .fluctuations
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind.traits().effect == Effect::SeasonGain && f.position < b && f.end() > a)
        .collect();

    let rows: Vec<usize> = (a..b).filter(|t| fit_mask[*t]).collect();
    let cols = 2 + usize::from(curved) + usize::from(step.is_some()) + gains.len();
    if rows.len() < cols + 1 {
        return None;
    }
    let mut x = DMatrix::<f64>::zeros(rows.len(), cols);
    let mut target = DVector::<f64>::zeros(rows.len());
    for (r, &t) in rows.iter().enumerate() {
        let u = (t - a) as f64 / len;
        let mut c = 0;
        x[(r, c)] = 1.0;
        c += 1;
        x[(r, c)] = u;
        c += 1;
        if curved {
            x[(r, c)] = u * u;
            c += 1;
        }
        if let Some((_, f)) = step {
            x[(r, c)] = if t >= f.position { 1.0 } else { 0.0 };
            c += 1;
        }
        for (_, f) in &gains {
            x[(r, c)] = if f.contains(t) { season[t] / amp } else { 0.0 };
            c += 1;
        }
        target[r] = y[t];
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12;
    let coef = svd.solve(&target, eps).ok()?;
    let resid = &target - &x * &coef;
    let rss = resid.norm_squared();
    let dof = rows.len().saturating_sub(cols).max(1);
    let sigma2 = rss / dof as f64;
    let xtx = x.transpose() * &x;
    let cov = xtx.pseudo_inverse(eps * eps).ok()?;
    let mut g = DVector::<f64>::zeros(cols);
    g[1] = 1.0;
    if curved {
        g[2] = 1.0;
    }
    let delta = coef.dot(&g);
    let delta_var = (g.transpose() * &cov * &g)[(0, 0)] * sigma2;

    let trend = (a..b)
        .map(|t| {
            let u = (t - a) as f64 / len;
            coef[0] + coef[1] * u + if curved { coef[2] * u * u } else { 0.0 }
        })
        .collect();
    let mut c = 2 + usize::from(curved);
    let step_fit = step.map(|(i, _)| {
        let v = coef[c];
        c += 1;
        (i, v)
    });
    let gain_fits = gains
        .iter()
        .map(|(i, f)| {
            let weight: f64 = rows
                .iter()
                .filter(|t| f.contains(**t))
                .map(|t| (season[*t] / amp).powi(2))
                .sum();
            let v = coef[c];
            c += 1;
            (*i, v, weight)
        })
        .collect();
    Some(SegmentFit {
        trend,
        delta,
        delta_se: delta_var.max(0.0).sqrt(),
        step: step_fit,
        gains: gain_fits,
        params: cols,
    })
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let k = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / k, b + p.1 / k));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return f64::NAN;
    }
    sab / (saa * sbb).sqrt()
}

/// Period estimate: after the autocorrelation first turns negative, the
/// smallest local maximum reaching 80% of the largest value. With noise the
/// peak is refined by a local quadratic fit.
fn estimate_period(d: &[f64], mask: &[bool], refine: bool) -> Option<usize> {
    let n = d.len();
    let used: Vec<usize> = (0..n).filter(|t| mask[*t]).collect();
    if used.len() < 8 {
        return None;
    }
    let max_lag = n / 2;
    let mut acf = vec![f64::NAN; max_lag + 2];
    for (lag, slot) in acf.iter_mut().enumerate().take(max_lag + 2).skip(1) {
        let pairs: Vec<(f64, f64)> = (0..n.saturating_sub(lag))
            .filter(|t| mask[*t] && mask[t + lag])
            .map(|t| (d[t], d[t + lag]))
            .collect();
        if pairs.len() >= 8 {
            *slot = pearson(&pairs);
        }
    }
    let first_negative = (1..=max_lag).find(|l| acf[*l] < 0.0)?;
    let peaks: Vec<usize> = (first_negative + 1..=max_lag)
        .filter(|&l| {
            let v = acf[l];
            v.is_finite()
                && v > 0.0
                && !(acf[l - 1] > v)
                && !(acf[l + 1] > v)
        })
        .collect();
    let best = peaks.iter().map(|l| acf[*l]).fold(f64::NEG_INFINITY, f64::max);
    let peak = peaks.into_iter().find(|l| acf[*l] >= 0.8 * best)?;
    Some(if refine { refine_peak(&acf, peak, first_negative + 1, max_lag) } else { peak })
}

/// Vertex of a quadratic fitted to the autocorrelation around `peak`, which
/// damps the jitter noise adds to the raw argmax of a broad peak.
fn refine_peak(acf: &[f64], peak: usize, lo: usize, hi: usize) -> usize {
    let h = (peak / 24).max(2);
    let lags: Vec<usize> = (peak.saturating_sub(h).max(lo)..=(peak + h).min(hi))
        .filter(|l| acf[*l].is_finite())
        .collect();
    if lags.len() < 5 {
        return peak;
    }
    let mut x = DMatrix::<f64>::zeros(lags.len(), 3);
    let mut y = DVector::<f64>::zeros(lags.len());
    for (r, &l) in lags.iter().enumerate() {
        let u = l as f64 - peak as f64;
        x[(r, 0)] = 1.0;
        x[(r, 1)] = u;
        x[(r, 2)] = u * u;
        y[r] = acf[l];
    }
    let Ok(c) = x.svd(true, true).solve(&y, 1e-12) else {
        return peak;
    };
    if c[2] >= 0.0 {
        return peak;
    }
    let vertex = peak as f64 - c[1] / (2.0 * c[2]);
    if (vertex - peak as f64).abs() > h as f64 {
        return peak;
    }
    vertex.round() as usize
}

pub fn verify_with(pool: &AttributePool, series: &TimeSeries, tol: &Tolerances) -> Result<ConsistencyReport> {
    let n = pool.length;
    if series.len() != n {
        return Err(Error::arg(format!(
            "series has {} values but pool {} has length {n}",
            series.len(),
            pool.id
        )));
    }
    let x = &series.values;
    let mut checks = Vec::new();
    let noise_free = pool.is_noise_free();
    let sigma = pool.noise.std();
    let range = series.max() - series.min();
    let magnitude = x.iter().fold(range, |m, v| m.max(v.abs())).max(1e-12);
    let amp_tol = |a: f64| {
        if noise_free {
            tol.exact_rel * a.abs() + 1e-9 * magnitude
        } else {
            (tol.noise_sigmas * sigma).max(tol.range_fraction * range)
        }
    };

    let season: Vec<f64> = match &pool.seasonality {
        Some(s) => (0..n).map(|t| claimed_season(s, pool, t, true)).collect(),
        None => vec![0.0; n],
    };
    let y: Vec<f64> = x.iter().zip(&season).map(|(v, s)| v - s).collect();
    let fit_mask: Vec<bool> = (0..n)
        .map(|t| !pool.fluctuations.iter().any(|f| masks_trend_fit(f.kind) && f.contains(t)))
        .collect();

    // Trend segments.
    let mut trend_fit = vec![0.0; n];
    let mut step_fit = vec![0.0; n];
    let mut gain_sum: Vec<(f64, f64)> = vec![(0.0, 0.0); pool.fluctuations.len()];
    let mut level_shift: Vec<Option<f64>> = vec![None; pool.fluctuations.len()];
    let mut fitted_params = 0;
    for (i, seg) in pool.trend.iter().enumerate() {
        let name = format!("trend[{i}].direction");
        let Some(fit) = fit_segment(pool, i, &y, &season, &fit_mask) else {
            checks.push(Check {
                name,
                passed: false,
                measured: f64::NAN,
                expected: f64::from(seg.direction()),
                tolerance: 0.0,
            });
            continue;
        };
        fitted_params += fit.params;
        trend_fit[seg.start_idx..seg.end_idx].copy_from_slice(&fit.trend);
        if let Some((fi, step)) = fit.step {
            level_shift[fi] = Some(step);
            let f = &pool.fluctuations[fi];
            for v in &mut step_fit[f.position..seg.end_idx] {
                *v = step;
            }
        }
        for (fi, amp, w) in fit.gains {
            gain_sum[fi].0 += amp * w;
            gain_sum[fi].1 += w;
        }
        let threshold = if noise_free {
            1e-6 * magnitude
        } else {
            (3.0 * fit.delta_se).max(tol.range_fraction * range)
        };
        let measured = if fit.delta > threshold {
            1
        } else if fit.delta < -threshold {
            -1
        } else {
            0
        };
        checks.push(Check {
            name,
            passed: measured == seg.direction(),
            measured: fit.delta,
            expected: f64::from(seg.direction()),
            tolerance: threshold,
        });
    }
    let gain_fit: Vec<Option<f64>> = gain_sum
        .iter()
        .map(|&(s, w)| if w > 0.0 { Some(s / w) } else { None })
        .collect();
    let amp = pool.seasonality.as_ref().map_or(1.0, |s| s.amplitude.max(f64::MIN_POSITIVE));

    // Fitted baseline without noise and without transient fluctuations.
    let baseline: Vec<f64> = (0..n)
        .map(|t| {
            let extra_gain: f64 = pool
                .fluctuations
                .iter()
                .zip(&gain_fit)
                .filter(|(f, _)| f.kind.traits().effect == Effect::SeasonGain && f.contains(t))
                .map(|(_, g)| g.unwrap_or(0.0) / amp)
                .sum();
            trend_fit[t] + step_fit[t] + season[t] * (1.0 + extra_gain)
        })
        .collect();
    let resid: Vec<f64> = x.iter().zip(&baseline).map(|(v, b)| v - b).collect();

    // Period.
    if let Some(s) = &pool.seasonality {
        // Level shifts are regressed out and gain windows rescaled by their
        // fitted gain, so only windows that distort the shape are dropped.
        let mut detrended: Vec<f64> = (0..n).map(|t| x[t] - trend_fit[t] - step_fit[t]).collect();
        let mut acf_mask = vec![true; n];
        for (f, g) in pool.fluctuations.iter().zip(&gain_fit) {
            let traits = f.kind.traits();
            let scale = g.map(|g| 1.0 + g / amp);
            for t in f.position..f.end().min(n) {
                match (traits.effect, scale) {
                    (Effect::Additive, _) if traits.persistent => {}
                    (Effect::SeasonGain, Some(k)) if k >= 0.5 => detrended[t] /= k,
                    _ => acf_mask[t] = false,
                }
            }
        }
        let estimate = estimate_period(&detrended, &acf_mask, !noise_free);
        let measured = estimate.map_or(f64::NAN, |p| p as f64);
        checks.push(Check {
            name: "season.period".into(),
            passed: estimate.is_some_and(|p| p.abs_diff(s.period) <= tol.period_steps),
            measured,
            expected: s.period as f64,
            tolerance: tol.period_steps as f64,
        });
    }

    // Fluctuations.
    for (i, f) in pool.fluctuations.iter().enumerate() {
        let traits = f.kind.traits();
        let label = format!("fluct[{i}].{}", f.kind);
        match traits.effect {
            Effect::Additive if traits.persistent => {
                let measured = level_shift[i].unwrap_or(f64::NAN);
                let t = amp_tol(f.amplitude);
                checks.push(Check {
                    name: format!("{label}.amplitude"),
                    passed: (measured - f.amplitude).abs() <= t,
                    measured,
                    expected: f.amplitude,
                    tolerance: t,
                });
            }
            Effect::Additive => {
                let peak = f.peak_index();
                let measured = resid[peak];
                let t = amp_tol(f.amplitude);
                checks.push(Check {
                    name: format!("{label}.amplitude"),
                    passed: (measured - f.amplitude).abs() <= t,
                    measured,
                    expected: f.amplitude,
                    tolerance: t,
                });
                if traits.spike_family {
                    let lo = f.position.saturating_sub(3);
                    let hi = (f.end() + 3).min(n);
                    let sign = if traits.direction == Direction::Down { -1.0 } else { 1.0 };
                    let mut best = lo;
                    for t in lo..hi {
                        if sign * resid[t] > sign * resid[best] {
                            best = t;
                        }
                    }
                    checks.push(Check {
                        name: format!("{label}.position"),
                        passed: best == peak,
                        measured: best as f64,
                        expected: peak as f64,
                        tolerance: 0.0,
                    });
                }
            }
            Effect::SeasonGain => {
                let measured = gain_fit[i].unwrap_or(f64::NAN);
                let t = amp_tol(f.amplitude);
                checks.push(Check {
                    name: format!("{label}.amplitude"),
                    passed: (measured - f.amplitude).abs() <= t,
                    measured,
                    expected: f.amplitude,
                    tolerance: t,
                });
            }
            Effect::NoiseScale => {
                let window = &resid[f.position..f.end()];
                let rms = (window.iter().map(|r| r * r).sum::<f64>() / window.len() as f64).sqrt();
                let ratio = if sigma > 0.0 { rms / sigma } else { f64::NAN };
                let claimed = f.factor.unwrap_or(1.0);
                checks.push(Check {
                    name: format!("{label}.scale"),
                    passed: (ratio - claimed).abs() < (ratio - 1.0).abs(),
                    measured: ratio,
                    expected: claimed,
                    tolerance: (claimed - 1.0).abs() / 2.0,
                });
            }
            Effect::Pinned => {
                let window = &x[f.position..f.end()];
                let (measured, expected) = match f.kind {
                    FluctuationKind::Gap => (
                        window.iter().map(|v| (v - pool.metric.low()).abs()).fold(0.0, f64::max),
                        0.0,
                    ),
                    _ => {
                        let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (hi - lo, 0.0)
                    }
                };
                let t = 1e-9 * magnitude;
                checks.push(Check {
                    name: format!("{label}.pinned"),
                    passed: measured <= t,
                    measured,
                    expected,
                    tolerance: t,
                });
            }
            Effect::SeasonTiming => {
                let Some(s) = &pool.seasonality else {
                    continue;
                };
                let (mut rss_claimed, mut rss_plain) = (0.0, 0.0);
                for t in f.position..n {
                    let base = trend_fit[t] + step_fit[t];
                    rss_claimed += (x[t] - base - season[t]).powi(2);
                    rss_plain += (x[t] - base - claimed_season(s, pool, t, false)).powi(2);
                }
                checks.push(Check {
                    name: format!("{label}.timing"),
                    passed: rss_claimed < rss_plain,
                    measured: rss_claimed,
                    expected: rss_plain,
                    tolerance: 0.0,
                });
            }
        }
    }

    // Noise level.
    let noise_mask: Vec<usize> = (0..n)
        .filter(|t| {
            fit_mask[*t]
                && !pool
                    .fluctuations
                    .iter()
                    .any(|f| f.contains(*t) && f.kind.traits().effect == Effect::NoiseScale)
        })
        .collect();
    let dof = noise_mask.len().saturating_sub(fitted_params).max(1);
    let measured = (noise_mask.iter().map(|t| resid[*t].powi(2)).sum::<f64>() / dof as f64).sqrt();
    let (passed, t) = if noise_free {
        let t = 1e-9 * magnitude;
        (measured <= t, t)
    } else {
        let t = tol.noise_level_rel * sigma;
        ((measured - sigma).abs() <= t, t)
    };
    checks.push(Check {
        name: "noise.level".into(),
        passed,
        measured,
        expected: sigma,
        tolerance: t,
    });

    Ok(ConsistencyReport::new(checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genpool::{sample_pool, AttributeSubset};
    use crate::synth::render;
    use crate::taxonomy::{MetricSpec, NoiseKind};

    fn subset(noise: NoiseKind) -> AttributeSubset {
        let mut s = AttributeSubset::full(MetricSpec {
            name: "m".into(),
            domain_tag: "aiops".into(),
            value_range_hint: [0.0, 100.0],
            nonneg: true,
        });
        s.noises = vec![noise];
        s
    }

    #[test]
    fn noise_free_pools_self_consistent() {
        let s = subset(NoiseKind::None);
        for seed in 0..200 {
            let pool = sample_pool(&s, 64 + (seed as usize * 37) % 900, seed).unwrap();
            let report = verify(&pool, &render(&pool)).unwrap();
            assert!(report.passed, "seed {seed}: {:?}\n{pool:#?}", report.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn shuffled_series_fails() {
        let s = subset(NoiseKind::Gaussian);
        let mut rng = crate::rng::SeedStream::new(3);
        let mut checked = 0;
        for seed in 0..30 {
            let pool = sample_pool(&s, 256, seed).unwrap();
            // A flat line with i.i.d. noise is exchangeable: shuffling it
            // changes nothing observable.
            let flat = pool.trend.len() == 1 && pool.trend[0].direction() == 0;
            if flat && pool.seasonality.is_none() && pool.fluctuations.is_empty() {
                continue;
            }
            checked += 1;
            let mut series = render(&pool);
            for i in (1..series.values.len()).rev() {
                let j = rng.below(i + 1);
                series.values.swap(i, j);
            }
            assert!(!verify(&pool, &series).unwrap().passed, "seed {seed}");
        }
        assert!(checked >= 20, "{checked}");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let pool = sample_pool(&subset(NoiseKind::None), 64, 1).unwrap();
        let mut series = render(&pool);
        series.values.pop();
        assert!(matches!(verify(&pool, &series), Err(Error::Argument(_))));
    }
}
