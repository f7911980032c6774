//! The fixed attribute vocabulary and the metric catalog.
//!
//! Four attribute categories exist: trend (4 kinds), seasonality (7),
//! noise (3) and local fluctuation (19). Every kind has a stable snake_case
//! identifier used in serialized data and as the label vocabulary for
//! categorical scoring. Replacing underscores with spaces gives the phrase
//! used in generated text, e.g. `upward_spike` -> "upward spike".

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label used for "this category is absent" (no seasonality, no local
/// fluctuation). Noise has its own `none` kind with the same identifier.
pub const NONE_LABEL: &str = "none";

macro_rules! kind_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $id:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn id(self) -> &'static str {
                match self {
                    $($name::$variant => $id),+
                }
            }

            pub fn from_id(id: &str) -> Option<Self> {
                match id {
                    $($id => Some($name::$variant),)+
                    _ => None,
                }
            }

            /// Human phrase: the identifier with underscores as spaces.
            pub fn phrase(self) -> String {
                self.id().replace('_', " ")
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.id())
            }
        }
    };
}

kind_enum!(
    /// Shape of one trend segment.
    TrendKind {
        Steady => "steady",
        LinearIncrease => "linear_increase",
        LinearDecrease => "linear_decrease",
        Curved => "curved",
    }
);

kind_enum!(
    /// Waveform of the periodic component.
    SeasonKind {
        Sine => "sine",
        Square => "square",
        Triangle => "triangle",
        Sawtooth => "sawtooth",
        HarmonicMixture => "harmonic_mixture",
        AmplitudeModulatedSine => "amplitude_modulated_sine",
        PulseTrain => "pulse_train",
    }
);

kind_enum!(
    NoiseKind {
        None => "none",
        Gaussian => "gaussian",
        Uniform => "uniform",
    }
);

kind_enum!(
    /// Bounded-window deviations overlaid on the base signal.
    FluctuationKind {
        UpwardSpike => "upward_spike",
        DownwardSpike => "downward_spike",
        UpwardLevelShift => "upward_level_shift",
        DownwardLevelShift => "downward_level_shift",
        TransientRise => "transient_rise",
        TransientDip => "transient_dip",
        ConvexShapedElevation => "convex_shaped_elevation",
        ConcaveShapedDepression => "concave_shaped_depression",
        RapidRiseSlowDecline => "rapid_rise_slow_decline",
        SlowRiseRapidDecline => "slow_rise_rapid_decline",
        AmplifiedSeasonalAmplitude => "amplified_seasonal_amplitude",
        DiminishedSeasonalAmplitude => "diminished_seasonal_amplitude",
        IncreasedNoiseSegment => "increased_noise_segment",
        DecreasedNoiseSegment => "decreased_noise_segment",
        TemporaryFlatline => "temporary_flatline",
        Gap => "gap",
        PeriodLengthening => "period_lengthening",
        PhaseShift => "phase_shift",
        OscillationBurst => "oscillation_burst",
    }
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Neutral,
}

/// How a fluctuation kind modifies the signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Effect {
    /// Adds `amplitude * shape[k]` over the window.
    Additive,
    /// Multiplies the seasonal component inside the window.
    SeasonGain,
    /// Scales the noise inside the window.
    NoiseScale,
    /// Replaces values inside the window.
    Pinned,
    /// Changes seasonal timing from the window start onwards.
    SeasonTiming,
}

/// Static description of a fluctuation kind: which way it moves the series,
/// whether it lasts to the end of the series, and which numeric facts about
/// it can be read back from a rendered array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FluctuationTraits {
    pub direction: Direction,
    pub persistent: bool,
    pub effect: Effect,
    pub grounds_position: bool,
    pub grounds_duration: bool,
    pub grounds_amplitude: bool,
    pub needs_season: bool,
    pub needs_noise: bool,
    pub spike_family: bool,
}

impl FluctuationKind {
    pub fn traits(self) -> FluctuationTraits {
        use Direction::*;
        use Effect::*;
        use FluctuationKind as K;
        let t = |direction, persistent, effect, amplitude: bool| FluctuationTraits {
            direction,
            persistent,
            effect,
            grounds_position: true,
            grounds_duration: !persistent,
            grounds_amplitude: amplitude,
            needs_season: matches!(effect, SeasonGain | SeasonTiming),
            needs_noise: matches!(effect, NoiseScale),
            spike_family: false,
        };
        match self {
            K::UpwardSpike => FluctuationTraits { spike_family: true, ..t(Up, false, Additive, true) },
            K::DownwardSpike => FluctuationTraits { spike_family: true, ..t(Down, false, Additive, true) },
            K::UpwardLevelShift => t(Up, true, Additive, true),
            K::DownwardLevelShift => t(Down, true, Additive, true),
            K::TransientRise => t(Up, false, Additive, true),
            K::TransientDip => t(Down, false, Additive, true),
            K::ConvexShapedElevation => t(Up, false, Additive, true),
            K::ConcaveShapedDepression => t(Down, false, Additive, true),
            K::RapidRiseSlowDecline => t(Up, false, Additive, true),
            K::SlowRiseRapidDecline => t(Up, false, Additive, true),
            K::AmplifiedSeasonalAmplitude => t(Up, false, SeasonGain, true),
            K::DiminishedSeasonalAmplitude => t(Down, false, SeasonGain, true),
            K::IncreasedNoiseSegment => t(Up, false, NoiseScale, false),
            K::DecreasedNoiseSegment => t(Down, false, NoiseScale, false),
            K::TemporaryFlatline => t(Neutral, false, Pinned, false),
            K::Gap => t(Down, false, Pinned, false),
            K::PeriodLengthening => t(Neutral, true, SeasonTiming, false),
            K::PhaseShift => t(Neutral, true, SeasonTiming, false),
            K::OscillationBurst => t(Neutral, false, Additive, true),
        }
    }
}

/// The complete attribute set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttributeTaxonomy {
    pub trend_types: Vec<TrendKind>,
    pub season_types: Vec<SeasonKind>,
    pub noise_types: Vec<NoiseKind>,
    pub fluctuation_types: Vec<FluctuationKind>,
}

/// Returns the taxonomy. Order is declaration order and never changes.
pub fn registry() -> AttributeTaxonomy {
    AttributeTaxonomy {
        trend_types: TrendKind::ALL.to_vec(),
        season_types: SeasonKind::ALL.to_vec(),
        noise_types: NoiseKind::ALL.to_vec(),
        fluctuation_types: FluctuationKind::ALL.to_vec(),
    }
}

/// Attribute category a label belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Trend,
    Season,
    Noise,
    Local,
}

impl Category {
    /// Label vocabulary for categorical matching: kind identifiers plus
    /// [`NONE_LABEL`] (noise already contains it).
    pub fn vocabulary(self) -> Vec<String> {
        let mut v: Vec<String> = match self {
            Category::Trend => TrendKind::ALL.iter().map(|k| k.id().to_string()).collect(),
            Category::Season => SeasonKind::ALL.iter().map(|k| k.id().to_string()).collect(),
            Category::Noise => NoiseKind::ALL.iter().map(|k| k.id().to_string()).collect(),
            Category::Local => FluctuationKind::ALL.iter().map(|k| k.id().to_string()).collect(),
        };
        if !v.iter().any(|l| l == NONE_LABEL) {
            v.push(NONE_LABEL.to_string());
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub domain_tag: String,
    pub value_range_hint: [f64; 2],
    pub nonneg: bool,
}

impl MetricSpec {
    pub fn low(&self) -> f64 {
        self.value_range_hint[0]
    }

    pub fn high(&self) -> f64 {
        self.value_range_hint[1]
    }

    pub fn span(&self) -> f64 {
        self.high() - self.low()
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("metric name is empty"));
        }
        let [low, high] = self.value_range_hint;
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::invalid(format!(
                "metric {}: value range [{low}, {high}] is not increasing",
                self.name
            )));
        }
        if self.nonneg && low < 0.0 {
            return Err(Error::invalid(format!(
                "metric {}: nonneg metric with negative lower bound {low}",
                self.name
            )));
        }
        Ok(())
    }
}

const DEFAULT_CATALOG: &str = include_str!("../data/metrics.csv");

/// Loads the metric catalog: the shipped default when `source` is `None`,
/// otherwise the given file (`name,domain_tag,low,high,nonneg` per line,
/// `#` comments and blank lines ignored).
pub fn metric_catalog(source: Option<&Path>) -> Result<Vec<MetricSpec>> {
    match source {
        None => parse_catalog(DEFAULT_CATALOG, Path::new("<default catalog>")),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            parse_catalog(&text, path)
        }
    }
}

pub fn parse_catalog(text: &str, origin: &Path) -> Result<Vec<MetricSpec>> {
    let mut out: Vec<MetricSpec> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(format!("{what} `{s}` is not a number")))
        };
        let low = num(fields[2], "low")?;
        let high = num(fields[3], "high")?;
        let nonneg = match fields[4] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(parse_err(format!("nonneg `{other}` is not a boolean"))),
        };
        let spec = MetricSpec {
            name: fields[0].to_string(),
            domain_tag: fields[1].to_string(),
            value_range_hint: [low, high],
            nonneg,
        };
        spec.validate().map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(spec.name.clone()) {
            return Err(Error::invalid(format!(
                "duplicate metric name `{}` at line {line_no}",
                spec.name
            )));
        }
        out.push(spec);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("catalog {} has no entries", origin.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn category_counts() {
        let t = registry();
        assert_eq!(t.trend_types.len(), 4);
        assert_eq!(t.season_types.len(), 7);
        assert_eq!(t.noise_types.len(), 3);
        assert_eq!(t.fluctuation_types.len(), 19);
    }

    #[test]
    fn registry_is_stable() {
        assert_eq!(registry(), registry());
        let ids: Vec<_> = registry().fluctuation_types.iter().map(|k| k.id()).collect();
        assert_eq!(ids[0], "upward_spike");
        assert_eq!(ids[18], "oscillation_burst");
    }

    #[test]
    fn identifiers_unique_and_roundtrip() {
        let mut all = std::collections::BTreeSet::new();
        for k in FluctuationKind::ALL {
            assert!(all.insert(k.id()));
            assert_eq!(FluctuationKind::from_id(k.id()), Some(*k));
            let json = serde_json::to_string(k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.id()));
            assert_eq!(serde_json::from_str::<FluctuationKind>(&json).unwrap(), *k);
        }
        for k in SeasonKind::ALL {
            assert_eq!(serde_json::from_str::<SeasonKind>(&format!("\"{}\"", k.id())).unwrap(), *k);
        }
        for k in TrendKind::ALL {
            assert_eq!(TrendKind::from_id(k.id()), Some(*k));
        }
        for k in NoiseKind::ALL {
            assert_eq!(NoiseKind::from_id(k.id()), Some(*k));
        }
    }

    #[test]
    fn every_fluctuation_grounds_something() {
        for k in FluctuationKind::ALL {
            let t = k.traits();
            assert!(t.grounds_position, "{k}");
            assert!(t.grounds_duration || t.persistent, "{k}");
        }
    }

    #[test]
    fn default_catalog_has_567_entries() {
        let cat = metric_catalog(None).unwrap();
        assert_eq!(cat.len(), 567);
        let domains: std::collections::BTreeSet<_> = cat.iter().map(|m| m.domain_tag.as_str()).collect();
        assert_eq!(domains.len(), 6);
        assert!(cat.iter().any(|m| m.name == "cpu_utilization"));
    }

    #[test]
    fn user_catalog_single_entry() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\ncpu_utilization,aiops,0,100,true").unwrap();
        let cat = metric_catalog(Some(f.path())).unwrap();
        assert_eq!(cat.len(), 1);
        assert_eq!(cat[0].value_range_hint, [0.0, 100.0]);
    }

    #[test]
    fn duplicate_name_rejected() {
        let text = "cpu_utilization,aiops,0,100,true\ncpu_utilization,aiops,0,100,true\n";
        let err = parse_catalog(text, Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert!(err.to_string().contains("cpu_utilization"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "# header\ncpu_utilization,aiops,0,100,true\nbroken,aiops,zero,100,true\n";
        match parse_catalog(text, Path::new("x.csv")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }
}
