//! Question surface templates. Placeholders: `{metric}`, `{n}`, `{ts}`
//! (one per series), `{series_list}`, `{start}`, `{end}`, `{t}`,
//! `{fluct}`, `{pos}`, `{quantity}`, `{threshold}`, `{a}`, `{b}`.

use super::qa::TaskKind;

pub(crate) const TREND: &[&str] = &[
    "{metric} over {n} steps: {ts}. Describe the trend of this series.",
    "Here is the {metric} series of length {n}: {ts}. What kind of trend does it follow?",
    "{ts} This is {metric}, sampled at {n} points. Identify its trend type for each part of the series.",
    "Look at {metric} ({n} points): {ts}. Is it rising, falling, steady, or curved? Name the trend.",
    "Given {metric}: {ts}, what is the overall trend of the data?",
    "The series {metric} {ts} has {n} observations. Which trend types appear in it?",
];

pub(crate) const SEASON: &[&str] = &[
    "{metric} over {n} steps: {ts}. Does the series show seasonality? If so, what kind?",
    "Here is the {metric} series: {ts}. Describe its periodic behaviour.",
    "{ts} This is {metric} with {n} points. Which seasonal waveform, if any, is present?",
    "Look at {metric}: {ts}. Is there a repeating pattern, and what shape does it have?",
    "Given {metric} ({n} points): {ts}, identify the seasonality type.",
];

pub(crate) const NOISE: &[&str] = &[
    "{metric} over {n} steps: {ts}. What kind of noise does the series contain?",
    "Here is the {metric} series: {ts}. Is it noisy? Name the noise type.",
    "{ts} This is {metric}. Characterize the random fluctuation around its main pattern.",
    "Look at {metric} ({n} points): {ts}. Is the series smooth, or does it carry gaussian or uniform noise?",
    "Given {metric}: {ts}, describe the noise in the data.",
];

pub(crate) const LOCAL: &[&str] = &[
    "{metric} over {n} steps: {ts}. Are there any local fluctuations? List them.",
    "Here is the {metric} series: {ts}. Identify any anomalies or local events.",
    "{ts} This is {metric} with {n} points. What local fluctuation types occur, and where?",
    "Look at {metric}: {ts}. Which unusual local patterns can you see?",
    "Given {metric} ({n} points): {ts}, list every local fluctuation in the series.",
];

pub(crate) const MAX: &[&str] = &[
    "{metric} over {n} steps: {ts}. What is the maximum value of the series?",
    "Here is the {metric} series: {ts}. Report its highest value.",
    "{ts} This is {metric}. What is the largest value observed?",
    "Look at {metric} ({n} points): {ts}. What peak value does it reach?",
    "Given {metric}: {ts}, find the maximum.",
];

pub(crate) const MIN: &[&str] = &[
    "{metric} over {n} steps: {ts}. What is the minimum value of the series?",
    "Here is the {metric} series: {ts}. Report its lowest value.",
    "{ts} This is {metric}. What is the smallest value observed?",
    "Look at {metric} ({n} points): {ts}. How low does it go?",
    "Given {metric}: {ts}, find the minimum.",
];

pub(crate) const SEGMENT_AVG: &[&str] = &[
    "{metric} over {n} steps: {ts}. What is the average value from t={start} to t={end}?",
    "Here is the {metric} series: {ts}. Compute the mean between t={start} and t={end} inclusive.",
    "{ts} This is {metric}. What is its average over the segment t={start}..{end}?",
    "Look at {metric}: {ts}. Between t={start} and t={end}, what is the mean level?",
    "Given {metric} ({n} points): {ts}, average the values from index {start} to index {end}.",
];

pub(crate) const VALUE_AT: &[&str] = &[
    "{metric} over {n} steps: {ts}. What is the value at t={t}?",
    "Here is the {metric} series: {ts}. Report the value at index {t}.",
    "{ts} This is {metric}. What value does it take at time step {t}?",
    "Look at {metric}: {ts}. Read off the value at t={t}.",
    "Given {metric} ({n} points): {ts}, what is the observation at position {t}?",
];

pub(crate) const FLUCT_AMPLITUDE: &[&str] = &[
    "{metric} over {n} steps: {ts}. What is the amplitude of the {fluct} near t={pos}?",
    "Here is the {metric} series: {ts}. How large is the {fluct} around t={pos}?",
    "{ts} This is {metric}. Measure the amplitude of the {fluct} close to index {pos}.",
    "Look at {metric}: {ts}. By how much does the {fluct} near t={pos} deviate from the baseline?",
    "Given {metric} ({n} points): {ts}, estimate the signed amplitude of the {fluct} at about t={pos}.",
];

pub(crate) const FLUCT_POSITION: &[&str] = &[
    "{metric} over {n} steps: {ts}. At which time step does the {fluct} start?",
    "Here is the {metric} series: {ts}. Where is the {fluct} located?",
    "{ts} This is {metric}. Give the starting index of the {fluct}.",
    "Look at {metric}: {ts}. When does the {fluct} begin?",
    "Given {metric} ({n} points): {ts}, locate the {fluct}.",
];

pub(crate) const PERIOD: &[&str] = &[
    "{metric} over {n} steps: {ts}. What is the period of its seasonality?",
    "Here is the {metric} series: {ts}. How many steps does one seasonal cycle take?",
    "{ts} This is {metric}. Estimate the length of its repeating cycle.",
    "Look at {metric}: {ts}. What period does the periodic pattern have?",
    "Given {metric} ({n} points): {ts}, report the seasonal period in steps.",
];

pub(crate) const CORRELATION: &[&str] = &[
    "The following series are observed together: {series_list}. Which of them are correlated with each other?",
    "Consider these metrics: {series_list}. Which series share a common pattern?",
    "{series_list}. Identify the group of series that move together.",
    "Here are several related metrics: {series_list}. Which ones show a correlated relation?",
    "Look at {series_list}. List the series that are correlated.",
];

pub(crate) const CLUSTER: &[&str] = &[
    "The following series are observed together: {series_list}. Cluster them into groups of correlated series.",
    "Consider these metrics: {series_list}. Partition them by shared behaviour.",
    "{series_list}. Group the series so that correlated ones fall together.",
    "Here are several metrics: {series_list}. Which series belong together? Give the groups.",
    "Look at {series_list}. Split the series into correlated clusters.",
];

pub(crate) const INDUCTIVE: &[&str] = &[
    "{metric} over {n} steps: {ts}. Summarize the overall behaviour of this series.",
    "Here is the {metric} series: {ts}. What general pattern can you infer from it?",
    "{ts} This is {metric}. Describe its main characteristics.",
    "Look at {metric} ({n} points): {ts}. What does the data tell you about how this metric behaves?",
    "Given {metric}: {ts}, give a short characterization of trend, seasonality and local events.",
];

pub(crate) const DEDUCTIVE: &[&str] = &[
    "{metric} over {n} steps: {ts}. If an alert fires when the {quantity} exceeds {threshold}, does it fire? Answer True or False.",
    "Here is the {metric} series: {ts}. True or False: the {quantity} is greater than {threshold}.",
    "{ts} This is {metric}. Suppose the rule is 'the {quantity} is above {threshold}'. Is the rule satisfied? True or False.",
    "Look at {metric}: {ts}. Decide whether the {quantity} exceeds {threshold}. Reply True or False.",
    "Given {metric} ({n} points): {ts}, is it true that the {quantity} is larger than {threshold}?",
];

pub(crate) const CAUSAL: &[&str] = &[
    "{metric} over {n} steps: {ts}. Around t={pos} the series departs from its usual behaviour. What explains this?",
    "Here is the {metric} series: {ts}. Why does the series change near t={pos}?",
    "{ts} This is {metric}. What pattern causes the deviation close to t={pos}?",
    "Look at {metric}: {ts}. Explain what happens around index {pos}.",
    "Given {metric} ({n} points): {ts}, which local event is responsible for the behaviour near t={pos}?",
];

pub(crate) const COMPARISON: &[&str] = &[
    "{metric} over {n} steps: {ts}. Which window has the higher average: A) t={a} or B) t={b}?",
    "Here is the {metric} series: {ts}. Compare the mean level of A) t={a} and B) t={b}. Answer A or B.",
    "{ts} This is {metric}. Is the series higher on average during A) t={a} or B) t={b}?",
    "Look at {metric}: {ts}. Choose the window with the larger mean. A) t={a} B) t={b}",
    "Given {metric} ({n} points): {ts}, which period shows higher values on average? A) t={a} B) t={b}",
];

pub(crate) fn bank(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::Trend => TREND,
        TaskKind::Season => SEASON,
        TaskKind::Noise => NOISE,
        TaskKind::Local => LOCAL,
        TaskKind::NumericMax => MAX,
        TaskKind::NumericMin => MIN,
        TaskKind::NumericSegmentAvg => SEGMENT_AVG,
        TaskKind::NumericValueAt => VALUE_AT,
        TaskKind::NumericFluctAmplitude => FLUCT_AMPLITUDE,
        TaskKind::NumericFluctPosition => FLUCT_POSITION,
        TaskKind::NumericPeriod => PERIOD,
        TaskKind::Correlation => CORRELATION,
        TaskKind::Cluster => CLUSTER,
        TaskKind::Inductive => INDUCTIVE,
        TaskKind::Deductive => DEDUCTIVE,
        TaskKind::Causal => CAUSAL,
        TaskKind::Comparison => COMPARISON,
        TaskKind::InstructFollow => &[],
    }
}

/// Replaces `{key}` placeholders.
pub(crate) fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// Series-free format-compliance items: (question, options, correct).
/// Options and wording are built from the taxonomy at generation time.
pub(crate) const INSTRUCT: &[&str] = &[
    "Answer with exactly one letter. Which of these is a seasonality type? A) {a} B) {b}",
    "Reply with only True or False: '{a}' is a kind of local fluctuation.",
    "Respond with a single letter and nothing else. Which label describes a trend? A) {a} B) {b}",
    "Answer True or False only: a series described as '{a}' noise is free of random variation.",
    "Choose A or B without explanation. Which of these is a noise type? A) {a} B) {b}",
    "Output one word, True or False: '{a}' names a seasonal waveform.",
];
