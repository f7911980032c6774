use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scoring::{choice_accuracy, f1, keyword_score, pair_f1, parse_categorical, parse_groups, parse_number, relative_accuracy};
use crate::datasets::CorpusRecord;
use crate::describe::{GoldLabels, TaskKind};
use crate::error::Result;

/// Answer text plus token counts. Counts are whitespace tokens, a proxy for
/// vendor tokenizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelAnswer {
    pub text: String,
    pub prompt_tokens: usize,
    pub answer_tokens: usize,
}

impl ModelAnswer {
    pub fn counted(prompt: &str, text: String) -> Self {
        Self {
            prompt_tokens: prompt.split_whitespace().count(),
            answer_tokens: text.split_whitespace().count(),
            text,
        }
    }
}

pub trait ModelUnderTest: Sync {
    fn name(&self) -> String;

    /// `prompt` is the record's prompt document with series inlined as
    /// text. Reference models may read the record itself instead.
    fn answer(&self, record: &CorpusRecord, prompt: &str) -> Result<ModelAnswer>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CategoricalF1,
    RelativeAccuracy,
    ChoiceAccuracy,
    KeywordScore,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::CategoricalF1,
        Metric::RelativeAccuracy,
        Metric::ChoiceAccuracy,
        Metric::KeywordScore,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Metric::CategoricalF1 => "categorical_f1",
            Metric::RelativeAccuracy => "relative_accuracy",
            Metric::ChoiceAccuracy => "choice_accuracy",
            Metric::KeywordScore => "keyword_score",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    /// The model call returned an error.
    Model,
    /// No option could be read from a multiple-choice answer.
    Unparseable,
    /// The record carries no scorable gold label.
    NoGold,
}

impl FailureCause {
    pub fn id(self) -> &'static str {
        match self {
            FailureCause::Model => "model",
            FailureCause::Unparseable => "unparseable",
            FailureCause::NoGold => "no_gold",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub id: String,
    pub task: TaskKind,
    pub metric: Option<Metric>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureCause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub noise_free: bool,
    pub prompt_tokens: usize,
    pub answer_tokens: usize,
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task: TaskKind,
    pub metric: Option<Metric>,
    pub count: usize,
    pub score: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: Metric,
    pub count: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub items: usize,
    pub tasks: Vec<TaskRow>,
    /// One row per metric with at least one item.
    pub overall: Vec<MetricRow>,
    /// Mean relative accuracy over numeric items whose series are all
    /// noise-free.
    pub noise_free_relative_accuracy: Option<f64>,
    pub prompt_tokens: usize,
    pub answer_tokens: usize,
    pub failures: BTreeMap<FailureCause, usize>,
    /// Per-item rows in record id order.
    pub rows: Vec<ItemRow>,
}

fn mean(scores: impl Iterator<Item = f64>) -> (usize, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for s in scores {
        n += 1;
        sum += s;
    }
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

impl EvalReport {
    /// Aggregates `rows`, which must already be in id order.
    pub fn aggregate(model: &str, rows: Vec<ItemRow>) -> Self {
        let mut by_task: BTreeMap<TaskKind, Vec<&ItemRow>> = BTreeMap::new();
        for r in &rows {
            by_task.entry(r.task).or_default().push(r);
        }
        let tasks = by_task
            .into_iter()
            .map(|(task, rs)| {
                let (count, score) = mean(rs.iter().map(|r| r.score));
                TaskRow {
                    task,
                    metric: rs.iter().find_map(|r| r.metric),
                    count,
                    score,
                    failures: rs.iter().filter(|r| r.failure.is_some()).count(),
                }
            })
            .collect();
        let overall = Metric::ALL
            .iter()
            .filter_map(|m| {
                let (count, score) = mean(rows.iter().filter(|r| r.metric == Some(*m)).map(|r| r.score));
                (count > 0).then_some(MetricRow {
                    metric: *m,
                    count,
                    score,
                })
            })
            .collect();
        let (nf, nf_score) = mean(
            rows.iter()
                .filter(|r| r.noise_free && r.metric == Some(Metric::RelativeAccuracy))
                .map(|r| r.score),
        );
        let mut failures = BTreeMap::new();
        for r in &rows {
            if let Some(f) = r.failure {
                *failures.entry(f).or_insert(0) += 1;
            }
        }
        Self {
            model: model.to_string(),
            items: rows.len(),
            tasks,
            overall,
            noise_free_relative_accuracy: (nf > 0).then_some(nf_score),
            prompt_tokens: rows.iter().map(|r| r.prompt_tokens).sum(),
            answer_tokens: rows.iter().map(|r| r.answer_tokens).sum(),
            failures,
            rows,
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        self.overall.iter().find(|r| r.metric == m).map(|r| r.score)
    }

    pub fn task(&self, t: TaskKind) -> Option<&TaskRow> {
        self.tasks.iter().find(|r| r.task == t)
    }

    /// True when the aggregates match a recomputation from the rows.
    pub fn is_consistent(&self) -> bool {
        *self == Self::aggregate(&self.model, self.rows.clone())
    }

    /// Every item failed at the model call.
    pub fn all_failed(&self) -> bool {
        self.items > 0 && self.failures.get(&FailureCause::Model) == Some(&self.items)
    }

    /// Long-format table: one row per task, then one `overall` row per
    /// metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,task,metric,count,score,failures\n");
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{}",
                self.model,
                t.task.id(),
                t.metric.map_or("none", Metric::id),
                t.count,
                t.score,
                t.failures
            );
        }
        for m in &self.overall {
            let _ = writeln!(out, "{},overall,{},{},{:.6},", self.model, m.metric.id(), m.count, m.score);
        }
        if let Some(s) = self.noise_free_relative_accuracy {
            let n = self
                .rows
                .iter()
                .filter(|r| r.noise_free && r.metric == Some(Metric::RelativeAccuracy))
                .count();
            let _ = writeln!(out, "{},overall_noise_free,relative_accuracy,{n},{s:.6},", self.model);
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        Ok(())
    }
}

/// Scores `answer` against `gold`. Returns the metric used, the score and
/// whether a multiple-choice answer was unparseable.
pub fn score_answer(gold: &GoldLabels, answer: &str) -> Option<(Metric, f64, bool)> {
    if let Some(groups) = &gold.groups {
        let vocab: Vec<String> = match &gold.vocabulary {
            Some(v) => v.clone(),
            None => groups.concat(),
        };
        return Some((Metric::CategoricalF1, pair_f1(&parse_groups(answer, &vocab), groups), false));
    }
    if let Some(labels) = &gold.labels {
        let vocab = gold.vocabulary.as_deref().unwrap_or(labels);
        return Some((Metric::CategoricalF1, f1(&parse_categorical(answer, vocab), labels), false));
    }
    if let Some(n) = &gold.number {
        return Some((Metric::RelativeAccuracy, relative_accuracy(parse_number(answer), n.value, n.value_range), false));
    }
    if let Some(c) = &gold.choice {
        let o = choice_accuracy(answer, &c.answer, &c.options);
        return Some((Metric::ChoiceAccuracy, o.score, o.unparseable));
    }
    if let Some(k) = &gold.keywords {
        return Some((Metric::KeywordScore, keyword_score(answer, k), false));
    }
    None
}

fn inlined_prompt(record: &CorpusRecord) -> Result<String> {
    let values: Vec<&[f64]> = record.series.iter().map(|s| s.values.as_slice()).collect();
    record.prompt().inline(&values)
}

fn run_item(record: &CorpusRecord, model: &dyn ModelUnderTest) -> ItemRow {
    let noise_free = !record.series.is_empty() && record.series.iter().all(|s| s.pool.is_noise_free());
    let mut row = ItemRow {
        id: record.id.clone(),
        task: record.task,
        metric: None,
        score: 0.0,
        failure: None,
        error: None,
        noise_free,
        prompt_tokens: 0,
        answer_tokens: 0,
        answer: String::new(),
    };
    let scored = score_answer(&record.gold_labels, "");
    row.metric = scored.map(|s| s.0);
    let answer = inlined_prompt(record).and_then(|p| model.answer(record, &p));
    match answer {
        Err(e) => {
            row.failure = Some(FailureCause::Model);
            row.error = Some(e.to_string());
        }
        Ok(a) => {
            row.prompt_tokens = a.prompt_tokens;
            row.answer_tokens = a.answer_tokens;
            match score_answer(&record.gold_labels, &a.text) {
                None => row.failure = Some(FailureCause::NoGold),
                Some((_, score, unparseable)) => {
                    row.score = score;
                    if unparseable {
                        row.failure = Some(FailureCause::Unparseable);
                    }
                }
            }
            row.answer = a.text;
        }
    }
    row
}

/// Runs `model` over `records` with up to `in_flight` concurrent calls.
/// Rows and aggregates are in record id order whatever the completion
/// order. Model errors are recorded per item and score 0.
pub fn run_benchmark(records: &[CorpusRecord], model: &dyn ModelUnderTest, in_flight: usize) -> EvalReport {
    let mut order: Vec<&CorpusRecord> = records.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let rows = crate::par::map_ordered(&order, in_flight.max(1), |_, r| run_item(r, model));
    EvalReport::aggregate(&model.name(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::describe::{GoldChoice, GoldNumber};

    fn row(id: &str, task: TaskKind, metric: Metric, score: f64) -> ItemRow {
        ItemRow {
            id: id.into(),
            task,
            metric: Some(metric),
            score,
            failure: None,
            error: None,
            noise_free: true,
            prompt_tokens: 3,
            answer_tokens: 1,
            answer: String::new(),
        }
    }

    #[test]
    fn aggregates_recompute() {
        let rows = vec![
            row("a", TaskKind::Trend, Metric::CategoricalF1, 1.0),
            row("b", TaskKind::Trend, Metric::CategoricalF1, 0.5),
            row("c", TaskKind::NumericMax, Metric::RelativeAccuracy, 0.9),
        ];
        let r = EvalReport::aggregate("m", rows);
        assert_eq!(r.metric(Metric::CategoricalF1), Some(0.75));
        assert_eq!(r.task(TaskKind::NumericMax).unwrap().count, 1);
        assert_eq!(r.noise_free_relative_accuracy, Some(0.9));
        assert_eq!(r.prompt_tokens, 9);
        assert!(r.is_consistent());
        let mut tampered = r.clone();
        tampered.rows[1].score = 1.0;
        assert!(!tampered.is_consistent());
        let csv = r.to_csv();
        assert!(csv.contains("m,overall,categorical_f1,2,0.750000,"));
        assert!(csv.contains("m,trend,categorical_f1,2,0.750000,0"));
    }

    #[test]
    fn empty_report() {
        let r = EvalReport::aggregate("m", Vec::new());
        assert_eq!(r.items, 0);
        assert!(r.overall.is_empty() && r.tasks.is_empty() && r.failures.is_empty());
        assert!(!r.all_failed());
        assert!(r.is_consistent());
    }

    #[test]
    fn gold_dispatch() {
        let labels = GoldLabels {
            labels: Some(vec!["upward_spike".into()]),
            vocabulary: Some(vec!["upward_spike".into(), "downward_spike".into(), "none".into()]),
            ..GoldLabels::default()
        };
        assert_eq!(
            score_answer(&labels, "There is an upward spike near t=100"),
            Some((Metric::CategoricalF1, 1.0, false))
        );
        let number = GoldLabels {
            number: Some(GoldNumber {
                value: 100.0,
                tolerance: 0.05,
                value_range: 50.0,
            }),
            ..GoldLabels::default()
        };
        let (m, s, _) = score_answer(&number, "about 110").unwrap();
        assert_eq!(m, Metric::RelativeAccuracy);
        assert!((s - 0.9).abs() < 1e-12);
        let choice = GoldLabels {
            choice: Some(GoldChoice {
                answer: "A".into(),
                options: vec!["A".into(), "B".into()],
            }),
            ..GoldLabels::default()
        };
        assert_eq!(score_answer(&choice, "maybe"), Some((Metric::ChoiceAccuracy, 0.0, true)));
        assert_eq!(score_answer(&GoldLabels::default(), "x"), None);
    }
}
