//! Answer parsers and per-item metrics. Everything here is a pure function
//! of its inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{Category, NONE_LABEL};

const BUILTIN_SYNONYMS: &str = include_str!("../../data/synonyms.txt");

/// Tokens that cancel a label mention when they occur shortly before it.
const NEGATIONS: &[&str] = &["no", "not", "without", "never", "lack", "lacking", "absent", "nor"];
const NEGATION_WINDOW: usize = 3;

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?|[a-z]+").expect("static regex"))
}

fn stem(t: &str) -> String {
    if t.len() > 3 && t.ends_with('s') && !t.ends_with("ss") && !t.as_bytes()[0].is_ascii_digit() {
        t[..t.len() - 1].to_string()
    } else {
        t.to_string()
    }
}

/// Lower-cased word and number tokens with a light plural stem.
pub fn tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase().replace('_', " ");
    token_re().find_iter(&lower).map(|m| stem(m.as_str())).collect()
}

/// Label synonyms, keyed by label identifier. `none` entries are keyed per
/// category as `none@season` etc.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynonymTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymTable {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, phrases) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected `label = phrase; phrase`".into(),
            })?;
            let label = label.trim();
            if label.is_empty() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: "empty label".into(),
                });
            }
            entries
                .entry(label.to_string())
                .or_default()
                .extend(phrases.split(';').map(str::trim).filter(|p| !p.is_empty()).map(str::to_string));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn builtin() -> &'static SynonymTable {
        static TABLE: OnceLock<SynonymTable> = OnceLock::new();
        TABLE.get_or_init(|| SynonymTable::parse(BUILTIN_SYNONYMS, Path::new("data/synonyms.txt")).expect("builtin synonyms parse"))
    }

    fn phrases(&self, label: &str, context: Option<Category>) -> Vec<Vec<String>> {
        let mut out = vec![tokens(label)];
        if label == NONE_LABEL {
            for (key, list) in &self.entries {
                let Some(cat) = key.strip_prefix("none@") else { continue };
                if context.is_none_or(|c| category_key(c) == cat) {
                    out.extend(list.iter().map(|p| tokens(p)));
                }
            }
        } else if let Some(list) = self.entries.get(label) {
            out.extend(list.iter().map(|p| tokens(p)));
        }
        out.retain(|p| !p.is_empty());
        out
    }
}

fn category_key(c: Category) -> &'static str {
    match c {
        Category::Trend => "trend",
        Category::Season => "season",
        Category::Noise => "noise",
        Category::Local => "local",
    }
}

fn context_of(vocab: &[String]) -> Option<Category> {
    [Category::Trend, Category::Season, Category::Noise, Category::Local]
        .into_iter()
        .find(|c| {
            let v = c.vocabulary();
            vocab.iter().all(|l| v.contains(l))
        })
}

/// Labels of `vocab` mentioned in `answer`, sorted. Longer phrases claim
/// their tokens first; a mention preceded within three tokens by a
/// negation is dropped.
pub fn parse_categorical(answer: &str, vocab: &[String]) -> Vec<String> {
    parse_categorical_with(SynonymTable::builtin(), answer, vocab)
}

pub fn parse_categorical_with(table: &SynonymTable, answer: &str, vocab: &[String]) -> Vec<String> {
    let toks = tokens(answer);
    let context = if vocab.iter().any(|l| l == NONE_LABEL) { context_of(vocab) } else { None };
    let mut candidates: Vec<(usize, usize, &str)> = Vec::new();
    for label in vocab {
        for phrase in table.phrases(label, context) {
            if phrase.len() > toks.len() {
                continue;
            }
            for start in 0..=toks.len() - phrase.len() {
                if toks[start..start + phrase.len()] == phrase[..] {
                    candidates.push((start, phrase.len(), label));
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)).then(a.2.cmp(b.2)));
    let mut claimed = vec![false; toks.len()];
    let mut found = BTreeSet::new();
    for (start, len, label) in candidates {
        if claimed[start..start + len].iter().any(|c| *c) {
            continue;
        }
        claimed[start..start + len].iter_mut().for_each(|c| *c = true);
        let negated = toks[start.saturating_sub(NEGATION_WINDOW)..start]
            .iter()
            .any(|t| NEGATIONS.contains(&t.as_str()));
        if !negated {
            found.insert(label.to_string());
        }
    }
    found.into_iter().collect()
}

/// Groups named in a clustering answer: one group per `;`- or
/// line-separated chunk. A name already placed is not placed again.
pub fn parse_groups(answer: &str, vocab: &[String]) -> Vec<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut groups = Vec::new();
    for chunk in answer.split([';', '\n']) {
        let g: Vec<String> = parse_categorical(chunk, vocab)
            .into_iter()
            .filter(|n| seen.insert(n.clone()))
            .collect();
        if !g.is_empty() {
            groups.push(g);
        }
    }
    groups
}

/// The final numeral in `answer`.
pub fn parse_number(answer: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?").expect("static regex"));
    static THOUSANDS: OnceLock<Regex> = OnceLock::new();
    let th = THOUSANDS.get_or_init(|| Regex::new(r"(\d),(\d{3})\b").expect("static regex"));
    let mut text = answer.replace('\u{2212}', "-");
    loop {
        let next = th.replace_all(&text, "$1$2").into_owned();
        if next == text {
            break;
        }
        text = next;
    }
    let m = re.find_iter(&text).last()?;
    let mut v: f64 = m.as_str().parse().ok()?;
    let before = &text[..m.start()];
    if let Some(rest) = before.strip_suffix('-') {
        if !rest.chars().last().is_some_and(|c| c.is_alphanumeric()) {
            v = -v;
        }
    }
    Some(v)
}

/// Clamped relative accuracy. Labels within 1% of the value range of zero
/// are compared on that 1% scale instead.
pub fn relative_accuracy(answer: Option<f64>, label: f64, value_range: f64) -> f64 {
    let Some(a) = answer else { return 0.0 };
    if !a.is_finite() {
        return 0.0;
    }
    let delta = 0.01 * value_range.abs();
    let denom = if label.abs() < delta { delta } else { label.abs() };
    if denom == 0.0 {
        return if a == label { 1.0 } else { 0.0 };
    }
    (1.0 - (a - label).abs() / denom).max(0.0)
}

/// Set F1. Both empty scores 1.
pub fn f1(predicted: &[String], gold: &[String]) -> f64 {
    let p: BTreeSet<&String> = predicted.iter().collect();
    let g: BTreeSet<&String> = gold.iter().collect();
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let tp = p.intersection(&g).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / p.len() as f64;
    let recall = tp / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn pairs(groups: &[Vec<String>]) -> Vec<String> {
    let mut out = Vec::new();
    for g in groups {
        let mut g = g.clone();
        g.sort();
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                out.push(format!("{}\u{1f}{}", g[i], g[j]));
            }
        }
    }
    out
}

/// F1 over co-membership pairs of two partitions.
pub fn pair_f1(predicted: &[Vec<String>], gold: &[Vec<String>]) -> f64 {
    f1(&pairs(predicted), &pairs(gold))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub score: f64,
    pub unparseable: bool,
}

/// Scores the first standalone option token. Single-letter options must
/// appear in upper case, so the article "a" is not read as option A.
pub fn choice_accuracy(answer: &str, gold: &str, options: &[String]) -> ChoiceOutcome {
    let picked = answer
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .find_map(|t| {
            options.iter().find(|o| {
                if o.chars().count() == 1 {
                    t == o.as_str()
                } else {
                    t.eq_ignore_ascii_case(o)
                }
            })
        });
    match picked {
        Some(p) => ChoiceOutcome {
            score: if p == gold { 1.0 } else { 0.0 },
            unparseable: false,
        },
        None => ChoiceOutcome {
            score: 0.0,
            unparseable: true,
        },
    }
}

fn token_matches(answer_tok: &str, kw_tok: &str) -> bool {
    let numeric = |t: &str| t.parse::<f64>().ok();
    match (numeric(kw_tok), numeric(answer_tok)) {
        (Some(k), Some(a)) => k == a,
        (Some(_), None) | (None, Some(_)) => false,
        (None, None) => strsim::levenshtein(answer_tok, kw_tok) <= 1,
    }
}

/// Fraction of keywords present in `answer`. A keyword is present when
/// each of its word tokens is within edit distance 1 of some answer token;
/// number tokens must match exactly.
pub fn keyword_score(answer: &str, keywords: &[String]) -> f64 {
    if keywords.is_empty() {
        return 1.0;
    }
    let toks = tokens(answer);
    let hits = keywords
        .iter()
        .filter(|k| {
            let kt = tokens(k);
            !kt.is_empty() && kt.iter().all(|t| toks.iter().any(|a| token_matches(a, t)))
        })
        .count();
    hits as f64 / keywords.len() as f64
}
