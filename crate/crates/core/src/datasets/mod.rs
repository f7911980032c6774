//! Prompt documents, corpus records and their JSONL persistence.

mod compose;
mod prompt;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use compose::{compose_corpus, evolve_corpus, ComposeInputs, CorpusSpec, MixMode, MOCK};
pub use prompt::{assemble_prompt, PromptDocument, Segment, SeriesMeta};

use crate::describe::{verify_gold, GoldLabels, Provenance, QaRecord, QueryContext, TaskKind};
use crate::error::{Error, Result};
use crate::genpool::{AttributePool, CorrelationPool};
use crate::synth::{denormalize, normalize, NormalizedSeries, TimeSeries};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Alignment,
    Sft,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Alignment => "alignment",
            Stage::Sft => "sft",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub name: String,
    pub length: usize,
    /// Normalized to [0, 1].
    pub values: Vec<f64>,
    pub value_scaling: f64,
    pub value_offset: f64,
    pub pool: AttributePool,
}

impl SeriesEntry {
    pub fn normalized(&self) -> NormalizedSeries {
        NormalizedSeries {
            values: self.values.clone(),
            value_scaling: self.value_scaling,
            value_offset: self.value_offset,
        }
    }

    /// Values in metric units.
    pub fn denormalized(&self) -> TimeSeries {
        denormalize(&self.normalized(), &self.name)
    }

    pub fn meta(&self) -> SeriesMeta {
        SeriesMeta {
            name: self.name.clone(),
            length: self.length,
            value_scaling: self.value_scaling,
            value_offset: self.value_offset,
        }
    }
}

/// One JSONL line. Unknown fields survive a read/write round trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub stage: Stage,
    pub task: TaskKind,
    pub question: String,
    pub answer: String,
    pub gold_labels: GoldLabels,
    pub series: Vec<SeriesEntry>,
    /// Correlation groups among `series`; more than one for clustering.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlation_pool: Vec<CorrelationPool>,
    pub prompt_segments: Vec<Segment>,
    pub provenance: Provenance,
    pub seed: u64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Round-trips `series` through normalization, so everything derived from
/// the result matches what a reader of the stored record sees.
pub fn stored_form(series: &TimeSeries) -> (NormalizedSeries, TimeSeries) {
    let n = normalize(series);
    let back = denormalize(&n, &series.metric);
    (n, back)
}

impl CorpusRecord {
    /// Builds a record from a Q&A item and the data it refers to. `series`
    /// must be the stored form (see [`stored_form`]) in prompt order.
    pub fn from_qa(
        qa: QaRecord,
        stage: Stage,
        pools: &[AttributePool],
        normalized: &[NormalizedSeries],
        correlations: &[CorrelationPool],
        seed: u64,
    ) -> Result<Self> {
        if pools.len() != normalized.len() || pools.len() != qa.series_refs.len() {
            return Err(Error::arg(format!(
                "record {} has {} refs, {} pools, {} series",
                qa.id,
                qa.series_refs.len(),
                pools.len(),
                normalized.len()
            )));
        }
        let series: Vec<SeriesEntry> = pools
            .iter()
            .zip(normalized)
            .map(|(p, n)| SeriesEntry {
                name: p.metric.name.clone(),
                length: n.values.len(),
                values: n.values.clone(),
                value_scaling: n.value_scaling,
                value_offset: n.value_offset,
                pool: p.clone(),
            })
            .collect();
        let metas: Vec<SeriesMeta> = series.iter().map(SeriesEntry::meta).collect();
        let doc = assemble_prompt(&qa.question, &metas)?;
        Ok(Self {
            id: qa.id,
            stage,
            task: qa.task,
            question: qa.question,
            answer: qa.answer,
            gold_labels: qa.gold,
            series,
            correlation_pool: correlations.to_vec(),
            prompt_segments: doc.segments,
            provenance: qa.provenance,
            seed,
            extra: Map::new(),
        })
    }

    pub fn pools(&self) -> Vec<AttributePool> {
        self.series.iter().map(|s| s.pool.clone()).collect()
    }

    pub fn values(&self) -> Vec<TimeSeries> {
        self.series.iter().map(SeriesEntry::denormalized).collect()
    }

    pub fn prompt(&self) -> PromptDocument {
        PromptDocument {
            segments: self.prompt_segments.clone(),
            series: self.series.iter().map(SeriesEntry::meta).collect(),
        }
    }

    pub fn qa(&self) -> QaRecord {
        QaRecord {
            id: self.id.clone(),
            task: self.task,
            question: self.question.clone(),
            answer: self.answer.clone(),
            gold: self.gold_labels.clone(),
            series_refs: self.series.iter().map(|s| s.pool.id.clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn dataset(&self) -> Option<&str> {
        self.provenance.dataset.as_deref()
    }

    /// Re-derives the gold labels from the embedded data and checks the
    /// prompt structure. Returns the disagreements.
    pub fn verify(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if let Err(e) = self.prompt().validate() {
            problems.push(e.to_string());
        }
        for s in &self.series {
            if s.values.len() != s.length || s.pool.length != s.length {
                problems.push(format!("series {} length disagrees with its values or pool", s.name));
            }
        }
        if !problems.is_empty() {
            return problems;
        }
        let pools = self.pools();
        let values = self.values();
        let ctx = QueryContext {
            pools: &pools,
            series: &values,
            correlations: &self.correlation_pool,
        };
        problems.extend(verify_gold(&self.qa(), &ctx));
        problems
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub stage: Stage,
    pub total: usize,
    /// Records per source dataset; alignment records mixed into an SFT
    /// corpus count as `alignment_mix`.
    pub datasets: BTreeMap<String, usize>,
    pub tasks: BTreeMap<String, usize>,
    pub seed: u64,
    pub toolkit_version: String,
}

impl Manifest {
    pub fn of(stage: Stage, seed: u64, records: &[CorpusRecord]) -> Self {
        let mut datasets = BTreeMap::new();
        let mut tasks = BTreeMap::new();
        for r in records {
            let d = if stage == Stage::Sft && r.stage == Stage::Alignment {
                "alignment_mix".to_string()
            } else {
                r.dataset().unwrap_or("unknown").to_string()
            };
            *datasets.entry(d).or_insert(0) += 1;
            *tasks.entry(r.task.id().to_string()).or_insert(0) += 1;
        }
        Self {
            schema: SCHEMA_VERSION,
            stage,
            total: records.len(),
            datasets,
            tasks,
            seed,
            toolkit_version: crate::TOOLKIT_VERSION.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn new(stage: Stage, seed: u64, records: Vec<CorpusRecord>) -> Self {
        let manifest = Manifest::of(stage, seed, &records);
        Self { records, manifest }
    }

    pub fn stage(&self) -> Stage {
        self.manifest.stage
    }

    pub fn find(&self, id: &str) -> Option<&CorpusRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// `<dir>/<stem>.manifest.json` next to `<dir>/<stem>.jsonl`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in &corpus.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let mut m = BufWriter::new(File::create(manifest_path(path))?);
    serde_json::to_writer_pretty(&mut m, &corpus.manifest)?;
    m.write_all(b"\n")?;
    m.flush()?;
    Ok(())
}

/// Reads a corpus and re-verifies every record against its embedded
/// pools. Any failure names the offending line.
pub fn read_jsonl(path: &Path) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        let problems = record.verify();
        if !problems.is_empty() {
            return Err(parse_err(i + 1, format!("record {} fails verification: {}", record.id, problems.join("; "))));
        }
        records.push(record);
    }
    let mpath = manifest_path(path);
    let manifest = if mpath.exists() {
        let text = std::fs::read_to_string(&mpath)?;
        let stored: Manifest = serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e.to_string()))?;
        if stored.schema != SCHEMA_VERSION {
            return Err(Error::invalid(format!("{}: unsupported schema {}", mpath.display(), stored.schema)));
        }
        let actual = Manifest::of(stored.stage, stored.seed, &records);
        if actual.total != stored.total || actual.datasets != stored.datasets || actual.tasks != stored.tasks {
            return Err(Error::invalid(format!("{}: counts do not match the records", mpath.display())));
        }
        stored
    } else {
        let stage = records.first().map_or(Stage::Alignment, |r| r.stage);
        Manifest::of(stage, 0, &records)
    };
    Ok(Corpus { records, manifest })
}
