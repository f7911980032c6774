use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use super::{stored_form, Corpus, CorpusRecord, SeriesEntry, Stage};
use crate::describe::{
    gen_alignment_qa, gen_instruct_qa, gen_mts_qa, gen_numeric_qa, gen_reasoning_qa, QaRecord, TaskKind,
};
use crate::error::{Error, Result};
use crate::genpool::{
    build_correlation_group, sample_pool, select_subset, AttributePool, AttributeSubset, CorrelationKind,
    CorrelationPool, RuleBasedSelector, MAX_LENGTH, MIN_LENGTH,
};
use crate::rng::{split_seed, SeedStream};
use crate::synth::{render, NormalizedSeries, TimeSeries};
use crate::taxonomy::MetricSpec;
use crate::tsevol::{run_evolution, EvolutionConfig, EvolutionRun, MockGenerator, TextGenerator};

/// How `alignment_mix_fraction` is read for SFT corpora.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Sample the fraction of the source alignment corpus.
    #[default]
    OfAlignment,
    /// Size the sample so it makes up the fraction of the final corpus.
    OfSft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub stage: Stage,
    pub uts: usize,
    pub mts_shape: usize,
    pub mts_local: usize,
    pub tsevol: usize,
    pub instruct_follow: usize,
    pub alignment_mix_fraction: f64,
    pub mix_mode: MixMode,
    /// Inclusive series length range.
    pub length_range: [usize; 2],
    /// Inclusive range of series per multivariate record.
    pub mts_series: [usize; 2],
    pub seed: u64,
    pub workers: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            stage: Stage::Alignment,
            uts: 0,
            mts_shape: 0,
            mts_local: 0,
            tsevol: 0,
            instruct_follow: 0,
            alignment_mix_fraction: 0.30,
            mix_mode: MixMode::OfAlignment,
            length_range: [MIN_LENGTH, MAX_LENGTH],
            mts_series: [3, 5],
            seed: 0,
            workers: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.length_range;
        if lo < MIN_LENGTH || hi > MAX_LENGTH || lo > hi {
            return Err(Error::arg(format!("length_range [{lo}, {hi}] must lie within [{MIN_LENGTH}, {MAX_LENGTH}]")));
        }
        let [a, b] = self.mts_series;
        if a < 3 || a > b || b > 16 {
            return Err(Error::arg(format!("mts_series [{a}, {b}] must satisfy 3 <= lo <= hi <= 16")));
        }
        if !(0.0..1.0).contains(&self.alignment_mix_fraction) {
            return Err(Error::arg("alignment_mix_fraction must be in [0, 1)"));
        }
        match self.stage {
            Stage::Alignment if self.tsevol > 0 || self.instruct_follow > 0 => {
                Err(Error::arg("alignment stage takes no tsevol or instruct_follow records"))
            }
            Stage::Sft if self.uts + self.mts_shape + self.mts_local > 0 => {
                Err(Error::arg("sft stage draws alignment records from a source corpus, not uts/mts counts"))
            }
            _ => Ok(()),
        }
    }

    fn workers(&self) -> usize {
        if self.workers == 0 {
            crate::par::default_workers()
        } else {
            self.workers
        }
    }
}

/// Everything besides the spec that composition may need.
pub struct ComposeInputs<'a> {
    /// Source for the SFT alignment mix.
    pub alignment: Option<&'a Corpus>,
    pub generator: &'a dyn TextGenerator,
    pub evolution: EvolutionConfig,
    pub catalog: Vec<MetricSpec>,
}

impl<'a> ComposeInputs<'a> {
    pub fn new(catalog: Vec<MetricSpec>, generator: &'a dyn TextGenerator) -> Self {
        Self {
            alignment: None,
            generator,
            evolution: EvolutionConfig::default(),
            catalog,
        }
    }
}

/// Offline generator for callers that have none.
pub static MOCK: MockGenerator = MockGenerator { error_rate: 0.15 };

const MTS_ATTEMPTS: u64 = 64;
const UTS_TASK_ATTEMPTS: usize = 16;

struct Sampled {
    pools: Vec<AttributePool>,
    normalized: Vec<NormalizedSeries>,
    series: Vec<TimeSeries>,
}

impl Sampled {
    fn of(pools: Vec<AttributePool>) -> Self {
        let (normalized, series) = pools.iter().map(|p| stored_form(&render(p))).unzip();
        Self {
            pools,
            normalized,
            series,
        }
    }

    fn record(&self, qa: QaRecord, stage: Stage, corrs: &[CorrelationPool], seed: u64, dataset: &str) -> Result<CorpusRecord> {
        let mut r = CorpusRecord::from_qa(qa, stage, &self.pools, &self.normalized, corrs, seed)?;
        r.provenance.dataset = Some(dataset.to_string());
        Ok(r)
    }
}

fn subset_for(metric: &MetricSpec) -> Result<AttributeSubset> {
    Ok(select_subset(metric, &RuleBasedSelector)?.subset)
}

fn uts_pool(catalog: &[MetricSpec], spec: &CorpusSpec, rng: &mut SeedStream) -> Result<AttributePool> {
    let metric = rng.pick(catalog);
    let length = rng.int_in(spec.length_range[0], spec.length_range[1]);
    sample_pool(&subset_for(metric)?, length, rng.next_u64())
}

fn uts_record(catalog: &[MetricSpec], spec: &CorpusSpec, seed: u64) -> Result<CorpusRecord> {
    let mut rng = SeedStream::new(seed);
    let s = Sampled::of(vec![uts_pool(catalog, spec, &mut rng)?]);
    let (pool, series) = (&s.pools[0], &s.series[0]);
    for _ in 0..UTS_TASK_ATTEMPTS {
        let qa_seed = rng.next_u64();
        let qa = if rng.chance(0.5) {
            Some(gen_alignment_qa(pool, series, *rng.pick(TaskKind::ALIGNMENT), qa_seed)?)
        } else {
            gen_numeric_qa(pool, series, *rng.pick(TaskKind::NUMERIC), qa_seed)?
        };
        if let Some(qa) = qa {
            return s.record(qa, Stage::Alignment, &[], seed, "uts");
        }
    }
    let qa = gen_alignment_qa(pool, series, TaskKind::Trend, rng.next_u64())?;
    s.record(qa, Stage::Alignment, &[], seed, "uts")
}

fn mts_attempt(
    kind: CorrelationKind,
    catalog: &[MetricSpec],
    spec: &CorpusSpec,
    rng: &mut SeedStream,
) -> Result<(Sampled, Vec<CorrelationPool>, TaskKind)> {
    let total = rng.int_in(spec.mts_series[0], spec.mts_series[1].min(catalog.len()));
    let task = if total >= 4 && rng.chance(0.5) {
        TaskKind::Cluster
    } else {
        TaskKind::Correlation
    };
    let sizes = match task {
        TaskKind::Cluster => {
            let a = rng.int_in(2, total - 2);
            vec![a, rng.int_in(2, total - a)]
        }
        _ => vec![rng.int_in(2, total - 1)],
    };
    let length = rng.int_in(spec.length_range[0], spec.length_range[1]);
    let metrics = rng.sample_indices(catalog.len(), total);
    let mut pools = Vec::with_capacity(total);
    let mut corrs = Vec::new();
    let mut next = 0;
    for size in sizes {
        let subsets = metrics[next..next + size]
            .iter()
            .map(|i| subset_for(&catalog[*i]))
            .collect::<Result<Vec<_>>>()?;
        next += size;
        let (corr, members) = build_correlation_group(kind, &subsets, length, rng.next_u64())?;
        corrs.push(corr);
        pools.extend(members);
    }
    for i in &metrics[next..] {
        pools.push(sample_pool(&subset_for(&catalog[*i])?, length, rng.next_u64())?);
    }
    let order = rng.sample_indices(total, total);
    let pools: Vec<AttributePool> = order.iter().map(|i| pools[*i].clone()).collect();
    Ok((Sampled::of(pools), corrs, task))
}

/// Multivariate record. Draws are repeated until the gold grouping is
/// unambiguous.
fn mts_record(kind: CorrelationKind, catalog: &[MetricSpec], spec: &CorpusSpec, seed: u64) -> Result<CorpusRecord> {
    let dataset = match kind {
        CorrelationKind::Shape => "mts_shape",
        CorrelationKind::Local => "mts_local",
    };
    for attempt in 0..MTS_ATTEMPTS {
        let mut rng = SeedStream::derived(seed, attempt);
        let (s, corrs, task) = mts_attempt(kind, catalog, spec, &mut rng)?;
        match gen_mts_qa(&corrs, &s.pools, &s.series, task, rng.next_u64()) {
            Ok(qa) => return s.record(qa, Stage::Alignment, &corrs, seed, dataset),
            Err(Error::Validation(msg)) => log::debug!("{dataset} seed {seed} attempt {attempt}: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Err(Error::invalid(format!(
        "no unambiguous {dataset} record after {MTS_ATTEMPTS} attempts (seed {seed})"
    )))
}

fn seed_record(catalog: &[MetricSpec], spec: &CorpusSpec, seed: u64) -> Result<(QaRecord, Sampled)> {
    let mut rng = SeedStream::new(seed);
    let s = Sampled::of(vec![uts_pool(catalog, spec, &mut rng)?]);
    for _ in 0..UTS_TASK_ATTEMPTS {
        let task = *rng.pick(TaskKind::REASONING);
        if let Some(qa) = gen_reasoning_qa(&s.pools[0], &s.series[0], task, rng.next_u64())? {
            return Ok((qa, s));
        }
    }
    let qa = gen_alignment_qa(&s.pools[0], &s.series[0], TaskKind::Local, rng.next_u64())?;
    Ok((qa, s))
}

fn evolved_records(spec: &CorpusSpec, inputs: &ComposeInputs<'_>, need: usize, master: u64) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::with_capacity(need);
    let mut batch = 0u64;
    while out.len() < need {
        if batch >= 64 {
            return Err(Error::invalid(format!(
                "evolution produced only {} of {need} records after {batch} batches",
                out.len()
            )));
        }
        let batch_seed = split_seed(master, batch);
        let size = (need - out.len()).max(8);
        let seeds: Vec<u64> = (0..size as u64).map(|i| split_seed(batch_seed, i)).collect();
        let made = crate::par::map_ordered(&seeds, spec.workers(), |_, s| seed_record(&inputs.catalog, spec, *s));
        let mut qas = Vec::with_capacity(size);
        let mut data = Vec::with_capacity(size);
        for m in made {
            let (qa, s) = m?;
            qas.push(qa);
            data.push(s);
        }
        let pools: Vec<AttributePool> = data.iter().map(|s| s.pools[0].clone()).collect();
        let run = run_evolution(&qas, &pools, &[], inputs.generator, &inputs.evolution, split_seed(batch_seed, u64::MAX))?;
        log::info!(
            "evolution batch {batch}: {} accepted of {} attempted ({} failed)",
            run.accepted,
            run.attempted,
            run.failed
        );
        if run.attempted > 0 && run.failed == run.attempted {
            let first = run.errors.first().cloned().unwrap_or_default();
            return Err(Error::Generator(format!("every evolution step failed; first error: {first}")));
        }
        for qa in run.records {
            if out.len() == need {
                break;
            }
            let Some(s) = data.iter().find(|s| s.pools[0].id == qa.series_refs[0]) else {
                continue;
            };
            let seed = split_seed(batch_seed, out.len() as u64);
            out.push(s.record(qa, Stage::Sft, &[], seed, "tsevol")?);
        }
        batch += 1;
    }
    Ok(out)
}

/// Evolves every series-bearing record of `seeds` and packages the
/// accepted results as an SFT corpus. Records keep the seed's series.
pub fn evolve_corpus(
    seeds: &Corpus,
    generator: &dyn TextGenerator,
    cfg: &EvolutionConfig,
    master_seed: u64,
) -> Result<(Corpus, EvolutionRun)> {
    let sources: Vec<&CorpusRecord> = seeds.records.iter().filter(|r| !r.series.is_empty()).collect();
    let qas: Vec<QaRecord> = sources.iter().map(|r| r.qa()).collect();
    let mut entries: BTreeMap<&str, &SeriesEntry> = BTreeMap::new();
    let mut corrs: Vec<CorrelationPool> = Vec::new();
    for r in &sources {
        for s in &r.series {
            entries.entry(s.pool.id.as_str()).or_insert(s);
        }
        for c in &r.correlation_pool {
            if !corrs.iter().any(|k| k.group_id == c.group_id) {
                corrs.push(c.clone());
            }
        }
    }
    let pools: Vec<AttributePool> = entries.values().map(|s| s.pool.clone()).collect();
    let run = run_evolution(&qas, &pools, &corrs, generator, cfg, master_seed)?;
    let mut records = Vec::with_capacity(run.records.len());
    for (i, qa) in run.records.iter().enumerate() {
        let mut mine = Vec::with_capacity(qa.series_refs.len());
        for id in &qa.series_refs {
            mine.push(*entries.get(id.as_str()).ok_or_else(|| Error::invalid(format!("evolved record {} cites unknown series {id}", qa.id)))?);
        }
        let pools: Vec<AttributePool> = mine.iter().map(|s| s.pool.clone()).collect();
        let normalized: Vec<NormalizedSeries> = mine.iter().map(|s| s.normalized()).collect();
        let group: Vec<CorrelationPool> = corrs
            .iter()
            .filter(|c| c.members.iter().all(|m| qa.series_refs.contains(m)))
            .cloned()
            .collect();
        let mut r = CorpusRecord::from_qa(qa.clone(), Stage::Sft, &pools, &normalized, &group, split_seed(master_seed, i as u64))?;
        r.provenance.dataset = Some("tsevol".into());
        records.push(r);
    }
    Ok((Corpus::new(Stage::Sft, master_seed, records), run))
}

fn mix_count(spec: &CorpusSpec, source: usize, own: usize) -> usize {
    let f = spec.alignment_mix_fraction;
    let n = match spec.mix_mode {
        MixMode::OfAlignment => (f * source as f64).round(),
        MixMode::OfSft => (f / (1.0 - f) * own as f64).round(),
    };
    (n as usize).min(source)
}

/// Builds a corpus. Deterministic in `spec` (and the generator, for SFT).
pub fn compose_corpus(spec: &CorpusSpec, inputs: &ComposeInputs<'_>) -> Result<Corpus> {
    spec.validate()?;
    if inputs.catalog.len() < spec.mts_series[1].min(3) {
        return Err(Error::arg("metric catalog too small"));
    }
    let workers = spec.workers();
    let master = spec.seed;
    let mut records = Vec::new();
    match spec.stage {
        Stage::Alignment => {
            let plan: [(u64, usize); 3] = [(1, spec.uts), (2, spec.mts_shape), (3, spec.mts_local)];
            for (tag, count) in plan {
                let base = split_seed(master, tag);
                let seeds: Vec<u64> = (0..count as u64).map(|i| split_seed(base, i)).collect();
                let made = crate::par::map_ordered(&seeds, workers, |_, s| match tag {
                    1 => uts_record(&inputs.catalog, spec, *s),
                    2 => mts_record(CorrelationKind::Shape, &inputs.catalog, spec, *s),
                    _ => mts_record(CorrelationKind::Local, &inputs.catalog, spec, *s),
                });
                for r in made {
                    records.push(r?);
                }
            }
        }
        Stage::Sft => {
            let source = match inputs.alignment {
                Some(c) => c.records.as_slice(),
                None if spec.alignment_mix_fraction > 0.0 => {
                    return Err(Error::arg("sft stage with an alignment mix needs a source alignment corpus"))
                }
                None => &[],
            };
            records.extend(evolved_records(spec, inputs, spec.tsevol, split_seed(master, 4))?);
            let base = split_seed(master, 5);
            for i in 0..spec.instruct_follow as u64 {
                let seed = split_seed(base, i);
                let qa = gen_instruct_qa(seed);
                let mut r = CorpusRecord::from_qa(qa, Stage::Sft, &[], &[], &[], seed)?;
                r.provenance.dataset = Some("instruct_follow".into());
                records.push(r);
            }
            let m = mix_count(spec, source.len(), records.len());
            let mut picked = SeedStream::new(split_seed(master, 6)).sample_indices(source.len(), m);
            picked.sort_unstable();
            records.extend(picked.into_iter().map(|i| source[i].clone()));
        }
    }
    let mut ids = std::collections::BTreeSet::new();
    for r in &records {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::invalid(format!("duplicate record id {}", r.id)));
        }
    }
    Ok(Corpus::new(spec.stage, master, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::metric_catalog;

    fn inputs() -> ComposeInputs<'static> {
        ComposeInputs::new(metric_catalog(None).unwrap(), &MOCK)
    }

    fn alignment(n: usize, seed: u64) -> Corpus {
        let spec = CorpusSpec {
            uts: n,
            mts_shape: n,
            mts_local: n,
            length_range: [64, 256],
            seed,
            ..CorpusSpec::default()
        };
        compose_corpus(&spec, &inputs()).unwrap()
    }

    #[test]
    fn alignment_counts_and_ratio() {
        let c = alignment(20, 1);
        assert_eq!(c.records.len(), 60);
        let m = &c.manifest;
        assert_eq!(m.datasets["uts"], 20);
        assert_eq!(m.datasets["mts_shape"] + m.datasets["mts_local"], 2 * m.datasets["uts"]);
        for r in &c.records {
            assert!(r.verify().is_empty(), "{}: {:?}", r.id, r.verify());
        }
    }

    #[test]
    fn sft_mix_arithmetic() {
        let source = alignment(67, 2);
        assert_eq!(source.records.len(), 201);
        let source = Corpus::new(Stage::Alignment, 2, source.records[..200].to_vec());
        let spec = CorpusSpec {
            stage: Stage::Sft,
            tsevol: 100,
            instruct_follow: 20,
            length_range: [64, 256],
            seed: 3,
            ..CorpusSpec::default()
        };
        let mut inp = inputs();
        inp.alignment = Some(&source);
        let c = compose_corpus(&spec, &inp).unwrap();
        assert_eq!(c.records.len(), 180);
        assert_eq!(c.manifest.datasets["tsevol"], 100);
        assert_eq!(c.manifest.datasets["instruct_follow"], 20);
        assert_eq!(c.manifest.datasets["alignment_mix"], 60);
        for r in &c.records {
            assert!(r.verify().is_empty(), "{}: {:?}", r.id, r.verify());
        }
    }

    #[test]
    fn sft_mix_without_source_is_an_error() {
        let spec = CorpusSpec {
            stage: Stage::Sft,
            instruct_follow: 2,
            ..CorpusSpec::default()
        };
        assert!(matches!(compose_corpus(&spec, &inputs()), Err(Error::Argument(_))));
    }

    #[test]
    fn mix_modes() {
        let spec = CorpusSpec {
            stage: Stage::Sft,
            ..CorpusSpec::default()
        };
        assert_eq!(mix_count(&spec, 1050, 294), 315);
        let of_sft = CorpusSpec {
            mix_mode: MixMode::OfSft,
            ..spec
        };
        // 30% of the final corpus: 294 own records + 126 mixed = 420
        assert_eq!(mix_count(&of_sft, 1050, 294), 126);
    }

    #[test]
    fn evolve_corpus_keeps_series() {
        let seeds = alignment(4, 8);
        let cfg = EvolutionConfig {
            rounds: 2,
            ..EvolutionConfig::default()
        };
        let (out, run) = evolve_corpus(&seeds, &MOCK, &cfg, 5).unwrap();
        assert_eq!(out.records.len(), run.accepted);
        assert!(run.accepted > 0);
        for r in &out.records {
            assert!(r.verify().is_empty(), "{}: {:?}", r.id, r.verify());
            assert_eq!(r.dataset(), Some("tsevol"));
        }
        let (again, _) = evolve_corpus(&seeds, &MOCK, &cfg, 5).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn alignment_stage_rejects_sft_counts() {
        let spec = CorpusSpec {
            tsevol: 1,
            ..CorpusSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
