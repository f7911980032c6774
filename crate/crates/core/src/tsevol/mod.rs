//! Evolution of seed Q&A records through a text generator, filtered by the
//! attribute-based eliminator.

mod generator;

use serde::{Deserialize, Serialize};

pub use generator::{ChatClient, ChatEndpoint, DecodeParams, MockGenerator, RemoteGenerator, TextGenerator};

use crate::describe::{
    correlation_facts, fact_truth, pool_facts, Fact, FactKind, FactValue, GoldLabels, LineageStep, Provenance, QaRecord,
    TaskKind, SERIES_SLOT,
};
use crate::error::{Error, Result};
use crate::genpool::{AttributePool, CorrelationPool};
use crate::rng::{split_seed, stable_hash, SeedStream};

/// Generator attempts per candidate before giving up.
pub const DEFAULT_RETRIES: usize = 3;
/// Relative tolerance for numeric claims.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 0.05;
/// Noise allowance for value-unit claims, in noise standard deviations.
pub const DEFAULT_NOISE_SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionType {
    InDepth,
    InBreadth,
    ConditionAdd,
    Concretize,
    Reasoning,
    Situation,
}

impl EvolutionType {
    pub const ALL: [EvolutionType; 6] = [
        EvolutionType::InDepth,
        EvolutionType::InBreadth,
        EvolutionType::ConditionAdd,
        EvolutionType::Concretize,
        EvolutionType::Reasoning,
        EvolutionType::Situation,
    ];

    pub fn id(self) -> &'static str {
        match self {
            EvolutionType::InDepth => "in_depth",
            EvolutionType::InBreadth => "in_breadth",
            EvolutionType::ConditionAdd => "condition_add",
            EvolutionType::Concretize => "concretize",
            EvolutionType::Reasoning => "reasoning",
            EvolutionType::Situation => "situation",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id)
    }

    fn instruction(self) -> &'static str {
        match self {
            EvolutionType::InDepth => {
                "Make the question deeper: require more analysis steps while staying answerable from the series."
            }
            EvolutionType::InBreadth => {
                "Broaden the question so it also covers the additional attributes listed below."
            }
            EvolutionType::ConditionAdd => "Add a condition built from the additional attributes and ask whether a conclusion follows.",
            EvolutionType::Concretize => "Make the question more concrete, asking for exact values where the attributes give them.",
            EvolutionType::Reasoning => "Turn the question into a reasoning question that asks what explains the observed behaviour.",
            EvolutionType::Situation => "Place the question in a realistic operational situation and ask how to interpret the data.",
        }
    }

    /// Task tag of a record evolved from a `parent` task.
    pub fn task(self, parent: TaskKind) -> TaskKind {
        match self {
            EvolutionType::InDepth | EvolutionType::Concretize => parent,
            EvolutionType::InBreadth | EvolutionType::Situation => TaskKind::Inductive,
            EvolutionType::ConditionAdd => TaskKind::Deductive,
            EvolutionType::Reasoning => TaskKind::Causal,
        }
    }
}

impl std::fmt::Display for EvolutionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Sampling weights over evolution types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionMix {
    pub weights: Vec<(EvolutionType, f64)>,
}

impl Default for EvolutionMix {
    fn default() -> Self {
        Self {
            weights: EvolutionType::ALL.iter().map(|e| (*e, 1.0)).collect(),
        }
    }
}

impl EvolutionMix {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::arg("evolution mix weights must be finite and non-negative"));
        }
        if self.weights.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return Err(Error::arg("evolution mix has no positive weight"));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut SeedStream) -> EvolutionType {
        let w: Vec<f64> = self.weights.iter().map(|(_, w)| *w).collect();
        self.weights[rng.weighted(&w)].0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateQa {
    pub question: String,
    pub answer: String,
    pub claimed_facts: Vec<Fact>,
    pub lineage: LineageStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub fact: Fact,
    pub truth: Option<FactValue>,
    pub deviation: Option<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationVerdict {
    pub accepted: bool,
    pub reasons: Vec<Rejection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EliminationTolerances {
    pub relative: f64,
    pub noise_sigmas: f64,
}

impl Default for EliminationTolerances {
    fn default() -> Self {
        Self {
            relative: DEFAULT_RELATIVE_TOLERANCE,
            noise_sigmas: DEFAULT_NOISE_SIGMAS,
        }
    }
}

/// Samples `k` facts without replacement across `pools` (and the
/// correlation group, when given). Asking for more than exist returns all.
pub fn inject_attributes(pools: &[&AttributePool], corr: Option<&CorrelationPool>, k: usize, seed: u64) -> Result<Vec<Fact>> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    if pools.is_empty() {
        return Err(Error::arg("no pools to inject from"));
    }
    let mut all: Vec<Fact> = pools.iter().enumerate().flat_map(|(i, p)| pool_facts(p, i)).collect();
    if let Some(c) = corr {
        let idx: Vec<usize> = c
            .members
            .iter()
            .filter_map(|m| pools.iter().position(|p| &p.id == m))
            .collect();
        all.extend(correlation_facts(c, &idx));
    }
    if k >= all.len() {
        return Ok(all);
    }
    let mut picked = SeedStream::new(seed).sample_indices(all.len(), k);
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| all[i].clone()).collect())
}

fn build_prompt(seed: &QaRecord, etype: EvolutionType, facts: &[Fact], attempt: usize) -> Result<String> {
    use generator::{ANSWER_TAG, ETYPE_TAG, FACTS_HEADER, QUESTION_TAG};
    let mut lines = Vec::new();
    for f in facts {
        lines.push(serde_json::to_string(f)?);
    }
    let slots = seed.question.matches(SERIES_SLOT).count();
    Ok(format!(
        "You rewrite question-answer pairs about time series into harder or broader ones.\n\
         {ETYPE_TAG}{etype}\n\
         Instruction: {}\n\
         \n\
         {QUESTION_TAG}{}\n\
         {ANSWER_TAG}{}\n\
         \n\
         {FACTS_HEADER}\n\
         {}\n\
         \n\
         Each attribute's `series` field counts the {SERIES_SLOT} placeholders from 0. \
         Keep all {slots} {SERIES_SLOT} placeholder(s) of the seed question. \
         Reply in exactly this format, one item per line:\n\
         QUESTION: <new question>\n\
         ANSWER: <new answer>\n\
         FACTS: <JSON array restating every attribute your question or answer relies on, with the fields used above>\n\
         (attempt {attempt})\n",
        etype.instruction(),
        seed.question.replace('\n', " "),
        seed.answer.replace('\n', " "),
        lines.join("\n"),
    ))
}

fn field<'a>(raw: &'a str, tag: &str) -> Option<&'a str> {
    raw.lines().find_map(|l| l.trim_start().strip_prefix(tag)).map(str::trim)
}

fn parse_candidate(raw: &str, slots: usize) -> std::result::Result<(String, String, Vec<Fact>), String> {
    let question = field(raw, "QUESTION:").ok_or("missing QUESTION line")?;
    let answer = field(raw, "ANSWER:").ok_or("missing ANSWER line")?;
    let facts = field(raw, "FACTS:").ok_or("missing FACTS line")?;
    let facts: Vec<Fact> = serde_json::from_str(facts).map_err(|e| format!("FACTS is not a fact list: {e}"))?;
    if question.is_empty() || answer.is_empty() {
        return Err("empty question or answer".into());
    }
    let found = question.matches(SERIES_SLOT).count();
    if found != slots {
        return Err(format!("question has {found} series placeholder(s), expected {slots}"));
    }
    Ok((question.to_string(), answer.to_string(), facts))
}

/// One evolution step. Retries the generator up to `retries` times on
/// failure or unparseable output.
pub fn evolve(
    seed: &QaRecord,
    etype: EvolutionType,
    injected: &[Fact],
    gen: &dyn TextGenerator,
    params: &DecodeParams,
    retries: usize,
    round: usize,
) -> Result<CandidateQa> {
    let slots = seed.question.matches(SERIES_SLOT).count();
    if slots != seed.series_refs.len() {
        return Err(Error::arg(format!(
            "seed {} has {slots} placeholder(s) for {} series",
            seed.id,
            seed.series_refs.len()
        )));
    }
    let attempts = retries.max(1);
    let mut last = String::new();
    let mut message = String::new();
    for attempt in 0..attempts {
        let prompt = build_prompt(seed, etype, injected, attempt)?;
        match gen.complete(&prompt, params) {
            Ok(raw) => match parse_candidate(&raw, slots) {
                Ok((question, answer, claimed_facts)) => {
                    return Ok(CandidateQa {
                        question,
                        answer,
                        claimed_facts,
                        lineage: LineageStep {
                            parent: seed.id.clone(),
                            evolution: etype,
                            round,
                        },
                    })
                }
                Err(e) => {
                    message = e;
                    last = raw;
                }
            },
            Err(e) => message = e.to_string(),
        }
        log::debug!("evolution of {} attempt {attempt} failed: {message}", seed.id);
    }
    Err(Error::Evolution {
        attempts,
        message,
        raw_output: last,
    })
}

fn is_index_kind(kind: FactKind) -> bool {
    matches!(
        kind,
        FactKind::SegmentStart
            | FactKind::SegmentEnd
            | FactKind::SeasonPeriod
            | FactKind::SeasonPhase
            | FactKind::FluctPosition
            | FactKind::FluctDuration
            | FactKind::SharedPosition
    )
}

/// Allowed absolute deviation for a numeric claim whose truth is `truth`.
/// Index-valued facts (positions, periods, ...) get the relative tolerance
/// only; value-unit facts also get the noise allowance of their series.
pub fn numeric_tolerance(fact: &Fact, truth: f64, pools: &[&AttributePool], tol: &EliminationTolerances) -> f64 {
    let relative = tol.relative * truth.abs();
    if is_index_kind(fact.kind) || fact.kind == FactKind::FluctFactor {
        return relative;
    }
    let sigma = pools.get(fact.series).map_or(0.0, |p| p.noise.std());
    relative.max(tol.noise_sigmas * sigma)
}

pub fn eliminate(
    candidate: &CandidateQa,
    pools: &[&AttributePool],
    correlations: &[CorrelationPool],
    tol: &EliminationTolerances,
) -> EliminationVerdict {
    let mut reasons = Vec::new();
    if candidate.claimed_facts.is_empty() {
        reasons.push(Rejection {
            fact: Fact {
                kind: FactKind::TrendKind,
                value: FactValue::Label(String::new()),
                units: None,
                series: 0,
                index: None,
            },
            truth: None,
            deviation: None,
            reason: "no claimed facts".into(),
        });
    }
    for fact in &candidate.claimed_facts {
        let Some(truth) = fact_truth(fact, pools, correlations) else {
            reasons.push(Rejection {
                fact: fact.clone(),
                truth: None,
                deviation: None,
                reason: "unverifiable".into(),
            });
            continue;
        };
        match (&fact.value, &truth) {
            (FactValue::Number(claim), FactValue::Number(t)) => {
                let dev = (claim - t).abs();
                let allowed = numeric_tolerance(fact, *t, pools, tol);
                if !(dev <= allowed) {
                    reasons.push(Rejection {
                        fact: fact.clone(),
                        truth: Some(truth.clone()),
                        deviation: Some(dev),
                        reason: format!("{claim} vs {t} exceeds tolerance {allowed}"),
                    });
                }
            }
            (FactValue::Label(claim), FactValue::Label(t)) => {
                if claim != t {
                    reasons.push(Rejection {
                        fact: fact.clone(),
                        truth: Some(truth.clone()),
                        deviation: None,
                        reason: format!("{claim} vs {t}"),
                    });
                }
            }
            _ => reasons.push(Rejection {
                fact: fact.clone(),
                truth: Some(truth.clone()),
                deviation: None,
                reason: "value type does not match the fact kind".into(),
            }),
        }
    }
    EliminationVerdict {
        accepted: reasons.is_empty(),
        reasons,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub rounds: usize,
    pub retries: usize,
    /// Facts injected per step are drawn from 1..=facts_per_step.
    pub facts_per_step: usize,
    pub in_flight: usize,
    pub decode: DecodeParams,
    pub tolerances: EliminationTolerances,
    pub mix: EvolutionMix,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            retries: DEFAULT_RETRIES,
            facts_per_step: 3,
            in_flight: 4,
            decode: DecodeParams::default(),
            tolerances: EliminationTolerances::default(),
            mix: EvolutionMix::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRun {
    pub records: Vec<QaRecord>,
    pub attempted: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub failed: usize,
    pub errors: Vec<String>,
}

impl EvolutionRun {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// Keywords a scorer should find in an answer restating `facts`: kind
/// phrases and numbers that actually occur in `answer`.
pub fn fact_keywords(facts: &[Fact], answer: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for f in facts {
        let kw = match &f.value {
            FactValue::Label(l) if l == crate::taxonomy::NONE_LABEL => continue,
            FactValue::Label(l) => l.replace('_', " "),
            FactValue::Number(v) => crate::describe::fmt_num(*v),
        };
        if !out.contains(&kw) && crate::evalkit::keyword_score(answer, std::slice::from_ref(&kw)) == 1.0 {
            out.push(kw);
        }
    }
    out
}

enum Step {
    Accepted(QaRecord),
    Rejected,
    Failed(String),
}

fn step(
    parent: &QaRecord,
    pools: &[AttributePool],
    correlations: &[CorrelationPool],
    gen: &dyn TextGenerator,
    cfg: &EvolutionConfig,
    round: usize,
    seed: u64,
) -> Step {
    let mut rng = SeedStream::new(seed);
    let mut mine = Vec::with_capacity(parent.series_refs.len());
    for id in &parent.series_refs {
        match pools.iter().find(|p| &p.id == id) {
            Some(p) => mine.push(p),
            None => return Step::Failed(format!("{}: unknown series {id}", parent.id)),
        }
    }
    if mine.is_empty() {
        return Step::Failed(format!("{}: record has no series", parent.id));
    }
    let corrs: Vec<CorrelationPool> = correlations
        .iter()
        .filter(|c| c.members.iter().all(|m| parent.series_refs.contains(m)))
        .cloned()
        .collect();
    let etype = cfg.mix.sample(&mut rng);
    let k = rng.int_in(1, cfg.facts_per_step.max(1));
    let injected = match inject_attributes(&mine, corrs.first(), k, rng.next_u64()) {
        Ok(f) => f,
        Err(e) => return Step::Failed(format!("{}: {e}", parent.id)),
    };
    let candidate = match evolve(parent, etype, &injected, gen, &cfg.decode, cfg.retries, round) {
        Ok(c) => c,
        Err(e) => return Step::Failed(format!("{}: {e}", parent.id)),
    };
    if !eliminate(&candidate, &mine, &corrs, &cfg.tolerances).accepted {
        return Step::Rejected;
    }
    let keywords = fact_keywords(&candidate.claimed_facts, &candidate.answer);
    if keywords.is_empty() {
        return Step::Rejected;
    }
    let mut lineage = parent.provenance.lineage.clone();
    lineage.push(candidate.lineage.clone());
    let id = format!(
        "evol-{:016x}",
        stable_hash(format!("{}|{etype}|{round}|{seed}", parent.id).as_bytes())
    );
    Step::Accepted(QaRecord {
        id,
        task: etype.task(parent.task),
        question: candidate.question,
        answer: candidate.answer,
        gold: GoldLabels {
            keywords: Some(keywords),
            facts: candidate.claimed_facts,
            ..GoldLabels::default()
        },
        series_refs: parent.series_refs.clone(),
        provenance: Provenance {
            template: None,
            dataset: Some("tsevol".into()),
            lineage,
        },
    })
}

/// Runs `cfg.rounds` rounds. Every record alive at the start of a round
/// spawns one child; accepted children are emitted and carried into the
/// next round. Output order is round-major, then input order.
pub fn run_evolution(
    seeds: &[QaRecord],
    pools: &[AttributePool],
    correlations: &[CorrelationPool],
    gen: &dyn TextGenerator,
    cfg: &EvolutionConfig,
    master_seed: u64,
) -> Result<EvolutionRun> {
    if cfg.rounds == 0 {
        return Err(Error::arg("rounds must be at least 1"));
    }
    cfg.mix.validate()?;
    let mut run = EvolutionRun::default();
    let mut alive: Vec<QaRecord> = seeds.to_vec();
    for round in 1..=cfg.rounds {
        let round_seed = split_seed(master_seed, round as u64);
        let steps = crate::par::map_ordered(&alive, cfg.in_flight, |i, parent| {
            step(parent, pools, correlations, gen, cfg, round, split_seed(round_seed, i as u64))
        });
        let mut next = Vec::new();
        for s in steps {
            run.attempted += 1;
            match s {
                Step::Accepted(r) => {
                    run.accepted += 1;
                    next.push(r);
                }
                Step::Rejected => run.rejected += 1,
                Step::Failed(e) => {
                    run.failed += 1;
                    run.errors.push(e);
                }
            }
        }
        run.records.extend(next.iter().cloned());
        alive = next;
        if alive.is_empty() {
            break;
        }
    }
    Ok(run)
}

/// Rebuilds the candidate an emitted record was accepted from, for
/// re-checking with [`eliminate`].
pub fn candidate_of(record: &QaRecord) -> Option<CandidateQa> {
    Some(CandidateQa {
        question: record.question.clone(),
        answer: record.answer.clone(),
        claimed_facts: record.gold.facts.clone(),
        lineage: record.provenance.lineage.last()?.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::describe::gen_alignment_qa;
    use crate::genpool::{sample_pool, AttributeSubset, LocalFluctuation, NoiseAttr, TrendSegment};
    use crate::synth::render;
    use crate::taxonomy::{FluctuationKind, MetricSpec, TrendKind};

    fn metric() -> MetricSpec {
        MetricSpec {
            name: "cpu_utilization".into(),
            domain_tag: "aiops".into(),
            value_range_hint: [0.0, 100.0],
            nonneg: true,
        }
    }

    fn spike_pool() -> AttributePool {
        AttributePool {
            id: "p-spike".into(),
            metric: metric(),
            length: 256,
            trend: vec![TrendSegment {
                kind: TrendKind::Steady,
                start_idx: 0,
                end_idx: 256,
                start_value: 10.0,
                end_value: 10.0,
                curvature: None,
            }],
            seasonality: None,
            noise: NoiseAttr::none(),
            fluctuations: vec![LocalFluctuation {
                kind: FluctuationKind::UpwardSpike,
                position: 100,
                duration: 1,
                amplitude: 5.0,
                factor: None,
            }],
            generation_seed: 0,
        }
    }

    fn spike_facts(pool: &AttributePool) -> Vec<Fact> {
        pool_facts(pool, 0).into_iter().filter(|f| f.index == Some(0) && f.kind.is_indexed() && matches!(f.kind, FactKind::FluctKind | FactKind::FluctPosition | FactKind::FluctAmplitude)).collect()
    }

    struct Garbage;
    impl TextGenerator for Garbage {
        fn complete(&self, _: &str, _: &DecodeParams) -> Result<String> {
            Ok("???".into())
        }
    }

    fn exact_mock() -> MockGenerator {
        MockGenerator { error_rate: 0.0 }
    }

    #[test]
    fn injection_clamps_and_is_deterministic() {
        let pool = spike_pool();
        let all = pool_facts(&pool, 0);
        let picked = inject_attributes(&[&pool], None, 2, 7).unwrap();
        assert_eq!(picked.len(), 2);
        assert_ne!(picked[0], picked[1]);
        assert_eq!(picked, inject_attributes(&[&pool], None, 2, 7).unwrap());
        assert_eq!(inject_attributes(&[&pool], None, 100, 7).unwrap(), all);
        assert!(inject_attributes(&[&pool], None, 0, 7).is_err());
    }

    #[test]
    fn breadth_mentions_the_spike() {
        let pool = spike_pool();
        let seed = gen_alignment_qa(&pool, &render(&pool), TaskKind::Trend, 1).unwrap();
        let facts = spike_facts(&pool);
        let c = evolve(&seed, EvolutionType::InBreadth, &facts, &exact_mock(), &DecodeParams::default(), 3, 1).unwrap();
        assert!(c.question.contains("upward spike"), "{}", c.question);
        assert!(c
            .claimed_facts
            .iter()
            .any(|f| f.kind == FactKind::FluctAmplitude && f.value == FactValue::Number(5.0)));
        assert_eq!(c.lineage.evolution, EvolutionType::InBreadth);
        assert!(eliminate(&c, &[&pool], &[], &EliminationTolerances::default()).accepted);
    }

    #[test]
    fn reasoning_asks_what_explains() {
        let pool = spike_pool();
        let seed = gen_alignment_qa(&pool, &render(&pool), TaskKind::Local, 1).unwrap();
        let c = evolve(&seed, EvolutionType::Reasoning, &spike_facts(&pool), &exact_mock(), &DecodeParams::default(), 3, 1).unwrap();
        assert!(c.question.contains("What explains"));
    }

    #[test]
    fn garbage_output_fails_after_retries() {
        let pool = spike_pool();
        let seed = gen_alignment_qa(&pool, &render(&pool), TaskKind::Trend, 1).unwrap();
        let err = evolve(&seed, EvolutionType::InDepth, &[], &Garbage, &DecodeParams::default(), 3, 1).unwrap_err();
        match err {
            Error::Evolution { attempts, raw_output, .. } => {
                assert_eq!(attempts, 3);
                assert_eq!(raw_output, "???");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn wrong_amplitude_is_rejected_with_reason() {
        let pool = spike_pool();
        let mut facts = spike_facts(&pool);
        for f in &mut facts {
            if f.kind == FactKind::FluctAmplitude {
                f.value = FactValue::Number(50.0);
            }
        }
        let c = CandidateQa {
            question: "q <ts>".into(),
            answer: "a".into(),
            claimed_facts: facts,
            lineage: LineageStep {
                parent: "x".into(),
                evolution: EvolutionType::InDepth,
                round: 1,
            },
        };
        let v = eliminate(&c, &[&pool], &[], &EliminationTolerances::default());
        assert!(!v.accepted);
        assert_eq!(v.reasons.len(), 1);
        assert_eq!(v.reasons[0].truth, Some(FactValue::Number(5.0)));
        assert_eq!(v.reasons[0].deviation, Some(45.0));
    }

    #[test]
    fn unverifiable_and_empty_claims_are_rejected() {
        let pool = spike_pool();
        let mut c = CandidateQa {
            question: "q".into(),
            answer: "a".into(),
            claimed_facts: vec![],
            lineage: LineageStep {
                parent: "x".into(),
                evolution: EvolutionType::InDepth,
                round: 1,
            },
        };
        assert!(!eliminate(&c, &[&pool], &[], &EliminationTolerances::default()).accepted);
        c.claimed_facts.push(Fact {
            kind: FactKind::SeasonPeriod,
            value: FactValue::Number(24.0),
            units: None,
            series: 0,
            index: None,
        });
        let v = eliminate(&c, &[&pool], &[], &EliminationTolerances::default());
        assert_eq!(v.reasons[0].reason, "unverifiable");
    }

    fn corpus(n: u64) -> (Vec<QaRecord>, Vec<AttributePool>) {
        let subset = AttributeSubset::full(metric());
        let mut seeds = Vec::new();
        let mut pools = Vec::new();
        for i in 0..n {
            let pool = sample_pool(&subset, 128, i).unwrap();
            let task = TaskKind::ALIGNMENT[i as usize % 4];
            seeds.push(gen_alignment_qa(&pool, &render(&pool), task, i).unwrap());
            pools.push(pool);
        }
        (seeds, pools)
    }

    #[test]
    fn single_round_single_seed() {
        let (seeds, pools) = corpus(1);
        let cfg = EvolutionConfig {
            rounds: 1,
            ..EvolutionConfig::default()
        };
        let run = run_evolution(&seeds, &pools, &[], &MockGenerator::default(), &cfg, 5).unwrap();
        assert!(run.records.len() <= 1);
        for r in &run.records {
            assert_eq!(r.provenance.lineage.len(), 1);
        }
    }

    #[test]
    fn outputs_survive_re_elimination() {
        let (seeds, pools) = corpus(10);
        let cfg = EvolutionConfig::default();
        let run = run_evolution(&seeds, &pools, &[], &MockGenerator::default(), &cfg, 11).unwrap();
        assert_eq!(run.attempted, run.accepted + run.rejected + run.failed);
        assert!(run.accepted > 0);
        for r in &run.records {
            let refs: Vec<&AttributePool> = r.series_refs.iter().map(|id| pools.iter().find(|p| &p.id == id).unwrap()).collect();
            let c = candidate_of(r).unwrap();
            assert!(eliminate(&c, &refs, &[], &cfg.tolerances).accepted);
            assert!(!r.gold.keywords.as_ref().unwrap().is_empty());
            assert!(r.provenance.lineage.len() <= 3);
        }
        let again = run_evolution(&seeds, &pools, &[], &MockGenerator::default(), &cfg, 11).unwrap();
        assert_eq!(run, again);
        let r = run.acceptance_rate();
        assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn zero_rounds_is_an_error() {
        let cfg = EvolutionConfig {
            rounds: 0,
            ..EvolutionConfig::default()
        };
        assert!(run_evolution(&[], &[], &[], &MockGenerator::default(), &cfg, 0).is_err());
    }
}
