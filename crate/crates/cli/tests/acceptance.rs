//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the summary reads top to bottom.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use tsqa::datasets::{compose_corpus, read_jsonl, write_jsonl, ComposeInputs, Corpus, CorpusSpec, Stage, MOCK};
use tsqa::describe::{fact_truth, FactKind, FactValue, QaRecord};
use tsqa::evalkit::{choice_accuracy, f1, relative_accuracy, run_benchmark, Metric, PoolEchoOracle, ToolAnswerer, ToolKind};
use tsqa::genpool::{sample_pool, AttributePool, AttributeSubset};
use tsqa::rng::{split_seed, SeedStream};
use tsqa::synth::{denormalize, normalize, render, verify, TimeSeries};
use tsqa::taxonomy::{metric_catalog, registry, MetricSpec, NoiseKind};
use tsqa::tsevol::{candidate_of, eliminate, numeric_tolerance, run_evolution, EvolutionConfig, EliminationTolerances};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn catalog() -> Vec<MetricSpec> {
    metric_catalog(None).expect("builtin catalog")
}

fn alignment_corpus(per_dataset: [usize; 3], seed: u64) -> Corpus {
    let spec = CorpusSpec {
        uts: per_dataset[0],
        mts_shape: per_dataset[1],
        mts_local: per_dataset[2],
        seed,
        ..CorpusSpec::default()
    };
    compose_corpus(&spec, &ComposeInputs::new(catalog(), &MOCK)).expect("compose alignment corpus")
}

fn taxonomy_counts() -> Outcome {
    let start = Instant::now();
    let reg = registry();
    let counts = [
        reg.trend_types.len(),
        reg.season_types.len(),
        reg.noise_types.len(),
        reg.fluctuation_types.len(),
    ];
    let size = catalog().len();
    within(start.elapsed(), Duration::from_secs(1))?;
    check(counts == [4, 7, 3, 19], || format!("type counts {counts:?}"))?;
    check(size == 567, || format!("catalog has {size} entries"))?;
    Ok(format!("types {counts:?}, catalog {size}"))
}

fn pools_with_noise(noise: NoiseKind, n: u64) -> impl Iterator<Item = AttributePool> {
    let metrics = catalog();
    (0..n).map(move |i| {
        let mut subset = AttributeSubset::full(metrics[i as usize % metrics.len()].clone());
        subset.noises = vec![noise];
        let length = 64 + (i as usize * 37) % 961;
        sample_pool(&subset, length, split_seed(0xACCE, i)).expect("sample pool")
    })
}

fn generator_exactness() -> Outcome {
    let start = Instant::now();
    let mut clean_fail = Vec::new();
    for (i, pool) in pools_with_noise(NoiseKind::None, 1000).enumerate() {
        let report = verify(&pool, &render(&pool)).map_err(|e| e.to_string())?;
        if !report.passed {
            clean_fail.push((i, report.failures().map(|c| c.name.clone()).collect::<Vec<_>>()));
        }
    }
    let mut noisy_pass = 0;
    for pool in pools_with_noise(NoiseKind::Gaussian, 1000) {
        if verify(&pool, &render(&pool)).map_err(|e| e.to_string())?.passed {
            noisy_pass += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    check(clean_fail.is_empty(), || {
        format!("{} noise-free pools failed, first: {:?}", clean_fail.len(), clean_fail.first())
    })?;
    check(noisy_pass >= 990, || format!("gaussian pass {noisy_pass}/1000"))?;
    Ok(format!("noise-free 1000/1000, gaussian {noisy_pass}/1000"))
}

fn normalization_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = SeedStream::new(0x4E0);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let len = rng.int_in(1, 256);
        let offset = rng.uniform(-1e4, 1e4);
        let scale = rng.log_uniform(1e-3, 1e4);
        let values: Vec<f64> = (0..len).map(|_| offset + scale * rng.uniform(-1.0, 1.0)).collect();
        let x = TimeSeries {
            metric: "m".into(),
            values,
        };
        let back = denormalize(&normalize(&x), "m");
        let magnitude = x.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in x.values.iter().zip(&back.values) {
            worst = worst.max((a - b).abs() / magnitude.max(f64::MIN_POSITIVE));
        }
    }
    let constant = TimeSeries {
        metric: "m".into(),
        values: vec![7.25; 50],
    };
    let n = normalize(&constant);
    within(start.elapsed(), Duration::from_secs(10))?;
    check(worst <= 1e-9, || format!("worst relative error {worst:e}"))?;
    check(n.value_scaling == 1.0 && n.value_offset == 7.25 && n.values.iter().all(|v| *v == 0.0), || {
        format!("constant series normalized to {n:?}")
    })?;
    check(denormalize(&n, "m") == constant, || "constant series does not round-trip".into())?;
    Ok(format!("10000 series, worst relative error {worst:.1e}; constant rule holds"))
}

fn metric_formula() -> Outcome {
    let ra = [
        relative_accuracy(Some(100.0), 100.0, 1000.0),
        relative_accuracy(Some(110.0), 100.0, 1000.0),
        relative_accuracy(Some(300.0), 100.0, 1000.0),
    ];
    check(ra[0] == 1.0 && (ra[1] - 0.9).abs() < 1e-12 && ra[2] == 0.0, || format!("relative accuracy {ra:?}"))?;
    check(relative_accuracy(None, 100.0, 1000.0) == 0.0, || "missing answer scored above 0".into())?;
    let l = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let f = [
        f1(&l(&["spike"]), &l(&["spike"])),
        f1(&l(&["spike"]), &l(&["spike", "dip"])),
        f1(&l(&[]), &l(&["spike"])),
        f1(&l(&[]), &l(&[])),
    ];
    check(f[0] == 1.0 && (f[1] - 2.0 / 3.0).abs() < 1e-12 && f[2] == 0.0 && f[3] == 1.0, || format!("f1 table {f:?}"))?;
    let ab = l(&["A", "B"]);
    let tf = l(&["True", "False"]);
    let c = [
        choice_accuracy("Answer: B", "B", &ab),
        choice_accuracy("True, because the mean rises", "False", &tf),
        choice_accuracy("maybe", "A", &ab),
    ];
    check(c[0].score == 1.0 && !c[0].unparseable, || format!("{:?}", c[0]))?;
    check(c[1].score == 0.0 && !c[1].unparseable, || format!("{:?}", c[1]))?;
    check(c[2].score == 0.0 && c[2].unparseable, || format!("{:?}", c[2]))?;
    Ok("relative accuracy {1.0, 0.9, 0.0}; F1 and choice tables match".into())
}

fn oracle_closure() -> Outcome {
    let start = Instant::now();
    let corpus = alignment_corpus([334, 333, 333], 5);
    let report = run_benchmark(&corpus.records, &PoolEchoOracle, 4);
    within(start.elapsed(), Duration::from_secs(60))?;
    check(report.items == 1000, || format!("{} items", report.items))?;
    check(report.is_consistent(), || "report aggregates disagree with rows".into())?;
    let cat = report.metric(Metric::CategoricalF1).unwrap_or(f64::NAN);
    let nf = report.noise_free_relative_accuracy.unwrap_or(f64::NAN);
    check(cat == 1.0, || {
        let bad: Vec<&str> = report.rows.iter().filter(|r| r.score < 1.0).map(|r| r.id.as_str()).take(5).collect();
        format!("categorical F1 {cat}, e.g. {bad:?}")
    })?;
    check(nf >= 0.99, || format!("noise-free relative accuracy {nf}"))?;
    Ok(format!("categorical F1 {cat:.4}, noise-free relative accuracy {nf:.6}"))
}

fn perfect_tools() -> Outcome {
    let corpus = alignment_corpus([334, 333, 333], 6);
    let mut rows = Vec::new();
    for acc in [0.8, 0.9, 0.95, 1.0] {
        let model = ToolAnswerer::new(acc, &ToolKind::ALL, 17)
            .map_err(|e| e.to_string())?
            .stratify(&corpus.records);
        let report = run_benchmark(&corpus.records, &model, 4);
        let f = report.metric(Metric::CategoricalF1).unwrap_or(f64::NAN);
        let t = model.truthful_fraction().unwrap_or(f64::NAN);
        check((t - acc).abs() <= 0.02, || format!("accuracy {acc}: truthfulness {t}"))?;
        rows.push((acc, f, t));
    }
    check(rows.windows(2).all(|w| w[0].1 <= w[1].1), || format!("F1 not monotone: {rows:?}"))?;
    check(rows[3].1 == 1.0, || format!("F1 at accuracy 1.0 is {}", rows[3].1))?;
    let table: Vec<String> = rows.iter().map(|(a, f, t)| format!("{a}: F1 {f:.4} (truthful {t:.3})")).collect();
    Ok(table.join(", "))
}

fn uts_seeds(n: u64, master: u64) -> (Vec<QaRecord>, Vec<AttributePool>) {
    let corpus = alignment_corpus([n as usize, 0, 0], master);
    let qas = corpus.records.iter().map(|r| r.qa()).collect();
    let pools = corpus.records.iter().flat_map(|r| r.pools()).collect();
    (qas, pools)
}

fn is_integer_kind(kind: FactKind) -> bool {
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

fn tsevol_soundness() -> Outcome {
    let (seeds, pools) = uts_seeds(100, 21);
    let cfg = EvolutionConfig::default();
    let a = run_evolution(&seeds, &pools, &[], &MOCK, &cfg, 99).map_err(|e| e.to_string())?;
    let b = run_evolution(&seeds, &pools, &[], &MOCK, &cfg, 99).map_err(|e| e.to_string())?;
    let ja = serde_json::to_string(&a).map_err(|e| e.to_string())?;
    let jb = serde_json::to_string(&b).map_err(|e| e.to_string())?;
    check(ja == jb, || "two runs from the same master seed differ".into())?;
    check(!a.records.is_empty(), || "evolution accepted nothing".into())?;

    let tol = EliminationTolerances::default();
    let mut rng = SeedStream::new(0x3E7);
    let (mut trials, mut rejected, mut sweeps) = (0usize, 0usize, 0usize);
    while trials < 1000 {
        sweeps += 1;
        if sweeps > 100 {
            return Err(format!("only {trials} mutation trials possible"));
        }
        for record in &a.records {
            if trials == 1000 {
                break;
            }
            let Some(mut cand) = candidate_of(record) else { continue };
            let mine: Vec<&AttributePool> = record
                .series_refs
                .iter()
                .filter_map(|id| pools.iter().find(|p| &p.id == id))
                .collect();
            let numeric: Vec<usize> = (0..cand.claimed_facts.len())
                .filter(|i| matches!(cand.claimed_facts[*i].value, FactValue::Number(_)))
                .collect();
            if numeric.is_empty() {
                continue;
            }
            let i = *rng.pick(&numeric);
            let fact = &cand.claimed_facts[i];
            let Some(truth) = fact_truth(fact, &mine, &[]).and_then(|v| v.as_number()) else { continue };
            let t = numeric_tolerance(fact, truth, &mine, &tol);
            let mut bad = truth + rng.sign() * rng.uniform(1.5, 10.0) * t.max(1e-3 * truth.abs().max(1.0));
            if is_integer_kind(fact.kind) {
                bad = bad.round();
                if bad == truth {
                    bad += 1.0;
                }
            }
            cand.claimed_facts[i].value = FactValue::Number(bad);
            trials += 1;
            if !eliminate(&cand, &mine, &[], &tol).accepted {
                rejected += 1;
            }
        }
    }
    check(rejected == trials, || format!("{rejected}/{trials} corrupted candidates rejected"))?;
    Ok(format!(
        "{} evolved records reproducible; {rejected}/{trials} corrupted candidates rejected",
        a.records.len()
    ))
}

fn corpus_bytes(corpus: &Corpus, dir: &Path, stem: &str) -> Result<Vec<u8>, String> {
    let path = dir.join(format!("{stem}.jsonl"));
    write_jsonl(corpus, &path).map_err(|e| e.to_string())?;
    let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    bytes.extend(std::fs::read(tsqa::datasets::manifest_path(&path)).map_err(|e| e.to_string())?);
    Ok(bytes)
}

fn corpus_composition() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let build = |tag: &str| -> Result<(Corpus, Corpus, Vec<u8>), String> {
        let alignment = alignment_corpus([350, 350, 350], 2024);
        let spec = CorpusSpec {
            stage: Stage::Sft,
            tsevol: 243,
            instruct_follow: 51,
            seed: 2024,
            ..CorpusSpec::default()
        };
        let mut inputs = ComposeInputs::new(catalog(), &MOCK);
        inputs.alignment = Some(&alignment);
        let sft = compose_corpus(&spec, &inputs).map_err(|e| e.to_string())?;
        let mut bytes = corpus_bytes(&alignment, dir.path(), &format!("alignment_{tag}"))?;
        bytes.extend(corpus_bytes(&sft, dir.path(), &format!("sft_{tag}"))?);
        Ok((alignment, sft, bytes))
    };
    let (alignment, sft, first) = build("a")?;
    let (_, _, second) = build("b")?;
    within(start.elapsed(), Duration::from_secs(120))?;
    let am = &alignment.manifest;
    check(am.total == 1050 && [am.datasets["uts"], am.datasets["mts_shape"], am.datasets["mts_local"]] == [350, 350, 350], || {
        format!("alignment manifest {:?}", am.datasets)
    })?;
    let sm = &sft.manifest;
    let mix = (0.30f64 * 1050.0).round() as usize;
    check(
        sm.datasets.get("tsevol") == Some(&243)
            && sm.datasets.get("instruct_follow") == Some(&51)
            && sm.datasets.get("alignment_mix") == Some(&mix)
            && sm.total == 243 + 51 + mix
            && sm.total == sft.records.len(),
        || format!("sft manifest {:?} total {}", sm.datasets, sm.total),
    )?;
    check(first == second, || "rerun output differs".into())?;
    let back = read_jsonl(&dir.path().join("sft_a.jsonl")).map_err(|e| e.to_string())?;
    check(back == sft, || "sft corpus does not round-trip".into())?;
    Ok(format!("alignment 350/350/350, sft 243+51+{mix}={}; reruns byte-identical", sm.total))
}

fn desk_run() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().ok_or("non-utf8 temp path")?;
    let corpus = dir.path().join("alignment.jsonl");
    let corpus = corpus.to_str().ok_or("non-utf8 temp path")?;
    let run = |args: &[&str]| -> Result<String, String> {
        let o = Command::new(env!("CARGO_BIN_EXE_tsqa"))
            .args(["--out", out, "--seed", "9"])
            .args(args)
            .env_remove("TSQA_CONFIG")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("`tsqa {}` exited {:?}: {}", args.join(" "), o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
        Ok(String::from_utf8_lossy(&o.stdout).into_owned())
    };
    run(&["generate", "--uts", "100", "--mts-shape", "100", "--mts-local", "100"])?;
    run(&["eval", corpus, "--oracle"])?;
    run(&["eval", corpus, "--tools", "acc=0.9"])?;
    let first = std::fs::read_to_string(corpus).map_err(|e| e.to_string())?;
    let id: String = serde_json::from_str::<serde_json::Value>(first.lines().next().ok_or("empty corpus")?)
        .map_err(|e| e.to_string())?["id"]
        .as_str()
        .ok_or("record without id")?
        .to_string();
    run(&["plot", corpus, &id])?;
    within(start.elapsed(), Duration::from_secs(300))?;
    let csv = std::fs::read_to_string(dir.path().join("eval_oracle.csv")).map_err(|e| e.to_string())?;
    check(csv.contains(",overall,categorical_f1,") && csv.contains("1.000000"), || "oracle CSV lacks F1 = 1".into())?;
    check(dir.path().join(format!("{id}.svg")).exists(), || "plot SVG missing".into())?;
    Ok(format!("generate, eval --oracle, eval --tools acc=0.9, plot: all exit 0 in {:.1?}", start.elapsed()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("taxonomy counts", taxonomy_counts),
        ("generator exactness", generator_exactness),
        ("normalization round trip", normalization_round_trip),
        ("metric formula", metric_formula),
        ("oracle closure", oracle_closure),
        ("perfect-tools study", perfect_tools),
        ("tsevol soundness", tsevol_soundness),
        ("corpus composition", corpus_composition),
        ("end-to-end desk run", desk_run),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{:.1?}]", i + 1, start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{:.1?}]", i + 1, start.elapsed());
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
