use tsqa::datasets::{compose_corpus, read_jsonl, write_jsonl, ComposeInputs, CorpusSpec, Stage, MOCK};
use tsqa::evalkit::{run_benchmark, ConstantModel, Metric, PoolEchoOracle};
use tsqa::taxonomy::metric_catalog;

fn spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        uts: 40,
        mts_shape: 20,
        mts_local: 20,
        seed,
        ..CorpusSpec::default()
    }
}

#[test]
fn compose_write_read_then_oracle_scores_perfectly() {
    let catalog = metric_catalog(None).unwrap();
    let corpus = compose_corpus(&spec(11), &ComposeInputs::new(catalog, &MOCK)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alignment.jsonl");
    write_jsonl(&corpus, &path).unwrap();
    let back = read_jsonl(&path).unwrap();
    assert_eq!(back.records, corpus.records);

    let report = run_benchmark(&back.records, &PoolEchoOracle, 4);
    assert_eq!(report.items, 80);
    assert!(report.is_consistent());
    assert_eq!(report.metric(Metric::CategoricalF1), Some(1.0));
    let ra = report.noise_free_relative_accuracy.expect("numeric items present");
    assert!(ra > 0.99, "noise-free relative accuracy {ra}");
}

#[test]
fn constant_answer_scores_the_share_of_matching_choices() {
    let catalog = metric_catalog(None).unwrap();
    let spec = CorpusSpec {
        stage: Stage::Sft,
        instruct_follow: 60,
        alignment_mix_fraction: 0.0,
        seed: 12,
        ..CorpusSpec::default()
    };
    let corpus = compose_corpus(&spec, &ComposeInputs::new(catalog, &MOCK)).unwrap();
    let choices: Vec<_> = corpus
        .records
        .iter()
        .filter_map(|r| r.qa().gold.choice.clone())
        .collect();
    assert_eq!(choices.len(), 60);
    let expected = choices.iter().filter(|c| c.answer == "True").count() as f64 / 60.0;
    assert!(expected > 0.0 && expected < 1.0);
    let report = run_benchmark(&corpus.records, &ConstantModel("True".into()), 2);
    let got = report.metric(Metric::ChoiceAccuracy).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn benchmark_order_does_not_depend_on_input_order() {
    let catalog = metric_catalog(None).unwrap();
    let corpus = compose_corpus(&spec(13), &ComposeInputs::new(catalog, &MOCK)).unwrap();
    let mut reversed = corpus.records.clone();
    reversed.reverse();
    let a = run_benchmark(&corpus.records, &PoolEchoOracle, 1);
    let b = run_benchmark(&reversed, &PoolEchoOracle, 8);
    assert_eq!(a.to_csv(), b.to_csv());
}
