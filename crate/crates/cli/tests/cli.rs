use std::path::Path;
use std::process::{Command, Output};

use tsqa::datasets::read_jsonl;

fn tsqa(out: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tsqa"));
    cmd.arg("--out").arg(out).args(args).env_remove("TSQA_CONFIG");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TSQA__")) {
        cmd.env_remove(k);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn tsqa")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = tsqa(out, args, &[]);
    assert!(o.status.success(), "tsqa {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> Option<i32> {
    o.status.code()
}

fn small_corpus(out: &Path) -> String {
    ok(out, &["--seed", "4", "generate", "--uts", "30", "--mts-shape", "10", "--mts-local", "10"]);
    out.join("alignment.jsonl").display().to_string()
}

/// `overall` score of a metric from a long-format report.
fn overall(csv: &str, metric: &str) -> f64 {
    csv.lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|c| c.get(1) == Some(&"overall") && c.get(2) == Some(&metric))
        .and_then(|c| c[4].parse().ok())
        .unwrap_or_else(|| panic!("no overall {metric} row in\n{csv}"))
}

#[test]
fn taxonomy_lists_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["taxonomy"]);
    assert!(text.contains("trend (4)"), "{text}");
    assert!(text.contains("metric catalog: 567 entries"), "{text}");
}

#[test]
fn invalid_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[corpus]\nutz = 3\n").unwrap();
    let o = tsqa(dir.path(), &["--config", cfg.to_str().unwrap(), "taxonomy"], &[]);
    assert_eq!(code(&o), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("utz"));
}

#[test]
fn missing_seed_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = tsqa(dir.path(), &["--mock", "evolve", "/nonexistent/seeds.jsonl"], &[]);
    assert_eq!(code(&o), Some(3));
}

#[test]
fn unknown_plot_id_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let o = tsqa(dir.path(), &["plot", &corpus, "no-such-id"], &[]);
    assert_eq!(code(&o), Some(3));
}

#[test]
fn evolve_without_endpoint_exits_2_and_unreachable_endpoint_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let o = tsqa(dir.path(), &["evolve", &corpus, "--limit", "2"], &[]);
    assert_eq!(code(&o), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = tsqa(
        dir.path(),
        &["evolve", &corpus, "--limit", "2", "--rounds", "1"],
        &[("TSQA__GENERATOR__URL", "http://127.0.0.1:9/v1/chat/completions"), ("TSQA__GENERATOR__TIMEOUT_SECS", "2")],
    );
    assert_eq!(code(&o), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_and_mock_evolve_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = small_corpus(a.path());
    let cb = small_corpus(b.path());
    assert_eq!(std::fs::read(&ca).unwrap(), std::fs::read(&cb).unwrap());
    ok(a.path(), &["--mock", "--seed", "8", "evolve", &ca, "--limit", "10"]);
    ok(b.path(), &["--mock", "--seed", "8", "evolve", &cb, "--limit", "10"]);
    let ea = std::fs::read(a.path().join("evolved.jsonl")).unwrap();
    let eb = std::fs::read(b.path().join("evolved.jsonl")).unwrap();
    assert!(!ea.is_empty());
    assert_eq!(ea, eb);
}

#[test]
fn plot_draws_each_series_and_shades_fluctuations() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let records = read_jsonl(Path::new(&corpus)).unwrap().records;
    let record = records
        .iter()
        .find(|r| r.series.iter().any(|s| s.pool.fluctuations.iter().any(|f| f.kind.id().ends_with("spike"))))
        .expect("a record with a spike");
    ok(dir.path(), &["plot", &corpus, &record.id]);
    let svg = std::fs::read_to_string(dir.path().join(format!("{}.svg", record.id))).unwrap();
    assert_eq!(svg.matches("<polyline").count(), record.series.len());
    let spike = record
        .series
        .iter()
        .flat_map(|s| &s.pool.fluctuations)
        .find(|f| f.kind.id().ends_with("spike"))
        .unwrap();
    let covered = svg.lines().filter(|l| l.contains(r#"class="fluctuation""#)).any(|l| {
        let attr = |name: &str| -> usize {
            let key = format!(r#"{name}=""#);
            let rest = &l[l.find(&key).unwrap() + key.len()..];
            rest[..rest.find('"').unwrap()].parse().unwrap()
        };
        attr("data-start") <= spike.position && spike.position < attr("data-end")
    });
    assert!(covered, "spike at {} not shaded", spike.position);
    let csv = std::fs::read_to_string(dir.path().join(format!("{}.csv", record.id))).unwrap();
    assert_eq!(csv.lines().count(), 1 + record.series.iter().map(|s| s.values.len()).max().unwrap());
}

#[test]
fn perfect_tools_score_one_and_noisy_tools_do_not_score_higher() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    ok(dir.path(), &["eval", &corpus, "--tools", "acc=1.0"]);
    ok(dir.path(), &["eval", &corpus, "--tools", "acc=0.9"]);
    let perfect = std::fs::read_to_string(dir.path().join("eval_tools_1.csv")).unwrap();
    let noisy = std::fs::read_to_string(dir.path().join("eval_tools_0.9.csv")).unwrap();
    assert_eq!(overall(&perfect, "categorical_f1"), 1.0);
    assert!(overall(&noisy, "categorical_f1") <= overall(&perfect, "categorical_f1"));
}

#[test]
fn bad_tool_accuracy_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let o = tsqa(dir.path(), &["eval", &corpus, "--tools", "acc=1.5"], &[]);
    assert_eq!(code(&o), Some(2));
}
