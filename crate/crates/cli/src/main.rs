mod config;
mod exit;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use tsqa::datasets::{compose_corpus, evolve_corpus, read_jsonl, write_jsonl, ComposeInputs, Corpus, Stage};
use tsqa::evalkit::{run_benchmark, EndpointModel, EvalReport, Metric, ModelUnderTest, PoolEchoOracle, ToolAnswerer, ToolKind};
use tsqa::taxonomy::{metric_catalog, registry};
use tsqa::tsevol::{ChatClient, ChatEndpoint, MockGenerator, RemoteGenerator, TextGenerator};

use config::Config;
use exit::{CliResult, Classify, Exit, Failure, OrExit};

#[derive(Parser, Debug)]
#[command(name = "tsqa", version, about = "Synthetic time-series Q&A: generate, evolve, evaluate, plot")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "TSQA_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the offline mock text generator.
    #[arg(long, global = true)]
    mock: bool,
    /// Append generator/model request logs to this JSONL file.
    #[arg(long, global = true)]
    audit: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StageArg {
    Alignment,
    Sft,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the attribute taxonomy and metric catalog size.
    Taxonomy {
        #[arg(long)]
        json: bool,
    },
    /// Compose an alignment or SFT corpus.
    Generate {
        #[arg(long, value_enum)]
        stage: Option<StageArg>,
        /// Source alignment corpus for the SFT mix.
        #[arg(long)]
        alignment: Option<PathBuf>,
        #[arg(long)]
        uts: Option<usize>,
        #[arg(long)]
        mts_shape: Option<usize>,
        #[arg(long)]
        mts_local: Option<usize>,
        #[arg(long)]
        tsevol: Option<usize>,
        #[arg(long)]
        instruct_follow: Option<usize>,
        /// Output file stem (default: the stage name).
        #[arg(long)]
        name: Option<String>,
    },
    /// Evolve the records of a seed corpus.
    Evolve {
        seeds: PathBuf,
        #[arg(long)]
        rounds: Option<usize>,
        /// Use only the first N series-bearing seed records.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value = "evolved")]
        name: String,
    },
    /// Score a model on a corpus. Without --oracle or --tools the
    /// configured chat endpoint is evaluated.
    Eval {
        corpus: PathBuf,
        /// Pool-echo reference model.
        #[arg(long, conflicts_with = "tools")]
        oracle: bool,
        /// Scripted tool answerer, e.g. `acc=0.9`.
        #[arg(long)]
        tools: Option<String>,
        /// Report file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Write CSV and SVG renderings of one record.
    Plot { corpus: PathBuf, id: String },
}

fn parse_accuracy(arg: &str) -> CliResult<f64> {
    let raw = arg.strip_prefix("acc=").unwrap_or(arg);
    let acc: f64 = raw
        .parse()
        .map_err(|_| anyhow!("--tools expects acc=<x> with x in [0, 1], got `{arg}`"))
        .or_exit(Exit::Config)?;
    if !(0.0..=1.0).contains(&acc) {
        return Err(anyhow!("tool accuracy {acc} outside [0, 1]")).or_exit(Exit::Config);
    }
    Ok(acc)
}

fn read_corpus(path: &Path) -> CliResult<Corpus> {
    read_jsonl(path)
        .map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))
        .or_exit(Exit::Io)
}

fn write_corpus(corpus: &Corpus, dir: &Path, stem: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).or_exit(Exit::Io)?;
    let path = dir.join(format!("{stem}.jsonl"));
    write_jsonl(corpus, &path).or_exit(Exit::Io)?;
    Ok(path)
}

fn print_counts(corpus: &Corpus, path: &Path) {
    let m = &corpus.manifest;
    println!("wrote {} records to {}", m.total, path.display());
    for (k, v) in &m.datasets {
        println!("  dataset {k}: {v}");
    }
    for (k, v) in &m.tasks {
        println!("  task {k}: {v}");
    }
}

struct App {
    cfg: Config,
    mock: bool,
    audit: Option<PathBuf>,
}

impl App {
    fn client(&self) -> CliResult<ChatClient> {
        let g = &self.cfg.generator;
        if g.url.is_empty() {
            return Err(anyhow!("no endpoint configured: set generator.url (or TSQA__GENERATOR__URL), or pass --mock")).or_exit(Exit::Config);
        }
        let endpoint = ChatEndpoint {
            url: g.url.clone(),
            model: g.model.clone(),
            api_key: self.cfg.api_key(),
            timeout_secs: g.timeout_secs,
        };
        ChatClient::new(endpoint, self.audit.as_deref()).or_exit(Exit::Io)
    }

    fn generator(&self) -> CliResult<Box<dyn TextGenerator>> {
        if self.mock {
            return Ok(Box::new(MockGenerator::default()));
        }
        Ok(Box::new(RemoteGenerator::new(self.client()?)))
    }

    fn catalog(&self) -> CliResult<Vec<tsqa::taxonomy::MetricSpec>> {
        metric_catalog(self.cfg.catalog.as_deref()).classified()
    }

    fn taxonomy(&self, json: bool) -> CliResult<()> {
        let reg = registry();
        let catalog = self.catalog()?;
        if json {
            let v = serde_json::json!({ "taxonomy": reg, "catalog_size": catalog.len() });
            println!("{}", serde_json::to_string_pretty(&v).or_exit(Exit::Io)?);
            return Ok(());
        }
        let ids = |v: Vec<&str>| v.join(", ");
        println!("trend ({}): {}", reg.trend_types.len(), ids(reg.trend_types.iter().map(|k| k.id()).collect()));
        println!("season ({}): {}", reg.season_types.len(), ids(reg.season_types.iter().map(|k| k.id()).collect()));
        println!("noise ({}): {}", reg.noise_types.len(), ids(reg.noise_types.iter().map(|k| k.id()).collect()));
        println!(
            "fluctuation ({}): {}",
            reg.fluctuation_types.len(),
            ids(reg.fluctuation_types.iter().map(|k| k.id()).collect())
        );
        println!("metric catalog: {} entries", catalog.len());
        Ok(())
    }

    fn generate(
        &self,
        stage: Option<StageArg>,
        alignment: Option<&Path>,
        counts: [Option<usize>; 5],
        name: Option<String>,
    ) -> CliResult<()> {
        let mut spec = self.cfg.corpus.clone();
        spec.seed = self.cfg.seed;
        if let Some(s) = stage {
            spec.stage = match s {
                StageArg::Alignment => Stage::Alignment,
                StageArg::Sft => Stage::Sft,
            };
        }
        let [uts, shape, local, tsevol, instruct] = counts;
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut spec.uts, uts);
        set(&mut spec.mts_shape, shape);
        set(&mut spec.mts_local, local);
        set(&mut spec.tsevol, tsevol);
        set(&mut spec.instruct_follow, instruct);
        spec.validate().classified()?;
        let source = alignment.map(read_corpus).transpose()?;
        let generator: Box<dyn TextGenerator> = if spec.tsevol > 0 {
            self.generator()?
        } else {
            Box::new(MockGenerator::default())
        };
        let mut inputs = ComposeInputs::new(self.catalog()?, generator.as_ref());
        inputs.alignment = source.as_ref();
        inputs.evolution = self.cfg.evolution.clone();
        let corpus = compose_corpus(&spec, &inputs).classified()?;
        let stem = name.unwrap_or_else(|| spec.stage.to_string());
        let path = write_corpus(&corpus, &self.cfg.out, &stem)?;
        print_counts(&corpus, &path);
        Ok(())
    }

    fn evolve(&self, seeds: &Path, rounds: Option<usize>, limit: Option<usize>, name: &str) -> CliResult<()> {
        let mut corpus = read_corpus(seeds)?;
        corpus.records.retain(|r| !r.series.is_empty());
        if let Some(n) = limit {
            corpus.records.truncate(n);
        }
        let mut cfg = self.cfg.evolution.clone();
        if let Some(r) = rounds {
            if r == 0 {
                return Err(anyhow!("--rounds must be at least 1")).or_exit(Exit::Config);
            }
            cfg.rounds = r;
        }
        let generator = self.generator()?;
        let (evolved, run) = evolve_corpus(&corpus, generator.as_ref(), &cfg, self.cfg.seed).classified()?;
        if !self.mock && run.attempted > 0 && run.failed == run.attempted {
            let first = run.errors.first().cloned().unwrap_or_default();
            return Err(anyhow!("every evolution step failed; first error: {first}")).or_exit(Exit::Endpoint);
        }
        let path = write_corpus(&evolved, &self.cfg.out, name)?;
        println!(
            "attempted {} accepted {} rejected {} failed {}",
            run.attempted, run.accepted, run.rejected, run.failed
        );
        println!("acceptance rate {:.4}", run.acceptance_rate());
        println!("wrote {} records to {}", evolved.records.len(), path.display());
        for e in run.errors.iter().take(5) {
            log::warn!("{e}");
        }
        Ok(())
    }

    fn eval(&self, corpus: &Path, oracle: bool, tools: Option<&str>, name: Option<String>) -> CliResult<()> {
        let corpus = read_corpus(corpus)?;
        let in_flight = self.cfg.eval.in_flight.max(1);
        let (report, stem, truthful): (EvalReport, String, Option<f64>) = if oracle {
            (run_benchmark(&corpus.records, &PoolEchoOracle, in_flight), "eval_oracle".into(), None)
        } else if let Some(arg) = tools {
            let acc = parse_accuracy(arg)?;
            let kinds: Vec<ToolKind> = self.cfg.eval.tools.iter().filter_map(|t| ToolKind::from_id(t)).collect();
            let model = ToolAnswerer::new(acc, &kinds, self.cfg.eval.tool_seed)
                .classified()?
                .stratify(&corpus.records);
            let report = run_benchmark(&corpus.records, &model, in_flight);
            (report, format!("eval_tools_{acc}"), model.truthful_fraction())
        } else {
            let model = EndpointModel::new(self.client()?, self.cfg.generator.decode.clone());
            let stem = format!("eval_{}", model.name().replace(['/', ' ', ':'], "_"));
            (run_benchmark(&corpus.records, &model, in_flight), stem, None)
        };
        let stem = name.unwrap_or(stem);
        report.write(&self.cfg.out, &stem).or_exit(Exit::Io)?;
        println!("model {}: {} items", report.model, report.items);
        for m in Metric::ALL {
            if let Some(s) = report.metric(m) {
                println!("  {}: {s:.4}", m.id());
            }
        }
        if let Some(s) = report.noise_free_relative_accuracy {
            println!("  relative_accuracy (noise-free): {s:.4}");
        }
        if let Some(t) = truthful {
            println!("  tool truthfulness: {t:.4}");
        }
        for (cause, n) in &report.failures {
            println!("  failures ({}): {n}", cause.id());
        }
        println!("wrote {}", self.cfg.out.join(format!("{stem}.csv")).display());
        if report.all_failed() {
            return Err(anyhow!("all {} items failed", report.items)).or_exit(Exit::AllFailed);
        }
        Ok(())
    }

    fn plot(&self, corpus: &Path, id: &str) -> CliResult<()> {
        let corpus = read_corpus(corpus)?;
        let record = corpus
            .find(id)
            .ok_or_else(|| anyhow!("no record with id `{id}` in the corpus"))
            .or_exit(Exit::Io)?;
        let dir = &self.cfg.out;
        std::fs::create_dir_all(dir).or_exit(Exit::Io)?;
        let csv = dir.join(format!("{id}.csv"));
        let svg = dir.join(format!("{id}.svg"));
        std::fs::write(&csv, plot::to_csv(record)).or_exit(Exit::Io)?;
        std::fs::write(&svg, plot::to_svg(record)).or_exit(Exit::Io)?;
        println!("wrote {} and {}", csv.display(), svg.display());
        Ok(())
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = Config::load(cli.config.as_deref(), std::env::vars()).or_exit(Exit::Config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    let app = App {
        cfg,
        mock: cli.mock,
        audit: cli.audit,
    };
    match cli.command {
        Command::Taxonomy { json } => app.taxonomy(json),
        Command::Generate {
            stage,
            alignment,
            uts,
            mts_shape,
            mts_local,
            tsevol,
            instruct_follow,
            name,
        } => app.generate(stage, alignment.as_deref(), [uts, mts_shape, mts_local, tsevol, instruct_follow], name),
        Command::Evolve {
            seeds,
            rounds,
            limit,
            name,
        } => app.evolve(&seeds, rounds, limit, &name),
        Command::Eval {
            corpus,
            oracle,
            tools,
            name,
        } => app.eval(&corpus, oracle, tools.as_deref(), name),
        Command::Plot { corpus, id } => app.plot(&corpus, &id),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { exit, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(exit as u8)
        }
    }
}
