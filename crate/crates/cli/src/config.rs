use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tsqa::datasets::CorpusSpec;
use tsqa::tsevol::{DecodeParams, EvolutionConfig};

/// Prefix for environment overrides: `TSQA__CORPUS__UTS=100` sets
/// `corpus.uts`, `TSQA__SEED=3` sets `seed`.
pub const ENV_PREFIX: &str = "TSQA__";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Chat-completions URL. Empty means no endpoint configured.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the API key. Keys are
    /// never read from files.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub decode: DecodeParams,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: "gpt-4o-mini".into(),
            api_key_env: "TSQA_API_KEY".into(),
            timeout_secs: 60,
            decode: DecodeParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub in_flight: usize,
    /// Tools enabled for `eval --tools`.
    pub tools: Vec<String>,
    pub tool_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            in_flight: 4,
            tools: tsqa::evalkit::ToolKind::ALL.iter().map(|t| t.id().to_string()).collect(),
            tool_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out: PathBuf,
    pub corpus: CorpusSpec,
    pub generator: GeneratorConfig,
    pub evolution: EvolutionConfig,
    pub eval: EvalConfig,
    /// Metric catalog file; the built-in catalog when unset.
    pub catalog: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            corpus: CorpusSpec::default(),
            generator: GeneratorConfig::default(),
            evolution: EvolutionConfig::default(),
            eval: EvalConfig::default(),
            catalog: None,
        }
    }
}

fn env_value(raw: &str) -> toml::Value {
    // Parse as a TOML value when possible so numbers and arrays keep their
    // type; anything else is a plain string.
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().context("empty override path")?;
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override path {} crosses non-table key `{p}`", path.join(".")),
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl Config {
    /// Reads `path` (when given), applies overrides from `vars`, and
    /// validates. Unknown keys are rejected by name.
    pub fn load(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>().with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
            apply_override(&mut table, &path, env_value(&raw)).with_context(|| format!("applying {key}"))?;
        }
        let origin = path.map_or_else(|| "defaults".to_string(), |p| p.display().to_string());
        let cfg: Config = Config::deserialize(toml::Value::Table(table)).with_context(|| format!("invalid config ({origin})"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.evolution.mix.validate()?;
        if self.evolution.rounds == 0 {
            bail!("evolution.rounds must be at least 1");
        }
        for t in &self.eval.tools {
            if tsqa::evalkit::ToolKind::from_id(t).is_none() {
                bail!("eval.tools: unknown tool `{t}`");
            }
        }
        Ok(())
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.generator.api_key_env).ok().filter(|k| !k.is_empty())
    }
}
