//! Text generators: a remote chat-completion endpoint and a deterministic
//! offline mock.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::EvolutionType;
use crate::describe::{Fact, FactKind, FactValue};
use crate::error::{Error, Result};
use crate::rng::{stable_hash, SeedStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

pub trait TextGenerator: Sync {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<String>;
}

/// Connection settings for an OpenAI-style `/chat/completions` endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatEndpoint {
    pub url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

pub struct ChatClient {
    endpoint: ChatEndpoint,
    agent: ureq::Agent,
    audit: Option<Mutex<BufWriter<File>>>,
}

impl ChatClient {
    /// `audit` receives one JSON line per request/response pair.
    pub fn new(endpoint: ChatEndpoint, audit: Option<&Path>) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs.max(1))))
            .build()
            .into();
        let audit = match audit {
            Some(p) => Some(Mutex::new(BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?))),
            None => None,
        };
        Ok(Self { endpoint, agent, audit })
    }

    pub fn model(&self) -> &str {
        &self.endpoint.model
    }

    pub fn chat(&self, prompt: &str, params: &DecodeParams) -> Result<String> {
        let body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let mut req = self.agent.post(&self.endpoint.url).header("Content-Type", "application/json");
        if let Some(key) = &self.endpoint.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let result = req
            .send_json(&body)
            .map_err(|e| Error::Generator(format!("{}: {e}", self.endpoint.url)))
            .and_then(|mut resp| {
                resp.body_mut()
                    .read_json::<Value>()
                    .map_err(|e| Error::Generator(format!("bad response body: {e}")))
            });
        if let Some(audit) = &self.audit {
            let entry = match &result {
                Ok(v) => json!({"request": body, "response": v}),
                Err(e) => json!({"request": body, "error": e.to_string()}),
            };
            let mut w = audit.lock().expect("audit lock");
            writeln!(w, "{entry}")?;
            w.flush()?;
        }
        let v = result?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Generator("response has no choices[0].message.content".into()))
    }
}

pub struct RemoteGenerator {
    client: ChatClient,
}

impl RemoteGenerator {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }
}

impl TextGenerator for RemoteGenerator {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<String> {
        self.client.chat(prompt, params)
    }
}

/// Offline generator that rewrites the seed with fixed templates per
/// evolution type. Output depends only on the prompt text.
#[derive(Clone, Debug)]
pub struct MockGenerator {
    /// Share of responses in which one restated number is deliberately
    /// wrong, so the eliminator has something to reject.
    pub error_rate: f64,
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self { error_rate: 0.15 }
    }
}

pub(crate) struct PromptParts {
    pub etype: EvolutionType,
    pub question: String,
    pub answer: String,
    pub facts: Vec<Fact>,
}

pub(crate) const ETYPE_TAG: &str = "Evolution type: ";
pub(crate) const QUESTION_TAG: &str = "Seed question: ";
pub(crate) const ANSWER_TAG: &str = "Seed answer: ";
pub(crate) const FACTS_HEADER: &str = "Additional attributes (JSON, one per line):";

pub(crate) fn parse_prompt(prompt: &str) -> Option<PromptParts> {
    let mut etype = None;
    let mut question = None;
    let mut answer = None;
    let mut facts = Vec::new();
    let mut in_facts = false;
    for line in prompt.lines() {
        if in_facts {
            if line.trim().is_empty() {
                in_facts = false;
            } else {
                facts.push(serde_json::from_str::<Fact>(line).ok()?);
            }
        } else if let Some(rest) = line.strip_prefix(ETYPE_TAG) {
            etype = EvolutionType::from_id(rest.trim());
        } else if let Some(rest) = line.strip_prefix(QUESTION_TAG) {
            question = Some(rest.to_string());
        } else if let Some(rest) = line.strip_prefix(ANSWER_TAG) {
            answer = Some(rest.to_string());
        } else if line == FACTS_HEADER {
            in_facts = true;
        }
    }
    Some(PromptParts {
        etype: etype?,
        question: question?,
        answer: answer?,
        facts,
    })
}

fn fluct_name(f: &Fact, facts: &[Fact]) -> String {
    facts
        .iter()
        .find(|g| g.kind == FactKind::FluctKind && g.series == f.series && g.index == f.index)
        .map(|g| g.value.to_string().replace('_', " "))
        .unwrap_or_else(|| format!("local fluctuation #{}", f.index.unwrap_or(0) + 1))
}

/// Plain-language restatement of one fact.
pub(crate) fn fact_clause(f: &Fact, facts: &[Fact]) -> String {
    let s = format!("series {}", f.series + 1);
    let seg = format!("segment {} of {s}", f.index.unwrap_or(0) + 1);
    let v = f.value.to_string();
    let phrase = v.replace('_', " ");
    match f.kind {
        FactKind::TrendKind => format!("{seg} follows a {phrase} trend"),
        FactKind::TrendDirection => format!("{seg} is {phrase}"),
        FactKind::SegmentStart => format!("{seg} starts at t={v}"),
        FactKind::SegmentEnd => format!("{seg} ends before t={v}"),
        FactKind::TrendStartValue => format!("{seg} begins at the value {v}"),
        FactKind::TrendEndValue => format!("{seg} finishes at the value {v}"),
        FactKind::SeasonKind if v == crate::taxonomy::NONE_LABEL => format!("{s} has no periodic pattern"),
        FactKind::SeasonKind => format!("{s} has a {phrase} seasonal pattern"),
        FactKind::SeasonPeriod => format!("the seasonal period of {s} is {v} steps"),
        FactKind::SeasonAmplitude => format!("the seasonal amplitude of {s} is {v}"),
        FactKind::SeasonPhase => format!("the seasonal phase of {s} is {v}"),
        FactKind::NoiseKind if v == crate::taxonomy::NONE_LABEL => format!("{s} is noise-free"),
        FactKind::NoiseKind => format!("{s} carries {phrase} noise"),
        FactKind::NoiseLevel => format!("the noise level of {s} is {v}"),
        FactKind::FluctKind => format!("{s} contains a {phrase}"),
        FactKind::FluctPosition => format!("the {} in {s} starts at t={v}", fluct_name(f, facts)),
        FactKind::FluctDuration => format!("the {} in {s} lasts {v} steps", fluct_name(f, facts)),
        FactKind::FluctAmplitude => format!("the {} in {s} has an amplitude of {v}", fluct_name(f, facts)),
        FactKind::FluctFactor => format!("the {} in {s} has a scale factor of {v}", fluct_name(f, facts)),
        FactKind::CorrelationKind => format!("{s} takes part in a {phrase} correlation"),
        FactKind::SharedPosition => format!("the shared event of {s} occurs at t={v}"),
    }
}

fn join_clauses(c: &[String]) -> String {
    match c.len() {
        0 => String::new(),
        1 => c[0].clone(),
        n => format!("{}, and {}", c[..n - 1].join(", "), c[n - 1]),
    }
}

impl TextGenerator for MockGenerator {
    fn complete(&self, prompt: &str, _params: &DecodeParams) -> Result<String> {
        let parts = parse_prompt(prompt).ok_or_else(|| Error::Generator("mock cannot read the prompt".into()))?;
        let mut rng = SeedStream::new(stable_hash(prompt.as_bytes()));
        let mut claimed = parts.facts.clone();
        if rng.chance(self.error_rate) {
            let numeric: Vec<usize> = (0..claimed.len()).filter(|i| claimed[*i].kind.is_numeric()).collect();
            if !numeric.is_empty() {
                let i = *rng.pick(&numeric);
                if let FactValue::Number(v) = claimed[i].value {
                    claimed[i].value = FactValue::Number(v * 3.0 + 10.0);
                }
            }
        }
        let clauses: Vec<String> = claimed.iter().map(|f| fact_clause(f, &claimed)).collect();
        let c = join_clauses(&clauses);
        let (q, a) = (&parts.question, &parts.answer);
        let (question, answer) = match parts.etype {
            EvolutionType::InDepth => (
                format!("{q} Explain your answer step by step, taking into account that {c}."),
                format!("{a} In addition, {c}."),
            ),
            EvolutionType::InBreadth => {
                let subjects: Vec<String> = claimed.iter().map(|f| subject(f, &claimed)).collect();
                (
                    format!("{q} Also describe {}.", join_clauses(&subjects)),
                    format!("{a} Furthermore, {c}."),
                )
            }
            EvolutionType::ConditionAdd => (
                format!("{q} Assume that {c}. Does your conclusion still hold?"),
                format!("Yes. Given that {c}, the conclusion holds: {a}"),
            ),
            EvolutionType::Concretize => (
                format!("{q} Be concrete and cite exact values."),
                format!("{a} Concretely, {c}."),
            ),
            EvolutionType::Reasoning => (
                format!("{q} What explains the behaviour of the series, given that {c}?"),
                format!("{a} This is explained by the fact that {c}."),
            ),
            EvolutionType::Situation => (
                format!("During an on-call review, an operator inspects the monitoring data. {q} How should the operator interpret it?"),
                format!("{a} In this situation, note that {c}."),
            ),
        };
        let facts = serde_json::to_string(&claimed)?;
        Ok(format!("QUESTION: {question}\nANSWER: {answer}\nFACTS: {facts}\n"))
    }
}

fn subject(f: &Fact, facts: &[Fact]) -> String {
    let s = format!("series {}", f.series + 1);
    match f.kind {
        FactKind::FluctAmplitude => format!("the amplitude of the {} in {s}", fluct_name(f, facts)),
        FactKind::FluctPosition => format!("where the {} in {s} starts", fluct_name(f, facts)),
        FactKind::FluctKind => format!("the {} in {s}", f.value.to_string().replace('_', " ")),
        FactKind::SeasonPeriod => format!("the seasonal period of {s}"),
        FactKind::NoiseLevel | FactKind::NoiseKind => format!("the noise of {s}"),
        _ => format!("the {} of {s}", format!("{:?}", f.kind).to_lowercase()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_parts_round_trip() {
        let fact = Fact {
            kind: FactKind::FluctAmplitude,
            value: FactValue::Number(5.0),
            units: None,
            series: 0,
            index: Some(0),
        };
        let prompt = format!(
            "intro\n{ETYPE_TAG}in_breadth\n{QUESTION_TAG}q <ts>\n{ANSWER_TAG}a\n\n{FACTS_HEADER}\n{}\n\nrest",
            serde_json::to_string(&fact).unwrap()
        );
        let p = parse_prompt(&prompt).unwrap();
        assert_eq!(p.etype, EvolutionType::InBreadth);
        assert_eq!(p.facts, vec![fact]);
        assert_eq!(p.question, "q <ts>");
    }

    #[test]
    fn endpoint_key_is_never_serialized() {
        let e = ChatEndpoint {
            url: "http://localhost:1".into(),
            model: "m".into(),
            api_key: Some("secret".into()),
            timeout_secs: 5,
        };
        assert!(!serde_json::to_string(&e).unwrap().contains("secret"));
    }

    #[test]
    fn unreachable_endpoint_is_a_generator_error() {
        let client = ChatClient::new(
            ChatEndpoint {
                url: "http://127.0.0.1:9/v1/chat/completions".into(),
                model: "m".into(),
                api_key: None,
                timeout_secs: 2,
            },
            None,
        )
        .unwrap();
        let err = RemoteGenerator::new(client).complete("hi", &DecodeParams::default()).unwrap_err();
        assert!(matches!(err, Error::Generator(_)));
    }
}
