use super::harness::{ModelAnswer, ModelUnderTest};
use crate::datasets::CorpusRecord;
use crate::describe::{answer_text, evaluate_query, QueryContext};
use crate::error::{Error, Result};
use crate::tsevol::{ChatClient, DecodeParams};

/// Answers from the pools embedded in each record. Bounds the harness's
/// own parsing loss: any score below 1 is the scorer's fault.
#[derive(Clone, Copy, Debug, Default)]
pub struct PoolEchoOracle;

impl ModelUnderTest for PoolEchoOracle {
    fn name(&self) -> String {
        "pool_echo_oracle".into()
    }

    fn answer(&self, record: &CorpusRecord, prompt: &str) -> Result<ModelAnswer> {
        let gold = &record.gold_labels;
        let text = match (&gold.query, &gold.keywords) {
            (_, Some(k)) if !k.is_empty() => k.join(", "),
            (Some(q), _) => {
                let pools = record.pools();
                let series = record.values();
                let ctx = QueryContext {
                    pools: &pools,
                    series: &series,
                    correlations: &record.correlation_pool,
                };
                answer_text(q, &evaluate_query(q, &ctx)?, &ctx)
            }
            _ => match &gold.choice {
                Some(c) => format!("Answer: {}.", c.answer),
                None => return Err(Error::Model(format!("record {} has nothing to echo", record.id))),
            },
        };
        Ok(ModelAnswer::counted(prompt, text))
    }
}

/// Returns the same text for every item.
#[derive(Clone, Debug)]
pub struct ConstantModel(pub String);

impl ModelUnderTest for ConstantModel {
    fn name(&self) -> String {
        format!("constant:{}", self.0)
    }

    fn answer(&self, _record: &CorpusRecord, prompt: &str) -> Result<ModelAnswer> {
        Ok(ModelAnswer::counted(prompt, self.0.clone()))
    }
}

/// A chat-completion endpoint reading series as inlined text.
pub struct EndpointModel {
    client: ChatClient,
    params: DecodeParams,
}

impl EndpointModel {
    pub fn new(client: ChatClient, params: DecodeParams) -> Self {
        Self { client, params }
    }
}

impl ModelUnderTest for EndpointModel {
    fn name(&self) -> String {
        self.client.model().to_string()
    }

    fn answer(&self, _record: &CorpusRecord, prompt: &str) -> Result<ModelAnswer> {
        let text = self
            .client
            .chat(prompt, &self.params)
            .map_err(|e| Error::Model(e.to_string()))?;
        Ok(ModelAnswer::counted(prompt, text))
    }
}
