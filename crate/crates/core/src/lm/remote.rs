use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmError};
use crate::assemble::{ModelInput, TypeId};
use crate::http::{HttpClient, HttpConfig};
use crate::tokenizer::TokenId;

#[derive(Serialize)]
struct Request<'a> {
    token_ids: &'a [TokenId],
    type_ids: &'a [TypeId],
}

#[derive(Deserialize)]
struct Reply {
    logprobs: Vec<f64>,
}

/// Client for a model server speaking
/// `POST {"token_ids": [...], "type_ids": [...]}` → `{"logprobs": [...]}`.
pub struct RemoteLM {
    client: HttpClient,
    endpoint: String,
    vocab_size: usize,
}

impl RemoteLM {
    pub fn new(endpoint: impl Into<String>, vocab_size: usize, http: HttpConfig) -> Result<Self, LmError> {
        Ok(Self {
            client: HttpClient::new(http)?,
            endpoint: endpoint.into(),
            vocab_size,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// Exponentiate and renormalize. `-inf` entries are allowed (zero mass).
pub fn normalize_logprobs(lp: &[f64]) -> Result<Vec<f64>, LmError> {
    if lp.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(LmError::InvalidDistribution("non-finite log-probability".into()));
    }
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(LmError::InvalidDistribution("no positive mass".into()));
    }
    let exps: Vec<f64> = lp.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|x| x / z).collect())
}

impl LanguageModel for RemoteLM {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, prefix: &ModelInput) -> Result<Vec<f64>, LmError> {
        let reply: Reply = self.client.post_json(
            &self.endpoint,
            &Request {
                token_ids: &prefix.token_ids,
                type_ids: &prefix.type_ids,
            },
        )?;
        if reply.logprobs.len() != self.vocab_size {
            return Err(LmError::Shape {
                expected: self.vocab_size,
                got: reply.logprobs.len(),
            });
        }
        normalize_logprobs(&reply.logprobs)
    }
}
