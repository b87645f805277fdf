//! Next-token models and decoding.

mod generate;
mod ngram;
mod remote;
mod sampling;

pub use generate::{generate, perplexity, GenerationConfig, GenerationOutput};
pub use ngram::{train_ngram, NGramLM, NGRAM_K, NGRAM_LAMBDAS};
pub use remote::{normalize_logprobs, RemoteLM};
pub use sampling::{nucleus, nucleus_sample, SamplingRng};

use crate::assemble::{ModelInput, TypeId};
use crate::http::HttpError;
use crate::tokenizer::TokenId;

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("nucleus mass must lie in (0, 1], got {0}")]
    InvalidP(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("model returned {got} log-probabilities, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("model server: {0}")]
    Transport(#[from] HttpError),
    #[error("no target tokens to score")]
    NoTargets,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A conditional next-token model over a fixed vocabulary.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Probability of every token id following `prefix`; non-negative and
    /// summing to 1.
    fn next_distribution(&self, prefix: &ModelInput) -> Result<Vec<f64>, LmError>;

    /// P(target_j | input ⊕ target_<j) for each j. Targets are typed S.
    fn target_probs(&self, input: &ModelInput, targets: &[TokenId]) -> Result<Vec<f64>, LmError> {
        let mut prefix = input.clone();
        let mut out = Vec::with_capacity(targets.len());
        for &t in targets {
            let dist = self.next_distribution(&prefix)?;
            out.push(dist.get(t as usize).copied().unwrap_or(0.0));
            prefix.push(t, TypeId::S);
        }
        Ok(out)
    }
}
