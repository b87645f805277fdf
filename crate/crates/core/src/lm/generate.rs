use serde::{Deserialize, Serialize};

use super::sampling::{nucleus_sample, seeded};
use super::{LanguageModel, LmError};
use crate::assemble::{ModelInput, TrainingExample, TypeId};
use crate::tokenizer::{TokenId, Tokenizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub p: f64,
    pub max_new_tokens: usize,
    /// The stop token is masked until this many tokens have been emitted.
    pub min_new_tokens: usize,
    /// Defaults to the tokenizer's `__eot__`.
    pub stop_token: Option<TokenId>,
    pub rng_seed: u64,
    pub context_limit: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            p: 0.9,
            max_new_tokens: 256,
            min_new_tokens: 0,
            stop_token: None,
            rng_seed: 0,
            context_limit: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub text: String,
    /// Emitted ids, stop token excluded.
    pub token_ids: Vec<TokenId>,
    /// Sampling steps taken, a sampled stop token included.
    pub consumed: usize,
}

/// Autoregressive nucleus sampling. New tokens are typed S. Stops at the
/// stop token, `max_new_tokens`, or when the input reaches `context_limit`.
pub fn generate(lm: &dyn LanguageModel, input: &ModelInput, config: &GenerationConfig, tokenizer: &Tokenizer) -> Result<GenerationOutput, LmError> {
    if !(config.p > 0.0 && config.p <= 1.0) {
        return Err(LmError::InvalidP(config.p));
    }
    let stop = config.stop_token.unwrap_or(tokenizer.specials().eot);
    let mut rng = seeded(config.rng_seed);
    let mut prefix = input.clone();
    let mut out = Vec::new();
    let mut consumed = 0;
    while out.len() < config.max_new_tokens && prefix.len() < config.context_limit {
        let mut dist = lm.next_distribution(&prefix)?;
        if dist.len() != lm.vocab_size() {
            return Err(LmError::Shape {
                expected: lm.vocab_size(),
                got: dist.len(),
            });
        }
        if out.len() < config.min_new_tokens {
            if let Some(x) = dist.get_mut(stop as usize) {
                let rest = 1.0 - *x;
                *x = 0.0;
                if rest <= 0.0 {
                    break;
                }
            }
        }
        let t = nucleus_sample(&dist, config.p, &mut rng)?;
        consumed += 1;
        if t == stop {
            break;
        }
        out.push(t);
        prefix.push(t, TypeId::S);
    }
    let text = tokenizer.decode(&out).map_err(|e| LmError::InvalidDistribution(e.to_string()))?;
    Ok(GenerationOutput {
        text,
        token_ids: out,
        consumed,
    })
}

/// exp of the mean negative log-likelihood over target tokens only.
///
/// Log-likelihoods are accumulated in base 2 and exponentiated with `exp2`,
/// which equals the natural-log form and is exact for power-of-two
/// probabilities.
pub fn perplexity(lm: &dyn LanguageModel, examples: &[TrainingExample]) -> Result<f64, LmError> {
    if examples.is_empty() {
        return Err(LmError::NoTargets);
    }
    let per = crate::par::map(examples, |ex| lm.target_probs(&ex.input(), &ex.target_ids));
    let mut sum = 0.0;
    let mut n = 0usize;
    for probs in per {
        for p in probs? {
            sum += p.log2();
            n += 1;
        }
    }
    if n == 0 {
        return Err(LmError::NoTargets);
    }
    Ok((-sum / n as f64).exp2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::train_ngram;

    struct Fixed(Vec<f64>);

    impl LanguageModel for Fixed {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn next_distribution(&self, _: &ModelInput) -> Result<Vec<f64>, LmError> {
            Ok(self.0.clone())
        }
    }

    fn one_hot(v: usize, id: usize) -> Fixed {
        let mut d = vec![0.0; v];
        d[id] = 1.0;
        Fixed(d)
    }

    fn example(targets: Vec<TokenId>) -> TrainingExample {
        TrainingExample {
            token_ids: vec![1, 2],
            type_ids: vec![TypeId::L, TypeId::L],
            target_ids: targets,
            conversation_id: "c".into(),
        }
    }

    #[test]
    fn zero_budget_is_empty() {
        let tok = Tokenizer::byte_level();
        let lm = one_hot(tok.vocab_size(), 65);
        let cfg = GenerationConfig {
            max_new_tokens: 0,
            ..Default::default()
        };
        let out = generate(&lm, &ModelInput::default(), &cfg, &tok).unwrap();
        assert_eq!((out.text.as_str(), out.consumed), ("", 0));
    }

    #[test]
    fn immediate_stop() {
        let tok = Tokenizer::byte_level();
        let lm = one_hot(tok.vocab_size(), tok.specials().eot as usize);
        let out = generate(&lm, &ModelInput::default(), &GenerationConfig::default(), &tok).unwrap();
        assert_eq!(out.text, "");
        assert_eq!(out.consumed, 1);
    }

    #[test]
    fn respects_caps() {
        let tok = Tokenizer::byte_level();
        let lm = one_hot(tok.vocab_size(), tok.encode("a")[0] as usize);
        let cfg = GenerationConfig {
            max_new_tokens: 5,
            ..Default::default()
        };
        assert_eq!(generate(&lm, &ModelInput::default(), &cfg, &tok).unwrap().text, "aaaaa");
        let input = ModelInput::from_parts(vec![1; 1022], vec![TypeId::L; 1022]);
        assert_eq!(generate(&lm, &input, &GenerationConfig::default(), &tok).unwrap().token_ids.len(), 2);
    }

    #[test]
    fn min_tokens_masks_stop() {
        let tok = Tokenizer::byte_level();
        let mut d = vec![0.0; tok.vocab_size()];
        d[tok.specials().eot as usize] = 0.9;
        d[tok.encode("z")[0] as usize] = 0.1;
        let cfg = GenerationConfig {
            min_new_tokens: 3,
            max_new_tokens: 3,
            ..Default::default()
        };
        assert_eq!(generate(&Fixed(d), &ModelInput::default(), &cfg, &tok).unwrap().text, "zzz");
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let tok = Tokenizer::byte_level();
        let seqs: Vec<Vec<TokenId>> = ["the cat sat on the mat", "a dog ran in the park"].iter().map(|s| tok.encode(s)).collect();
        let lm = train_ngram(&seqs, tok.vocab_size()).unwrap();
        let input = ModelInput::from_parts(tok.encode("the "), vec![TypeId::L; 4]);
        let cfg = GenerationConfig {
            rng_seed: 11,
            max_new_tokens: 20,
            ..Default::default()
        };
        let a = generate(&lm, &input, &cfg, &tok).unwrap();
        assert_eq!(a, generate(&lm, &input, &cfg, &tok).unwrap());
    }

    #[test]
    fn perplexity_cases() {
        let uniform = Fixed(vec![0.2; 5]);
        let ppl = perplexity(&uniform, &[example(vec![0, 3, 4])]).unwrap();
        assert!((ppl - 5.0).abs() / 5.0 < 1e-9);
        assert_eq!(perplexity(&one_hot(5, 2), &[example(vec![2, 2])]).unwrap(), 1.0);
        let hand = Fixed(vec![0.5, 0.125, 0.375]);
        assert_eq!(perplexity(&hand, &[example(vec![0, 1])]).unwrap(), 4.0);
        assert!(perplexity(&uniform, &[]).is_err());
        assert!(perplexity(&uniform, &[example(vec![])]).is_err());
    }
}
