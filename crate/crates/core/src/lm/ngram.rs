use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmError};
use crate::assemble::ModelInput;
use crate::tokenizer::TokenId;

/// Interpolation weights for the trigram, bigram and unigram estimates.
pub const NGRAM_LAMBDAS: [f64; 3] = [0.5, 0.3, 0.2];
/// Add-k smoothing constant.
pub const NGRAM_K: f64 = 0.01;

#[derive(Debug, Default, Clone, PartialEq)]
struct Context {
    total: u64,
    next: HashMap<TokenId, u64>,
}

impl Context {
    fn add(&mut self, w: TokenId, n: u64) {
        self.total += n;
        *self.next.entry(w).or_default() += n;
    }

    fn get(&self, w: TokenId) -> u64 {
        self.next.get(&w).copied().unwrap_or(0)
    }
}

/// Interpolated add-k trigram over token ids (type ids ignored).
///
/// Each order is `(c(ctx, w) + k) / (c(ctx) + kV)`, so an unseen context
/// contributes a uniform estimate and every mixture sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    vocab_size: usize,
    unigram: Vec<u64>,
    total: u64,
    bigram: HashMap<TokenId, Context>,
    trigram: HashMap<(TokenId, TokenId), Context>,
}

#[derive(Default)]
struct Counts {
    unigram: HashMap<TokenId, u64>,
    bigram: HashMap<(TokenId, TokenId), u64>,
    trigram: HashMap<(TokenId, TokenId, TokenId), u64>,
}

fn count_chunk(seqs: &[Vec<TokenId>]) -> Counts {
    let mut c = Counts::default();
    for s in seqs {
        for (i, &w) in s.iter().enumerate() {
            *c.unigram.entry(w).or_default() += 1;
            if i >= 1 {
                *c.bigram.entry((s[i - 1], w)).or_default() += 1;
            }
            if i >= 2 {
                *c.trigram.entry((s[i - 2], s[i - 1], w)).or_default() += 1;
            }
        }
    }
    c
}

/// Count 1-, 2- and 3-grams within each sequence (n-grams never span
/// sequence boundaries).
pub fn train_ngram(sequences: &[Vec<TokenId>], vocab_size: usize) -> Result<NGramLM, LmError> {
    if sequences.iter().all(|s| s.is_empty()) {
        return Err(LmError::EmptyCorpus);
    }
    if let Some(&bad) = sequences.iter().flatten().find(|&&t| t as usize >= vocab_size) {
        return Err(LmError::Format(format!("token id {bad} outside vocabulary of {vocab_size}")));
    }
    let chunks: Vec<&[Vec<TokenId>]> = sequences.chunks(256).collect();
    let mut lm = NGramLM::empty(vocab_size);
    for c in crate::par::map(&chunks, |c| count_chunk(c)) {
        for (w, n) in c.unigram {
            lm.unigram[w as usize] += n;
            lm.total += n;
        }
        for ((a, w), n) in c.bigram {
            lm.bigram.entry(a).or_default().add(w, n);
        }
        for ((a, b, w), n) in c.trigram {
            lm.trigram.entry((a, b)).or_default().add(w, n);
        }
    }
    Ok(lm)
}

#[derive(Serialize, Deserialize)]
struct NGramFile {
    format_version: u32,
    vocab_size: usize,
    lambdas: [f64; 3],
    k: f64,
    unigram: Vec<(TokenId, u64)>,
    bigram: Vec<(TokenId, TokenId, u64)>,
    trigram: Vec<(TokenId, TokenId, TokenId, u64)>,
}

impl NGramLM {
    fn empty(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            unigram: vec![0; vocab_size],
            total: 0,
            bigram: HashMap::new(),
            trigram: HashMap::new(),
        }
    }

    pub fn unigram_count(&self, id: TokenId) -> u64 {
        self.unigram.get(id as usize).copied().unwrap_or(0)
    }

    pub fn bigram_count(&self, a: TokenId, w: TokenId) -> u64 {
        self.bigram.get(&a).map_or(0, |c| c.get(w))
    }

    pub fn trigram_count(&self, a: TokenId, b: TokenId, w: TokenId) -> u64 {
        self.trigram.get(&(a, b)).map_or(0, |c| c.get(w))
    }

    /// Total number of training tokens.
    pub fn token_count(&self) -> u64 {
        self.total
    }

    fn smooth(count: u64, total: u64, v: f64) -> f64 {
        (count as f64 + NGRAM_K) / (total as f64 + NGRAM_K * v)
    }

    /// P(w | context), where only the last two context tokens matter.
    pub fn prob(&self, context: &[TokenId], w: TokenId) -> f64 {
        let v = self.vocab_size as f64;
        let n = context.len();
        let (tri_c, tri_t) = match n {
            2.. => self.trigram.get(&(context[n - 2], context[n - 1])).map_or((0, 0), |c| (c.get(w), c.total)),
            _ => (0, 0),
        };
        let (bi_c, bi_t) = match n {
            1.. => self.bigram.get(&context[n - 1]).map_or((0, 0), |c| (c.get(w), c.total)),
            _ => (0, 0),
        };
        let [l3, l2, l1] = NGRAM_LAMBDAS;
        l3 * Self::smooth(tri_c, tri_t, v) + l2 * Self::smooth(bi_c, bi_t, v) + l1 * Self::smooth(self.unigram_count(w), self.total, v)
    }

    /// Full distribution after `context`, computed densely from the sparse
    /// counts of its two conditioning contexts.
    pub fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.vocab_size as f64;
        let n = context.len();
        let empty = Context::default();
        let tri = if n >= 2 { self.trigram.get(&(context[n - 2], context[n - 1])).unwrap_or(&empty) } else { &empty };
        let bi = if n >= 1 { self.bigram.get(&context[n - 1]).unwrap_or(&empty) } else { &empty };
        let [l3, l2, l1] = NGRAM_LAMBDAS;
        let base3 = l3 * Self::smooth(0, tri.total, v);
        let base2 = l2 * Self::smooth(0, bi.total, v);
        let mut out: Vec<f64> = self.unigram.iter().map(|&c| base3 + base2 + l1 * Self::smooth(c, self.total, v)).collect();
        for (&w, &c) in &tri.next {
            out[w as usize] += l3 * c as f64 / (tri.total as f64 + NGRAM_K * v);
        }
        for (&w, &c) in &bi.next {
            out[w as usize] += l2 * c as f64 / (bi.total as f64 + NGRAM_K * v);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let mut unigram: Vec<(TokenId, u64)> =
            self.unigram.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as TokenId, c)).collect();
        unigram.sort_unstable();
        let mut bigram: Vec<_> = self.bigram.iter().flat_map(|(&a, c)| c.next.iter().map(move |(&w, &n)| (a, w, n))).collect();
        bigram.sort_unstable();
        let mut trigram: Vec<_> =
            self.trigram.iter().flat_map(|(&(a, b), c)| c.next.iter().map(move |(&w, &n)| (a, b, w, n))).collect();
        trigram.sort_unstable();
        let file = NGramFile {
            format_version: 1,
            vocab_size: self.vocab_size,
            lambdas: NGRAM_LAMBDAS,
            k: NGRAM_K,
            unigram,
            bigram,
            trigram,
        };
        let json = serde_json::to_vec(&file).map_err(|e| LmError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let bytes = std::fs::read(path)?;
        let f: NGramFile = serde_json::from_slice(&bytes).map_err(|e| LmError::Format(e.to_string()))?;
        if f.format_version != 1 {
            return Err(LmError::Format(format!("unsupported format_version {}", f.format_version)));
        }
        if f.lambdas != NGRAM_LAMBDAS || f.k != NGRAM_K {
            return Err(LmError::Format("smoothing parameters differ from this build".into()));
        }
        let mut lm = Self::empty(f.vocab_size);
        let check = |id: TokenId| {
            if (id as usize) < f.vocab_size {
                Ok(())
            } else {
                Err(LmError::Format(format!("token id {id} outside vocabulary of {}", f.vocab_size)))
            }
        };
        for (w, n) in f.unigram {
            check(w)?;
            lm.unigram[w as usize] += n;
            lm.total += n;
        }
        for (a, w, n) in f.bigram {
            check(a)?;
            check(w)?;
            lm.bigram.entry(a).or_default().add(w, n);
        }
        for (a, b, w, n) in f.trigram {
            check(a)?;
            check(b)?;
            check(w)?;
            lm.trigram.entry((a, b)).or_default().add(w, n);
        }
        Ok(lm)
    }
}

impl LanguageModel for NGramLM {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, prefix: &ModelInput) -> Result<Vec<f64>, LmError> {
        Ok(self.distribution(&prefix.token_ids))
    }

    fn target_probs(&self, input: &ModelInput, targets: &[TokenId]) -> Result<Vec<f64>, LmError> {
        let mut ctx: Vec<TokenId> = input.token_ids[input.len().saturating_sub(2)..].to_vec();
        let mut out = Vec::with_capacity(targets.len());
        for &t in targets {
            out.push(self.prob(&ctx, t));
            ctx.push(t);
            if ctx.len() > 2 {
                ctx.remove(0);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_counts() {
        let lm = train_ngram(&[vec![1, 2, 3]], 5).unwrap();
        assert_eq!((lm.unigram_count(1), lm.unigram_count(2), lm.unigram_count(3), lm.unigram_count(0)), (1, 1, 1, 0));
        assert_eq!(lm.bigram_count(1, 2), 1);
        assert_eq!(lm.trigram_count(1, 2, 3), 1);
        assert_eq!(lm.token_count(), 3);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(matches!(train_ngram(&[], 5), Err(LmError::EmptyCorpus)));
        assert!(matches!(train_ngram(&[vec![]], 5), Err(LmError::EmptyCorpus)));
        assert!(train_ngram(&[vec![9]], 5).is_err());
    }

    #[test]
    fn repeated_token_dominates() {
        let lm = train_ngram(&[vec![1, 1, 1, 1]], 4).unwrap();
        let d = lm.distribution(&[1, 1]);
        let best = (0..4).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        assert_eq!(best, 1);
        // 0.5·(2+k)/(2+4k) + 0.3·(3+k)/(3+4k) + 0.2·(4+k)/(4+4k)
        let k = NGRAM_K;
        let expect = 0.5 * (2.0 + k) / (2.0 + 4.0 * k) + 0.3 * (3.0 + k) / (3.0 + 4.0 * k) + 0.2 * (4.0 + k) / (4.0 + 4.0 * k);
        assert!((d[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn dense_matches_pointwise_and_sums_to_one() {
        let lm = train_ngram(&[vec![0, 1, 2, 1, 2, 3], vec![3, 3, 1]], 6).unwrap();
        for ctx in [&[][..], &[1], &[1, 2], &[5, 5], &[3, 3]] {
            let d = lm.distribution(ctx);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for w in 0..6 {
                assert!((d[w] - lm.prob(ctx, w as TokenId)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let lm = train_ngram(&[vec![0, 1, 2, 1, 2, 3], vec![3, 3, 1]], 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.json");
        lm.save(&p).unwrap();
        assert_eq!(NGramLM::load(&p).unwrap(), lm);
        let first = std::fs::read(&p).unwrap();
        NGramLM::load(&p).unwrap().save(&p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }
}
