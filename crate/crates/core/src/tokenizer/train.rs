use std::collections::HashMap;

use super::bytes::{to_symbols, BYTES};
use super::{pretokenize, split_specials, TokenId, Tokenizer, TokenizerError};

/// Learn merges until the base vocabulary (bytes plus merged symbols) reaches
/// `target_vocab_size`, or no adjacent pair is left.
///
/// Each round merges the most frequent adjacent pair, counting overlapping
/// occurrences; equal counts go to the lexicographically smallest pair.
/// Special-token literals in the corpus are skipped.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_vocab_size: usize) -> Result<Tokenizer, TokenizerError> {
    let base = BYTES.order.len();
    if target_vocab_size <= base {
        return Err(TokenizerError::VocabTooSmall {
            target: target_vocab_size,
            base,
        });
    }
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    for text in corpus {
        for piece in split_specials(text.as_ref()).into_iter().flatten() {
            for w in pretokenize(piece) {
                *word_counts.entry(to_symbols(w)).or_default() += 1;
            }
        }
    }
    if word_counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    // Sorted so the working set does not depend on hash order.
    let mut words: Vec<(Vec<String>, u64)> = word_counts
        .into_iter()
        .map(|(w, c)| (w.chars().map(String::from).collect(), c))
        .collect();
    words.sort();

    let mut vocab: HashMap<String, TokenId> =
        BYTES.order.iter().enumerate().map(|(i, (_, c))| (c.to_string(), i as TokenId)).collect();
    let mut merges: Vec<(String, String)> = Vec::new();

    while vocab.len() < target_vocab_size {
        let mut pairs: HashMap<(&str, &str), u64> = HashMap::new();
        for (syms, count) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += count;
            }
        }
        let Some((best, _)) = pairs
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
        else {
            break;
        };
        let (a, b) = (best.0.to_string(), best.1.to_string());
        let joined = format!("{a}{b}");
        for (syms, _) in &mut words {
            if syms.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            *syms = out;
        }
        let next = vocab.len() as TokenId;
        vocab.entry(joined).or_insert(next);
        merges.push((a, b));
    }
    Tokenizer::from_parts(vocab, merges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_merge_by_hand_count() {
        // Overlapping pairs: "aaab" has aa, aa, ab; twice = 4 aa, 2 ab; plus
        // one more ab from "ab" = 3.
        let t = train_bpe(&["aaab", "aaab", "ab"], 257).unwrap();
        assert_eq!(t.merges(), [("a".to_string(), "a".to_string())]);
        assert_eq!(t.base_size(), 257);
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // "ba" and "ab" both appear once in "bab"; ("a","b") < ("b","a").
        let t = train_bpe(&["bab"], 257).unwrap();
        assert_eq!(t.merges()[0], ("a".to_string(), "b".to_string()));
    }

    #[test]
    fn deterministic() {
        let corpus = ["the quick brown fox", "jumps over the lazy dog", "the end"];
        let a = train_bpe(&corpus, 320).unwrap();
        let b = train_bpe(&corpus, 320).unwrap();
        assert_eq!(a.merges(), b.merges());
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bpe::<&str>(&[], 300), Err(TokenizerError::EmptyCorpus)));
        assert!(matches!(train_bpe(&["x"], 256), Err(TokenizerError::VocabTooSmall { .. })));
    }

    #[test]
    fn stops_when_pairs_run_out() {
        let t = train_bpe(&["ab"], 1000).unwrap();
        assert_eq!(t.merges().len(), 1);
    }
}
