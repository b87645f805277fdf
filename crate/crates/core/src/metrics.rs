//! Corpus BLEU and the combined evaluation report.
//!
//! BLEU works on whitespace tokens of decoded text, never on BPE ids.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty candidate corpus")]
    Empty,
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("conversation ids do not match the split: missing {missing:?}, unexpected {unexpected:?}")]
    IdMismatch { missing: Vec<String>, unexpected: Vec<String> },
    #[error("duplicate conversation id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// 0 to 100.
    pub score: f64,
    /// Modified precisions p_1..p_4.
    pub precisions: [f64; MAX_ORDER],
    /// Clipped matches and candidate n-gram totals per order.
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub candidate_tokens: u64,
    pub reference_tokens: u64,
}

pub fn whitespace_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn ngram_counts<T: AsRef<str>>(toks: &[T], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_default() += 1;
        }
    }
    m
}

#[derive(Default, Clone, Copy)]
struct PairStats {
    matches: [u64; MAX_ORDER],
    totals: [u64; MAX_ORDER],
    c: u64,
    r: u64,
}

fn pair_stats<T: AsRef<str>>(cand: &[T], reference: &[T]) -> PairStats {
    let mut s = PairStats {
        c: cand.len() as u64,
        r: reference.len() as u64,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let rc = ngram_counts(reference, n);
        for (g, k) in ngram_counts(cand, n) {
            s.matches[n - 1] += k.min(rc.get(&g).copied().unwrap_or(0));
            s.totals[n - 1] += k;
        }
    }
    s
}

/// Unsmoothed corpus-level BLEU-4 with clipped counts and the corpus
/// brevity penalty `BP = 1 if c > r else exp(1 - r/c)`.
///
/// Any order with candidate n-grams but zero matches gives a score of 0.
/// An order for which no candidate has any n-gram (every candidate shorter
/// than n) is left out of the geometric mean.
pub fn corpus_bleu<T: AsRef<str> + Sync>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<BleuReport, MetricsError> {
    if candidates.is_empty() {
        return Err(MetricsError::Empty);
    }
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let pairs: Vec<(&Vec<T>, &Vec<T>)> = candidates.iter().zip(references).collect();
    let mut agg = PairStats::default();
    for s in crate::par::map(&pairs, |(c, r)| pair_stats(c, r)) {
        for n in 0..MAX_ORDER {
            agg.matches[n] += s.matches[n];
            agg.totals[n] += s.totals[n];
        }
        agg.c += s.c;
        agg.r += s.r;
    }
    let mut precisions = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut orders = 0;
    let mut zero = false;
    for n in 0..MAX_ORDER {
        if agg.totals[n] == 0 {
            continue;
        }
        precisions[n] = agg.matches[n] as f64 / agg.totals[n] as f64;
        orders += 1;
        if agg.matches[n] == 0 {
            zero = true;
        } else {
            log_sum += precisions[n].ln();
        }
    }
    let bp = if agg.c == 0 {
        0.0
    } else if agg.c > agg.r {
        1.0
    } else {
        (1.0 - agg.r as f64 / agg.c as f64).exp()
    };
    let score = if zero || orders == 0 || bp == 0.0 {
        0.0
    } else {
        bp * (log_sum / orders as f64).exp() * 100.0
    };
    Ok(BleuReport {
        score: score.clamp(0.0, 100.0),
        precisions,
        matches: agg.matches,
        totals: agg.totals,
        brevity_penalty: bp,
        candidate_tokens: agg.c,
        reference_tokens: agg.r,
    })
}

/// One generated or reference response, keyed by conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub conversation_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleDiagnostics {
    pub conversation_id: String,
    pub candidate_tokens: usize,
    pub reference_tokens: usize,
    pub unigram_matches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: BleuReport,
    pub perplexity: Option<f64>,
    pub examples: Vec<ExampleDiagnostics>,
}

fn by_id(items: &[Utterance]) -> Result<BTreeMap<&str, &str>, MetricsError> {
    let mut m = BTreeMap::new();
    for u in items {
        if m.insert(u.conversation_id.as_str(), u.text.as_str()).is_some() {
            return Err(MetricsError::Duplicate(u.conversation_id.clone()));
        }
    }
    Ok(m)
}

/// BLEU of `outputs` against the split's references, aligned by
/// conversation id, plus a perplexity computed by the caller.
pub fn evaluate_split(outputs: &[Utterance], split: &[Utterance], perplexity: Option<f64>) -> Result<EvalReport, MetricsError> {
    if split.is_empty() {
        return Err(MetricsError::Empty);
    }
    let cands = by_id(outputs)?;
    let refs = by_id(split)?;
    let ck: BTreeSet<&str> = cands.keys().copied().collect();
    let rk: BTreeSet<&str> = refs.keys().copied().collect();
    if ck != rk {
        return Err(MetricsError::IdMismatch {
            missing: rk.difference(&ck).map(|s| s.to_string()).collect(),
            unexpected: ck.difference(&rk).map(|s| s.to_string()).collect(),
        });
    }
    let c_toks: Vec<Vec<&str>> = refs.keys().map(|id| whitespace_tokens(cands[id])).collect();
    let r_toks: Vec<Vec<&str>> = refs.values().map(|t| whitespace_tokens(t)).collect();
    let bleu = corpus_bleu(&c_toks, &r_toks)?;
    let examples = refs
        .keys()
        .zip(c_toks.iter().zip(&r_toks))
        .map(|(id, (c, r))| ExampleDiagnostics {
            conversation_id: id.to_string(),
            candidate_tokens: c.len(),
            reference_tokens: r.len(),
            unigram_matches: pair_stats(c, r).matches[0],
        })
        .collect();
    Ok(EvalReport {
        bleu,
        perplexity,
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        whitespace_tokens(s)
    }

    #[test]
    fn identical_is_100() {
        let c = vec![toks("the cat is on the mat"), toks("hello")];
        assert_eq!(corpus_bleu(&c, &c).unwrap().score, 100.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let r = corpus_bleu(&[toks("the the the the the the the")], &[toks("the cat is on the mat")]).unwrap();
        assert!((r.precisions[0] - 2.0 / 7.0).abs() < 1e-9);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn no_four_gram_overlap_is_zero() {
        let r = corpus_bleu(&[toks("a b c d e")], &[toks("a b c x d e")]).unwrap();
        assert_eq!(r.matches[3], 0);
        assert!(r.totals[3] > 0);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn errors_and_empty_candidate() {
        let e: Vec<Vec<&str>> = vec![];
        assert_eq!(corpus_bleu(&e, &e), Err(MetricsError::Empty));
        assert!(corpus_bleu(&[toks("a")], &[]).is_err());
        let r = corpus_bleu(&[toks(""), toks("a b c d")], &[toks("x"), toks("a b c d")]).unwrap();
        assert_eq!(r.candidate_tokens, 4);
        assert!(r.score > 0.0 && r.score <= 100.0);
    }

    #[test]
    fn brevity_penalty() {
        let r = corpus_bleu(&[toks("a b c d")], &[toks("a b c d e f g h")]).unwrap();
        assert!((r.brevity_penalty - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    fn utt(id: &str, t: &str) -> Utterance {
        Utterance {
            conversation_id: id.into(),
            text: t.into(),
        }
    }

    #[test]
    fn split_evaluation() {
        let split = vec![utt("a", "one two three four"), utt("b", "five six seven eight nine")];
        let rep = evaluate_split(&split, &split, Some(3.0)).unwrap();
        assert_eq!(rep.bleu.score, 100.0);
        assert_eq!(rep.examples.len(), 2);
        assert_eq!(evaluate_split(&[], &[], None).unwrap_err(), MetricsError::Empty);
        match evaluate_split(&split[..1], &split, None).unwrap_err() {
            MetricsError::IdMismatch { missing, .. } => assert_eq!(missing, ["b"]),
            e => panic!("{e}"),
        }
    }
}
