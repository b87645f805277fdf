//! Knowledge and past-dialogue retrieval.
//!
//! Knowledge retrieval is an exhaustive cosine scan restricted to documents
//! linked from the conversation itself. Past dialogues are the speaker's own
//! comments outside the conversation, best karma first, packed into a token
//! budget.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{PastDialogueStore, Turn};
use crate::embedder::{dot, Embedder, EmbedError, Fingerprint};
use crate::kb::{canonicalize_url, ExtDocsKB, SentenceRecord};
use crate::tokenizer::{TokenId, Tokenizer};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_HISTORY_BUDGET: usize = 250;

/// Read access to sentence records by url.
pub trait DocSource: Sync {
    fn fingerprint(&self) -> &Fingerprint;
    fn sentences(&self, url: &str) -> Option<&[SentenceRecord]>;
}

impl DocSource for ExtDocsKB {
    fn fingerprint(&self) -> &Fingerprint {
        ExtDocsKB::fingerprint(self)
    }

    fn sentences(&self, url: &str) -> Option<&[SentenceRecord]> {
        self.get(url)
    }
}

/// Two stores searched in order, e.g. the built knowledge base plus documents
/// fetched during a chat session.
pub struct Overlay<'a> {
    pub primary: &'a ExtDocsKB,
    pub secondary: &'a ExtDocsKB,
}

impl DocSource for Overlay<'_> {
    fn fingerprint(&self) -> &Fingerprint {
        self.primary.fingerprint()
    }

    fn sentences(&self, url: &str) -> Option<&[SentenceRecord]> {
        self.primary.get(url).or_else(|| self.secondary.get(url))
    }
}

/// Which turns contribute candidate documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowledgeScope {
    LastTurn,
    #[default]
    Conversation,
}

impl std::str::FromStr for KnowledgeScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "last-turn" => Ok(Self::LastTurn),
            "conversation" => Ok(Self::Conversation),
            other => Err(format!("unknown knowledge scope {other:?} (last-turn | conversation)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub text: String,
    pub doc_url: String,
    pub sentence_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievedKnowledge {
    pub query_text: String,
    pub items: Vec<KnowledgeItem>,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error("embedder {found:?} does not match knowledge base {expected:?}")]
    FingerprintMismatch { expected: Fingerprint, found: Fingerprint },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Canonical candidate urls: the last turn's urls first, then (for
/// [`KnowledgeScope::Conversation`]) earlier turns from newest to oldest.
/// Duplicates keep their first position.
pub fn candidate_urls(turns: &[Turn], scope: KnowledgeScope) -> Vec<String> {
    let mut seen = HashSet::new();
    let ordered: Box<dyn Iterator<Item = &Turn>> = match scope {
        KnowledgeScope::LastTurn => Box::new(turns.last().into_iter()),
        KnowledgeScope::Conversation => Box::new(turns.iter().rev()),
    };
    ordered
        .flat_map(|t| t.urls.iter())
        .filter_map(|u| canonicalize_url(u))
        .filter(|u| seen.insert(u.clone()))
        .collect()
}

/// Indices of the `k` best scores, ordered by score descending then index
/// ascending.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Top-`k` sentences by cosine similarity to the last turn, searched only
/// over documents linked in `turns`.
pub fn retrieve_knowledge(
    turns: &[Turn],
    docs: &dyn DocSource,
    embedder: &dyn Embedder,
    k: usize,
    scope: KnowledgeScope,
) -> Result<RetrievedKnowledge, RetrieveError> {
    let found = embedder.fingerprint();
    if &found != docs.fingerprint() {
        return Err(RetrieveError::FingerprintMismatch {
            expected: docs.fingerprint().clone(),
            found,
        });
    }
    let query_text = turns.last().map(|t| t.text.clone()).unwrap_or_default();
    let candidates: Vec<&SentenceRecord> = candidate_urls(turns, scope)
        .iter()
        .filter_map(|u| docs.sentences(u))
        .flatten()
        .collect();
    if candidates.is_empty() || k == 0 {
        return Ok(RetrievedKnowledge {
            query_text,
            items: Vec::new(),
        });
    }
    let q = embedder.embed(&query_text)?;
    let scores = crate::par::map(&candidates, |r| dot(q.as_slice(), r.vector.as_slice()).clamp(-1.0, 1.0));
    let items = top_k(&scores, k)
        .into_iter()
        .map(|i| KnowledgeItem {
            text: candidates[i].text.clone(),
            doc_url: candidates[i].doc_url.clone(),
            sentence_index: candidates[i].sentence_index,
            score: scores[i],
        })
        .collect();
    Ok(RetrievedKnowledge { query_text, items })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub comment_id: String,
    pub text: String,
    pub karma: i64,
    /// Encoded text, possibly tail-truncated.
    pub token_ids: Vec<TokenId>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievedHistory {
    pub items: Vec<HistoryItem>,
}

impl RetrievedHistory {
    /// Budget consumed: item tokens plus one separator per item.
    pub fn budget_used(&self) -> usize {
        self.items.iter().map(|i| i.token_ids.len() + 1).sum()
    }
}

/// Pack the speaker's highest-karma past comments into `budget_tokens`.
///
/// Each item costs its token count plus one `__eot__`. Comments are taken in
/// store order (karma desc, newer first), skipping `exclude_ids`; a comment
/// that does not fit is skipped, except that when nothing has been taken yet
/// it is tail-truncated to fill the budget exactly.
pub fn retrieve_past_dialogues(
    speaker: &str,
    store: &PastDialogueStore,
    tokenizer: &Tokenizer,
    budget_tokens: usize,
    exclude_ids: &HashSet<String>,
) -> RetrievedHistory {
    let mut items = Vec::new();
    let mut used = 0;
    if budget_tokens < 2 {
        return RetrievedHistory { items };
    }
    for c in store.get(speaker) {
        if exclude_ids.contains(&c.comment_id) || c.text.trim().is_empty() {
            continue;
        }
        let mut ids = tokenizer.encode(&c.text);
        let cost = ids.len() + 1;
        let mut truncated = false;
        if used + cost > budget_tokens {
            if !items.is_empty() {
                continue;
            }
            ids.truncate(budget_tokens - 1);
            truncated = true;
        }
        used += ids.len() + 1;
        items.push(HistoryItem {
            comment_id: c.comment_id.clone(),
            text: if truncated {
                tokenizer.decode(&ids).unwrap_or_default()
            } else {
                c.text.clone()
            },
            karma: c.karma,
            token_ids: ids,
            truncated,
        });
        if used + 2 > budget_tokens {
            break;
        }
    }
    RetrievedHistory { items }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_past_dialogue_store, RawComment};
    use crate::embedder::{EmbeddingVector, HashEmbedder};

    fn turn(text: &str, urls: &[&str]) -> Turn {
        Turn {
            comment_id: String::new(),
            author: "l".into(),
            text: text.into(),
            karma: 1,
            urls: urls.iter().map(|s| s.to_string()).collect(),
            turn_index: 0,
        }
    }

    fn kb_with(e: &HashEmbedder, docs: &[(&str, &[&str])]) -> ExtDocsKB {
        let mut kb = ExtDocsKB::new(e.fingerprint());
        for (url, sents) in docs {
            kb.insert_document(url, sents.iter().map(|s| (s.to_string(), e.hash_embed(s))).collect()).unwrap();
        }
        kb
    }

    #[test]
    fn fewer_candidates_than_k() {
        let e = HashEmbedder::new(64);
        let kb = kb_with(&e, &[("https://a.example/", &["cats are great pets", "dogs bark", "the stock market"])]);
        let r = retrieve_knowledge(&[turn("i love cats as pets", &["https://a.example/"])], &kb, &e, 5, KnowledgeScope::Conversation).unwrap();
        assert_eq!(r.items.len(), 3);
        assert!(r.items.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(r.items[0].text, "cats are great pets");
    }

    #[test]
    fn no_urls_no_knowledge() {
        let e = HashEmbedder::new(16);
        let kb = kb_with(&e, &[("https://a.example/", &["something"])]);
        let r = retrieve_knowledge(&[turn("hello", &[])], &kb, &e, 5, KnowledgeScope::Conversation).unwrap();
        assert!(r.items.is_empty());
        assert_eq!(r.query_text, "hello");
    }

    #[test]
    fn locality_and_scope() {
        let e = HashEmbedder::new(64);
        let kb = kb_with(&e, &[("https://a.example/", &["alpha text"]), ("https://b.example/", &["beta text"]), ("https://c.example/", &["gamma text"])]);
        let turns = [turn("first", &["https://a.example/"]), turn("second", &["https://b.example/"])];
        let all = retrieve_knowledge(&turns, &kb, &e, 10, KnowledgeScope::Conversation).unwrap();
        let urls: HashSet<_> = all.items.iter().map(|i| i.doc_url.as_str()).collect();
        assert_eq!(urls, HashSet::from(["https://a.example/", "https://b.example/"]));
        let last = retrieve_knowledge(&turns, &kb, &e, 10, KnowledgeScope::LastTurn).unwrap();
        assert_eq!(last.items.len(), 1);
        assert_eq!(last.items[0].doc_url, "https://b.example/");
    }

    #[test]
    fn ties_follow_candidate_order() {
        let e = HashEmbedder::new(8);
        let mut kb = ExtDocsKB::new(e.fingerprint());
        let v = EmbeddingVector::basis(8, 3);
        kb.insert_document("https://a.example/", vec![("a0".into(), v.clone()), ("a1".into(), v.clone())]).unwrap();
        kb.insert_document("https://b.example/", vec![("b0".into(), v.clone())]).unwrap();
        let turns = [turn("q", &["https://a.example/"]), turn("q", &["https://b.example/"])];
        let r = retrieve_knowledge(&turns, &kb, &e, 3, KnowledgeScope::Conversation).unwrap();
        assert_eq!(r.items.iter().map(|i| i.text.as_str()).collect::<Vec<_>>(), ["b0", "a0", "a1"]);
    }

    #[test]
    fn fingerprint_mismatch() {
        let kb = ExtDocsKB::new(HashEmbedder::new(8).fingerprint());
        let err = retrieve_knowledge(&[turn("q", &[])], &kb, &HashEmbedder::new(16), 5, KnowledgeScope::Conversation);
        assert!(matches!(err, Err(RetrieveError::FingerprintMismatch { .. })));
    }

    #[test]
    fn top_k_selection() {
        let s = [0.1, 0.9, 0.5, 0.9, -1.0];
        assert_eq!(top_k(&s, 3), [1, 3, 2]);
        assert_eq!(top_k(&s, 10), [1, 3, 2, 0, 4]);
        assert!(top_k(&s, 0).is_empty());
    }

    fn comment(id: &str, body: &str, score: i64) -> RawComment {
        RawComment {
            id: id.into(),
            parent_id: None,
            link_id: String::new(),
            author: "sp".into(),
            body: body.into(),
            score,
            subreddit: String::new(),
            nsfw: false,
            created_utc: 0,
        }
    }

    #[test]
    fn history_in_karma_order() {
        let store = build_past_dialogue_store(&[comment("a", "ten", 10), comment("b", "three", 3), comment("c", "seven", 7)], "[deleted]");
        let h = retrieve_past_dialogues("sp", &store, &Tokenizer::byte_level(), 250, &HashSet::new());
        assert_eq!(h.items.iter().map(|i| i.karma).collect::<Vec<_>>(), [10, 7, 3]);
    }

    #[test]
    fn lone_overflow_truncates() {
        let long = "x".repeat(300);
        let store = build_past_dialogue_store(&[comment("a", &long, 10), comment("b", "short", 1)], "[deleted]");
        let h = retrieve_past_dialogues("sp", &store, &Tokenizer::byte_level(), 250, &HashSet::new());
        assert_eq!(h.items.len(), 1);
        assert!(h.items[0].truncated);
        assert_eq!(h.budget_used(), 250);
    }

    #[test]
    fn overflow_after_first_is_skipped() {
        let store = build_past_dialogue_store(
            &[comment("a", "first item", 10), comment("b", &"y".repeat(400), 5), comment("c", "third", 1)],
            "[deleted]",
        );
        let h = retrieve_past_dialogues("sp", &store, &Tokenizer::byte_level(), 250, &HashSet::new());
        assert_eq!(h.items.iter().map(|i| i.comment_id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
    }

    #[test]
    fn exclusion_and_unknown_speaker() {
        let store = build_past_dialogue_store(&[comment("a", "one", 10), comment("b", "two", 5)], "[deleted]");
        let ex: HashSet<String> = ["a".to_string()].into();
        let h = retrieve_past_dialogues("sp", &store, &Tokenizer::byte_level(), 250, &ex);
        assert_eq!(h.items.len(), 1);
        assert_eq!(h.items[0].comment_id, "b");
        assert!(retrieve_past_dialogues("nobody", &store, &Tokenizer::byte_level(), 250, &ex).items.is_empty());
    }
}
