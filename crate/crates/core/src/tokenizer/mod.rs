//! Byte-level BPE with the dialogue delimiter tokens.
//!
//! Base vocabulary and merges load from GPT-2 format files (`vocab.json`,
//! `merges.txt`) or come from [`train_bpe`]. Five special tokens are appended
//! after the base vocabulary in the fixed order `__bk__`, `__ek__`,
//! `__bpd__`, `__epd__`, `__eot__`; on a 50,257-entry GPT-2 base this gives a
//! 50,262-entry vocabulary with `__bk__` = 50257.

mod bytes;
mod train;

use std::collections::HashMap;
use std::path::Path;
use std::sync::LazyLock;

use fancy_regex::Regex;

pub use train::train_bpe;

use bytes::{to_symbols, BYTES};

pub const BK: &str = "__bk__";
pub const EK: &str = "__ek__";
pub const BPD: &str = "__bpd__";
pub const EPD: &str = "__epd__";
pub const EOT: &str = "__eot__";

/// Append order of the special tokens.
pub const SPECIAL_TOKENS: [&str; 5] = [BK, EK, BPD, EPD, EOT];

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub bk: TokenId,
    pub ek: TokenId,
    pub bpd: TokenId,
    pub epd: TokenId,
    pub eot: TokenId,
}

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    UnknownId { id: TokenId, vocab_size: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary {target} must exceed the {base}-symbol byte alphabet")]
    VocabTooSmall { target: usize, base: usize },
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// GPT-2 pre-tokenization.
static PRETOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+").unwrap()
});

pub(crate) fn pretokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        match PRETOKEN.find_from_pos(text, pos) {
            Ok(Some(m)) if m.end() > pos => {
                if m.start() > pos {
                    out.push(&text[pos..m.start()]);
                }
                out.push(m.as_str());
                pos = m.end();
            }
            // Backtrack limit or no match: keep the remainder as one piece.
            _ => {
                out.push(&text[pos..]);
                break;
            }
        }
    }
    out
}

/// Split text around special-token literals. Specials are matched leftmost
/// first, longest on a tie.
fn split_specials(text: &str) -> Vec<Result<&str, usize>> {
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        let hit = SPECIAL_TOKENS
            .iter()
            .enumerate()
            .filter_map(|(i, s)| rest.find(s).map(|pos| (pos, std::cmp::Reverse(s.len()), i)))
            .min();
        match hit {
            Some((pos, std::cmp::Reverse(len), i)) => {
                if pos > 0 {
                    out.push(Ok(&rest[..pos]));
                }
                out.push(Err(i));
                rest = &rest[pos + len..];
            }
            None => {
                if !rest.is_empty() {
                    out.push(Ok(rest));
                }
                return out;
            }
        }
    }
}

/// Immutable byte-level BPE tokenizer.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    encoder: HashMap<String, TokenId>,
    decoder: Vec<String>,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    base_size: usize,
    specials: SpecialIds,
}

impl PartialEq for Tokenizer {
    fn eq(&self, other: &Self) -> bool {
        self.decoder == other.decoder && self.merges == other.merges
    }
}

impl Tokenizer {
    /// Build from a dense base vocabulary and ordered merges, then append the
    /// special tokens.
    pub fn from_parts(vocab: HashMap<String, TokenId>, merges: Vec<(String, String)>) -> Result<Self, TokenizerError> {
        let base_size = vocab.len();
        let mut decoder = vec![None; base_size];
        for (tok, &id) in &vocab {
            let slot = decoder
                .get_mut(id as usize)
                .ok_or_else(|| TokenizerError::InvalidVocab(format!("id {id} not dense in [0, {base_size})")))?;
            if slot.replace(tok.clone()).is_some() {
                return Err(TokenizerError::InvalidVocab(format!("id {id} assigned twice")));
            }
        }
        let mut decoder: Vec<String> = decoder.into_iter().map(Option::unwrap).collect();
        for (_, c) in &BYTES.order {
            if !vocab.contains_key(&c.to_string()) {
                return Err(TokenizerError::InvalidVocab(format!("missing byte symbol {c:?}")));
            }
        }
        let mut encoder = vocab;
        let mut ids = [0; 5];
        for (slot, s) in ids.iter_mut().zip(SPECIAL_TOKENS) {
            if encoder.contains_key(s) {
                return Err(TokenizerError::InvalidVocab(format!("{s} already in base vocabulary")));
            }
            *slot = decoder.len() as TokenId;
            encoder.insert(s.to_string(), *slot);
            decoder.push(s.to_string());
        }
        let ranks = merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        Ok(Self {
            encoder,
            decoder,
            merges,
            ranks,
            base_size,
            specials: SpecialIds {
                bk: ids[0],
                ek: ids[1],
                bpd: ids[2],
                epd: ids[3],
                eot: ids[4],
            },
        })
    }

    /// 256 byte tokens and no merges.
    pub fn byte_level() -> Self {
        let vocab = BYTES.order.iter().enumerate().map(|(i, (_, c))| (c.to_string(), i as TokenId)).collect();
        Self::from_parts(vocab, Vec::new()).expect("byte table is a valid vocabulary")
    }

    /// Load GPT-2 format files: a JSON token → id map and a merges list whose
    /// first line is a `#version` header.
    pub fn load(vocab_path: &Path, merges_path: &Path) -> Result<Self, TokenizerError> {
        let vocab: HashMap<String, TokenId> = serde_json::from_str(&std::fs::read_to_string(vocab_path)?)
            .map_err(|e| TokenizerError::InvalidVocab(e.to_string()))?;
        let merges = parse_merges(&std::fs::read_to_string(merges_path)?)?;
        Self::from_parts(vocab, merges)
    }

    /// Load `vocab.json` and `merges.txt` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, TokenizerError> {
        Self::load(&dir.join("vocab.json"), &dir.join("merges.txt"))
    }

    /// Write the base vocabulary (specials excluded) and merges in GPT-2 format.
    pub fn save_dir(&self, dir: &Path) -> Result<(), TokenizerError> {
        std::fs::create_dir_all(dir)?;
        let base: std::collections::BTreeMap<&str, TokenId> = self.decoder[..self.base_size]
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as TokenId))
            .collect();
        std::fs::write(dir.join("vocab.json"), serde_json::to_string(&base).map_err(std::io::Error::other)?)?;
        let mut merges = String::from("#version: 0.2\n");
        for (a, b) in &self.merges {
            merges.push_str(a);
            merges.push(' ');
            merges.push_str(b);
            merges.push('\n');
        }
        std::fs::write(dir.join("merges.txt"), merges)?;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.decoder.len()
    }

    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token_str(&self, id: TokenId) -> Option<&str> {
        self.decoder.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for piece in split_specials(text) {
            match piece {
                Err(i) => out.push(self.base_size as TokenId + i as TokenId),
                Ok(span) => {
                    for word in pretokenize(span) {
                        self.encode_word(word, &mut out);
                    }
                }
            }
        }
        out
    }

    fn encode_word(&self, word: &str, out: &mut Vec<TokenId>) {
        let mut symbols: Vec<String> = to_symbols(word).chars().map(String::from).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == *a && symbols[i + 1] == *b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        for s in symbols {
            match self.encoder.get(&s) {
                Some(&id) => out.push(id),
                // A merge result missing from vocab.json: fall back to bytes.
                None => out.extend(s.chars().map(|c| self.encoder[&c.to_string()])),
            }
        }
    }

    /// Inverse of [`encode`](Self::encode). Id sequences that cut a multibyte
    /// character (for example after token-level truncation) decode with
    /// U+FFFD replacement.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            let tok = self.decoder.get(id as usize).ok_or(TokenizerError::UnknownId {
                id,
                vocab_size: self.vocab_size(),
            })?;
            if id as usize >= self.base_size {
                bytes.extend_from_slice(tok.as_bytes());
            } else {
                bytes.extend(tok.chars().map(|c| BYTES.decode.get(&c).copied().unwrap_or(b'?')));
            }
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }
}

fn parse_merges(text: &str) -> Result<Vec<(String, String)>, TokenizerError> {
    text.lines()
        .enumerate()
        .filter(|(i, l)| !(*i == 0 && l.starts_with("#version")) && !l.trim().is_empty())
        .map(|(i, l)| {
            let mut parts = l.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
                _ => Err(TokenizerError::InvalidVocab(format!("merges line {}: {l:?}", i + 1))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_simple() {
        let t = Tokenizer::byte_level();
        for s in ["hello world", "naïve café\n", "", "  spaced\t\tout  ", "emoji 🦀 ok"] {
            assert_eq!(t.decode(&t.encode(s)).unwrap(), s);
        }
        assert!(t.encode("").is_empty());
        assert_eq!(t.decode(&[]).unwrap(), "");
    }

    #[test]
    fn decode_out_of_range() {
        let t = Tokenizer::byte_level();
        let v = t.vocab_size() as TokenId;
        assert!(matches!(t.decode(&[v]), Err(TokenizerError::UnknownId { id, .. }) if id == v));
    }

    #[test]
    fn specials_follow_gpt2_sized_base() {
        // A dense 50,257-entry base: 256 byte symbols plus filler merges.
        let mut vocab: HashMap<String, TokenId> =
            BYTES.order.iter().enumerate().map(|(i, (_, c))| (c.to_string(), i as TokenId)).collect();
        for i in vocab.len()..50_257 {
            vocab.insert(format!("<filler{i}>"), i as TokenId);
        }
        let t = Tokenizer::from_parts(vocab, Vec::new()).unwrap();
        assert_eq!(t.vocab_size(), 50_262);
        assert_eq!(t.encode("__bk__"), [50_257]);
        let s = t.specials();
        assert_eq!([s.bk, s.ek, s.bpd, s.epd, s.eot], [50_257, 50_258, 50_259, 50_260, 50_261]);
    }

    #[test]
    fn specials_atomic_in_context() {
        let t = Tokenizer::byte_level();
        let e = t.specials().eot;
        let ids = t.encode("hi __eot__ there__bk__");
        assert_eq!(ids.iter().filter(|&&i| i == e).count(), 1);
        assert_eq!(*ids.last().unwrap(), t.specials().bk);
        assert_eq!(t.decode(&ids).unwrap(), "hi __eot__ there__bk__");
    }

    #[test]
    fn merges_apply_by_rank() {
        let t = train_bpe(&["low lower lowest", "low low"], 256 + 3).unwrap();
        assert_eq!(t.merges().len(), 3);
        let ids = t.encode("low");
        assert!(ids.len() < 3, "{ids:?}");
        assert_eq!(t.decode(&ids).unwrap(), "low");
    }

    #[test]
    fn save_and_load_dir() {
        let dir = tempfile::tempdir().unwrap();
        let t = train_bpe(&["the cat sat on the mat", "the hat"], 300).unwrap();
        t.save_dir(dir.path()).unwrap();
        let back = Tokenizer::load_dir(dir.path()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.encode("the mat"), t.encode("the mat"));
    }

    #[test]
    fn truncated_multibyte_decodes_lossy() {
        let t = Tokenizer::byte_level();
        let ids = t.encode("é");
        assert_eq!(ids.len(), 2);
        assert_eq!(t.decode(&ids[..1]).unwrap(), "\u{FFFD}");
    }

    #[test]
    fn pretokenizer_matches_gpt2_shape() {
        assert_eq!(pretokenize("Hello world's  end"), ["Hello", " world", "'s", " ", " end"]);
    }
}
