//! The Ext-Docs knowledge base: sentences and embeddings for every document
//! hyperlinked from the conversations.
//!
//! On disk a knowledge base is a directory with three files:
//!
//! * `manifest.json`: format version, embedder fingerprint, and the document
//!   list (`url`, `sentences`) in storage order;
//! * `sentences.jsonl`: one `{"doc_url","sentence_index","text"}` per line,
//!   documents in manifest order, sentences in index order;
//! * `vectors.f32`: the matching embeddings as a flat little-endian `f32`
//!   array, `dimension` values per sentence.

mod fetch;
mod text;

use std::io::{BufRead, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use fetch::{canonicalize_url, fixture_key, FetchError, Fetcher, FixtureFetcher, LiveFetcher, RawDocument};
pub use text::{extract_text, split_sentences, strip_html, ExtractedText, ABBREVIATIONS, MIN_SENTENCE_CHARS};

use crate::embedder::{EmbedError, Embedder, EmbeddingVector, Fingerprint};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_SENTENCES_PER_DOC: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub doc_url: String,
    pub sentence_index: usize,
    pub text: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("knowledge base I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt knowledge base: {0}")]
    Corrupt(String),
    #[error("embedder {found:?} does not match knowledge base {expected:?}")]
    FingerprintMismatch { expected: Fingerprint, found: Fingerprint },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtDocsKB {
    fingerprint: Fingerprint,
    docs: IndexMap<String, Vec<SentenceRecord>>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    embedder: Fingerprint,
    total_sentences: usize,
    documents: Vec<ManifestDoc>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    url: String,
    sentences: usize,
}

#[derive(Serialize, Deserialize)]
struct SentenceLine {
    doc_url: String,
    sentence_index: usize,
    text: String,
}

impl ExtDocsKB {
    pub fn new(fingerprint: Fingerprint) -> Self {
        Self {
            fingerprint,
            docs: IndexMap::new(),
        }
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    /// Sentences for a url (any spelling that canonicalizes to a stored url).
    pub fn get(&self, url: &str) -> Option<&[SentenceRecord]> {
        let key = canonicalize_url(url)?;
        self.docs.get(&key).map(Vec::as_slice)
    }

    pub fn contains(&self, url: &str) -> bool {
        self.get(url).is_some()
    }

    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    pub fn document_count(&self) -> usize {
        self.docs.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.docs.values().map(Vec::len).sum()
    }

    /// Add a document from its sentence texts and vectors. Indices are
    /// assigned 0..n. Replaces any previous entry for the url.
    pub fn insert_document(&mut self, url: &str, sentences: Vec<(String, EmbeddingVector)>) -> Result<(), KbError> {
        let key = canonicalize_url(url).ok_or_else(|| KbError::Corrupt(format!("bad url {url}")))?;
        let records = sentences
            .into_iter()
            .enumerate()
            .map(|(i, (text, vector))| {
                if vector.dimension() != self.fingerprint.dimension {
                    return Err(KbError::Corrupt(format!(
                        "vector dimension {} != {}",
                        vector.dimension(),
                        self.fingerprint.dimension
                    )));
                }
                Ok(SentenceRecord {
                    doc_url: key.clone(),
                    sentence_index: i,
                    text,
                    vector,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.docs.insert(key, records);
        Ok(())
    }

    pub fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), KbError> {
        let found = embedder.fingerprint();
        if found != self.fingerprint {
            return Err(KbError::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), KbError> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            embedder: self.fingerprint.clone(),
            total_sentences: self.sentence_count(),
            documents: self
                .docs
                .iter()
                .map(|(url, s)| ManifestDoc {
                    url: url.clone(),
                    sentences: s.len(),
                })
                .collect(),
        };
        let mut m = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        m.push('\n');
        std::fs::write(dir.join("manifest.json"), m)?;

        let mut sentences = BufWriter::new(std::fs::File::create(dir.join("sentences.jsonl"))?);
        let mut vectors = BufWriter::new(std::fs::File::create(dir.join("vectors.f32"))?);
        for rec in self.docs.values().flatten() {
            let line = SentenceLine {
                doc_url: rec.doc_url.clone(),
                sentence_index: rec.sentence_index,
                text: rec.text.clone(),
            };
            serde_json::to_writer(&mut sentences, &line).map_err(std::io::Error::other)?;
            sentences.write_all(b"\n")?;
            for v in rec.vector.as_slice() {
                vectors.write_all(&v.to_le_bytes())?;
            }
        }
        sentences.flush()?;
        vectors.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, KbError> {
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)
            .map_err(|e| KbError::Corrupt(format!("manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(KbError::Corrupt(format!("unsupported format version {}", manifest.format_version)));
        }
        let dim = manifest.embedder.dimension;
        let mut raw = Vec::new();
        std::fs::File::open(dir.join("vectors.f32"))?.read_to_end(&mut raw)?;
        if raw.len() != manifest.total_sentences * dim * 4 {
            return Err(KbError::Corrupt(format!(
                "vectors.f32 holds {} bytes, expected {}",
                raw.len(),
                manifest.total_sentences * dim * 4
            )));
        }
        let mut floats = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));

        let reader = std::io::BufReader::new(std::fs::File::open(dir.join("sentences.jsonl"))?);
        let mut lines = reader.lines();
        let mut kb = ExtDocsKB::new(manifest.embedder);
        for doc in manifest.documents {
            let mut records = Vec::with_capacity(doc.sentences);
            for i in 0..doc.sentences {
                let line = lines
                    .next()
                    .ok_or_else(|| KbError::Corrupt("sentences.jsonl truncated".into()))??;
                let s: SentenceLine =
                    serde_json::from_str(&line).map_err(|e| KbError::Corrupt(format!("sentence line: {e}")))?;
                if s.doc_url != doc.url || s.sentence_index != i {
                    return Err(KbError::Corrupt(format!("sentence {} of {} out of order", i, doc.url)));
                }
                let values: Vec<f32> = floats.by_ref().take(dim).collect();
                records.push(SentenceRecord {
                    doc_url: s.doc_url,
                    sentence_index: i,
                    text: s.text,
                    vector: EmbeddingVector::from_unit(values),
                });
            }
            kb.docs.insert(doc.url, records);
        }
        if lines.next().is_some() {
            return Err(KbError::Corrupt("sentences.jsonl has extra lines".into()));
        }
        Ok(kb)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub requested: usize,
    pub unique: usize,
    pub documents: usize,
    pub sentences: usize,
    pub lossy_documents: usize,
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub max_sentences_per_doc: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_sentences_per_doc: DEFAULT_MAX_SENTENCES_PER_DOC,
        }
    }
}

/// Sentences and embeddings for one document.
pub fn process_document(
    url: &str,
    fetcher: &dyn Fetcher,
    embedder: &dyn Embedder,
    options: &BuildOptions,
) -> Result<(Vec<(String, EmbeddingVector)>, bool), String> {
    let doc = fetcher.fetch(url).map_err(|e| e.to_string())?;
    let extracted = extract_text(&doc);
    let mut sentences = split_sentences(&extracted.text);
    sentences.truncate(options.max_sentences_per_doc);
    let vectors = embedder.embed_batch(&sentences).map_err(|e| e.to_string())?;
    Ok((sentences.into_iter().zip(vectors).collect(), extracted.lossy))
}

/// Fetch, extract, split and embed each url. Failures are skipped and
/// reported; the result lists documents in first-occurrence input order no
/// matter which fetch finishes first.
pub fn build_kb<S: AsRef<str> + Sync>(
    urls: &[S],
    fetcher: &dyn Fetcher,
    embedder: &dyn Embedder,
    options: &BuildOptions,
) -> (ExtDocsKB, BuildReport) {
    let mut report = BuildReport {
        requested: urls.len(),
        ..Default::default()
    };
    let mut seen = std::collections::HashSet::new();
    let mut unique: Vec<String> = Vec::new();
    for u in urls {
        match canonicalize_url(u.as_ref()) {
            Some(c) => {
                if seen.insert(c.clone()) {
                    unique.push(c);
                }
            }
            None => report.failures.push((u.as_ref().to_string(), FetchError::InvalidUrl(u.as_ref().into()).to_string())),
        }
    }
    report.unique = unique.len();

    let results = crate::par::map(&unique, |u| process_document(u, fetcher, embedder, options));
    let mut kb = ExtDocsKB::new(embedder.fingerprint());
    for (url, result) in unique.iter().zip(results) {
        match result {
            Ok((sentences, lossy)) => {
                report.sentences += sentences.len();
                report.lossy_documents += usize::from(lossy);
                kb.insert_document(url, sentences).expect("canonical url and matching dimension");
            }
            Err(reason) => {
                log::warn!("skipping {url}: {reason}");
                report.failures.push((url.clone(), reason));
            }
        }
    }
    report.documents = kb.document_count();
    (kb, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::HashEmbedder;

    fn fixtures(docs: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (url, body) in docs {
            std::fs::write(dir.path().join(format!("{}.html", fixture_key(url))), body).unwrap();
        }
        dir
    }

    #[test]
    fn one_document_two_sentences() {
        let dir = fixtures(&[("https://a.example/doc", "<p>Cats purr loudly. Dogs bark at night.</p>")]);
        let (kb, report) = build_kb(&["https://a.example/doc"], &FixtureFetcher::new(dir.path()), &HashEmbedder::new(32), &BuildOptions::default());
        let s = kb.get("https://a.example/doc").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().map(|r| r.sentence_index).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(s[1].text, "Dogs bark at night.");
        assert_eq!(report.sentences, 2);
    }

    #[test]
    fn all_failures_tallied() {
        let dir = tempfile::tempdir().unwrap();
        let urls = ["https://x.example/1", "https://x.example/2", "mailto:me"];
        let (kb, report) = build_kb(&urls, &FixtureFetcher::new(dir.path()), &HashEmbedder::new(8), &BuildOptions::default());
        assert_eq!(kb.document_count(), 0);
        assert_eq!(report.failures.len(), 3);
    }

    #[test]
    fn duplicates_processed_once() {
        let dir = fixtures(&[("https://a.example/", "One sentence here.")]);
        let urls = ["https://a.example/", "https://A.example/#x", "https://a.example"];
        let (kb, report) = build_kb(&urls, &FixtureFetcher::new(dir.path()), &HashEmbedder::new(8), &BuildOptions::default());
        assert_eq!(report.unique, 1);
        assert_eq!(kb.document_count(), 1);
    }

    #[test]
    fn order_follows_input_and_cap_applies() {
        let dir = fixtures(&[
            ("https://b.example/", "B one. B two. B three."),
            ("https://a.example/", "A one. A two."),
        ]);
        let urls = ["https://b.example/", "https://a.example/"];
        let opts = BuildOptions { max_sentences_per_doc: 2 };
        let (kb, _) = build_kb(&urls, &FixtureFetcher::new(dir.path()), &HashEmbedder::new(8), &opts);
        assert_eq!(kb.urls().collect::<Vec<_>>(), urls);
        assert_eq!(kb.get("https://b.example/").unwrap().len(), 2);
    }

    #[test]
    fn save_load_round_trip_and_stable_bytes() {
        let dir = fixtures(&[
            ("https://a.example/p", "<p>Alpha beta gamma. Delta epsilon zeta!</p>"),
            ("https://b.example/q", "Only one sentence here"),
        ]);
        let urls = ["https://a.example/p", "https://b.example/q"];
        let fetcher = FixtureFetcher::new(dir.path());
        let (kb, _) = build_kb(&urls, &fetcher, &HashEmbedder::new(64), &BuildOptions::default());
        let out1 = tempfile::tempdir().unwrap();
        kb.save(out1.path()).unwrap();
        let back = ExtDocsKB::load(out1.path()).unwrap();
        assert_eq!(back, kb);

        let (kb2, _) = build_kb(&urls, &fetcher, &HashEmbedder::new(64), &BuildOptions::default());
        let out2 = tempfile::tempdir().unwrap();
        kb2.save(out2.path()).unwrap();
        for f in ["manifest.json", "sentences.jsonl", "vectors.f32"] {
            assert_eq!(std::fs::read(out1.path().join(f)).unwrap(), std::fs::read(out2.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn load_detects_truncated_vectors() {
        let mut kb = ExtDocsKB::new(HashEmbedder::new(4).fingerprint());
        kb.insert_document("https://a.example/", vec![("abc".into(), EmbeddingVector::basis(4, 1))]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        kb.save(dir.path()).unwrap();
        std::fs::write(dir.path().join("vectors.f32"), [0u8; 8]).unwrap();
        assert!(matches!(ExtDocsKB::load(dir.path()), Err(KbError::Corrupt(_))));
    }

    #[test]
    fn fingerprint_check() {
        let kb = ExtDocsKB::new(HashEmbedder::new(4).fingerprint());
        assert!(kb.check_embedder(&HashEmbedder::new(4)).is_ok());
        assert!(matches!(kb.check_embedder(&HashEmbedder::new(8)), Err(KbError::FingerprintMismatch { .. })));
    }
}
