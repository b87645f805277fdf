//! Loaded pipeline components and the chat/retrieve operations built on them.

use std::collections::HashSet;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use linkground::assemble::{build_context, check_invariants, BudgetConfig, SegmentStats, Sources};
use linkground::corpus::{extract_urls, Blocklist, PastDialogueStore, Turn};
use linkground::embedder::{Embedder, HashEmbedder, RemoteEmbedder};
use linkground::http::HttpConfig;
use linkground::kb::{canonicalize_url, process_document, BuildOptions, ExtDocsKB, Fetcher, FixtureFetcher, LiveFetcher};
use linkground::lm::{generate, GenerationConfig, LanguageModel, LmError, NGramLM, RemoteLM};
use linkground::retrieve::{retrieve_knowledge, retrieve_past_dialogues, HistoryItem, KnowledgeItem, KnowledgeScope, Overlay, RetrieveError};
use linkground::tokenizer::Tokenizer;
use serde::{Deserialize, Serialize};

use crate::config::{SeedMode, ServiceConfig};
use crate::session::{ChatSession, ChatTurn, Role};

/// Author label for user turns in assembled inputs.
pub const USER_AUTHOR: &str = "__user__";
/// Agent author when no speaker profile is set.
pub const AGENT_AUTHOR: &str = "__agent__";

pub struct Engine {
    pub config: ServiceConfig,
    pub tokenizer: Tokenizer,
    pub embedder: Arc<dyn Embedder>,
    /// Load failure is kept so the service can still report it on /v1/health.
    pub kb: Result<ExtDocsKB, String>,
    pub store: PastDialogueStore,
    pub lm: Box<dyn LanguageModel>,
    pub lm_kind: &'static str,
    pub fetcher: Arc<dyn Fetcher>,
    pub blocklist: Blocklist,
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("message is {size} bytes; the limit is {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("knowledge base unavailable: {0}")]
    Unavailable(String),
    #[error("language model backend failed: {0}")]
    Lm(#[from] LmError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    #[serde(flatten)]
    pub segments: SegmentStats,
    /// Window reserved for the reply beyond the prompt.
    pub reply_reserve: usize,
    pub budget: BudgetConfig,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub session_id: String,
    pub reply: String,
    pub knowledge: Vec<KnowledgeItem>,
    pub history: Vec<HistoryItem>,
    pub input_stats: InputStats,
    pub reply_tokens: usize,
    pub urls_fetched: Vec<String>,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveTurn {
    pub author: String,
    pub text: String,
    /// Extracted from `text` when absent.
    #[serde(default)]
    pub urls: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveRequest {
    pub turns: Vec<RetrieveTurn>,
    #[serde(default)]
    pub speaker: Option<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub scope: Option<KnowledgeScope>,
}

impl RetrieveRequest {
    pub fn to_turns(&self, blocklist: &Blocklist) -> Vec<Turn> {
        self.turns
            .iter()
            .enumerate()
            .map(|(i, t)| Turn {
                comment_id: String::new(),
                author: t.author.clone(),
                text: t.text.clone(),
                karma: 0,
                urls: t.urls.clone().unwrap_or_else(|| extract_urls(&t.text, blocklist)),
                turn_index: i,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrieveResponse {
    pub knowledge: linkground::retrieve::RetrievedKnowledge,
    pub history: linkground::retrieve::RetrievedHistory,
}

/// splitmix64 finalizer over (seed, turn), so consecutive replies draw from
/// unrelated streams.
pub fn reply_seed(seed: u64, turn: u64) -> u64 {
    let mut z = seed ^ turn.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Engine {
    /// Load everything named by the config. Only a missing or unreadable
    /// knowledge base is tolerated.
    pub fn load(config: ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let tokenizer = match &config.tokenizer_dir {
            Some(d) => Tokenizer::load_dir(d)?,
            None => Tokenizer::byte_level(),
        };
        let embedder: Arc<dyn Embedder> = match config.embedder.kind.as_str() {
            "remote" => Arc::new(RemoteEmbedder::new(config.embedder.endpoint.clone().unwrap_or_default(), config.embedder.dimension, HttpConfig::default())?),
            _ => Arc::new(HashEmbedder::new(config.embedder.dimension)),
        };
        let kb = ExtDocsKB::load(&config.kb_path)
            .map_err(|e| e.to_string())
            .and_then(|kb| kb.check_embedder(embedder.as_ref()).map(|_| kb).map_err(|e| e.to_string()));
        if let Err(e) = &kb {
            log::error!("knowledge base at {}: {e}", config.kb_path.display());
        }
        let store = match &config.store_path {
            Some(p) => PastDialogueStore::load(p).map_err(|e| anyhow::anyhow!("past dialogues {}: {e}", p.display()))?,
            None => PastDialogueStore::default(),
        };
        let (lm, lm_kind): (Box<dyn LanguageModel>, &'static str) = match (&config.lm.ngram_path, &config.lm.remote_endpoint) {
            (Some(p), _) => {
                let lm = NGramLM::load(p)?;
                anyhow::ensure!(
                    lm.vocab_size() == tokenizer.vocab_size(),
                    "language model vocabulary {} does not match tokenizer vocabulary {}",
                    lm.vocab_size(),
                    tokenizer.vocab_size()
                );
                (Box::new(lm), "ngram")
            }
            (None, Some(url)) => (Box::new(RemoteLM::new(url.clone(), tokenizer.vocab_size(), HttpConfig::default())?), "remote"),
            (None, None) => unreachable!("validated"),
        };
        let fetcher: Arc<dyn Fetcher> = match &config.fixture_dir {
            Some(d) => Arc::new(FixtureFetcher::new(d)),
            None => Arc::new(LiveFetcher::new(HttpConfig::default())?),
        };
        let blocklist = Blocklist::from_files(config.blocklist_domains.as_deref(), config.blocklist_ext.as_deref())?;
        Ok(Self {
            config,
            tokenizer,
            embedder,
            kb,
            store,
            lm,
            lm_kind,
            fetcher,
            blocklist,
        })
    }

    pub fn kb(&self) -> Result<&ExtDocsKB, ChatError> {
        self.kb.as_ref().map_err(|e| ChatError::Unavailable(e.clone()))
    }

    pub fn new_session(&self, id: String) -> ChatSession {
        let seed = match self.config.seed_mode {
            SeedMode::Fixed => self.config.seed,
            SeedMode::PerSession => rand::random(),
        };
        ChatSession::new(id, self.embedder.fingerprint(), seed)
    }

    /// Fetch and embed `urls` in parallel into the session overlay, giving up
    /// on whatever is still outstanding at the deadline.
    fn fetch_into(&self, overlay: &mut ExtDocsKB, urls: Vec<String>) -> Vec<String> {
        if urls.is_empty() {
            return Vec::new();
        }
        let (tx, rx) = mpsc::channel();
        for url in &urls {
            let (tx, url, fetcher, embedder) = (tx.clone(), url.clone(), self.fetcher.clone(), self.embedder.clone());
            std::thread::spawn(move || {
                let r = process_document(&url, fetcher.as_ref(), embedder.as_ref(), &BuildOptions::default());
                let _ = tx.send((url, r));
            });
        }
        drop(tx);
        let deadline = Instant::now() + Duration::from_secs(self.config.fetch_deadline_secs);
        let mut fetched = Vec::new();
        while fetched.len() < urls.len() {
            let Some(left) = deadline.checked_duration_since(Instant::now()) else { break };
            match rx.recv_timeout(left) {
                Ok((url, Ok((sentences, _)))) => {
                    if overlay.insert_document(&url, sentences).is_ok() {
                        fetched.push(url);
                    }
                }
                Ok((url, Err(e))) => log::warn!("chat fetch {url}: {e}"),
                Err(_) => break,
            }
        }
        fetched
    }

    fn session_turns(session: &ChatSession, speaker: &str, blocklist: &Blocklist) -> Vec<Turn> {
        session
            .turns
            .iter()
            .enumerate()
            .map(|(i, t)| Turn {
                comment_id: String::new(),
                author: match t.role {
                    Role::User => USER_AUTHOR.to_string(),
                    Role::Agent => speaker.to_string(),
                },
                text: t.text.clone(),
                karma: 0,
                urls: extract_urls(&t.text, blocklist),
                turn_index: i,
            })
            .collect()
    }

    /// One user message in, one agent reply out. The user turn is recorded
    /// only when the reply succeeds.
    pub fn chat(&self, session: &mut ChatSession, message: &str, speaker_profile: Option<&str>) -> Result<ChatReply, ChatError> {
        if message.len() > self.config.max_message_bytes {
            return Err(ChatError::TooLarge {
                size: message.len(),
                limit: self.config.max_message_bytes,
            });
        }
        let kb = self.kb()?;
        if let Some(p) = speaker_profile {
            session.speaker_profile = Some(p.to_string());
        }

        let mut to_fetch = Vec::new();
        for u in extract_urls(message, &self.blocklist) {
            let Some(canon) = canonicalize_url(&u) else { continue };
            if !session.urls_seen.contains(&canon) {
                session.urls_seen.push(canon.clone());
            }
            if !kb.contains(&canon) && !session.overlay.contains(&canon) && !to_fetch.contains(&canon) && to_fetch.len() < self.config.max_fetch_urls {
                to_fetch.push(canon);
            }
        }
        let urls_fetched = self.fetch_into(&mut session.overlay, to_fetch);

        session.turns.push(ChatTurn { role: Role::User, text: message.to_string() });
        let result = self.respond(session, kb);
        match result {
            Ok((reply, knowledge, history, input_stats, reply_tokens)) => {
                session.turns.push(ChatTurn { role: Role::Agent, text: reply.clone() });
                Ok(ChatReply {
                    session_id: session.session_id.clone(),
                    reply,
                    knowledge,
                    history,
                    input_stats,
                    reply_tokens,
                    urls_fetched,
                })
            }
            Err(e) => {
                session.turns.pop();
                Err(e)
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn respond(&self, session: &ChatSession, kb: &ExtDocsKB) -> Result<(String, Vec<KnowledgeItem>, Vec<HistoryItem>, InputStats, usize), ChatError> {
        let speaker = session.speaker_profile.clone().unwrap_or_else(|| AGENT_AUTHOR.to_string());
        let turns = Self::session_turns(session, &speaker, &self.blocklist);
        let docs = Overlay {
            primary: kb,
            secondary: &session.overlay,
        };
        let sources = Sources {
            docs: Some(&docs),
            store: session.speaker_profile.as_ref().map(|_| &self.store),
            embedder: self.embedder.as_ref(),
        };
        let budget = self.config.prompt_budget();
        let (assembled, knowledge, history) = build_context(&turns, &speaker, &HashSet::new(), &sources, &self.tokenizer, &budget, self.config.k, self.config.scope)?;
        let gen = GenerationConfig {
            p: self.config.p,
            max_new_tokens: self.config.max_new_tokens,
            min_new_tokens: self.config.min_new_tokens,
            stop_token: None,
            rng_seed: reply_seed(session.seed, session.agent_turns() as u64),
            context_limit: self.config.budget.total,
        };
        let out = generate(self.lm.as_ref(), &assembled.input, &gen, &self.tokenizer)?;
        let stats = InputStats {
            violations: check_invariants(&assembled, &budget, &self.tokenizer),
            segments: assembled.stats,
            reply_reserve: self.config.max_new_tokens,
            budget,
        };
        Ok((out.text, knowledge.items, history.items, stats, out.token_ids.len()))
    }

    pub fn retrieve(&self, req: &RetrieveRequest) -> Result<RetrieveResponse, ChatError> {
        let kb = self.kb()?;
        let turns = req.to_turns(&self.blocklist);
        let knowledge = retrieve_knowledge(&turns, kb, self.embedder.as_ref(), req.k, req.scope.unwrap_or(self.config.scope))?;
        let history = match &req.speaker {
            Some(s) => retrieve_past_dialogues(s, &self.store, &self.tokenizer, self.config.budget.history_max.saturating_sub(1), &HashSet::new()),
            None => Default::default(),
        };
        Ok(RetrieveResponse { knowledge, history })
    }
}
