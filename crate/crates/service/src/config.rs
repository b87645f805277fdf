//! Service configuration: defaults, then a TOML file, then `LINKGROUND_*`
//! environment variables and command-line flags (applied by the caller).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use linkground::assemble::BudgetConfig;
use linkground::retrieve::KnowledgeScope;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedMode {
    /// Every session replays identically for the same transcript.
    #[default]
    Fixed,
    /// Each new session draws its own seed.
    PerSession,
}

impl std::str::FromStr for SeedMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "per-session" => Ok(Self::PerSession),
            other => Err(format!("unknown seed mode {other:?} (fixed | per-session)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub ngram_path: Option<PathBuf>,
    pub remote_endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    /// `hash` or `remote`.
    pub kind: String,
    pub dimension: usize,
    pub endpoint: Option<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: "hash".into(),
            dimension: 512,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub kb_path: PathBuf,
    pub store_path: Option<PathBuf>,
    /// Directory holding `vocab.json` and `merges.txt`; byte-level when unset.
    pub tokenizer_dir: Option<PathBuf>,
    pub lm: LmConfig,
    pub embedder: EmbedderConfig,
    /// Serve chat-time url fetches from this fixture directory instead of the
    /// network.
    pub fixture_dir: Option<PathBuf>,
    pub blocklist_domains: Option<PathBuf>,
    pub blocklist_ext: Option<PathBuf>,
    pub k: usize,
    pub p: f64,
    pub scope: KnowledgeScope,
    pub budget: BudgetConfig,
    pub max_new_tokens: usize,
    pub min_new_tokens: usize,
    pub seed_mode: SeedMode,
    pub seed: u64,
    pub session_capacity: usize,
    pub session_ttl_secs: u64,
    pub max_message_bytes: usize,
    pub max_fetch_urls: usize,
    pub fetch_deadline_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".parse().unwrap(),
            kb_path: PathBuf::from("kb"),
            store_path: None,
            tokenizer_dir: None,
            lm: LmConfig::default(),
            embedder: EmbedderConfig::default(),
            fixture_dir: None,
            blocklist_domains: None,
            blocklist_ext: None,
            k: 5,
            p: 0.9,
            scope: KnowledgeScope::Conversation,
            budget: BudgetConfig::default(),
            max_new_tokens: 256,
            min_new_tokens: 1,
            seed_mode: SeedMode::Fixed,
            seed: 0,
            session_capacity: 1000,
            session_ttl_secs: 3600,
            max_message_bytes: 8 * 1024,
            max_fetch_urls: 3,
            fetch_deadline_secs: 10,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.lm.ngram_path, &self.lm.remote_endpoint) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => anyhow::bail!("configure exactly one language model backend (lm.ngram_path or lm.remote_endpoint)"),
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            anyhow::bail!("p must lie in (0, 1], got {}", self.p);
        }
        self.budget.validate()?;
        if self.max_new_tokens >= self.budget.total {
            anyhow::bail!("max_new_tokens {} leaves no room for context in {}", self.max_new_tokens, self.budget.total);
        }
        if self.session_capacity == 0 {
            anyhow::bail!("session_capacity must be positive");
        }
        match self.embedder.kind.as_str() {
            "hash" => {}
            "remote" if self.embedder.endpoint.is_some() => {}
            "remote" => anyhow::bail!("embedder.kind = \"remote\" needs embedder.endpoint"),
            other => anyhow::bail!("unknown embedder kind {other:?} (hash | remote)"),
        }
        Ok(())
    }

    /// Budget for the prompt half of the window; `max_new_tokens` are held
    /// back for the reply, taken out of the conversation share.
    pub fn prompt_budget(&self) -> BudgetConfig {
        let b = self.budget;
        let total = b.total - self.max_new_tokens;
        let knowledge_max = b.knowledge_max.min(total);
        let history_max = b.history_max.min(total - knowledge_max);
        BudgetConfig {
            total,
            knowledge_max,
            history_max,
            conversation_min: total - knowledge_max - history_max,
        }
    }
}
