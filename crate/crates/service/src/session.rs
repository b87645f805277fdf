use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use linkground::embedder::Fingerprint;
use linkground::kb::ExtDocsKB;
use lru::LruCache;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
}

/// Live conversation state. Turns alternate starting with the user.
#[derive(Debug, Clone)]
pub struct ChatSession {
    pub session_id: String,
    pub turns: Vec<ChatTurn>,
    /// Author whose past dialogues ground the agent's replies.
    pub speaker_profile: Option<String>,
    /// Urls extracted from all turns, first occurrence order.
    pub urls_seen: Vec<String>,
    /// Documents fetched during this session that the main store lacks.
    pub overlay: ExtDocsKB,
    pub seed: u64,
}

impl ChatSession {
    pub fn new(session_id: String, fingerprint: Fingerprint, seed: u64) -> Self {
        Self {
            session_id,
            turns: Vec::new(),
            speaker_profile: None,
            urls_seen: Vec::new(),
            overlay: ExtDocsKB::new(fingerprint),
            seed,
        }
    }

    pub fn agent_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Agent).count()
    }
}

pub type SharedSession = Arc<tokio::sync::Mutex<ChatSession>>;

struct Entry {
    session: SharedSession,
    last_used: Instant,
}

/// Bounded LRU of sessions with idle expiry. Each session sits behind its own
/// async mutex so concurrent requests to one session run in order.
pub struct Sessions {
    inner: Mutex<LruCache<String, Entry>>,
    ttl: Duration,
}

impl Sessions {
    pub fn new(capacity: usize, ttl: Duration) -> Self {
        Self {
            inner: Mutex::new(LruCache::new(NonZeroUsize::new(capacity.max(1)).unwrap())),
            ttl,
        }
    }

    /// Look up `id`, or create a session under it (or under a fresh id) when
    /// it is unknown or idle past the TTL. Returns the session and whether it
    /// was created.
    pub fn get_or_create(&self, id: Option<&str>, make: impl FnOnce(String) -> ChatSession) -> (SharedSession, bool) {
        let now = Instant::now();
        let mut cache = self.inner.lock().unwrap();
        if let Some(id) = id {
            if let Some(e) = cache.get_mut(id) {
                if now.duration_since(e.last_used) <= self.ttl {
                    e.last_used = now;
                    return (e.session.clone(), false);
                }
            }
        }
        let id = id.map(str::to_string).unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        let session = Arc::new(tokio::sync::Mutex::new(make(id.clone())));
        cache.put(id, Entry { session: session.clone(), last_used: now });
        (session, true)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
