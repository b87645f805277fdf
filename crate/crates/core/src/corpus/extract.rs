use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{extract_urls, Blocklist, CommentForest, RawComment};

/// One utterance in a conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// Source comment id; used to exclude the conversation from past-dialogue
    /// retrieval. Empty for turns that did not come from a dump.
    #[serde(default)]
    pub comment_id: String,
    pub author: String,
    pub text: String,
    pub karma: i64,
    #[serde(default)]
    pub urls: Vec<String>,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub turns: Vec<Turn>,
    /// Author of the final turn.
    pub speaker: String,
    #[serde(default)]
    pub source_month: String,
}

impl Conversation {
    pub fn has_urls(&self) -> bool {
        self.turns.iter().any(|t| !t.urls.is_empty())
    }

    pub fn comment_ids(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|t| t.comment_id.as_str()).filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_turns: usize,
    pub max_turns: usize,
    pub min_karma_any_turn: i64,
    pub min_words_per_turn: usize,
    pub max_shared_turns: usize,
    /// Lowercase subreddit names treated as NSFW in addition to the record flag.
    pub nsfw_subreddits: BTreeSet<String>,
    pub deleted_marker: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_turns: 5,
            max_turns: 15,
            min_karma_any_turn: 4,
            min_words_per_turn: 3,
            max_shared_turns: 2,
            nsfw_subreddits: BTreeSet::new(),
            deleted_marker: "[deleted]".to_string(),
        }
    }
}

impl FilterConfig {
    pub fn word_count(text: &str) -> usize {
        text.split_whitespace().count()
    }

    pub fn is_nsfw(&self, c: &RawComment) -> bool {
        c.nsfw || self.nsfw_subreddits.contains(&c.subreddit.to_lowercase())
    }

    /// Rules that hold per turn, so a failing comment rules out every path
    /// through it.
    pub fn turn_passes(&self, c: &RawComment) -> bool {
        c.author != self.deleted_marker && !self.is_nsfw(c) && Self::word_count(&c.body) >= self.min_words_per_turn
    }
}

/// Walk every root-to-leaf path depth-first and keep the ones that satisfy
/// all filters. The shared-turn limit is checked greedily against comment ids
/// of previously emitted paths, so enumeration order matters.
pub fn extract_conversations(
    forest: &CommentForest,
    config: &FilterConfig,
    blocklist: &Blocklist,
    source_month: &str,
) -> Vec<Conversation> {
    let mut out = Vec::new();
    let mut emitted: HashSet<&str> = HashSet::new();
    let mut path: Vec<&RawComment> = Vec::new();
    let mut stack: Vec<(&str, usize)> = forest.roots.iter().rev().map(|r| (r.as_str(), 0)).collect();

    while let Some((id, depth)) = stack.pop() {
        let Some(comment) = forest.get(id) else { continue };
        path.truncate(depth);
        path.push(comment);
        // Per-turn failures and over-long prefixes doom the whole subtree.
        if !config.turn_passes(comment) || path.len() > config.max_turns {
            continue;
        }
        let children = forest.children_of(id);
        if !children.is_empty() {
            stack.extend(children.iter().rev().map(|c| (c.as_str(), depth + 1)));
            continue;
        }
        if path.len() < config.min_turns || !path.iter().any(|c| c.score >= config.min_karma_any_turn) {
            continue;
        }
        let shared = path.iter().filter(|c| emitted.contains(c.id.as_str())).count();
        if shared > config.max_shared_turns {
            continue;
        }
        emitted.extend(path.iter().map(|c| c.id.as_str()));
        out.push(to_conversation(&path, blocklist, source_month));
    }
    out
}

fn to_conversation(path: &[&RawComment], blocklist: &Blocklist, source_month: &str) -> Conversation {
    let turns: Vec<Turn> = path
        .iter()
        .enumerate()
        .map(|(i, c)| Turn {
            comment_id: c.id.clone(),
            author: c.author.clone(),
            text: c.body.clone(),
            karma: c.score,
            urls: extract_urls(&c.body, blocklist),
            turn_index: i,
        })
        .collect();
    let last = path.last().expect("non-empty path");
    Conversation {
        conversation_id: last.id.clone(),
        speaker: last.author.clone(),
        turns,
        source_month: source_month.to_string(),
    }
}
