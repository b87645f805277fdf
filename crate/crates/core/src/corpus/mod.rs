//! Conversation mining from pushshift-style Reddit comment dumps.
//!
//! A dump is parsed into [`RawComment`]s, arranged into a [`CommentForest`],
//! and every root-to-leaf path that passes the [`FilterConfig`] rules becomes
//! a [`Conversation`]. URLs found in each turn are kept (minus the
//! [`Blocklist`]) as the seed set for the knowledge base, and every comment is
//! also grouped by author into the [`PastDialogueStore`].

mod dump;
mod extract;
mod forest;
mod sample;
mod store;
mod urls;

pub use dump::{parse_dump, parse_line, DumpError, DumpReader, RawComment};
pub use extract::{extract_conversations, Conversation, FilterConfig, Turn};
pub use forest::{build_forest, CommentForest};
pub use sample::{downsample_no_url, split_dataset, DatasetSplit, SampleError, DEFAULT_NO_URL_RATIO};
pub use store::{build_past_dialogue_store, PastComment, PastDialogueStore};
pub use urls::{extract_urls, parse_list, Blocklist};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthStats {
    pub month: String,
    pub comments: usize,
    pub malformed_lines: u64,
    pub duplicate_ids: usize,
    pub cyclic_dropped: usize,
    pub conversations: usize,
    pub with_urls: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MonthOutput {
    pub conversations: Vec<Conversation>,
    pub store: PastDialogueStore,
    pub stats: MonthStats,
}

/// Extraction and store building for one month's comments.
pub fn process_month(
    comments: Vec<RawComment>,
    malformed_lines: u64,
    config: &FilterConfig,
    blocklist: &Blocklist,
    month: &str,
) -> MonthOutput {
    let store = build_past_dialogue_store(&comments, &config.deleted_marker);
    let n = comments.len();
    let forest = build_forest(comments);
    let conversations = extract_conversations(&forest, config, blocklist, month);
    let stats = MonthStats {
        month: month.to_string(),
        comments: n,
        malformed_lines,
        duplicate_ids: forest.duplicate_ids,
        cyclic_dropped: forest.cyclic_dropped,
        conversations: conversations.len(),
        with_urls: conversations.iter().filter(|c| c.has_urls()).count(),
    };
    MonthOutput {
        conversations,
        store,
        stats,
    }
}

/// Month label from a dump file name such as `RC_2018-10.jsonl` → `2018-10`.
/// Falls back to the file stem.
pub fn month_label(path: &std::path::Path) -> String {
    let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
    let stem = stem.split('.').next().unwrap_or_default();
    stem.strip_prefix("RC_").unwrap_or(stem).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_labels() {
        assert_eq!(month_label("data/RC_2018-10.jsonl".as_ref()), "2018-10");
        assert_eq!(month_label("dump.ndjson".as_ref()), "dump");
    }
}
