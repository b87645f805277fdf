use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RawComment;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PastComment {
    pub comment_id: String,
    pub text: String,
    pub karma: i64,
    pub created_utc: i64,
}

/// Every comment an author wrote across the dump, best karma first.
///
/// Per-author lists are ordered by karma descending, then `created_utc`
/// descending, then comment id ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PastDialogueStore {
    pub authors: BTreeMap<String, Vec<PastComment>>,
}

fn order(a: &PastComment, b: &PastComment) -> std::cmp::Ordering {
    b.karma
        .cmp(&a.karma)
        .then(b.created_utc.cmp(&a.created_utc))
        .then_with(|| a.comment_id.cmp(&b.comment_id))
}

impl PastDialogueStore {
    pub fn get(&self, author: &str) -> &[PastComment] {
        self.authors.get(author).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn author_count(&self) -> usize {
        self.authors.len()
    }

    pub fn comment_count(&self) -> usize {
        self.authors.values().map(Vec::len).sum()
    }

    /// Merge another store (for example one built from a different month).
    /// The result is independent of merge order; a comment id already present
    /// for an author is not duplicated.
    pub fn merge(&mut self, other: PastDialogueStore) {
        for (author, list) in other.authors {
            let entry = self.authors.entry(author).or_default();
            entry.extend(list);
            entry.sort_by(order);
            entry.dedup_by(|a, b| a.comment_id == b.comment_id);
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self).map_err(std::io::Error::other)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        serde_json::from_reader(f).map_err(std::io::Error::other)
    }
}

/// Group comments by author, skipping the deleted marker.
pub fn build_past_dialogue_store<'a, I>(comments: I, deleted_marker: &str) -> PastDialogueStore
where
    I: IntoIterator<Item = &'a RawComment>,
{
    let mut authors: BTreeMap<String, Vec<PastComment>> = BTreeMap::new();
    for c in comments {
        if c.author == deleted_marker || c.author.is_empty() {
            continue;
        }
        authors.entry(c.author.clone()).or_default().push(PastComment {
            comment_id: c.id.clone(),
            text: c.body.clone(),
            karma: c.score,
            created_utc: c.created_utc,
        });
    }
    for list in authors.values_mut() {
        list.sort_by(order);
        list.dedup_by(|a, b| a.comment_id == b.comment_id);
    }
    PastDialogueStore { authors }
}
