use std::collections::{HashMap, HashSet};

use super::RawComment;

/// Parent/child structure over one batch of comments.
///
/// Children (and roots) are ordered by `(created_utc, id)`. Comments caught
/// in a parent cycle are unreachable from any root and are dropped.
#[derive(Debug, Clone, Default)]
pub struct CommentForest {
    pub roots: Vec<String>,
    pub children: HashMap<String, Vec<String>>,
    comments: HashMap<String, RawComment>,
    pub duplicate_ids: usize,
    pub cyclic_dropped: usize,
}

impl CommentForest {
    pub fn get(&self, id: &str) -> Option<&RawComment> {
        self.comments.get(id)
    }

    pub fn children_of(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }
}

/// Build a forest from a comment batch. Comments whose parent is not in the
/// batch become roots; a repeated id keeps the last occurrence.
pub fn build_forest<I>(comments: I) -> CommentForest
where
    I: IntoIterator<Item = RawComment>,
{
    let mut by_id: HashMap<String, RawComment> = HashMap::new();
    let mut duplicate_ids = 0;
    for c in comments {
        if by_id.insert(c.id.clone(), c).is_some() {
            duplicate_ids += 1;
        }
    }
    if duplicate_ids > 0 {
        log::warn!("{duplicate_ids} duplicate comment ids, last occurrence kept");
    }

    let key = |id: &String| {
        let c = &by_id[id];
        (c.created_utc, c.id.clone())
    };

    let mut roots = Vec::new();
    let mut children: HashMap<String, Vec<String>> = HashMap::new();
    for c in by_id.values() {
        match c.parent_id.as_ref().filter(|p| by_id.contains_key(*p)) {
            Some(p) => children.entry(p.clone()).or_default().push(c.id.clone()),
            None => roots.push(c.id.clone()),
        }
    }
    roots.sort_by_key(key);
    for list in children.values_mut() {
        list.sort_by_key(key);
    }

    // Anything not reachable from a root sits on a cycle.
    let mut seen: HashSet<&str> = HashSet::new();
    let mut stack: Vec<&str> = roots.iter().map(String::as_str).collect();
    while let Some(id) = stack.pop() {
        if seen.insert(id) {
            if let Some(ch) = children.get(id) {
                stack.extend(ch.iter().map(String::as_str));
            }
        }
    }
    let reachable: HashSet<String> = seen.into_iter().map(str::to_string).collect();
    let cyclic_dropped = by_id.len() - reachable.len();
    if cyclic_dropped > 0 {
        log::warn!("{cyclic_dropped} comments dropped: parent cycle");
        by_id.retain(|id, _| reachable.contains(id));
        children.retain(|id, _| reachable.contains(id));
    }

    CommentForest {
        roots,
        children,
        comments: by_id,
        duplicate_ids,
        cyclic_dropped,
    }
}
