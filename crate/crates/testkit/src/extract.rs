//! Brute-force conversation enumeration.

use std::collections::{HashMap, HashSet};

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthComment {
    pub id: String,
    pub parent: Option<String>,
    pub author: String,
    pub body: String,
    pub score: i64,
    pub nsfw: bool,
    pub subreddit: String,
    pub created: i64,
}

#[derive(Debug, Clone)]
pub struct Rules {
    pub min_turns: usize,
    pub max_turns: usize,
    pub min_karma: i64,
    pub min_words: usize,
    pub max_shared: usize,
    pub deleted: String,
    pub nsfw_subreddits: Vec<String>,
}

impl Default for Rules {
    fn default() -> Self {
        Self {
            min_turns: 5,
            max_turns: 15,
            min_karma: 4,
            min_words: 3,
            max_shared: 2,
            deleted: "[deleted]".into(),
            nsfw_subreddits: vec!["nsfwsub".into()],
        }
    }
}

const WORDS: &[&str] = &["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
const AUTHORS: &[&str] = &["ann", "bob", "cat", "dan", "eve", "fay"];

/// A random comment forest of 1..=`max_comments` comments. Parents always
/// precede children, so there are no cycles; a few comments point at a
/// parent outside the batch.
pub fn random_forest<R: Rng>(rng: &mut R, max_comments: usize) -> Vec<SynthComment> {
    let n = rng.random_range(1..=max_comments);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut out: Vec<SynthComment> = Vec::with_capacity(n);
    for i in 0..n {
        let r: f64 = rng.random();
        let parent = if i == 0 || r < 0.06 {
            None
        } else if r < 0.08 {
            Some("gone".to_string())
        } else if r < 0.7 {
            Some(out[i - 1].id.clone())
        } else {
            Some(out[rng.random_range(i.saturating_sub(10)..i)].id.clone())
        };
        let words = rng.random_range(2..=7);
        let body = (0..words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(if rng.random_bool(0.2) { "\t " } else { " " });
        let author = if rng.random_bool(0.04) { "[deleted]".to_string() } else { AUTHORS[rng.random_range(0..AUTHORS.len())].to_string() };
        let subreddit = match rng.random_range(0..40) {
            0 => "NSFWsub",
            1..=20 => "sci",
            _ => "misc",
        };
        out.push(SynthComment {
            id: format!("k{:03}", perm[i]),
            parent,
            author,
            body,
            score: rng.random_range(-3..=7),
            nsfw: rng.random_bool(0.02),
            subreddit: subreddit.to_string(),
            created: rng.random_range(0..60),
        });
    }
    out
}

fn sort_key(c: &SynthComment) -> (i64, &str) {
    (c.created, c.id.as_str())
}

/// Every root-to-leaf path, in depth-first preorder with siblings ordered by
/// (created, id).
pub fn all_paths(comments: &[SynthComment]) -> Vec<Vec<&SynthComment>> {
    let ids: HashSet<&str> = comments.iter().map(|c| c.id.as_str()).collect();
    let mut children: HashMap<&str, Vec<&SynthComment>> = HashMap::new();
    let mut roots = Vec::new();
    for c in comments {
        match c.parent.as_deref().filter(|p| ids.contains(p)) {
            Some(p) => children.entry(p).or_default().push(c),
            None => roots.push(c),
        }
    }
    roots.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    for v in children.values_mut() {
        v.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    }
    fn walk<'a>(node: &'a SynthComment, children: &HashMap<&str, Vec<&'a SynthComment>>, path: &mut Vec<&'a SynthComment>, out: &mut Vec<Vec<&'a SynthComment>>) {
        path.push(node);
        match children.get(node.id.as_str()) {
            Some(kids) => {
                for k in kids {
                    walk(k, children, path, out);
                }
            }
            None => out.push(path.clone()),
        }
        path.pop();
    }
    let mut out = Vec::new();
    for r in roots {
        walk(r, &children, &mut Vec::new(), &mut out);
    }
    out
}

/// Comment ids of the paths that pass all seven rules, shared-turn rule
/// applied greedily in enumeration order.
pub fn brute_force_extract(comments: &[SynthComment], rules: &Rules) -> Vec<Vec<String>> {
    let mut emitted: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for path in all_paths(comments) {
        let n = path.len();
        let length_ok = n >= rules.min_turns && n <= rules.max_turns;
        let karma_ok = path.iter().any(|c| c.score >= rules.min_karma);
        let words_ok = path.iter().all(|c| c.body.split_whitespace().count() >= rules.min_words);
        let sfw = path
            .iter()
            .all(|c| !c.nsfw && !rules.nsfw_subreddits.iter().any(|s| s.eq_ignore_ascii_case(&c.subreddit)));
        let present = path.iter().all(|c| c.author != rules.deleted);
        if !(length_ok && karma_ok && words_ok && sfw && present) {
            continue;
        }
        let shared = path.iter().filter(|c| emitted.contains(&c.id)).count();
        if shared > rules.max_shared {
            continue;
        }
        let ids: Vec<String> = path.iter().map(|c| c.id.clone()).collect();
        emitted.extend(ids.iter().cloned());
        out.push(ids);
    }
    out
}
