use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

/// Domain and file-extension block lists applied to extracted URLs.
///
/// Entries are stored lowercase without scheme; extensions carry a leading dot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blocklist {
    pub domains: BTreeSet<String>,
    pub extensions: BTreeSet<String>,
}

fn clean_domain(entry: &str) -> Option<String> {
    let mut e = entry.trim().to_ascii_lowercase();
    for scheme in ["https://", "http://"] {
        if let Some(rest) = e.strip_prefix(scheme) {
            e = rest.to_string();
        }
    }
    let e = e.trim_end_matches('/').trim_start_matches('.');
    let e = e.split('/').next().unwrap_or_default();
    (!e.is_empty()).then(|| e.to_string())
}

fn clean_ext(entry: &str) -> Option<String> {
    let e = entry.trim().to_ascii_lowercase();
    if e.is_empty() {
        None
    } else if e.starts_with('.') {
        Some(e)
    } else {
        Some(format!(".{e}"))
    }
}

/// Entries from a one-per-line list; `#` starts a comment.
pub fn parse_list(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or_default().trim())
        .filter(|l| !l.is_empty())
}

impl Blocklist {
    pub fn new<D, E>(domains: D, extensions: E) -> Self
    where
        D: IntoIterator,
        D::Item: AsRef<str>,
        E: IntoIterator,
        E::Item: AsRef<str>,
    {
        Self {
            domains: domains.into_iter().filter_map(|d| clean_domain(d.as_ref())).collect(),
            extensions: extensions.into_iter().filter_map(|e| clean_ext(e.as_ref())).collect(),
        }
    }

    pub fn from_texts(domains: &str, extensions: &str) -> Self {
        Self::new(parse_list(domains), parse_list(extensions))
    }

    pub fn from_files(domains: Option<&Path>, extensions: Option<&Path>) -> std::io::Result<Self> {
        let read = |p: Option<&Path>| p.map(std::fs::read_to_string).transpose().map(Option::unwrap_or_default);
        Ok(Self::from_texts(&read(domains)?, &read(extensions)?))
    }

    /// True when the URL is unparseable, non-http(s), or hits either list.
    pub fn blocks(&self, raw: &str) -> bool {
        let Ok(u) = url::Url::parse(raw) else {
            return true;
        };
        if !matches!(u.scheme(), "http" | "https") {
            return true;
        }
        let Some(host) = u.host_str() else {
            return true;
        };
        let host = host.to_ascii_lowercase();
        let domain_hit = self
            .domains
            .iter()
            .any(|d| host == *d || (host.len() > d.len() && host.ends_with(d.as_str()) && host.as_bytes()[host.len() - d.len() - 1] == b'.'));
        if domain_hit {
            return true;
        }
        let path = u.path().to_ascii_lowercase();
        self.extensions.iter().any(|e| path.ends_with(e.as_str()))
    }
}

static MARKDOWN_LINK: LazyLock<Regex> = LazyLock::new(|| {
    // The target may contain one level of balanced parentheses.
    Regex::new(r"\]\((https?://[^\s()]*(?:\([^\s()]*\)[^\s()]*)*)\)").unwrap()
});
static PLAIN_URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"https?://[^\s<>\[\]"'`]+"#).unwrap());

const TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')'];

/// Trailing punctuation is dropped; a closing parenthesis survives when it
/// balances an opening one inside the URL.
fn strip_trailing(u: &str) -> &str {
    let mut s = u;
    while let Some(c) = s.chars().last().filter(|c| TRAILING.contains(c)) {
        if c == ')' && s.matches('(').count() >= s.matches(')').count() {
            break;
        }
        s = &s[..s.len() - 1];
    }
    s
}

/// Extract http(s) URLs from comment text, in first-occurrence order,
/// deduplicated, with blocked URLs removed.
pub fn extract_urls(text: &str, blocklist: &Blocklist) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();
    let mut covered: Vec<(usize, usize)> = Vec::new();
    for cap in MARKDOWN_LINK.captures_iter(text) {
        let m = cap.get(1).unwrap();
        covered.push((m.start(), m.end()));
        found.push((m.start(), strip_trailing(m.as_str()).to_string()));
    }
    for m in PLAIN_URL.find_iter(text) {
        if covered.iter().any(|&(s, e)| m.start() >= s && m.start() < e) {
            continue;
        }
        found.push((m.start(), strip_trailing(m.as_str()).to_string()));
    }
    found.sort_by_key(|(pos, _)| *pos);

    let mut seen = HashSet::new();
    found
        .into_iter()
        .map(|(_, u)| u)
        .filter(|u| u.len() > "http://".len() && !blocklist.blocks(u))
        .filter(|u| seen.insert(u.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_and_markdown_with_extension_block() {
        let bl = Blocklist::new(std::iter::empty::<&str>(), [".exe"]);
        let got = extract_urls("see https://a.example/x and [l](http://b.example/f.exe)", &bl);
        assert_eq!(got, ["https://a.example/x"]);
    }

    #[test]
    fn no_links() {
        assert!(extract_urls("no links here", &Blocklist::default()).is_empty());
    }

    #[test]
    fn strips_trailing_punctuation() {
        assert_eq!(extract_urls("go https://a.example/p. now", &Blocklist::default()), ["https://a.example/p"]);
        assert_eq!(extract_urls("(see https://a.example/q?x=1).", &Blocklist::default()), ["https://a.example/q?x=1"]);
    }

    #[test]
    fn markdown_keeps_balanced_parens() {
        let got = extract_urls("[wiki](https://en.wikipedia.org/wiki/Foo_(bar)) ok", &Blocklist::default());
        assert_eq!(got, ["https://en.wikipedia.org/wiki/Foo_(bar)"]);
    }

    #[test]
    fn dedup_preserves_first_order() {
        let got = extract_urls("https://b.example https://a.example https://b.example", &Blocklist::default());
        assert_eq!(got, ["https://b.example", "https://a.example"]);
    }

    #[test]
    fn domain_suffix_matching() {
        let bl = Blocklist::from_texts("# comment\nYouTube.com\nhttps://imgur.com/\n", "");
        assert!(bl.domains.contains("youtube.com"));
        assert!(bl.domains.contains("imgur.com"));
        assert!(bl.blocks("https://www.youtube.com/watch?v=1"));
        assert!(bl.blocks("http://i.imgur.com/a.png"));
        assert!(!bl.blocks("https://notyoutube.com/"));
        assert!(!bl.blocks("https://example.org/youtube.com"));
    }

    #[test]
    fn extension_ignores_query() {
        let bl = Blocklist::from_texts("", "pdf\n.JPG");
        assert!(bl.blocks("https://x.example/doc.PDF?dl=1"));
        assert!(bl.blocks("https://x.example/a.jpg"));
        assert!(!bl.blocks("https://x.example/page?file=a.jpg"));
    }
}
