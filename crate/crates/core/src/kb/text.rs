use unicode_normalization::UnicodeNormalization;

use super::RawDocument;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedText {
    pub text: String,
    /// Set when the body was not valid UTF-8 and replacement characters were
    /// substituted.
    pub lossy: bool,
}

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt", "figcaption", "figure", "footer",
    "form", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "li", "main", "nav", "ol", "p", "pre", "section",
    "table", "td", "th", "tr", "ul", "title", "body", "head", "html",
];

fn is_html(doc: &RawDocument) -> bool {
    let ct = doc.content_type.to_ascii_lowercase();
    ct.contains("html") || ct.contains("xml")
}

/// Plain text of a fetched document, NFC-normalized with whitespace collapsed.
pub fn extract_text(doc: &RawDocument) -> ExtractedText {
    let (raw, lossy) = match std::str::from_utf8(&doc.body) {
        Ok(s) => (s.to_string(), false),
        Err(_) => (String::from_utf8_lossy(&doc.body).into_owned(), true),
    };
    let text = if is_html(doc) { strip_html(&raw) } else { raw };
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    ExtractedText {
        text: collapsed.nfc().collect(),
        lossy,
    }
}

fn tag_name(tag: &str) -> String {
    tag.trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Drop `script`/`style` subtrees and comments, strip tags (block-level tags
/// become a space), and decode character references.
pub fn strip_html(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let lower = html.to_ascii_lowercase();
    let mut i = 0;
    let mut text_start = 0;
    while let Some(off) = html[i..].find('<') {
        let lt = i + off;
        out.push_str(&decode_entities(&html[text_start..lt]));
        if html[lt..].starts_with("<!--") {
            i = html[lt..].find("-->").map_or(html.len(), |e| lt + e + 3);
            text_start = i;
            continue;
        }
        let Some(gt) = html[lt..].find('>').map(|e| lt + e) else {
            // Unterminated tag: drop the rest.
            return out;
        };
        let inner = &html[lt + 1..gt];
        let name = tag_name(inner);
        let closing = inner.starts_with('/');
        i = gt + 1;
        if !closing && (name == "script" || name == "style") && !inner.trim_end().ends_with('/') {
            let close = format!("</{name}");
            i = lower[i..]
                .find(&close)
                .and_then(|e| html[i + e..].find('>').map(|g| i + e + g + 1))
                .unwrap_or(html.len());
        } else if BLOCK_TAGS.contains(&name.as_str()) {
            out.push(' ');
        }
        text_start = i;
    }
    out.push_str(&decode_entities(&html[text_start..]));
    out
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let end = rest[1..].find(';').map(|e| e + 1).filter(|&e| e <= 10);
        let decoded = end.and_then(|e| {
            let name = &rest[1..e];
            let c = match name {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                _ if name.starts_with("#x") || name.starts_with("#X") => {
                    u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
                }
                _ if name.starts_with('#') => name[1..].parse().ok().and_then(char::from_u32),
                _ => None,
            };
            c.map(|c| (c, e))
        });
        match decoded {
            Some((c, e)) => {
                out.push(c);
                rest = &rest[e + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Abbreviations whose trailing period never ends a sentence. Compared
/// case-insensitively.
pub const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "vs.", "etc.", "e.g.", "i.e.", "u.s.", "u.k.",
    "u.n.", "inc.", "ltd.", "co.", "corp.", "no.", "fig.", "approx.", "dept.", "est.", "gen.", "gov.", "jan.",
    "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.", "dec.", "a.m.", "p.m.",
];

/// Minimum trimmed sentence length in characters.
pub const MIN_SENTENCE_CHARS: usize = 3;

/// Rule-based sentence splitter: break after `.`, `!` or `?` when followed
/// by whitespace and then an uppercase letter or digit, unless the word
/// ending in the terminal is a listed abbreviation.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for (k, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let Some(&(_, next)) = chars.get(k + 1) else { continue };
        if !next.is_whitespace() {
            continue;
        }
        let Some(&(_, first)) = chars[k + 1..].iter().find(|(_, ch)| !ch.is_whitespace()) else {
            continue;
        };
        if !(first.is_uppercase() || first.is_ascii_digit()) {
            continue;
        }
        let end = pos + c.len_utf8();
        if c == '.' {
            let word_start = text[start..pos].rfind(char::is_whitespace).map_or(start, |w| start + w + 1);
            let word = text[word_start..end].trim_start_matches(|ch: char| !ch.is_alphanumeric());
            if ABBREVIATIONS.iter().any(|a| a.eq_ignore_ascii_case(word)) {
                continue;
            }
        }
        push_sentence(&mut out, &text[start..end]);
        start = end;
    }
    push_sentence(&mut out, &text[start..]);
    out
}

fn push_sentence(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if s.chars().count() >= MIN_SENTENCE_CHARS {
        out.push(s.to_string());
    }
}
