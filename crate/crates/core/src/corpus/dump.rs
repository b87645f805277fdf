use std::io::BufRead;

use serde::{Deserialize, Deserializer, Serialize};

/// One comment record from a pushshift-style newline-delimited JSON dump.
///
/// `score` is the net vote count and is what the filters call karma.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    /// Parent comment id with the `t1_` prefix removed. `None` when the
    /// parent is the submission itself (`t3_...`) or the field is absent.
    pub parent_id: Option<String>,
    pub link_id: String,
    pub author: String,
    pub body: String,
    pub score: i64,
    pub subreddit: String,
    pub nsfw: bool,
    pub created_utc: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("read failed at line {line} (byte offset {offset}): {source}")]
    Io {
        line: u64,
        offset: u64,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Deserialize)]
struct DumpRecord {
    id: String,
    #[serde(default)]
    parent_id: Option<String>,
    #[serde(default)]
    link_id: Option<String>,
    #[serde(default)]
    author: Option<String>,
    #[serde(default)]
    body: Option<String>,
    #[serde(deserialize_with = "int_or_string")]
    score: i64,
    #[serde(default)]
    subreddit: Option<String>,
    #[serde(default)]
    over_18: Option<bool>,
    #[serde(deserialize_with = "int_or_string")]
    created_utc: i64,
}

// Older pushshift months store numbers as strings.
fn int_or_string<'de, D: Deserializer<'de>>(de: D) -> Result<i64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        Int(i64),
        Float(f64),
        Str(String),
    }
    match Num::deserialize(de)? {
        Num::Int(i) => Ok(i),
        Num::Float(f) if f.is_finite() => Ok(f as i64),
        Num::Float(_) => Err(serde::de::Error::custom("non-finite number")),
        Num::Str(s) => s.trim().parse().map_err(serde::de::Error::custom),
    }
}

fn normalize_parent(parent: Option<String>) -> Option<String> {
    let parent = parent?;
    if let Some(rest) = parent.strip_prefix("t1_") {
        Some(rest.to_string())
    } else if parent.starts_with("t3_") || parent.is_empty() {
        None
    } else {
        Some(parent)
    }
}

/// Parse one dump line. Returns `None` for malformed records.
pub fn parse_line(line: &str) -> Option<RawComment> {
    let rec: DumpRecord = serde_json::from_str(line).ok()?;
    if rec.id.is_empty() {
        return None;
    }
    Some(RawComment {
        id: rec.id,
        parent_id: normalize_parent(rec.parent_id),
        link_id: rec.link_id.unwrap_or_default(),
        author: rec.author.unwrap_or_default(),
        body: rec.body.unwrap_or_default(),
        score: rec.score,
        subreddit: rec.subreddit.unwrap_or_default(),
        nsfw: rec.over_18.unwrap_or(false),
        created_utc: rec.created_utc,
    })
}

/// Lazy reader over a comment dump.
///
/// Well-formed lines are yielded in file order. Malformed lines are skipped
/// and counted; blank lines are ignored entirely. An I/O failure is yielded
/// once as an error and ends the iteration.
pub struct DumpReader<R> {
    inner: R,
    buf: String,
    line: u64,
    offset: u64,
    malformed: u64,
    done: bool,
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: String::new(),
            line: 0,
            offset: 0,
            malformed: 0,
            done: false,
        }
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed
    }

    pub fn lines_read(&self) -> u64 {
        self.line
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<RawComment, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => self.done = true,
                Ok(n) => {
                    self.line += 1;
                    self.offset += n as u64;
                    let text = self.buf.trim();
                    if text.is_empty() {
                        continue;
                    }
                    match parse_line(text) {
                        Some(c) => return Some(Ok(c)),
                        None => self.malformed += 1,
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                    // Non-UTF-8 line: read_line leaves the reader positioned
                    // after it, so treat it like any other bad record.
                    self.line += 1;
                    self.malformed += 1;
                }
                Err(source) => {
                    self.done = true;
                    return Some(Err(DumpError::Io {
                        line: self.line + 1,
                        offset: self.offset,
                        source,
                    }));
                }
            }
        }
        None
    }
}

/// Convenience wrapper: parse an entire dump, returning comments and the
/// malformed-line tally.
pub fn parse_dump<R: BufRead>(reader: R) -> Result<(Vec<RawComment>, u64), DumpError> {
    let mut it = DumpReader::new(reader);
    let mut out = Vec::new();
    for item in it.by_ref() {
        out.push(item?);
    }
    Ok((out, it.malformed_count()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, parent: &str) -> String {
        format!(
            r#"{{"id":"{id}","parent_id":"{parent}","link_id":"t3_x","author":"u","body":"a b c","score":5,"subreddit":"s","over_18":false,"created_utc":1}}"#
        )
    }

    #[test]
    fn three_lines_in_order() {
        let src = [line("a", "t3_x"), line("b", "t1_a"), line("c", "t1_b")].join("\n");
        let (c, bad) = parse_dump(src.as_bytes()).unwrap();
        assert_eq!(c.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(bad, 0);
        assert_eq!(c[0].parent_id, None);
        assert_eq!(c[1].parent_id.as_deref(), Some("a"));
    }

    #[test]
    fn malformed_line_is_tallied() {
        let src = format!("{}\n{{not json\n", line("a", "t3_x"));
        let (c, bad) = parse_dump(src.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(bad, 1);
    }

    #[test]
    fn empty_file() {
        let (c, bad) = parse_dump(&b""[..]).unwrap();
        assert!(c.is_empty());
        assert_eq!(bad, 0);
    }

    #[test]
    fn string_numbers_and_missing_optionals() {
        let src = r#"{"id":"q","score":"-3","created_utc":"1540000000","author":"x"}"#;
        let c = parse_line(src).unwrap();
        assert_eq!(c.score, -3);
        assert_eq!(c.created_utc, 1_540_000_000);
        assert_eq!(c.body, "");
        assert!(!c.nsfw);
    }

    #[test]
    fn missing_score_is_malformed() {
        assert!(parse_line(r#"{"id":"q","created_utc":1}"#).is_none());
    }

    #[test]
    fn io_error_reports_position() {
        struct Failing(u8);
        impl std::io::Read for Failing {
            fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
                if self.0 == 0 {
                    self.0 = 1;
                    let s = b"{\"id\":\"a\",\"score\":1,\"created_utc\":1}\n";
                    buf[..s.len()].copy_from_slice(s);
                    Ok(s.len())
                } else {
                    Err(std::io::Error::other("disk gone"))
                }
            }
        }
        let reader = std::io::BufReader::new(Failing(0));
        let err = parse_dump(reader).unwrap_err();
        let DumpError::Io { line, .. } = err;
        assert_eq!(line, 2);
    }
}
