use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::http::{HttpClient, HttpConfig, HttpError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub url: String,
    pub content_type: String,
    pub body: Vec<u8>,
    /// Unix seconds; fixtures report 0 so rebuilt stores are byte-identical.
    pub fetched_at: i64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("not a fetchable http(s) url: {0}")]
    InvalidUrl(String),
    #[error("no fixture for {0}")]
    NotFound(String),
    #[error("document exceeds {limit} bytes")]
    TooLarge { limit: usize },
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("timed out or unreachable: {0}")]
    Transport(String),
    #[error("fixture read failed: {0}")]
    Io(String),
}

impl From<HttpError> for FetchError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::TooLarge { limit } => FetchError::TooLarge { limit },
            HttpError::Status { status } => FetchError::Status(status),
            other => FetchError::Transport(other.to_string()),
        }
    }
}

/// Canonical form used for lookup and dedup: lowercase scheme and host,
/// fragment removed, query kept. `None` for non-http(s) or unparseable input.
pub fn canonicalize_url(raw: &str) -> Option<String> {
    let mut u = url::Url::parse(raw.trim()).ok()?;
    if !matches!(u.scheme(), "http" | "https") || u.host_str().is_none() {
        return None;
    }
    u.set_fragment(None);
    Some(u.to_string())
}

/// Fixture file stem for a url: hex SHA-256 of its canonical form.
pub fn fixture_key(url: &str) -> String {
    let canon = canonicalize_url(url).unwrap_or_else(|| url.to_string());
    hex::encode(Sha256::digest(canon.as_bytes()))
}

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError>;
}

/// Serves documents from `<dir>/<sha256(url)>.html` or `.txt`.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    dir: PathBuf,
    max_bytes: usize,
}

impl FixtureFetcher {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            max_bytes: HttpConfig::default().max_body_bytes,
        }
    }

    pub fn with_limit(mut self, max_bytes: usize) -> Self {
        self.max_bytes = max_bytes;
        self
    }
}

impl Fetcher for FixtureFetcher {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError> {
        let canon = canonicalize_url(url).ok_or_else(|| FetchError::InvalidUrl(url.to_string()))?;
        let key = fixture_key(&canon);
        for (ext, content_type) in [("html", "text/html"), ("txt", "text/plain")] {
            let path = self.dir.join(format!("{key}.{ext}"));
            let meta = match std::fs::metadata(&path) {
                Ok(m) => m,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(FetchError::Io(e.to_string())),
            };
            if meta.len() as usize > self.max_bytes {
                return Err(FetchError::TooLarge { limit: self.max_bytes });
            }
            let body = std::fs::read(&path).map_err(|e| FetchError::Io(e.to_string()))?;
            return Ok(RawDocument {
                url: canon,
                content_type: content_type.to_string(),
                body,
                fetched_at: 0,
            });
        }
        Err(FetchError::NotFound(canon))
    }
}

/// Live HTTP GET with the shared client's timeout, retry and size limits.
pub struct LiveFetcher {
    client: HttpClient,
}

impl LiveFetcher {
    pub fn new(config: HttpConfig) -> Result<Self, FetchError> {
        Ok(Self {
            client: HttpClient::new(config)?,
        })
    }
}

impl Fetcher for LiveFetcher {
    fn fetch(&self, url: &str) -> Result<RawDocument, FetchError> {
        let canon = canonicalize_url(url).ok_or_else(|| FetchError::InvalidUrl(url.to_string()))?;
        let resp = self.client.get(&canon)?;
        if !(200..300).contains(&resp.status) {
            return Err(FetchError::Status(resp.status));
        }
        let fetched_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0);
        Ok(RawDocument {
            url: canon,
            content_type: resp.content_type,
            body: resp.body,
            fetched_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        assert_eq!(canonicalize_url("HTTPS://Example.COM/Path?q=A#frag").unwrap(), "https://example.com/Path?q=A");
        assert_eq!(canonicalize_url("https://a.example").unwrap(), "https://a.example/");
        assert!(canonicalize_url("ftp://x.example/").is_none());
        assert!(canonicalize_url("not a url").is_none());
    }

    #[test]
    fn fixture_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let url = "https://docs.example/page";
        std::fs::write(dir.path().join(format!("{}.html", fixture_key(url))), "<p>Hi</p>").unwrap();
        let f = FixtureFetcher::new(dir.path());
        let doc = f.fetch("https://DOCS.example/page#top").unwrap();
        assert_eq!(doc.body, b"<p>Hi</p>");
        assert_eq!(doc.content_type, "text/html");
        assert!(matches!(f.fetch("https://docs.example/other"), Err(FetchError::NotFound(_))));
    }

    #[test]
    fn fixture_size_limit() {
        let dir = tempfile::tempdir().unwrap();
        let url = "https://big.example/";
        std::fs::write(dir.path().join(format!("{}.txt", fixture_key(url))), vec![b'a'; 2 * 1024 * 1024 + 1]).unwrap();
        let err = FixtureFetcher::new(dir.path()).fetch(url).unwrap_err();
        assert_eq!(err, FetchError::TooLarge { limit: 2 * 1024 * 1024 });
    }
}
