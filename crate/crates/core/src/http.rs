//! Small blocking HTTP client shared by the remote embedder, the remote
//! language model and the live document fetcher.
//!
//! Requests retry on transport errors and 5xx responses, and a counting
//! semaphore bounds the number in flight.

use std::io::Read;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub timeout: Duration,
    /// Extra attempts after the first.
    pub retries: u32,
    pub max_in_flight: usize,
    pub max_body_bytes: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(10),
            retries: 2,
            max_in_flight: 8,
            max_body_bytes: 2 * 1024 * 1024,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP status {status}")]
    Status { status: u16 },
    #[error("response body exceeds {limit} bytes")]
    TooLarge { limit: usize },
    #[error("malformed response: {0}")]
    Decode(String),
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct Response {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

pub struct HttpClient {
    inner: reqwest::blocking::Client,
    config: HttpConfig,
    slots: Semaphore,
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Result<Self, HttpError> {
        let inner = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .user_agent(concat!("linkground/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| HttpError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            inner,
            slots: Semaphore {
                free: Mutex::new(config.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            config,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn send(&self, build: impl Fn() -> reqwest::blocking::RequestBuilder) -> Result<Response, HttpError> {
        let _permit = self.slots.acquire();
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match build().send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    if resp.status().is_server_error() && attempt < attempts {
                        last = format!("status {status}");
                        continue;
                    }
                    let content_type = resp
                        .headers()
                        .get(reqwest::header::CONTENT_TYPE)
                        .and_then(|v| v.to_str().ok())
                        .unwrap_or_default()
                        .to_string();
                    let limit = self.config.max_body_bytes;
                    if resp.content_length().is_some_and(|n| n as usize > limit) {
                        return Err(HttpError::TooLarge { limit });
                    }
                    let mut body = Vec::new();
                    let read = resp.take(limit as u64 + 1).read_to_end(&mut body);
                    match read {
                        Ok(_) if body.len() > limit => return Err(HttpError::TooLarge { limit }),
                        Ok(_) => {}
                        Err(e) => {
                            last = e.to_string();
                            continue;
                        }
                    }
                    return Ok(Response {
                        status,
                        content_type,
                        body,
                    });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(HttpError::Transport {
            attempts,
            message: last,
        })
    }

    pub fn get(&self, url: &str) -> Result<Response, HttpError> {
        self.send(|| self.inner.get(url))
    }

    /// POST a JSON body and decode a JSON reply. Non-2xx is an error.
    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, HttpError> {
        let payload = serde_json::to_vec(body).map_err(|e| HttpError::Decode(e.to_string()))?;
        let resp = self.send(|| {
            self.inner
                .post(url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(payload.clone())
        })?;
        if !(200..300).contains(&resp.status) {
            return Err(HttpError::Status { status: resp.status });
        }
        serde_json::from_slice(&resp.body).map_err(|e| HttpError::Decode(e.to_string()))
    }
}
