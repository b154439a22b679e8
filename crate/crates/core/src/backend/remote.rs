//! OpenAI-compatible chat-completions client.

use std::thread;
use std::time::{Duration, Instant};

use log::warn;
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{BackendConfig, Selector, SelectorRequest, SelectorResponse};
use crate::Error;

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: usize,
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

/// Blocking chat-completions backend. Requests within a batch are sent
/// concurrently; the prompt is sent as the single user message, unmodified.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    client: Client,
    url: String,
    model: String,
    seed: u64,
    api_key: Option<String>,
    max_retries: u32,
    retry_backoff: Duration,
    max_prompt_chars: Option<usize>,
}

impl RemoteChat {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let endpoint = cfg.endpoint.as_deref().expect("validated");
        let client = Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url: chat_url(endpoint),
            model: cfg.model_name.clone().expect("validated"),
            seed: cfg.seed,
            api_key: std::env::var(&cfg.api_key_env)
                .ok()
                .filter(|k| !k.is_empty()),
            max_retries: cfg.max_retries,
            retry_backoff: cfg.retry_backoff,
            max_prompt_chars: cfg.max_prompt_chars,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, req: &SelectorRequest) -> Attempt {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.temperature,
            max_tokens: req.max_output,
            seed: self.seed,
        };
        let mut call = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = match call.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Attempt::Retry(format!("http {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(format!("http {status}"));
        }
        match resp.json::<ChatResponse>() {
            Ok(parsed) => Attempt::Done(
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .unwrap_or_default(),
            ),
            Err(e) => Attempt::Fatal(format!("malformed response: {e}")),
        }
    }

    fn call(&self, req: &SelectorRequest) -> SelectorResponse {
        let started = Instant::now();
        let mut last_error = String::new();
        let mut delay = self.retry_backoff;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
            match self.attempt(req) {
                Attempt::Done(text) => {
                    return SelectorResponse::answered(req, text, started.elapsed());
                }
                Attempt::Fatal(e) => {
                    last_error = e;
                    break;
                }
                Attempt::Retry(e) => {
                    warn!("chat request failed (attempt {}): {e}", attempt + 1);
                    last_error = e;
                }
            }
        }
        SelectorResponse::failed(req, last_error, started.elapsed())
    }
}

impl Selector for RemoteChat {
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        let mut out: Vec<SelectorResponse> = thread::scope(|s| {
            let handles: Vec<_> = requests
                .iter()
                .map(|req| s.spawn(move || self.call(req)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("request thread panicked"))
                .collect()
        });
        if let Some(limit) = self.max_prompt_chars {
            for (resp, req) in out.iter_mut().zip(requests) {
                if req.prompt.chars().count() > limit {
                    warn!("prompt for {} exceeds {limit} characters", req.example_id);
                    resp.prompt_over_limit = true;
                }
            }
        }
        out
    }
}

/// Accepts a base URL (`http://host/v1`) or a full completions URL.
fn chat_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_owned()
    } else {
        format!("{trimmed}/chat/completions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_joining() {
        assert_eq!(chat_url("http://h/v1"), "http://h/v1/chat/completions");
        assert_eq!(chat_url("http://h/v1/"), "http://h/v1/chat/completions");
        assert_eq!(
            chat_url("http://h/v1/chat/completions"),
            "http://h/v1/chat/completions"
        );
    }
}
