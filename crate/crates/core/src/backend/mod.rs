//! Interchangeable selector backends.
//!
//! Every backend answers a batch of text prompts positionally. Routing
//! requests also carry a structured [`RoutingView`] of what the prompt shows,
//! which lets non-LLM controls (random, scripted oracles) act without
//! scraping prompt text. Remote backends ignore it.

mod random;
mod remote;
mod scripted;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use random::{random_relation_choice, RandomSelector};
pub use remote::RemoteChat;
pub use scripted::{FnSelector, ScriptedSelector};

use crate::prompt::{parse_answers, ParsedAnswers};
use crate::Error;

/// Character-count based token estimate: `ceil(chars / 4)`.
///
/// The served model's tokenizer is not available here; relative comparisons
/// between prompt variants are what this number is for.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestTag {
    Routing,
    Extraction,
    Cot,
}

/// What a routing prompt displays, in structured form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingView {
    /// Zero-based hop index of the search loop.
    pub hop: usize,
    /// Position of the beam within the prompted batch.
    pub beam: usize,
    pub entity: String,
    pub candidates: Vec<String>,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorRequest {
    pub example_id: String,
    pub tag: RequestTag,
    pub prompt: String,
    pub max_output: usize,
    pub temperature: f64,
    pub routing: Option<RoutingView>,
}

impl SelectorRequest {
    pub fn new(example_id: impl Into<String>, tag: RequestTag, prompt: String) -> Self {
        Self {
            example_id: example_id.into(),
            tag,
            prompt,
            max_output: default_max_output(tag),
            temperature: 0.0,
            routing: None,
        }
    }
}

fn default_max_output(tag: RequestTag) -> usize {
    match tag {
        RequestTag::Routing => 64,
        RequestTag::Extraction | RequestTag::Cot => 128,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectorResponse {
    pub text: String,
    pub input_token_estimate: usize,
    pub output_token_estimate: usize,
    pub latency: Duration,
    /// Set when the call failed after all retries; `text` is empty then.
    pub error: Option<String>,
    /// Prompt exceeded the configured length guard. It was still sent.
    pub prompt_over_limit: bool,
}

impl SelectorResponse {
    pub fn answered(request: &SelectorRequest, text: String, latency: Duration) -> Self {
        Self {
            input_token_estimate: estimate_tokens(&request.prompt),
            output_token_estimate: estimate_tokens(&text),
            text,
            latency,
            error: None,
            prompt_over_limit: false,
        }
    }

    pub fn failed(request: &SelectorRequest, error: String, latency: Duration) -> Self {
        Self {
            input_token_estimate: estimate_tokens(&request.prompt),
            output_token_estimate: 0,
            text: String::new(),
            latency,
            error: Some(error),
            prompt_over_limit: false,
        }
    }
}

/// A relation-selection / answer-generation backend.
pub trait Selector: Send + Sync {
    /// Answers every request; the result is aligned with `requests`.
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse>;

    /// Tail choice override used by the uniform-random control.
    ///
    /// `None` means the controller keeps the first `width` tails in graph
    /// order.
    fn choose_tails(
        &self,
        _example_id: &str,
        _hop: usize,
        _beam: usize,
        _relation: &str,
        _tails: &[String],
        _width: usize,
    ) -> Option<Vec<String>> {
        None
    }
}

impl<S: Selector + ?Sized> Selector for &S {
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        (**self).select_batch(requests)
    }

    fn choose_tails(
        &self,
        example_id: &str,
        hop: usize,
        beam: usize,
        relation: &str,
        tails: &[String],
        width: usize,
    ) -> Option<Vec<String>> {
        (**self).choose_tails(example_id, hop, beam, relation, tails, width)
    }
}

impl<S: Selector + ?Sized> Selector for Box<S> {
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        (**self).select_batch(requests)
    }

    fn choose_tails(
        &self,
        example_id: &str,
        hop: usize,
        beam: usize,
        relation: &str,
        tails: &[String],
        width: usize,
    ) -> Option<Vec<String>> {
        (**self).choose_tails(example_id, hop, beam, relation, tails, width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteChat,
    Random,
    Scripted,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub seed: u64,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub max_retries: u32,
    #[serde(with = "duration_secs")]
    pub retry_backoff: Duration,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// Prompts longer than this many characters are flagged, not truncated.
    pub max_prompt_chars: Option<usize>,
    /// Scripted: canned prompt->reply map. Oracle: synthetic oracle scripts.
    pub script_path: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            seed: 42,
            request_timeout: Duration::from_secs(120),
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
            api_key_env: "BPC_API_KEY".to_owned(),
            max_prompt_chars: None,
            script_path: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.kind == BackendKind::RemoteChat
            && (self.endpoint.is_none() || self.model_name.is_none())
        {
            return Err(Error::Config(
                "remote-chat backend requires both an endpoint and a model name".into(),
            ));
        }
        if matches!(self.kind, BackendKind::Scripted | BackendKind::Oracle)
            && self.script_path.is_none()
        {
            return Err(Error::Config(format!(
                "{:?} backend requires a script file",
                self.kind
            )));
        }
        Ok(())
    }

    /// Instantiates the configured backend.
    pub fn build(&self) -> Result<Box<dyn Selector>, Error> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::RemoteChat => Box::new(RemoteChat::from_config(self)?),
            BackendKind::Random => Box::new(RandomSelector::new(self.seed)),
            BackendKind::Scripted => {
                let path = self.script_path.as_deref().expect("validated");
                Box::new(ScriptedSelector::from_file(path)?)
            }
            BackendKind::Oracle => {
                let path = self.script_path.as_deref().expect("validated");
                Box::new(crate::synth::OracleSelector::from_file(path)?)
            }
        })
    }
}

/// Sends one batch, panicking on misaligned backend output.
pub fn select_batch(backend: &dyn Selector, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
    assert!(!requests.is_empty(), "empty selector batch");
    let out = backend.select_batch(requests);
    assert_eq!(
        out.len(),
        requests.len(),
        "backend returned a misaligned batch"
    );
    out
}

/// Prompt used by the graph-free chain-of-thought control.
pub fn render_cot_prompt(question: &str) -> String {
    format!(
        "Question: {question}\nAnswer the question with the answer entity names separated \
         by commas and nothing else.\n"
    )
}

/// One graph-free call per example.
pub fn cot_answer(
    example_id: &str,
    question: &str,
    backend: &dyn Selector,
) -> (ParsedAnswers, SelectorResponse) {
    let request = SelectorRequest::new(example_id, RequestTag::Cot, render_cot_prompt(question));
    let response = select_batch(backend, std::slice::from_ref(&request))
        .pop()
        .expect("one response");
    (parse_answers(&response.text), response)
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
        assert_eq!(estimate_tokens("éééé"), 1);
    }

    #[test]
    fn token_estimates_are_monotone() {
        let mut prev = 0;
        let mut s = String::new();
        for _ in 0..100 {
            s.push('x');
            let now = estimate_tokens(&s);
            assert!(now >= prev);
            prev = now;
        }
    }

    #[test]
    fn cot_makes_one_call() {
        let backend = ScriptedSelector::new(
            [(render_cot_prompt("capital of France?"), "Paris".to_owned())],
            "",
        );
        let (parsed, _) = cot_answer("q1", "capital of France?", &backend);
        assert_eq!(parsed.answers, vec!["Paris"]);
        assert!(!parsed.failure);
        assert_eq!(backend.call_count(), 1);

        let (parsed, _) = cot_answer("q2", "unknown?", &backend);
        assert!(parsed.answers.is_empty());
        assert!(parsed.failure);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn remote_requires_endpoint_and_model() {
        let cfg = BackendConfig {
            kind: BackendKind::RemoteChat,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BackendConfig {
            kind: BackendKind::RemoteChat,
            endpoint: Some("http://localhost:1".into()),
            model_name: Some("m".into()),
            ..Default::default()
        };
        assert!(cfg.validate().is_ok());
    }
}
