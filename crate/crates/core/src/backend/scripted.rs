use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::{Selector, SelectorRequest, SelectorResponse};
use crate::Error;

/// Canned prompt -> reply map. Unknown prompts get the fallback reply.
#[derive(Debug)]
pub struct ScriptedSelector {
    replies: HashMap<String, String>,
    fallback: String,
    calls: AtomicUsize,
}

impl ScriptedSelector {
    pub fn new<I>(replies: I, fallback: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        Self {
            replies: replies.into_iter().collect(),
            fallback: fallback.into(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Loads a JSON object mapping prompt text to reply text. The optional
    /// key `"__fallback__"` sets the reply for unknown prompts (default
    /// `STOP`).
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut replies: HashMap<String, String> = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let fallback = replies
            .remove("__fallback__")
            .unwrap_or_else(|| crate::prompt::STOP_TOKEN.to_owned());
        Ok(Self::new(replies, fallback))
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Selector for ScriptedSelector {
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        self.calls.fetch_add(requests.len(), Ordering::Relaxed);
        requests
            .iter()
            .map(|req| {
                let text = self
                    .replies
                    .get(&req.prompt)
                    .unwrap_or(&self.fallback)
                    .clone();
                SelectorResponse::answered(req, text, Duration::ZERO)
            })
            .collect()
    }
}

/// Backend defined by a reply function.
pub struct FnSelector<F> {
    reply: F,
    calls: AtomicUsize,
}

impl<F> FnSelector<F>
where
    F: Fn(&SelectorRequest) -> String + Send + Sync,
{
    pub fn new(reply: F) -> Self {
        Self {
            reply,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<F> Selector for FnSelector<F>
where
    F: Fn(&SelectorRequest) -> String + Send + Sync,
{
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        self.calls.fetch_add(requests.len(), Ordering::Relaxed);
        requests
            .iter()
            .map(|req| SelectorResponse::answered(req, (self.reply)(req), Duration::ZERO))
            .collect()
    }
}
