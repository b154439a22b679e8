//! Batched beam search over a question graph.
//!
//! Complete symbolic paths stay in controller memory; the routing prompt
//! shows only the last `K` hops of each beam. Answer extraction runs once
//! after the search loop over the retained paths and never sees the bound.

use serde::{Deserialize, Serialize};

use crate::backend::{
    select_batch, RequestTag, RoutingView, Selector, SelectorRequest, SelectorResponse,
};
use crate::dataset::ExampleRecord;
use crate::graph::GraphIndex;
use crate::path::{render_history, HistoryBound, SymbolicPath};
use crate::prompt::{
    parse_answers, parse_relation_selection, render_extraction_prompt, render_routing_prompt,
    RelationSelection, DEFAULT_EXTRACTION_BUDGET,
};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub depth_limit: usize,
    pub width: usize,
    pub beam_budget: usize,
    pub relation_cap: usize,
    pub history_bound: HistoryBound,
    pub extraction_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            depth_limit: 5,
            width: 3,
            beam_budget: 16,
            relation_cap: 50,
            history_bound: HistoryBound::Full,
            extraction_budget: DEFAULT_EXTRACTION_BUDGET,
        }
    }
}

impl SearchConfig {
    pub fn with_history(mut self, bound: HistoryBound) -> Self {
        self.history_bound = bound;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let counts = [
            ("depth_limit", self.depth_limit),
            ("width", self.width),
            ("beam_budget", self.beam_budget),
            ("relation_cap", self.relation_cap),
            ("extraction_budget", self.extraction_budget),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Per-example bookkeeping of the search loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    /// Routing prompts issued at each executed hop.
    pub per_hop_prompt_count: Vec<usize>,
    /// Rendered history hops summed over the prompts of each hop.
    pub per_hop_visible_hops: Vec<usize>,
    /// Largest child count produced by a single beam at each hop.
    pub per_hop_max_children: Vec<usize>,
    /// Retained paths after clipping at each hop.
    pub per_hop_retained: Vec<usize>,
    /// Longest retained path at loop exit.
    pub final_depth: usize,
    pub retained_paths: Vec<SymbolicPath>,
    pub llm_calls: usize,
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub routing_input_tokens: usize,
    /// Prompts whose relation inventory hid relations beyond the cap.
    pub truncated_inventories: usize,
    pub prompts_over_limit: usize,
    pub errors: Vec<String>,
    pub no_topic_entities: bool,
}

impl SearchTrace {
    pub fn routing_calls(&self) -> usize {
        self.per_hop_prompt_count.iter().sum()
    }

    pub fn rendered_history_hops(&self) -> usize {
        self.per_hop_visible_hops.iter().sum()
    }

    fn record(&mut self, resp: &SelectorResponse, routing: bool) {
        self.llm_calls += 1;
        self.input_tokens += resp.input_token_estimate;
        self.output_tokens += resp.output_token_estimate;
        if routing {
            self.routing_input_tokens += resp.input_token_estimate;
        }
        if resp.prompt_over_limit {
            self.prompts_over_limit += 1;
        }
        if let Some(e) = &resp.error {
            self.errors.push(e.clone());
        }
    }
}

/// Children of an open beam: selected relations in order, each expanded to
/// at most `width` distinct tails in graph order.
///
/// Panics if a relation has no edge at the beam's tail entity; the parser
/// only yields displayed relations, so this indicates a caller bug.
pub fn expand_beam(
    path: &SymbolicPath,
    relations: &[String],
    index: &GraphIndex,
    width: usize,
) -> Vec<SymbolicPath> {
    expand_with(path, relations, index, |rel| {
        index.tails(path.tail_entity(), rel, width)
    })
}

fn expand_with<F>(
    path: &SymbolicPath,
    relations: &[String],
    index: &GraphIndex,
    mut tails_for: F,
) -> Vec<SymbolicPath>
where
    F: FnMut(&str) -> Vec<String>,
{
    assert!(path.is_open(), "cannot expand a finished beam");
    let entity = path.tail_entity();
    let mut children = Vec::new();
    for rel in relations {
        assert!(
            index.has_relation(entity, rel),
            "relation {rel:?} is not outgoing from {entity:?}"
        );
        for tail in tails_for(rel) {
            children.push(path.extend(rel.clone(), tail));
        }
    }
    children
}

/// Keeps at most `budget` paths: open paths in arrival order, then finished
/// paths in arrival order.
pub fn clip_beams(paths: Vec<SymbolicPath>, budget: usize) -> Vec<SymbolicPath> {
    assert!(budget >= 1, "beam budget must be at least 1");
    let (open, finished): (Vec<_>, Vec<_>) = paths.into_iter().partition(SymbolicPath::is_open);
    open.into_iter().chain(finished).take(budget).collect()
}

/// Runs the routing loop and returns the retained paths with the trace.
pub fn run_search(
    example: &ExampleRecord,
    config: &SearchConfig,
    backend: &dyn Selector,
) -> (Vec<SymbolicPath>, SearchTrace) {
    let index = GraphIndex::build(&example.triples);
    search_with_index(example, &index, config, backend)
}

pub fn search_with_index(
    example: &ExampleRecord,
    index: &GraphIndex,
    config: &SearchConfig,
    backend: &dyn Selector,
) -> (Vec<SymbolicPath>, SearchTrace) {
    let mut trace = SearchTrace {
        no_topic_entities: example.topic_entities.is_empty(),
        ..Default::default()
    };
    // The seed set obeys the beam budget like every later hop.
    let mut paths: Vec<SymbolicPath> = example
        .topic_entities
        .iter()
        .take(config.beam_budget)
        .map(SymbolicPath::new)
        .collect();

    for hop in 0..config.depth_limit {
        let active: Vec<usize> = (0..paths.len()).filter(|&i| paths[i].is_open()).collect();
        if active.is_empty() {
            break;
        }

        let inventories: Vec<Vec<String>> = active
            .iter()
            .map(|&i| index.capped_relations(paths[i].tail_entity(), config.relation_cap))
            .collect();

        let mut requests = Vec::new();
        let mut visible = 0;
        for (slot, &i) in active.iter().enumerate() {
            let candidates = &inventories[slot];
            if candidates.is_empty() {
                continue;
            }
            let path = &paths[i];
            let shown = path.suffix(config.history_bound);
            visible += shown.len();
            if index.is_truncated(path.tail_entity(), config.relation_cap) {
                trace.truncated_inventories += 1;
            }
            let prompt = render_routing_prompt(
                &example.question,
                &render_history(&shown),
                path.tail_entity(),
                candidates,
                config.width,
            );
            let mut req = SelectorRequest::new(&example.id, RequestTag::Routing, prompt);
            req.routing = Some(RoutingView {
                hop,
                beam: slot,
                entity: path.tail_entity().to_owned(),
                candidates: candidates.clone(),
                width: config.width,
            });
            requests.push((slot, req));
        }
        trace.per_hop_prompt_count.push(requests.len());
        trace.per_hop_visible_hops.push(visible);

        let batch: Vec<SelectorRequest> = requests.iter().map(|(_, r)| r.clone()).collect();
        let responses = if batch.is_empty() {
            Vec::new()
        } else {
            select_batch(backend, &batch)
        };
        let mut response_for: Vec<Option<&SelectorResponse>> = vec![None; active.len()];
        for ((slot, _), resp) in requests.iter().zip(&responses) {
            trace.record(resp, true);
            response_for[*slot] = Some(resp);
        }

        let mut next: Vec<SymbolicPath> = paths.iter().filter(|p| !p.is_open()).cloned().collect();
        let mut max_children = 0;
        for (slot, &i) in active.iter().enumerate() {
            let path = &paths[i];
            let selection = match response_for[slot] {
                None => RelationSelection::Empty,
                Some(resp) if resp.error.is_some() => RelationSelection::Empty,
                Some(resp) => {
                    parse_relation_selection(&resp.text, &inventories[slot], config.width)
                }
            };
            let RelationSelection::Relations(relations) = selection else {
                next.push(path.clone().finished());
                continue;
            };
            let entity = path.tail_entity();
            let children = expand_with(path, &relations, index, |rel| {
                let first = index.tails(entity, rel, config.width);
                let all = index.tails(entity, rel, usize::MAX);
                backend
                    .choose_tails(&example.id, hop, slot, rel, &all, config.width)
                    .unwrap_or(first)
            });
            max_children = max_children.max(children.len());
            if children.is_empty() {
                next.push(path.clone().finished());
            } else {
                next.extend(children);
            }
        }
        paths = clip_beams(next, config.beam_budget);
        trace.per_hop_max_children.push(max_children);
        trace.per_hop_retained.push(paths.len());
    }

    trace.final_depth = paths.iter().map(SymbolicPath::len).max().unwrap_or(0);
    trace.retained_paths = paths.clone();
    (paths, trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub answers: Vec<String>,
    pub failure: bool,
    pub response: Option<SelectorResponse>,
}

/// Asks the backend for answers over the first `extraction_budget` retained
/// paths. No call is made when nothing was retained.
pub fn extract_answers(
    example_id: &str,
    question: &str,
    retained: &[SymbolicPath],
    config: &SearchConfig,
    backend: &dyn Selector,
) -> Extraction {
    if retained.is_empty() {
        return Extraction {
            answers: Vec::new(),
            failure: true,
            response: None,
        };
    }
    let prompt = render_extraction_prompt(question, retained, config.extraction_budget);
    let req = SelectorRequest::new(example_id, RequestTag::Extraction, prompt);
    let resp = select_batch(backend, std::slice::from_ref(&req))
        .pop()
        .expect("one response");
    let parsed = parse_answers(&resp.text);
    Extraction {
        answers: parsed.answers,
        failure: parsed.failure || resp.error.is_some(),
        response: Some(resp),
    }
}

/// Full pipeline result for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub answers: Vec<String>,
    pub failure: bool,
    pub trace: SearchTrace,
}

/// Routing search followed by answer extraction. Routing and extraction may
/// use different backends (the random control routes randomly but extracts
/// with the answer model).
pub fn answer_question(
    example: &ExampleRecord,
    config: &SearchConfig,
    router: &dyn Selector,
    extractor: &dyn Selector,
) -> SearchOutcome {
    let (retained, mut trace) = run_search(example, config, router);
    let extraction = extract_answers(&example.id, &example.question, &retained, config, extractor);
    if let Some(resp) = &extraction.response {
        trace.record(resp, false);
    }
    SearchOutcome {
        answers: extraction.answers,
        failure: extraction.failure,
        trace,
    }
}
