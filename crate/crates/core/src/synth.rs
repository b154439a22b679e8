//! Synthetic question graphs with a planted answer chain, plus oracle
//! selectors that know the plant.
//!
//! Every example has one topic entity `e{i}_0` and a chain of
//! `plant_depth` planted hops (`rel_plant_{h}`) ending at the gold entity.
//! Each on-chain entity also carries `branching` distractor relations
//! (`rel_noise_{n}`), each leading to `tail_fanout` leaf entities. With
//! [`AmbiguityMode::RepeatedEntity`] the chain visits its first interior
//! entity twice, so the right relation there depends on the previous hop.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{RequestTag, Selector, SelectorRequest, SelectorResponse};
use crate::dataset::ExampleRecord;
use crate::graph::Triple;
use crate::prompt::{
    extraction_prompt_paths, parse_hop_line, parse_routing_prompt, NO_RELEVANT_PATH, STOP_TOKEN,
};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmbiguityMode {
    None,
    RepeatedEntity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub example_count: usize,
    pub plant_depth: usize,
    pub branching: usize,
    pub tail_fanout: usize,
    pub ambiguity: AmbiguityMode,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.plant_depth == 0 {
            return Err(Error::Config("plant depth must be at least 1".into()));
        }
        if self.branching > 0 && self.tail_fanout == 0 {
            return Err(Error::Config(
                "distractors need a tail fanout of at least 1".into(),
            ));
        }
        if self.ambiguity == AmbiguityMode::RepeatedEntity && self.plant_depth < 4 {
            return Err(Error::Config(
                "repeated-entity plants need a plant depth of at least 4".into(),
            ));
        }
        Ok(())
    }
}

/// One planted step: at `entity` on hop `hop`, follow `relation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantStep {
    pub hop: usize,
    /// Previous hop as rendered in history, `None` at the topic entity.
    pub previous: Option<(String, String)>,
    pub entity: String,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleScript {
    pub example_id: String,
    pub gold: String,
    pub plant_depth: usize,
    pub steps: Vec<PlantStep>,
}

impl OracleScript {
    /// Planted relation for `(entity, hop)`.
    pub fn relation_at(&self, entity: &str, hop: usize) -> Option<&str> {
        self.steps
            .iter()
            .find(|s| s.hop == hop && s.entity == entity)
            .map(|s| s.relation.as_str())
    }
}

fn example_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Deterministic generation from `spec`.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<ExampleRecord>, Vec<OracleScript>), Error> {
    spec.validate()?;
    Ok((0..spec.example_count)
        .map(|i| generate_one(spec, i))
        .unzip())
}

fn generate_one(spec: &SynthSpec, i: usize) -> (ExampleRecord, OracleScript) {
    let mut rng = example_rng(spec.seed, i);
    let d = spec.plant_depth;

    // Entities along the chain; the repeated mode reuses position 1 at 3.
    let mut chain: Vec<String> = (0..=d).map(|j| format!("e{i}_{j}")).collect();
    if spec.ambiguity == AmbiguityMode::RepeatedEntity {
        chain[3] = chain[1].clone();
    }
    let gold = chain[d].clone();

    let mut triples = Vec::new();
    let mut steps = Vec::with_capacity(d);
    for h in 0..d {
        let relation = format!("rel_plant_{}", h + 1);
        triples.push(Triple::new(&chain[h], &relation, &chain[h + 1]));
        steps.push(PlantStep {
            hop: h,
            previous: (h > 0).then(|| (chain[h - 1].clone(), format!("rel_plant_{h}"))),
            entity: chain[h].clone(),
            relation,
        });
    }

    let mut distinct_on_chain: Vec<&String> = Vec::new();
    for e in &chain {
        if !distinct_on_chain.contains(&e) {
            distinct_on_chain.push(e);
        }
    }
    for (j, entity) in distinct_on_chain.iter().enumerate() {
        let mut noise: BTreeSet<usize> = BTreeSet::new();
        while noise.len() < spec.branching {
            noise.insert(rng.gen_range(0..100 * spec.branching.max(1)));
        }
        for (k, n) in noise.into_iter().enumerate() {
            let relation = format!("rel_noise_{n}");
            for f in 0..spec.tail_fanout {
                triples.push(Triple::new(
                    *entity,
                    &relation,
                    format!("e{i}_n{j}_{k}_{f}"),
                ));
            }
        }
    }
    triples.shuffle(&mut rng);

    let example = ExampleRecord {
        id: format!("synth-{}-{i}", spec.seed),
        question: format!(
            "[synth-{}-{i}] Which entity does the planted chain from e{i}_0 reach?",
            spec.seed
        ),
        gold_answers: vec![gold.clone()],
        topic_entities: vec![chain[0].clone()],
        answer_entities: vec![gold.clone()],
        triples,
    };
    let script = OracleScript {
        example_id: example.id.clone(),
        gold,
        plant_depth: d,
        steps,
    };
    (example, script)
}

pub fn write_scripts(path: &Path, scripts: &[OracleScript]) -> Result<(), Error> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    for s in scripts {
        let line = serde_json::to_string(s).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_scripts(path: &Path) -> Result<Vec<OracleScript>, Error> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Dataset {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Answers an extraction prompt with the gold entity when some listed path
/// ends there, otherwise with the no-relevant-path reply.
fn honest_extraction(script: Option<&OracleScript>, prompt: &str) -> String {
    match script {
        Some(s)
            if extraction_prompt_paths(prompt)
                .iter()
                .any(|chain| chain.rsplit("]--> ").next() == Some(s.gold.as_str())) =>
        {
            s.gold.clone()
        }
        _ => NO_RELEVANT_PATH.to_owned(),
    }
}

fn index_scripts(scripts: Vec<OracleScript>) -> HashMap<String, OracleScript> {
    scripts
        .into_iter()
        .map(|s| (s.example_id.clone(), s))
        .collect()
}

/// Oracle keyed on `(current entity, hop index)`. Unscripted states STOP.
///
/// It never reads the history field, so its routing decisions are identical
/// for every history bound.
#[derive(Debug, Clone)]
pub struct OracleSelector {
    scripts: HashMap<String, OracleScript>,
}

impl OracleSelector {
    pub fn new(scripts: Vec<OracleScript>) -> Self {
        Self {
            scripts: index_scripts(scripts),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        Ok(Self::new(read_scripts(path)?))
    }

    fn reply(&self, req: &SelectorRequest) -> String {
        let script = self.scripts.get(&req.example_id);
        match req.tag {
            RequestTag::Routing => {
                let planted = match (&req.routing, script) {
                    (Some(view), Some(s)) => s.relation_at(&view.entity, view.hop),
                    _ => None,
                };
                planted.unwrap_or(STOP_TOKEN).to_owned()
            }
            RequestTag::Extraction => honest_extraction(script, &req.prompt),
            RequestTag::Cot => script.map_or_else(String::new, |s| s.gold.clone()),
        }
    }
}

impl Selector for OracleSelector {
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        requests
            .iter()
            .map(|r| SelectorResponse::answered(r, self.reply(r), Duration::ZERO))
            .collect()
    }
}

/// Scripted selector that sees only the rendered prompt.
///
/// It keys on the last visible history hop together with the current
/// entity. When no history is visible it falls back to the relation planted
/// at the entity's first visit, which is wrong on the second visit of a
/// repeated entity.
#[derive(Debug, Clone)]
pub struct HistoryKeyedSelector {
    scripts: HashMap<String, OracleScript>,
}

impl HistoryKeyedSelector {
    pub fn new(scripts: Vec<OracleScript>) -> Self {
        Self {
            scripts: index_scripts(scripts),
        }
    }

    fn route(script: &OracleScript, prompt: &str) -> Option<String> {
        let fields = parse_routing_prompt(prompt)?;
        let previous = fields
            .history
            .last()
            .and_then(|l| parse_hop_line(l))
            .map(|(src, rel, _)| (src.to_owned(), rel.to_owned()));
        let step = match previous {
            Some(prev) => script
                .steps
                .iter()
                .find(|s| s.entity == fields.entity && s.previous.as_ref() == Some(&prev)),
            None => script.steps.iter().find(|s| s.entity == fields.entity),
        }?;
        Some(step.relation.clone())
    }
}

impl Selector for HistoryKeyedSelector {
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        requests
            .iter()
            .map(|req| {
                let script = self.scripts.get(&req.example_id);
                let text = match req.tag {
                    RequestTag::Routing => script
                        .and_then(|s| Self::route(s, &req.prompt))
                        .unwrap_or_else(|| STOP_TOKEN.to_owned()),
                    RequestTag::Extraction => honest_extraction(script, &req.prompt),
                    RequestTag::Cot => String::new(),
                };
                SelectorResponse::answered(req, text, Duration::ZERO)
            })
            .collect()
    }
}
