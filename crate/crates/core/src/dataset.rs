//! RoG-style benchmark files: one JSON object per line.
//!
//! Canonical fields are `id`, `question`, `answer`, `q_entity`, `a_entity`
//! and `graph`. Mirrors of these splits rename some fields, so each field
//! also accepts the aliases listed in [`FIELD_ALIASES`]. The first name
//! present wins.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::graph::Triple;
use crate::Error;

/// Canonical field name followed by accepted aliases.
pub const FIELD_ALIASES: &[(&str, &[&str])] = &[
    ("id", &["ID", "qid", "question_id"]),
    ("question", &["RawQuestion", "ProcessedQuestion"]),
    ("answer", &["answers"]),
    ("q_entity", &["topic_entities", "topic_entity"]),
    ("a_entity", &["answer_entities"]),
    ("graph", &["triples", "subgraph"]),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub topic_entities: Vec<String>,
    pub answer_entities: Vec<String>,
    pub triples: Vec<Triple>,
}

impl ExampleRecord {
    /// Serializes in the canonical input format.
    pub fn to_json_line(&self) -> String {
        let graph: Vec<[&str; 3]> = self
            .triples
            .iter()
            .map(|t| [t.head.as_str(), t.relation.as_str(), t.tail.as_str()])
            .collect();
        serde_json::json!({
            "id": self.id,
            "question": self.question,
            "answer": self.gold_answers,
            "q_entity": self.topic_entities,
            "a_entity": self.answer_entities,
            "graph": graph,
        })
        .to_string()
    }
}

/// Reads a split, preserving file order. Blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<ExampleRecord>, Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Dataset {
            path: path.to_owned(),
            line: line_no,
            message,
        };
        let record = parse_record(&line).map_err(fail)?;
        if !ids.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_owned(),
                id: record.id,
            });
        }
        if record.gold_answers.is_empty() {
            warn!(
                "{}:{line_no}: example {} has no gold answers",
                path.display(),
                record.id
            );
        }
        records.push(record);
    }
    Ok(records)
}

fn parse_record(line: &str) -> Result<ExampleRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| "expected a JSON object".to_owned())?;
    let id = match field(obj, "id")? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err("field `id` must be a string".into()),
    };
    let question = field(obj, "question")?
        .as_str()
        .ok_or("field `question` must be a string")?
        .to_owned();
    let gold_answers = string_list(field(obj, "answer")?, "answer")?;
    let topic_entities = string_list(field(obj, "q_entity")?, "q_entity")?;
    let answer_entities = string_list(field(obj, "a_entity")?, "a_entity")?;
    let graph = field(obj, "graph")?
        .as_array()
        .ok_or("field `graph` must be an array of triples")?;
    let mut triples = Vec::with_capacity(graph.len());
    for (j, item) in graph.iter().enumerate() {
        let parts = item
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| format!("graph[{j}] is not a 3-element array"))?;
        let s = |k: usize| {
            parts[k]
                .as_str()
                .map(str::to_owned)
                .ok_or_else(|| format!("graph[{j}][{k}] is not a string"))
        };
        let triple = Triple::new(s(0)?, s(1)?, s(2)?);
        if !triple.is_well_formed() {
            return Err(format!("graph[{j}] has an empty field"));
        }
        triples.push(triple);
    }
    Ok(ExampleRecord {
        id,
        question,
        gold_answers,
        topic_entities,
        answer_entities,
        triples,
    })
}

fn field<'a>(obj: &'a Map<String, Value>, canonical: &str) -> Result<&'a Value, String> {
    let aliases = FIELD_ALIASES
        .iter()
        .find(|(name, _)| *name == canonical)
        .map_or(&[][..], |(_, a)| *a);
    std::iter::once(canonical)
        .chain(aliases.iter().copied())
        .find_map(|name| obj.get(name))
        .ok_or_else(|| format!("missing field `{canonical}`"))
}

/// Accepts a string array or a bare string.
fn string_list(value: &Value, name: &str) -> Result<Vec<String>, String> {
    match value {
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Null => Ok(Vec::new()),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| format!("field `{name}` must contain only strings"))
            })
            .collect(),
        _ => Err(format!("field `{name}` must be a string array")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub examples: usize,
    pub avg_gold: f64,
    pub single_answer_fraction: f64,
}

pub fn dataset_stats(records: &[ExampleRecord]) -> DatasetStats {
    let n = records.len();
    if n == 0 {
        return DatasetStats {
            examples: 0,
            avg_gold: 0.0,
            single_answer_fraction: 0.0,
        };
    }
    let total: usize = records.iter().map(|r| r.gold_answers.len()).sum();
    let single = records.iter().filter(|r| r.gold_answers.len() == 1).count();
    DatasetStats {
        examples: n,
        avg_gold: total as f64 / n as f64,
        single_answer_fraction: single as f64 / n as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const GOOD_A: &str = r#"{"id":"a","question":"q1","answer":["x"],"q_entity":["A"],"a_entity":["x"],"graph":[["A","r","x"]]}"#;
    const GOOD_B: &str = r#"{"id":"b","question":"q2","answer":["y","z","w"],"q_entity":["B"],"a_entity":[],"graph":[]}"#;

    #[test]
    fn loads_in_file_order() {
        let f = write(&[GOOD_A, GOOD_B]);
        let recs = load_dataset(f.path()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "a");
        assert_eq!(recs[1].id, "b");
        assert_eq!(recs[0].triples, vec![Triple::new("A", "r", "x")]);
    }

    #[test]
    fn short_triple_names_line() {
        let bad = r#"{"id":"c","question":"q","answer":[],"q_entity":[],"a_entity":[],"graph":[["A","r"]]}"#;
        let f = write(&[GOOD_A, bad]);
        let err = load_dataset(f.path()).unwrap_err();
        match err {
            Error::Dataset { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("3-element"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_field_and_line() {
        let bad = r#"{"id":"c","question":"q","answer":[],"a_entity":[],"graph":[]}"#;
        let f = write(&[bad]);
        let err = load_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
        assert!(err.contains("q_entity"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write(&[GOOD_A, GOOD_A]);
        assert!(matches!(
            load_dataset(f.path()),
            Err(Error::DuplicateId { .. })
        ));
    }

    #[test]
    fn aliases_accepted() {
        let aliased = r#"{"ID":"a","question":"q","answers":"x","topic_entities":["A"],"answer_entities":["x"],"triples":[]}"#;
        let f = write(&[aliased]);
        let recs = load_dataset(f.path()).unwrap();
        assert_eq!(recs[0].id, "a");
        assert_eq!(recs[0].gold_answers, vec!["x"]);
    }

    #[test]
    fn round_trips_through_json_line() {
        let f = write(&[GOOD_A]);
        let rec = load_dataset(f.path()).unwrap().remove(0);
        let g = write(&[&rec.to_json_line()]);
        assert_eq!(load_dataset(g.path()).unwrap(), vec![rec]);
    }

    #[test]
    fn stats() {
        let f = write(&[GOOD_A, GOOD_B]);
        let s = dataset_stats(&load_dataset(f.path()).unwrap());
        assert_eq!(s.examples, 2);
        assert!((s.avg_gold - 2.0).abs() < 1e-12);
        assert!((s.single_answer_fraction - 0.5).abs() < 1e-12);
    }
}
