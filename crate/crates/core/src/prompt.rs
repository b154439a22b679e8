//! Routing and extraction prompt templates, and the permissive parsers for
//! the replies they elicit.
//!
//! Both templates are fixed byte-for-byte (see `docs/prompts.md`); only the
//! field contents vary between calls.

use std::collections::HashSet;

use crate::path::{SymbolicPath, NO_HISTORY_MARKER};

pub const STOP_TOKEN: &str = "STOP";
pub const NO_PATHS_MARKER: &str = "(no paths found)";
pub const NO_RELEVANT_PATH: &str = "no relevant path";
pub const DEFAULT_EXTRACTION_BUDGET: usize = 8;

/// Renders the relation-selection prompt.
///
/// The four fields always appear, in this order, so that prompts for
/// different history bounds differ only inside the history field.
pub fn render_routing_prompt(
    question: &str,
    history_text: &str,
    entity: &str,
    candidates: &[String],
    width: usize,
) -> String {
    debug_assert!(!candidates.is_empty(), "routing prompt needs candidates");
    let mut out = String::with_capacity(256 + candidates.len() * 32);
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\nPath history:\n");
    out.push_str(history_text);
    out.push_str("\nCurrent entity: ");
    out.push_str(entity);
    out.push_str("\nCandidate relations:\n");
    for c in candidates {
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(&format!(
        "Return up to {width} relation names from the candidate list, one per line, \
         copied exactly. If no candidate relation should be followed, return only the \
         token {STOP_TOKEN}.\n"
    ));
    out
}

/// Fields recovered from a rendered routing prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingFields<'a> {
    pub question: &'a str,
    /// History lines as shown; empty when the no-history marker is shown.
    pub history: Vec<&'a str>,
    pub entity: &'a str,
    pub candidates: Vec<&'a str>,
}

/// Inverse of [`render_routing_prompt`] for prompts it produced.
pub fn parse_routing_prompt(prompt: &str) -> Option<RoutingFields<'_>> {
    let rest = prompt.strip_prefix("Question: ")?;
    let (question, rest) = rest.split_once("\nPath history:\n")?;
    let (history, rest) = rest.split_once("\nCurrent entity: ")?;
    let (entity, rest) = rest.split_once("\nCandidate relations:\n")?;
    let mut lines: Vec<&str> = rest.lines().collect();
    lines.pop()?;
    let history = if history == NO_HISTORY_MARKER {
        Vec::new()
    } else {
        history.lines().collect()
    };
    Some(RoutingFields {
        question,
        history,
        entity,
        candidates: lines,
    })
}

/// Splits a rendered hop line `src --[rel]--> dst`.
pub fn parse_hop_line(line: &str) -> Option<(&str, &str, &str)> {
    let (src, rest) = line.split_once(" --[")?;
    let (rel, dst) = rest.split_once("]--> ")?;
    Some((src, rel, dst))
}

/// Rendered path chains listed in an extraction prompt.
pub fn extraction_prompt_paths(prompt: &str) -> Vec<&str> {
    let Some((_, rest)) = prompt.split_once("\nRetained paths:\n") else {
        return Vec::new();
    };
    rest.lines()
        .map_while(|l| {
            let (num, chain) = l.split_once(". ")?;
            num.parse::<usize>().ok().map(|_| chain)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationSelection {
    Relations(Vec<String>),
    Stop,
    Empty,
}

impl RelationSelection {
    pub fn relations(&self) -> &[String] {
        match self {
            RelationSelection::Relations(r) => r,
            _ => &[],
        }
    }
}

/// Maps a selector reply onto the displayed candidates.
///
/// Each reply line is matched case-insensitively: exact match first, then a
/// unique substring match in either direction. Ambiguous lines are dropped.
pub fn parse_relation_selection(
    response: &str,
    candidates: &[String],
    width: usize,
) -> RelationSelection {
    if response.trim().eq_ignore_ascii_case(STOP_TOKEN) {
        return RelationSelection::Stop;
    }
    let lowered: Vec<String> = candidates.iter().map(|c| c.to_lowercase()).collect();
    let mut picked: Vec<String> = Vec::new();
    for line in response.lines() {
        if picked.len() >= width {
            break;
        }
        let line = line.trim();
        if line.is_empty() || line.eq_ignore_ascii_case(STOP_TOKEN) {
            continue;
        }
        let needle = line.to_lowercase();
        let matched = match lowered.iter().position(|c| *c == needle) {
            Some(i) => Some(i),
            None => {
                let mut hits = lowered
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| needle.contains(c.as_str()) || c.contains(needle.as_str()))
                    .map(|(i, _)| i);
                match (hits.next(), hits.next()) {
                    (Some(i), None) => Some(i),
                    _ => None,
                }
            }
        };
        if let Some(i) = matched {
            if !picked.contains(&candidates[i]) {
                picked.push(candidates[i].clone());
            }
        }
    }
    if picked.is_empty() {
        RelationSelection::Empty
    } else {
        RelationSelection::Relations(picked)
    }
}

/// Renders the answer-extraction prompt over the first `budget` paths.
pub fn render_extraction_prompt(
    question: &str,
    retained: &[SymbolicPath],
    budget: usize,
) -> String {
    let mut out = String::new();
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\nRetained paths:\n");
    if retained.is_empty() || budget == 0 {
        out.push_str(NO_PATHS_MARKER);
        out.push('\n');
    } else {
        for (i, p) in retained.iter().take(budget).enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, p.render_chain()));
        }
    }
    out.push_str(&format!(
        "Using only the paths above, answer the question with the answer entity names \
         separated by commas and nothing else. If no path is relevant, reply with: \
         {NO_RELEVANT_PATH}\n"
    ));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedAnswers {
    pub answers: Vec<String>,
    /// Set when the reply was empty or declared that no path was relevant.
    pub failure: bool,
}

/// Splits a comma/newline separated answer reply, preserving order.
pub fn parse_answers(response: &str) -> ParsedAnswers {
    if response.to_lowercase().contains(NO_RELEVANT_PATH) {
        return ParsedAnswers {
            answers: Vec::new(),
            failure: true,
        };
    }
    let mut seen = HashSet::new();
    let answers: Vec<String> = response
        .split([',', '\n'])
        .map(strip_quotes)
        .filter(|a| !a.is_empty())
        .filter(|a| seen.insert(a.to_lowercase()))
        .map(str::to_owned)
        .collect();
    let failure = answers.is_empty();
    ParsedAnswers { answers, failure }
}

fn strip_quotes(s: &str) -> &str {
    s.trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '`' | '\u{201c}' | '\u{201d}'))
        .trim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{render_history, HistoryBound};

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn routing_prompt_has_fields() {
        let p = render_routing_prompt(
            "who is X",
            &render_history(&[]),
            "E",
            &strings(&["a", "b"]),
            3,
        );
        let lines: Vec<_> = p.lines().collect();
        assert!(lines.contains(&"(no previous hops)"));
        assert!(lines.contains(&"a"));
        assert!(lines.contains(&"b"));
        assert!(p.contains("Question: who is X"));
        assert!(p.contains("Current entity: E"));
        assert!(p.contains("up to 3 relation names"));
        let order: Vec<_> = [
            "Question:",
            "Path history:",
            "Current entity:",
            "Candidate relations:",
        ]
        .iter()
        .map(|f| p.find(f).unwrap())
        .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn routing_prompt_is_deterministic() {
        let c = strings(&["a", "b"]);
        let a = render_routing_prompt("q", "h", "E", &c, 3);
        let b = render_routing_prompt("q", "h", "E", &c, 3);
        assert_eq!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn prompts_differ_only_in_history() {
        let path = SymbolicPath::new("A").extend("r1", "B").extend("r2", "C");
        let c = strings(&["x", "y"]);
        let k0 = render_routing_prompt(
            "q",
            &render_history(&path.suffix(HistoryBound::Last(0))),
            "C",
            &c,
            3,
        );
        let k2 = render_routing_prompt(
            "q",
            &render_history(&path.suffix(HistoryBound::Last(2))),
            "C",
            &c,
            3,
        );
        let h0 = render_history(&[]);
        let h2 = "A --[r1]--> B\nB --[r2]--> C";
        assert_eq!(k0.replacen(&h0, h2, 1), k2);
    }

    #[test]
    fn routing_prompt_fields_round_trip() {
        let path = SymbolicPath::new("A").extend("r1", "B");
        let c = strings(&["x", "y"]);
        let p = render_routing_prompt(
            "q?",
            &render_history(&path.suffix(HistoryBound::Full)),
            "B",
            &c,
            2,
        );
        let f = parse_routing_prompt(&p).unwrap();
        assert_eq!(f.question, "q?");
        assert_eq!(f.history, vec!["A --[r1]--> B"]);
        assert_eq!(f.entity, "B");
        assert_eq!(f.candidates, vec!["x", "y"]);
        assert_eq!(parse_hop_line(f.history[0]), Some(("A", "r1", "B")));

        let p = render_routing_prompt("q?", &render_history(&[]), "A", &c, 2);
        assert!(parse_routing_prompt(&p).unwrap().history.is_empty());
    }

    #[test]
    fn extraction_paths_listed() {
        let paths = vec![
            SymbolicPath::new("A").extend("r", "B"),
            SymbolicPath::new("A"),
        ];
        let p = render_extraction_prompt("q", &paths, 8);
        assert_eq!(extraction_prompt_paths(&p), vec!["A --[r]--> B", "A"]);
        assert!(extraction_prompt_paths(&render_extraction_prompt("q", &[], 8)).is_empty());
    }

    #[test]
    fn parse_stop() {
        let c = strings(&["a"]);
        assert_eq!(
            parse_relation_selection("STOP", &c, 3),
            RelationSelection::Stop
        );
        assert_eq!(
            parse_relation_selection("  stop\n", &c, 3),
            RelationSelection::Stop
        );
    }

    #[test]
    fn parse_exact_lines() {
        let c = strings(&["people.person.children", "people.person.spouse", "x"]);
        let sel = parse_relation_selection("people.person.spouse\npeople.person.children", &c, 3);
        assert_eq!(
            sel,
            RelationSelection::Relations(strings(&[
                "people.person.spouse",
                "people.person.children"
            ]))
        );
    }

    #[test]
    fn parse_unique_substring() {
        let c = strings(&["rel.spouse_s", "rel.children", "rel.parents"]);
        let sel = parse_relation_selection("I think spouse_s is best", &c, 3);
        // "spouse_s" is not itself a line; the candidate must be contained in
        // the line or vice versa.
        assert_eq!(sel, RelationSelection::Empty);

        let c = strings(&["spouse_s", "children", "parents"]);
        let sel = parse_relation_selection("I think spouse_s is best", &c, 3);
        assert_eq!(sel, RelationSelection::Relations(strings(&["spouse_s"])));
    }

    #[test]
    fn parse_ambiguous_substring_is_dropped() {
        // Both candidates occur inside the line.
        let c = strings(&["spouse", "spouse_s"]);
        assert_eq!(
            parse_relation_selection("pick spouse_s", &c, 3),
            RelationSelection::Empty
        );
        // Line contained in two candidates.
        let c = strings(&["film.actor", "film.director"]);
        assert_eq!(
            parse_relation_selection("film", &c, 3),
            RelationSelection::Empty
        );
        // Exact match wins over substring ambiguity.
        let c = strings(&["film", "film.director"]);
        assert_eq!(
            parse_relation_selection("FILM", &c, 3),
            RelationSelection::Relations(strings(&["film"]))
        );
    }

    #[test]
    fn parse_no_match_dedupe_and_width() {
        let c = strings(&["a1", "b1", "c1", "d1"]);
        assert_eq!(
            parse_relation_selection("banana", &c, 3),
            RelationSelection::Empty
        );
        assert_eq!(
            parse_relation_selection("", &c, 3),
            RelationSelection::Empty
        );
        assert_eq!(
            parse_relation_selection("b1\nB1\na1\nc1\nd1", &c, 3),
            RelationSelection::Relations(strings(&["b1", "a1", "c1"]))
        );
    }

    #[test]
    fn extraction_budget() {
        let paths: Vec<_> = (0..12)
            .map(|i| SymbolicPath::new("A").extend("r", format!("T{i}")))
            .collect();
        let p = render_extraction_prompt("q", &paths, 8);
        assert_eq!(p.matches("--[r]-->").count(), 8);
        assert!(p.contains("8. A --[r]--> T7"));
        assert!(!p.contains("T8"));

        let p = render_extraction_prompt("q", &paths[..3], 8);
        let i0 = p.find("T0").unwrap();
        let i2 = p.find("T2").unwrap();
        assert!(i0 < i2);
        assert_eq!(p.matches("--[r]-->").count(), 3);

        let p = render_extraction_prompt("q", &[], 8);
        assert!(p.lines().any(|l| l == NO_PATHS_MARKER));
    }

    #[test]
    fn answers_parse() {
        assert_eq!(
            parse_answers("Paris, Lyon").answers,
            strings(&["Paris", "Lyon"])
        );
        assert_eq!(
            parse_answers("Paris, paris, PARIS").answers,
            strings(&["Paris"])
        );
        assert_eq!(
            parse_answers("\"Paris\"\n 'Lyon' ,").answers,
            strings(&["Paris", "Lyon"])
        );
        let nr = parse_answers("no relevant path");
        assert!(nr.answers.is_empty() && nr.failure);
        let nr = parse_answers("Sorry: No relevant path was found.");
        assert!(nr.answers.is_empty() && nr.failure);
        let empty = parse_answers("  ");
        assert!(empty.answers.is_empty() && empty.failure);
        assert!(!parse_answers("Paris").failure);
    }
}
