//! Keeps the rendered examples in docs/prompts.md in sync with the code.

use std::fs;
use std::path::Path;

use bpc_core::backend::render_cot_prompt;
use bpc_core::path::{render_history, HistoryBound, SymbolicPath};
use bpc_core::prompt::{render_extraction_prompt, render_routing_prompt};

const QUESTION: &str = "Who is the spouse of the director of Inception?";

fn doc_examples() -> Vec<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/prompts.md");
    let text = fs::read_to_string(path).unwrap();
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        match (&mut current, line) {
            (None, "```text") => current = Some(String::new()),
            (Some(block), "```") => {
                blocks.push(std::mem::take(block));
                current = None;
            }
            (Some(block), _) => {
                block.push_str(line);
                block.push('\n');
            }
            (None, _) => {}
        }
    }
    blocks
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[test]
fn documented_prompts_match_renderer() {
    let zero = SymbolicPath::new("Inception");
    let one = zero.extend("film.film.directed_by", "Christopher Nolan");
    let answer = one.extend("people.person.spouse", "Emma Thomas");
    let date = zero.extend("film.film.release_date", "2010").finished();

    let expected = vec![
        render_routing_prompt(
            QUESTION,
            &render_history(&zero.suffix(HistoryBound::Full)),
            "Inception",
            &strings(&["film.film.directed_by", "film.film.release_date"]),
            3,
        ),
        render_routing_prompt(
            QUESTION,
            &render_history(&one.suffix(HistoryBound::Last(1))),
            "Christopher Nolan",
            &strings(&["people.person.place_of_birth", "people.person.spouse"]),
            3,
        ),
        render_extraction_prompt(QUESTION, &[answer, date], 8),
        render_extraction_prompt(QUESTION, &[], 8),
        render_cot_prompt(QUESTION),
    ];
    assert_eq!(doc_examples(), expected);
}
