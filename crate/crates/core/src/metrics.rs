//! Answer metrics and per-example diagnostics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// QA-style answer normalization: lowercase, drop punctuation and symbol
/// characters, drop leading articles, collapse whitespace.
///
/// An article is only dropped when another word follows it, so a bare
/// single-letter answer such as "A" survives.
pub fn normalize(answer: &str) -> String {
    let cleaned: String = answer
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut words: &[&str] = &cleaned.split_whitespace().collect::<Vec<_>>();
    while let [first, rest @ ..] = words {
        if !rest.is_empty() && matches!(*first, "a" | "an" | "the") {
            words = rest;
        } else {
            break;
        }
    }
    words.join(" ")
}

fn normalized_set<S: AsRef<str>>(items: &[S]) -> HashSet<String> {
    items
        .iter()
        .map(|s| normalize(s.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// 1 when the first prediction matches any gold answer after normalization.
pub fn hits_at_1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> u8 {
    let Some(first) = predicted.first() else {
        return 0;
    };
    let first = normalize(first.as_ref());
    if first.is_empty() {
        return 0;
    }
    u8::from(gold.iter().any(|g| normalize(g.as_ref()) == first))
}

/// Set F1 between normalized, deduplicated predicted and gold answers.
///
/// Both sets empty counts as a perfect match.
pub fn set_f1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> f64 {
    let pred = normalized_set(predicted);
    let gold = normalized_set(gold);
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let common = pred.intersection(&gold).count();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub example_id: String,
    pub hits_at_1: u8,
    pub f1: f64,
    pub gold_count: usize,
    pub predicted_count: usize,
    pub failure_flag: bool,
    pub depth: usize,
}

impl ExampleScore {
    pub fn no_answer(&self) -> bool {
        self.failure_flag || self.predicted_count == 0
    }
}

/// Mean F1 deltas (a - b) over single-answer and multi-answer examples.
/// `None` marks an empty group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalitySplit {
    pub single_count: usize,
    pub single_mean_delta: Option<f64>,
    pub multi_count: usize,
    pub multi_mean_delta: Option<f64>,
}

/// Groups paired deltas by gold-answer count. `pairs` holds
/// `(gold_count, f1_a - f1_b)`.
pub fn cardinality_split<I>(pairs: I) -> CardinalitySplit
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let (mut s_sum, mut s_n, mut m_sum, mut m_n) = (0.0, 0usize, 0.0, 0usize);
    for (gold, delta) in pairs {
        if gold == 1 {
            s_sum += delta;
            s_n += 1;
        } else if gold > 1 {
            m_sum += delta;
            m_n += 1;
        }
    }
    let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
    CardinalitySplit {
        single_count: s_n,
        single_mean_delta: mean(s_sum, s_n),
        multi_count: m_n,
        multi_mean_delta: mean(m_sum, m_n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthDiagnostics {
    pub avg_depth: f64,
    pub frac_at_depth_limit: f64,
    pub no_answer_count: usize,
}

pub fn depth_diagnostics(scores: &[ExampleScore], depth_limit: usize) -> DepthDiagnostics {
    if scores.is_empty() {
        return DepthDiagnostics {
            avg_depth: 0.0,
            frac_at_depth_limit: 0.0,
            no_answer_count: 0,
        };
    }
    let n = scores.len() as f64;
    let total: usize = scores.iter().map(|s| s.depth).sum();
    let at_limit = scores.iter().filter(|s| s.depth == depth_limit).count();
    DepthDiagnostics {
        avg_depth: total as f64 / n,
        frac_at_depth_limit: at_limit as f64 / n,
        no_answer_count: scores.iter().filter(|s| s.no_answer()).count(),
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn normalize_idempotent(s in "\\PC{0,30}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn f1_symmetric_and_bounded(
            a in prop::collection::vec("[a-e]{1,2}", 0..6),
            b in prop::collection::vec("[a-e]{1,2}", 0..6),
        ) {
            let ab = set_f1(&a, &b);
            let ba = set_f1(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn hit_implies_positive_f1(
            pred in prop::collection::vec("[a-e]{1,2}", 0..6),
            gold in prop::collection::vec("[a-e]{1,2}", 1..6),
        ) {
            if hits_at_1(&pred, &gold) == 1 {
                prop_assert!(set_f1(&pred, &gold) > 0.0);
            }
        }
    }
}
