//! Exact symbolic paths and the bounded history view shown to the selector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Rendered in place of the history field when no hops are visible.
pub const NO_HISTORY_MARKER: &str = "(no previous hops)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathStatus {
    Open,
    Finished,
}

/// One `(source, relation, target)` step of a path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hop<'a> {
    pub source: &'a str,
    pub relation: &'a str,
    pub target: &'a str,
}

impl fmt::Display for Hop<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} --[{}]--> {}",
            self.source, self.relation, self.target
        )
    }
}

/// Number of most recent hops the routing prompt may show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HistoryBound {
    Last(usize),
    Full,
}

impl HistoryBound {
    /// Hops visible on a path of length `t`.
    pub fn visible(self, t: usize) -> usize {
        match self {
            HistoryBound::Last(k) => k.min(t),
            HistoryBound::Full => t,
        }
    }
}

impl fmt::Display for HistoryBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistoryBound::Last(k) => write!(f, "{k}"),
            HistoryBound::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid history bound {0:?}: expected a non-negative integer or \"full\"")]
pub struct ParseHistoryBoundError(String);

impl FromStr for HistoryBound {
    type Err = ParseHistoryBoundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(HistoryBound::Full);
        }
        s.parse::<usize>()
            .map(HistoryBound::Last)
            .map_err(|_| ParseHistoryBoundError(s.to_owned()))
    }
}

/// A path `e0, r1, e1, ..., rt, et` rooted at a topic entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolicPath {
    start: String,
    hops: Vec<(String, String)>,
    status: PathStatus,
}

impl SymbolicPath {
    /// Zero-hop open path at a topic entity.
    pub fn new(start: impl Into<String>) -> Self {
        Self {
            start: start.into(),
            hops: Vec::new(),
            status: PathStatus::Open,
        }
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn status(&self) -> PathStatus {
        self.status
    }

    pub fn is_open(&self) -> bool {
        self.status == PathStatus::Open
    }

    /// Current frontier entity.
    pub fn tail_entity(&self) -> &str {
        self.hops.last().map_or(&self.start, |(_, e)| e)
    }

    /// Raw `(relation, entity)` extensions in order.
    pub fn extensions(&self) -> &[(String, String)] {
        &self.hops
    }

    /// All hops as `(source, relation, target)`, oldest first.
    pub fn hops(&self) -> Vec<Hop<'_>> {
        let mut source = self.start.as_str();
        self.hops
            .iter()
            .map(|(r, e)| {
                let hop = Hop {
                    source,
                    relation: r,
                    target: e,
                };
                source = e;
                hop
            })
            .collect()
    }

    /// The last `min(K, t)` hops.
    pub fn suffix(&self, bound: HistoryBound) -> Vec<Hop<'_>> {
        let mut hops = self.hops();
        let keep = bound.visible(hops.len());
        hops.split_off(hops.len() - keep)
    }

    /// Returns a new open path one hop longer.
    ///
    /// Panics if the path is already finished.
    pub fn extend(&self, relation: impl Into<String>, entity: impl Into<String>) -> Self {
        assert!(self.is_open(), "cannot extend a finished path");
        let mut next = self.clone();
        next.hops.push((relation.into(), entity.into()));
        next
    }

    pub fn finish(&mut self) {
        self.status = PathStatus::Finished;
    }

    pub fn finished(mut self) -> Self {
        self.finish();
        self
    }

    /// Full path on a single line: `e0 --[r1]--> e1 --[r2]--> e2`.
    pub fn render_chain(&self) -> String {
        let mut out = self.start.clone();
        for (r, e) in &self.hops {
            out.push_str(" --[");
            out.push_str(r);
            out.push_str("]--> ");
            out.push_str(e);
        }
        out
    }
}

/// One line per hop, oldest first, or the no-history marker.
pub fn render_history(hops: &[Hop<'_>]) -> String {
    if hops.is_empty() {
        return NO_HISTORY_MARKER.to_owned();
    }
    hops.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> SymbolicPath {
        SymbolicPath::new("A").extend("r1", "B").extend("r2", "C")
    }

    fn triples(hops: &[Hop<'_>]) -> Vec<(String, String, String)> {
        hops.iter()
            .map(|h| (h.source.into(), h.relation.into(), h.target.into()))
            .collect()
    }

    #[test]
    fn suffix_last_hop() {
        let p = chain();
        assert_eq!(
            triples(&p.suffix(HistoryBound::Last(1))),
            vec![("B".into(), "r2".into(), "C".into())]
        );
    }

    #[test]
    fn suffix_full_and_oversized_k() {
        let p = chain();
        let all = vec![
            ("A".to_string(), "r1".to_string(), "B".to_string()),
            ("B".into(), "r2".into(), "C".into()),
        ];
        assert_eq!(triples(&p.suffix(HistoryBound::Full)), all);
        assert_eq!(triples(&p.suffix(HistoryBound::Last(7))), all);
        assert!(p.suffix(HistoryBound::Last(0)).is_empty());
    }

    #[test]
    fn zero_hop_path() {
        let p = SymbolicPath::new("A");
        assert_eq!(p.tail_entity(), "A");
        assert!(p.suffix(HistoryBound::Full).is_empty());
        assert!(p.suffix(HistoryBound::Last(3)).is_empty());
    }

    #[test]
    fn render_marker_and_lines() {
        assert_eq!(render_history(&[]), "(no previous hops)");
        let p = chain();
        assert_eq!(
            render_history(&p.suffix(HistoryBound::Last(1))),
            "B --[r2]--> C"
        );
        assert_eq!(
            render_history(&p.suffix(HistoryBound::Full)),
            "A --[r1]--> B\nB --[r2]--> C"
        );
    }

    #[test]
    fn extend_is_value_semantics() {
        let p = SymbolicPath::new("A");
        let q = p.extend("r1", "B");
        assert_eq!(p.len(), 0);
        assert_eq!(q.len(), 1);
        assert!(q.is_open());
        let r = q.extend("r2", "C");
        assert_eq!(r.len(), 2);
        assert_eq!(r.tail_entity(), "C");
    }

    #[test]
    #[should_panic(expected = "finished")]
    fn extend_finished_panics() {
        SymbolicPath::new("A").finished().extend("r", "B");
    }

    #[test]
    fn history_bound_parsing() {
        assert_eq!("full".parse::<HistoryBound>().unwrap(), HistoryBound::Full);
        assert_eq!("2".parse::<HistoryBound>().unwrap(), HistoryBound::Last(2));
        assert!("-1".parse::<HistoryBound>().is_err());
        assert_eq!(HistoryBound::Full.to_string(), "full");
    }

    #[test]
    fn chain_rendering() {
        assert_eq!(chain().render_chain(), "A --[r1]--> B --[r2]--> C");
        assert_eq!(SymbolicPath::new("A").render_chain(), "A");
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_path() -> impl Strategy<Value = SymbolicPath> {
        prop::collection::vec(("[a-c]", "[A-E]"), 0..8).prop_map(|ext| {
            ext.into_iter()
                .fold(SymbolicPath::new("S"), |p, (r, e)| p.extend(r, e))
        })
    }

    proptest! {
        #[test]
        fn suffix_length_is_min_k_t(p in arb_path(), k in 0usize..10) {
            prop_assert_eq!(p.suffix(HistoryBound::Last(k)).len(), k.min(p.len()));
        }

        #[test]
        fn full_suffix_reconstructs_path(p in arb_path()) {
            let hops = p.suffix(HistoryBound::Full);
            let rebuilt: Vec<(String, String)> = hops
                .iter()
                .map(|h| (h.relation.to_owned(), h.target.to_owned()))
                .collect();
            prop_assert_eq!(rebuilt.as_slice(), p.extensions());
            if let Some(first) = hops.first() {
                prop_assert_eq!(first.source, p.start());
            }
        }

        #[test]
        fn shorter_history_is_line_suffix(p in arb_path(), a in 1usize..8, b in 1usize..8) {
            let (k1, k2) = (a.min(b).min(p.len()), a.max(b).min(p.len()));
            prop_assume!(k1 >= 1);
            let short = render_history(&p.suffix(HistoryBound::Last(k1)));
            let long = render_history(&p.suffix(HistoryBound::Last(k2)));
            let short_lines: Vec<_> = short.lines().collect();
            let long_lines: Vec<_> = long.lines().collect();
            prop_assert!(long_lines.ends_with(&short_lines));
        }
    }
}
