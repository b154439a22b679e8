use std::time::Duration;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RequestTag, Selector, SelectorRequest, SelectorResponse};

/// Samples `min(width, |candidates|)` relations uniformly without
/// replacement and formats them one per line. Never emits STOP.
pub fn random_relation_choice<R: Rng + ?Sized>(
    candidates: &[String],
    width: usize,
    rng: &mut R,
) -> String {
    assert!(!candidates.is_empty(), "random choice needs candidates");
    let k = width.min(candidates.len());
    sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i].as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Uniform-random relation and tail control.
///
/// Every draw is seeded from `(seed, example id, hop, beam, ...)`, so the
/// output does not depend on batching, worker scheduling, or resume points.
#[derive(Debug, Clone)]
pub struct RandomSelector {
    seed: u64,
}

impl RandomSelector {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        let mut h = Fnv64::new();
        h.write(&self.seed.to_le_bytes());
        for p in parts {
            h.write(&(p.len() as u64).to_le_bytes());
            h.write(p);
        }
        ChaCha8Rng::seed_from_u64(h.finish())
    }
}

impl Selector for RandomSelector {
    fn select_batch(&self, requests: &[SelectorRequest]) -> Vec<SelectorResponse> {
        requests
            .iter()
            .map(|req| match (&req.tag, &req.routing) {
                (RequestTag::Routing, Some(view)) if !view.candidates.is_empty() => {
                    let mut rng = self.rng(&[
                        b"relations",
                        req.example_id.as_bytes(),
                        &(view.hop as u64).to_le_bytes(),
                        &(view.beam as u64).to_le_bytes(),
                    ]);
                    let text = random_relation_choice(&view.candidates, view.width, &mut rng);
                    SelectorResponse::answered(req, text, Duration::ZERO)
                }
                _ => SelectorResponse::failed(
                    req,
                    "random backend only answers routing requests".into(),
                    Duration::ZERO,
                ),
            })
            .collect()
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
        if tails.is_empty() {
            return Some(Vec::new());
        }
        let mut rng = self.rng(&[
            b"tails",
            example_id.as_bytes(),
            &(hop as u64).to_le_bytes(),
            &(beam as u64).to_le_bytes(),
            relation.as_bytes(),
        ]);
        let k = width.min(tails.len());
        Some(
            sample(&mut rng, tails.len(), k)
                .into_iter()
                .map(|i| tails[i].clone())
                .collect(),
        )
    }
}

/// FNV-1a, used only to fold seed material into a 64-bit RNG seed.
struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::RoutingView;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn routing(id: &str, hop: usize, candidates: &[&str], width: usize) -> SelectorRequest {
        let mut req = SelectorRequest::new(id, RequestTag::Routing, "prompt".into());
        req.routing = Some(RoutingView {
            hop,
            beam: 0,
            entity: "E".into(),
            candidates: strings(candidates),
            width,
        });
        req
    }

    #[test]
    fn forced_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(random_relation_choice(&strings(&["a"]), 3, &mut rng), "a");
    }

    #[test]
    fn choice_is_subset_without_replacement() {
        let c = strings(&["a", "b", "c"]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let out = random_relation_choice(&c, 3, &mut rng);
        let mut lines: Vec<_> = out.lines().collect();
        lines.sort();
        assert_eq!(lines, vec!["a", "b", "c"]);
    }

    #[test]
    fn same_seed_same_sequence() {
        let c = strings(&["a", "b", "c", "d", "e"]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| random_relation_choice(&c, 2, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn uniform_over_two_candidates() {
        // Binomial(1000, 0.5) has sd ~15.8; +-50 is a >3 sd band.
        let c = strings(&["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = (0..1000)
            .filter(|_| random_relation_choice(&c, 1, &mut rng) == "a")
            .count();
        assert!((450..=550).contains(&a), "a chosen {a} times");
    }

    #[test]
    fn backend_is_deterministic_and_batch_invariant() {
        let sel = RandomSelector::new(42);
        let reqs: Vec<_> = (0..5)
            .map(|h| routing("ex", h, &["a", "b", "c", "d"], 2))
            .collect();
        let batched: Vec<_> = sel
            .select_batch(&reqs)
            .into_iter()
            .map(|r| r.text)
            .collect();
        let single: Vec<_> = reqs
            .iter()
            .map(|r| sel.select_batch(std::slice::from_ref(r)).remove(0).text)
            .collect();
        assert_eq!(batched, single);
        let again: Vec<_> = RandomSelector::new(42)
            .select_batch(&reqs)
            .into_iter()
            .map(|r| r.text)
            .collect();
        assert_eq!(batched, again);
        assert!(batched
            .iter()
            .all(|t| t != "STOP" && t.lines().count() == 2));
    }

    #[test]
    fn tails_sampled_within_available() {
        let sel = RandomSelector::new(7);
        let tails = strings(&["t1", "t2", "t3", "t4", "t5"]);
        let picked = sel.choose_tails("ex", 0, 0, "r", &tails, 3).unwrap();
        assert_eq!(picked.len(), 3);
        assert!(picked.iter().all(|t| tails.contains(t)));
        assert_eq!(
            sel.choose_tails("ex", 0, 0, "r", &tails, 3).unwrap(),
            picked
        );
    }

    #[test]
    fn non_routing_requests_fail() {
        let sel = RandomSelector::new(1);
        let req = SelectorRequest::new("ex", RequestTag::Extraction, "p".into());
        assert!(sel.select_batch(&[req])[0].error.is_some());
    }
}
