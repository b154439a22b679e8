//! Bootstrap intervals, paired comparisons and the exact sign test.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::ExampleScore;
use crate::Error;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Recorded in summaries next to the seed.
pub const BOOTSTRAP_RNG: &str = "chacha8 (stream = resample index)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl ConfidenceInterval {
    /// Half-width of the wider side around the mean.
    pub fn half_width(&self) -> f64 {
        (self.mean - self.low).max(self.high - self.mean)
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Percentile bootstrap interval for the mean.
///
/// Resample `r` draws its indices from a ChaCha8 stream `r` keyed by `seed`,
/// so results do not depend on evaluation order.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> ConfidenceInterval {
    assert!(!values.is_empty(), "bootstrap needs at least one value");
    assert!(resamples >= 1, "bootstrap needs at least one resample");
    assert!(level > 0.0 && level < 1.0, "level must be in (0, 1)");
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return ConfidenceInterval {
            mean,
            low: values[0],
            high: values[0],
        };
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let sum: f64 = (0..n).map(|_| values[rng.gen_range(0..n)]).sum();
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    ConfidenceInterval {
        mean,
        low: quantile_sorted(&means, alpha),
        high: quantile_sorted(&means, 1.0 - alpha),
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Two-sided exact binomial sign test on non-tied counts, null p = 0.5.
///
/// Computed as `min(1, 2 * P(X <= min(wins, losses)))`; no non-tied
/// examples gives 1.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let mut ln_choose = 0.0f64;
    let mut tail = 0.0f64;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_choose - ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n: usize,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub mean_delta_f1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sign_p: f64,
}

/// Aligns two score lists by example id. Fails unless the id sets match.
pub fn align_by_id<'a>(
    a: &'a [ExampleScore],
    b: &'a [ExampleScore],
) -> Result<Vec<(&'a ExampleScore, &'a ExampleScore)>, Error> {
    let by_id: HashMap<&str, &ExampleScore> =
        b.iter().map(|s| (s.example_id.as_str(), s)).collect();
    let ids_a: HashSet<&str> = a.iter().map(|s| s.example_id.as_str()).collect();
    let mut only_a: Vec<String> = ids_a
        .iter()
        .filter(|id| !by_id.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    let mut only_b: Vec<String> = by_id
        .keys()
        .filter(|id| !ids_a.contains(*id))
        .map(|s| s.to_string())
        .collect();
    if !only_a.is_empty() || !only_b.is_empty() || ids_a.len() != a.len() || by_id.len() != b.len()
    {
        only_a.sort();
        only_b.sort();
        return Err(Error::IdMismatch { only_a, only_b });
    }
    Ok(a.iter()
        .map(|s| (s, by_id[s.example_id.as_str()]))
        .collect())
}

/// Win/loss/tie counts, paired bootstrap CI of the mean F1 delta (a - b),
/// and the sign test over non-tied examples.
pub fn paired_comparison(
    a: &[ExampleScore],
    b: &[ExampleScore],
    resamples: usize,
    seed: u64,
) -> Result<PairedComparison, Error> {
    let pairs = align_by_id(a, b)?;
    let deltas: Vec<f64> = pairs.iter().map(|(x, y)| x.f1 - y.f1).collect();
    let wins = deltas.iter().filter(|d| **d > 0.0).count();
    let losses = deltas.iter().filter(|d| **d < 0.0).count();
    let ties = deltas.len() - wins - losses;
    let (mean, low, high) = if deltas.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let ci = bootstrap_ci(&deltas, resamples, DEFAULT_LEVEL, seed);
        (ci.mean, ci.low, ci.high)
    };
    Ok(PairedComparison {
        n: deltas.len(),
        wins,
        losses,
        ties,
        mean_delta_f1: mean,
        ci_low: low,
        ci_high: high,
        sign_p: sign_test(wins, losses),
    })
}
