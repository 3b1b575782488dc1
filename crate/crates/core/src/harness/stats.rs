//! Scoring: final scores, normalisation, interquartile mean and stratified
//! bootstrap confidence intervals.

use std::collections::BTreeMap;

use rand::Rng;

use crate::numerics::RngStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("no baseline score for {0}")]
    MissingBaseline(String),
    #[error("baseline {baseline} does not exceed the floor {floor}")]
    DegenerateBaseline { baseline: f64, floor: f64 },
}

/// Mean of the last `⌈0.1·n⌉` evaluation means.
pub fn final_score(eval_means: &[f64]) -> Result<f64, StatsError> {
    if eval_means.len() < 10 {
        return Err(StatsError::TooFew { needed: 10, got: eval_means.len() });
    }
    let k = eval_means.len().div_ceil(10);
    let tail = &eval_means[eval_means.len() - k..];
    Ok(tail.iter().sum::<f64>() / k as f64)
}

/// `score / baseline`.
pub fn normalize_scores(scores: &[f64], baseline: f64) -> Result<Vec<f64>, StatsError> {
    normalize_anchored(scores, baseline, 0.0)
}

/// `(score − floor) / (baseline − floor)`: 0 at the floor, 1 at the
/// baseline. Needed when returns are negative.
pub fn normalize_anchored(scores: &[f64], baseline: f64, floor: f64) -> Result<Vec<f64>, StatsError> {
    if !(baseline > floor) {
        return Err(StatsError::DegenerateBaseline { baseline, floor });
    }
    Ok(scores.iter().map(|s| (s - floor) / (baseline - floor)).collect())
}

/// Symmetric 25% trimmed mean with fractional endpoint weights.
///
/// Sorted value `x_(i)` covers the interval `[i, i+1)` of `[0, n)`; the mean
/// is taken over the part of `[n/4, 3n/4)` each value covers.
pub fn iqm(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(iqm_sorted(&sorted))
}

fn iqm_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let (lo, hi) = (0.25 * n, 0.75 * n);
    let first = lo.floor() as usize;
    let last = (hi.ceil() as usize).min(sorted.len());
    let mut total = 0.0;
    for (i, &x) in sorted.iter().enumerate().take(last).skip(first) {
        let weight = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
        total += weight * x;
    }
    total / (hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// IQM of all values with a percentile-bootstrap interval. Each resample
/// draws, within every stratum, as many values as the stratum holds.
///
/// The interval is widened if needed so that it contains the point estimate.
pub fn iqm_with_ci(strata: &BTreeMap<String, Vec<f64>>, resamples: usize, confidence: f64, seed: u64) -> Result<IntervalEstimate, StatsError> {
    let pooled: Vec<f64> = strata.values().flatten().copied().collect();
    let point = iqm(&pooled)?;
    let mut rng = RngStream::new(seed, "bootstrap");
    let mut stats = Vec::with_capacity(resamples);
    let mut sample = Vec::with_capacity(pooled.len());
    for _ in 0..resamples {
        sample.clear();
        for values in strata.values() {
            for _ in 0..values.len() {
                sample.push(values[rng.random_range(0..values.len())]);
            }
        }
        sample.sort_by(f64::total_cmp);
        stats.push(iqm_sorted(&sample));
    }
    if stats.is_empty() {
        return Ok(IntervalEstimate { point, lower: point, upper: point });
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    Ok(IntervalEstimate {
        point,
        lower: quantile(&stats, alpha).min(point),
        upper: quantile(&stats, 1.0 - alpha).max(point),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_score_examples() {
        let mut evals = vec![0.0; 45];
        evals.extend([100.0; 5]);
        assert_eq!(final_score(&evals).unwrap(), 100.0);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(final_score(&ten).unwrap(), 10.0);
        let twenty: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(final_score(&twenty).unwrap(), 19.5);
        assert!(final_score(&[1.0; 9]).is_err());
    }

    #[test]
    fn normalisation() {
        assert_eq!(normalize_scores(&[100.0, 0.0, 50.0, 150.0], 100.0).unwrap(), vec![1.0, 0.0, 0.5, 1.5]);
        assert_eq!(normalize_anchored(&[-500.0, -100.0], -100.0, -500.0).unwrap(), vec![0.0, 1.0]);
        assert!(normalize_scores(&[1.0], 0.0).is_err());
    }

    #[test]
    fn iqm_examples() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(iqm(&v).unwrap(), 4.5);
        assert_eq!(iqm(&[3.0; 4]).unwrap(), 3.0);
        assert_eq!(iqm(&[0.0, 1.0, 2.0, 3.0]).unwrap(), 1.5);
        assert_eq!(iqm(&[7.0]).unwrap(), 7.0);
        assert!(iqm(&[]).is_err());
    }

    #[test]
    fn iqm_fractional_weights() {
        // n = 5: keep [1.25, 3.75) → 0.75·x₁ + x₂ + 0.75·x₃ over 2.5.
        let got = iqm(&[10.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((got - (0.75 * 2.0 + 3.0 + 0.75 * 4.0) / 2.5).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_contains_point() {
        let mut strata = BTreeMap::new();
        strata.insert("a".to_string(), vec![0.9, 1.1, 1.0, 0.95, 1.05]);
        strata.insert("b".to_string(), vec![0.5, 0.7, 0.6]);
        let ci = iqm_with_ci(&strata, BOOTSTRAP_RESAMPLES, 0.95, 0).unwrap();
        assert!(ci.lower <= ci.point && ci.point <= ci.upper);
        assert!(ci.upper - ci.lower < 0.6);
        assert_eq!(ci, iqm_with_ci(&strata, BOOTSTRAP_RESAMPLES, 0.95, 0).unwrap());
    }
}
