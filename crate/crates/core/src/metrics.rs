//! pass@k, pass rate and throughput aggregation.
//!
//! pass@k uses the unbiased estimator `1 - C(n-c, k) / C(n, k)` evaluated as a
//! running product so no binomial coefficient is ever materialised.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("k exceeds answers_per_task (k={k}, n={n})")]
    KExceedsSamples { k: u32, n: u32 },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid sample for {task_id}: c={c} > n={n}")]
    InvalidSample { task_id: String, n: u32, c: u32 },
    #[error("no samples to aggregate")]
    Empty,
    #[error("pass rate needs a positive total")]
    ZeroTotal,
    #[error("passed ({passed}) exceeds total ({total})")]
    PassedExceedsTotal { passed: u64, total: u64 },
    #[error("zero elapsed time with {tokens} completion tokens")]
    ZeroDuration { tokens: u64 },
}

/// Per-task sample counts: `n` answers generated, `c` of them passing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub task_id: String,
    pub n: u32,
    pub c: u32,
}

impl TaskSample {
    pub fn new(task_id: impl Into<String>, n: u32, c: u32) -> Result<Self, MetricsError> {
        let task_id = task_id.into();
        if n == 0 || c > n {
            return Err(MetricsError::InvalidSample { task_id, n, c });
        }
        Ok(Self { task_id, n, c })
    }
}

/// Unbiased pass@k for a single task.
pub fn pass_at_k(sample: &TaskSample, k: u32) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let (n, c) = (sample.n, sample.c);
    if c > n {
        return Err(MetricsError::InvalidSample {
            task_id: sample.task_id.clone(),
            n,
            c,
        });
    }
    if k > n {
        return Err(MetricsError::KExceedsSamples { k, n });
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
    let miss = ((n - c + 1)..=n).fold(1.0_f64, |acc, i| acc * (1.0 - k as f64 / i as f64));
    Ok(1.0 - miss)
}

/// Mean of per-task pass@k over a task set.
pub fn aggregate_pass_at_k(samples: &[TaskSample], k: u32) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for sample in samples {
        total += pass_at_k(sample, k)?;
    }
    Ok(total / samples.len() as f64)
}

pub fn pass_rate(passed: u64, total: u64) -> Result<f64, MetricsError> {
    if total == 0 {
        return Err(MetricsError::ZeroTotal);
    }
    if passed > total {
        return Err(MetricsError::PassedExceedsTotal { passed, total });
    }
    Ok(passed as f64 / total as f64)
}

/// Completion tokens per second.
pub fn throughput(completion_tokens: u64, elapsed: Duration) -> Result<f64, MetricsError> {
    let secs = elapsed.as_secs_f64();
    if secs <= 0.0 {
        if completion_tokens == 0 {
            return Ok(0.0);
        }
        return Err(MetricsError::ZeroDuration {
            tokens: completion_tokens,
        });
    }
    Ok(completion_tokens as f64 / secs)
}

/// Formats a fraction as a percentage with one decimal, e.g. `0.562 -> "56.2%"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Keyed by k; only k <= answers_per_task appear.
    pub pass_at_k: BTreeMap<u32, f64>,
    pub pass_rate: f64,
    pub tokens_per_second: f64,
    pub total_tokens: u64,
    pub tasks: u32,
    pub skipped: u32,
}

/// Inputs needed to build a [`MetricsSummary`] for one (model, dataset) pair.
#[derive(Debug, Clone, Default)]
pub struct SummaryInput {
    pub samples: Vec<TaskSample>,
    /// Evaluated answers (after chain resolution) and how many passed.
    pub answers_total: u64,
    pub answers_passed: u64,
    pub completion_tokens: u64,
    pub elapsed: Duration,
    pub skipped: u32,
}

/// k values reported by default: every k up to 10, then 100, restricted to
/// `<= n`, plus `n` itself.
pub fn default_ks(answers_per_task: u32) -> Vec<u32> {
    let mut ks: Vec<u32> = (1..=10).chain([100]).filter(|k| *k <= answers_per_task).collect();
    if answers_per_task >= 1 && !ks.contains(&answers_per_task) {
        ks.push(answers_per_task);
    }
    ks.sort_unstable();
    ks
}

pub fn summarize(input: &SummaryInput, ks: &[u32]) -> Result<MetricsSummary, MetricsError> {
    let mut pass_at = BTreeMap::new();
    if !input.samples.is_empty() {
        for &k in ks {
            pass_at.insert(k, aggregate_pass_at_k(&input.samples, k)?);
        }
    }
    let rate = if input.answers_total == 0 {
        0.0
    } else {
        pass_rate(input.answers_passed, input.answers_total)?
    };
    Ok(MetricsSummary {
        pass_at_k: pass_at,
        pass_rate: rate,
        tokens_per_second: throughput(input.completion_tokens, input.elapsed)?,
        total_tokens: input.completion_tokens,
        tasks: input.samples.len() as u32,
        skipped: input.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over all k-subsets of n samples where the first c pass.
    fn enumerate(n: u32, c: u32, k: u32) -> f64 {
        let mut hit = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() != k {
                continue;
            }
            total += 1;
            if mask & ((1 << c) - 1) != 0 {
                hit += 1;
            }
        }
        hit as f64 / total as f64
    }

    fn s(n: u32, c: u32) -> TaskSample {
        TaskSample::new("t", n, c).unwrap()
    }

    #[test]
    fn anchors() {
        assert_eq!(pass_at_k(&s(1, 1), 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(&s(10, 0), 10).unwrap(), 0.0);
        assert!((pass_at_k(&s(5, 2), 2).unwrap() - 0.7).abs() < 1e-12);
        assert!((enumerate(5, 2, 2) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn k_greater_than_n_is_rejected() {
        assert_eq!(
            pass_at_k(&s(1, 1), 10),
            Err(MetricsError::KExceedsSamples { k: 10, n: 1 })
        );
        assert_eq!(pass_at_k(&s(1, 1), 0), Err(MetricsError::ZeroK));
    }

    #[test]
    fn matches_enumeration_small_n() {
        for n in 1..=8 {
            for c in 0..=n {
                for k in 1..=n {
                    let got = pass_at_k(&s(n, c), k).unwrap();
                    assert!((got - enumerate(n, c, k)).abs() < 1e-12, "n={n} c={c} k={k}");
                }
            }
        }
    }

    #[test]
    fn large_n_does_not_overflow() {
        let v = pass_at_k(&s(200, 3), 100).unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
    }

    #[test]
    fn aggregate_mean() {
        let v = aggregate_pass_at_k(&[s(1, 1), s(1, 0)], 1).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(aggregate_pass_at_k(&[], 1), Err(MetricsError::Empty));
        assert_eq!(aggregate_pass_at_k(&[s(3, 3), s(3, 3)], 2).unwrap(), 1.0);
    }

    #[test]
    fn pass_rate_cases() {
        assert_eq!(format_percent(pass_rate(68, 121).unwrap()), "56.2%");
        assert_eq!(pass_rate(0, 10).unwrap(), 0.0);
        assert_eq!(pass_rate(10, 10).unwrap(), 1.0);
        assert_eq!(pass_rate(1, 0), Err(MetricsError::ZeroTotal));
    }

    #[test]
    fn throughput_cases() {
        assert_eq!(throughput(120, Duration::from_secs(2)).unwrap(), 60.0);
        assert_eq!(throughput(0, Duration::from_secs(1)).unwrap(), 0.0);
        assert!(throughput(5, Duration::ZERO).is_err());
        // aggregate as total tokens over total time, not mean of rates
        let total = throughput(100 + 511, Duration::from_secs_f64(1.0 + 9.0)).unwrap();
        assert!((total - 61.1).abs() < 1e-9);
    }

    #[test]
    fn default_ks_respect_n() {
        assert_eq!(default_ks(1), vec![1]);
        assert_eq!(default_ks(5), vec![1, 2, 3, 4, 5]);
        assert_eq!(default_ks(10), (1..=10).collect::<Vec<_>>());
        assert_eq!(default_ks(20), vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20]);
        assert_eq!(default_ks(200), vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 100, 200]);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(n in 1u32..60, c_frac in 0.0f64..=1.0, k_frac in 0.0f64..=1.0) {
            let c = ((n as f64) * c_frac).floor() as u32;
            let k = 1 + ((n - 1) as f64 * k_frac).floor() as u32;
            let v = pass_at_k(&s(n, c), k).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if k < n {
                prop_assert!(pass_at_k(&s(n, c), k + 1).unwrap() + 1e-12 >= v);
            }
            if c < n {
                prop_assert!(pass_at_k(&s(n, c + 1), k).unwrap() + 1e-12 >= v);
            }
        }

        #[test]
        fn pass_at_1_is_fraction(n in 1u32..100, c_frac in 0.0f64..=1.0) {
            let c = ((n as f64) * c_frac).floor() as u32;
            let v = pass_at_k(&s(n, c), 1).unwrap();
            prop_assert!((v - c as f64 / n as f64).abs() < 1e-12);
        }
    }
}
