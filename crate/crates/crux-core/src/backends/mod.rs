//! Pluggable answer-generation and NLI-entailment providers.
//!
//! Each capability has an HTTP implementation and deterministic in-process
//! mocks. Backends must be safe for concurrent calls; HTTP backends share a
//! bounded-parallelism limiter capping simultaneous requests.

pub mod http;
pub mod mock;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::error::{CruxError, Result};
use crate::types::DecodingParams;

/// Three-class NLI output. Probabilities are non-negative and sum to 1
/// within 1e-6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NliResult {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

impl NliResult {
    pub fn new(entail: f64, neutral: f64, contradict: f64) -> Result<Self> {
        const SLACK: f64 = 1e-9;
        for (name, p) in [("entail", entail), ("neutral", neutral), ("contradict", contradict)] {
            if !p.is_finite() || !(-SLACK..=1.0 + SLACK).contains(&p) {
                return Err(CruxError::MalformedResponse(format!(
                    "NLI probability '{name}'={p} outside [0, 1]"
                )));
            }
        }
        let sum = entail + neutral + contradict;
        if (sum - 1.0).abs() > 1e-6 {
            return Err(CruxError::MalformedResponse(format!(
                "NLI probabilities sum to {sum}, expected 1 +/- 1e-6"
            )));
        }
        Ok(Self {
            entail: entail.clamp(0.0, 1.0),
            neutral: neutral.clamp(0.0, 1.0),
            contradict: contradict.clamp(0.0, 1.0),
        })
    }
}

/// Samples answers from a language model.
pub trait GenerationBackend: Send + Sync {
    /// Returns exactly `n` answers in generation order, each with surrounding
    /// whitespace stripped. Never silently truncates.
    fn sample_answers(&self, prompt: &str, n: usize, params: &DecodingParams)
        -> Result<Vec<String>>;

    /// Stable identity string used in cache keys and run manifests.
    fn identity(&self) -> String;
}

/// Classifies premise/hypothesis pairs into entailment classes.
pub trait EntailmentBackend: Send + Sync {
    fn entailment_probs(&self, premise: &str, hypothesis: &str) -> Result<NliResult>;

    fn identity(&self) -> String;
}

pub(crate) fn check_sample_args(prompt: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(CruxError::ConfigInvalid("sample count n must be >= 1".into()));
    }
    if prompt.is_empty() {
        return Err(CruxError::ConfigInvalid("prompt must be non-empty".into()));
    }
    Ok(())
}

pub(crate) fn check_nli_args(premise: &str, hypothesis: &str) -> Result<()> {
    if premise.is_empty() || hypothesis.is_empty() {
        return Err(CruxError::ConfigInvalid(
            "NLI premise and hypothesis must be non-empty".into(),
        ));
    }
    Ok(())
}

/// Transient-failure retry policy for HTTP backends.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Retries after the initial attempt.
    pub retries: u32,
    /// Backoff before the first retry; doubles on each subsequent one.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Counting semaphore bounding in-flight backend requests.
pub struct InflightLimiter {
    max: usize,
    inflight: Mutex<usize>,
    released: Condvar,
}

impl InflightLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            inflight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InflightGuard<'_> {
        let mut count = self.inflight.lock().unwrap();
        while *count >= self.max {
            count = self.released.wait(count).unwrap();
        }
        *count += 1;
        InflightGuard { limiter: self }
    }
}

pub struct InflightGuard<'a> {
    limiter: &'a InflightLimiter,
}

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.limiter.inflight.lock().unwrap();
        *count -= 1;
        self.limiter.released.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nli_result_accepts_valid_and_rejects_bad_sums() {
        let r = NliResult::new(0.6, 0.3, 0.1).unwrap();
        assert_eq!(r.entail, 0.6);
        assert!(NliResult::new(0.6, 0.3, 0.3).is_err());
        assert!(NliResult::new(-0.1, 0.6, 0.5).is_err());
        assert!(NliResult::new(f64::NAN, 0.5, 0.5).is_err());
    }

    #[test]
    fn limiter_caps_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;

        let limiter = Arc::new(InflightLimiter::new(2));
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));

        let mut handles = Vec::new();
        for _ in 0..8 {
            let limiter = Arc::clone(&limiter);
            let current = Arc::clone(&current);
            let peak = Arc::clone(&peak);
            handles.push(std::thread::spawn(move || {
                let _guard = limiter.acquire();
                let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                current.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
