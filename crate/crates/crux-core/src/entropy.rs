//! Shannon entropy over cluster distributions and the contextual entropy
//! reduction. All values are in nats.

use crate::clustering::ClusterDistribution;
use crate::error::{CruxError, Result};

/// Shannon entropy -sum(p ln p), with 0 ln 0 := 0. Non-negative, at most
/// ln(k) for k clusters.
pub fn entropy(dist: &ClusterDistribution) -> Result<f64> {
    let probs = dist.probabilities();
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CruxError::InvalidDistribution(format!(
            "probabilities sum to {sum}"
        )));
    }
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h.max(0.0))
}

/// Entropy reduction H(context-free) - H(with-context). Positive when the
/// context concentrates the answer distribution; may be negative.
pub fn entropy_reduction(
    dist_context_free: &ClusterDistribution,
    dist_with_context: &ClusterDistribution,
) -> Result<f64> {
    Ok(entropy(dist_context_free)? - entropy(dist_with_context)?)
}
