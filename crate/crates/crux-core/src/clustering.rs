//! Semantic clustering of sampled answers via bidirectional entailment.
//!
//! The greedy single pass processes answers in generation order and assigns
//! each to the first existing cluster whose representative (first member) it
//! bidirectionally entails, else opens a new cluster. Generation order is the
//! canonical order; the order dependence of the greedy pass is accepted.

use serde::Serialize;

use crate::backends::EntailmentBackend;
use crate::error::{CruxError, Result};
use crate::pipeline::normalize_answer;

/// Disjoint clusters over answer indices; their union covers all indices
/// exactly once and no cluster is empty. Each cluster's first member is its
/// representative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub clusters: Vec<Vec<usize>>,
}

impl Partition {
    /// Number of clusters.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.len()).collect()
    }

    /// Index of each cluster's representative (first member).
    pub fn representatives(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c[0]).collect()
    }

    /// Checks the disjoint-cover invariant against `total` items.
    pub fn validate(&self, total: usize) -> Result<()> {
        let mut seen = vec![false; total];
        let mut count = 0usize;
        for cluster in &self.clusters {
            if cluster.is_empty() {
                return Err(CruxError::ConfigInvalid("partition has an empty cluster".into()));
            }
            for &idx in cluster {
                if idx >= total || seen[idx] {
                    return Err(CruxError::ConfigInvalid(format!(
                        "partition index {idx} out of range or duplicated"
                    )));
                }
                seen[idx] = true;
                count += 1;
            }
        }
        if count != total {
            return Err(CruxError::ConfigInvalid(format!(
                "partition covers {count} of {total} items"
            )));
        }
        Ok(())
    }
}

/// Empirical distribution over clusters: P(k) = |k| / total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDistribution {
    probabilities: Vec<f64>,
}

impl ClusterDistribution {
    /// Builds a distribution from explicit probabilities, enforcing that all
    /// are positive and sum to 1 within 1e-9.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(CruxError::InvalidDistribution("no clusters".into()));
        }
        for &p in &probabilities {
            if !p.is_finite() || p <= 0.0 {
                return Err(CruxError::InvalidDistribution(format!(
                    "probability {p} must be in (0, 1]"
                )));
            }
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CruxError::InvalidDistribution(format!(
                "probabilities sum to {sum}, expected 1 +/- 1e-9"
            )));
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// True iff both directions meet the entailment threshold. Texts should be
/// contextualized ("Q: <query> A: <answer>") when a query is available.
pub fn bidirectional_entails(
    a: &str,
    b: &str,
    nli: &dyn EntailmentBackend,
    threshold: f64,
) -> Result<bool> {
    let forward = nli.entailment_probs(a, b)?;
    if forward.entail < threshold {
        return Ok(false);
    }
    let backward = nli.entailment_probs(b, a)?;
    Ok(backward.entail >= threshold)
}

/// Greedy single-pass clustering in generation order.
pub fn cluster_answers(
    texts: &[String],
    nli: &dyn EntailmentBackend,
    threshold: f64,
) -> Result<Partition> {
    if texts.is_empty() {
        return Err(CruxError::ConfigInvalid("cannot cluster an empty answer set".into()));
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (idx, text) in texts.iter().enumerate() {
        let mut assigned = false;
        for cluster in clusters.iter_mut() {
            let representative = &texts[cluster[0]];
            if bidirectional_entails(text, representative, nli, threshold)? {
                cluster.push(idx);
                assigned = true;
                break;
            }
        }
        if !assigned {
            clusters.push(vec![idx]);
        }
    }
    Ok(Partition { clusters })
}

/// Clustering fallback used when semantic clustering is disabled: two answers
/// share a cluster iff their normalized texts are byte-identical.
pub fn exact_match_partition(texts: &[String]) -> Partition {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    for (idx, text) in texts.iter().enumerate() {
        let key = normalize_answer(text);
        match keys.iter().position(|k| *k == key) {
            Some(c) => clusters[c].push(idx),
            None => {
                keys.push(key);
                clusters.push(vec![idx]);
            }
        }
    }
    Partition { clusters }
}

/// Empirical cluster probabilities |k| / total.
pub fn cluster_distribution(partition: &Partition, total: usize) -> Result<ClusterDistribution> {
    if total == 0 {
        return Err(CruxError::ZeroTotal);
    }
    let clustered: usize = partition.sizes().iter().sum();
    if clustered != total {
        return Err(CruxError::InvalidDistribution(format!(
            "partition covers {clustered} answers, expected {total}"
        )));
    }
    ClusterDistribution::new(
        partition
            .sizes()
            .iter()
            .map(|&s| s as f64 / total as f64)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{EqualityNli, TableNli};
    use proptest::prelude::*;

    fn texts(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bidirectional_requires_both_directions() {
        let nli = EqualityNli::new();
        assert!(bidirectional_entails("pacific", "Pacific", &nli, 0.5).unwrap());
        assert!(!bidirectional_entails("pacific", "atlantic", &nli, 0.5).unwrap());

        // Forward passes, backward fails.
        let nli = TableNli::new()
            .with_entry("a", "b", 0.9, 0.1, 0.0)
            .with_entry("b", "a", 0.4, 0.6, 0.0);
        assert!(!bidirectional_entails("a", "b", &nli, 0.5).unwrap());
    }

    #[test]
    fn greedy_pass_matches_hand_trace() {
        let nli = EqualityNli::new();
        let p = cluster_answers(&texts(&["A", "a", "B"]), &nli, 0.5).unwrap();
        assert_eq!(p.clusters, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn single_answer_is_one_cluster() {
        let nli = EqualityNli::new();
        let p = cluster_answers(&texts(&["A"]), &nli, 0.5).unwrap();
        assert_eq!(p.clusters, vec![vec![0]]);
    }

    #[test]
    fn identical_answers_collapse_to_one_cluster() {
        let nli = EqualityNli::new();
        let p = cluster_answers(&vec!["same".to_string(); 10], &nli, 0.5).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.clusters[0].len(), 10);
    }

    #[test]
    fn threshold_one_makes_singletons_under_sub_one_probs() {
        // All distinct pairs get entail < 1 from this table; threshold 1.0
        // then rejects every merge.
        let nli = TableNli::new()
            .with_entry("x", "y", 0.99, 0.01, 0.0)
            .with_entry("y", "x", 0.99, 0.01, 0.0);
        let p = cluster_answers(&texts(&["x", "y"]), &nli, 1.0).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn empty_input_is_rejected() {
        let nli = EqualityNli::new();
        assert!(cluster_answers(&[], &nli, 0.5).is_err());
    }

    #[test]
    fn distribution_from_sizes() {
        let p = Partition {
            clusters: vec![(0..7).collect(), (7..9).collect(), vec![9]],
        };
        let d = cluster_distribution(&p, 10).unwrap();
        assert_eq!(d.probabilities(), &[0.7, 0.2, 0.1]);

        let single = Partition {
            clusters: vec![(0..4).collect()],
        };
        assert_eq!(cluster_distribution(&single, 4).unwrap().probabilities(), &[1.0]);

        let halves = Partition {
            clusters: vec![(0..5).collect(), (5..10).collect()],
        };
        assert_eq!(
            cluster_distribution(&halves, 10).unwrap().probabilities(),
            &[0.5, 0.5]
        );
    }

    #[test]
    fn distribution_rejects_zero_total() {
        let p = Partition { clusters: vec![] };
        match cluster_distribution(&p, 0) {
            Err(CruxError::ZeroTotal) => {}
            other => panic!("expected ZeroTotal, got {other:?}"),
        }
    }

    #[test]
    fn exact_match_groups_by_normalized_text() {
        let p = exact_match_partition(&texts(&["The Pacific.", " the pacific", "Atlantic"]));
        assert_eq!(p.clusters, vec![vec![0, 1], vec![2]]);
    }

    proptest! {
        // Partition validity (disjoint cover) under random mock entailment
        // tables, driven by random alphabet answers.
        #[test]
        fn partition_is_disjoint_cover(answers in prop::collection::vec("[abc]{1,2}", 1..12)) {
            let nli = EqualityNli::new();
            let items: Vec<String> = answers;
            let p = cluster_answers(&items, &nli, 0.5).unwrap();
            p.validate(items.len()).unwrap();
            prop_assert!(!p.is_empty() && p.len() <= items.len());
        }

        // With the equality mock, clustering equals grouping by normalized
        // string (oracle equivalence).
        #[test]
        fn equality_mock_equals_group_by(answers in prop::collection::vec("[ABab]{1,3}", 1..12)) {
            let nli = EqualityNli::new();
            let items: Vec<String> = answers;
            let clustered = cluster_answers(&items, &nli, 0.5).unwrap();
            let grouped = exact_match_partition(&items);
            prop_assert_eq!(clustered, grouped);
        }
    }
}
