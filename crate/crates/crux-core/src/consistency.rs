//! Pooled-answer similarity graph and the unified consistency measures.
//!
//! Semantic similarity between two answers is the mean of the two directed
//! entailment probabilities; distance is 1 - similarity, so both consistency
//! variants land in [-1, 0] and are maximal (0) exactly when every pairwise
//! similarity is 1.

use serde::Serialize;

use crate::backends::EntailmentBackend;
use crate::error::{CruxError, Result};

/// Symmetric pairwise similarity over a set of answers: entries in [0, 1],
/// diagonal all 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    m: usize,
    /// Row-major m*m entries.
    w: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(m: usize, w: Vec<f64>) -> Result<Self> {
        if m == 0 || w.len() != m * m {
            return Err(CruxError::MatrixInvalid(format!(
                "expected {m}x{m} entries, got {}",
                w.len()
            )));
        }
        for i in 0..m {
            if (w[i * m + i] - 1.0).abs() > 1e-9 {
                return Err(CruxError::MatrixInvalid(format!(
                    "diagonal entry ({i},{i}) = {} != 1",
                    w[i * m + i]
                )));
            }
            for j in 0..m {
                let s = w[i * m + j];
                if !s.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&s) {
                    return Err(CruxError::MatrixInvalid(format!(
                        "entry ({i},{j}) = {s} outside [0, 1]"
                    )));
                }
                if (s - w[j * m + i]).abs() > 1e-9 {
                    return Err(CruxError::MatrixInvalid(format!(
                        "asymmetric at ({i},{j}): {s} vs {}",
                        w[j * m + i]
                    )));
                }
            }
        }
        Ok(Self { m, w })
    }

    /// All-ones matrix (every answer identical).
    pub fn all_ones(m: usize) -> Self {
        Self { m, w: vec![1.0; m * m] }
    }

    /// Identity matrix (every answer unrelated to every other).
    pub fn identity(m: usize) -> Self {
        let mut w = vec![0.0; m * m];
        for i in 0..m {
            w[i * m + i] = 1.0;
        }
        Self { m, w }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.m + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.w
    }

    /// Top-left k x k block (e.g. the with-context sub-pool of a pooled
    /// matrix).
    pub fn principal_submatrix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.m {
            return Err(CruxError::MatrixInvalid(format!(
                "submatrix size {k} out of range for m={}",
                self.m
            )));
        }
        let mut w = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                w.push(self.get(i, j));
            }
        }
        Ok(Self { m: k, w })
    }

    /// Row sums (graph degrees).
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.get(i, j)).sum())
            .collect()
    }
}

/// Semantic similarity: mean of the two directed entailment probabilities.
/// Byte-identical texts are 1 by definition, without a backend call.
pub fn similarity(a: &str, b: &str, nli: &dyn EntailmentBackend) -> Result<f64> {
    if a == b {
        return Ok(1.0);
    }
    let forward = nli.entailment_probs(a, b)?;
    let backward = nli.entailment_probs(b, a)?;
    Ok((forward.entail + backward.entail) / 2.0)
}

/// Distance d = 1 - s for s in [0, 1].
pub fn distance(s: f64) -> Result<f64> {
    if !s.is_finite() || !(0.0..=1.0).contains(&s) {
        return Err(CruxError::OutOfRange(format!("similarity {s} outside [0, 1]")));
    }
    Ok(1.0 - s)
}

/// Builds the full pairwise similarity matrix over `texts`.
pub fn build_similarity_matrix(
    texts: &[String],
    nli: &dyn EntailmentBackend,
) -> Result<SimilarityMatrix> {
    let m = texts.len();
    if m == 0 {
        return Err(CruxError::MatrixInvalid("no texts to compare".into()));
    }
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        w[i * m + i] = 1.0;
        for j in (i + 1)..m {
            let s = similarity(&texts[i], &texts[j], nli)?;
            w[i * m + j] = s;
            w[j * m + i] = s;
        }
    }
    SimilarityMatrix::new(m, w)
}

fn check_pool(w: &SimilarityMatrix, require_even: bool) -> Result<usize> {
    let m = w.size();
    if m < 2 {
        return Err(CruxError::MatrixInvalid(format!("need m >= 2 answers, got {m}")));
    }
    if require_even && !m.is_multiple_of(2) {
        return Err(CruxError::MatrixInvalid(format!(
            "pooled similarity must have even size 2n, got {m}"
        )));
    }
    Ok(m)
}

/// Unified consistency, pairwise form: the negated mean pairwise distance,
/// written with the 1/(n(1-2n)) coefficient over the m = 2n pooled answers.
pub fn gc_pairwise(w: &SimilarityMatrix) -> Result<f64> {
    let m = check_pool(w, true)?;
    let n = (m / 2) as f64;
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            total += distance(w.get(i, j))?;
        }
    }
    Ok(total / (n * (1.0 - 2.0 * n)))
}

fn medoid(w: &SimilarityMatrix) -> Result<(usize, f64)> {
    let m = check_pool(w, false)?;
    let mut best_idx = 0usize;
    let mut best_total = f64::INFINITY;
    for i in 0..m {
        let mut total = 0.0;
        for j in 0..m {
            total += distance(w.get(i, j))?;
        }
        if total < best_total {
            best_total = total;
            best_idx = i;
        }
    }
    Ok((best_idx, best_total))
}

/// Unified consistency, center form: negated mean distance from the medoid
/// (the answer minimizing total distance to all others; ties break to the
/// lowest index).
pub fn gc_center(w: &SimilarityMatrix) -> Result<f64> {
    let (_, total) = medoid(w)?;
    Ok(-total / w.size() as f64)
}

/// Index of the medoid used by [`gc_center`].
pub fn medoid_index(w: &SimilarityMatrix) -> Result<usize> {
    Ok(medoid(w)?.0)
}
