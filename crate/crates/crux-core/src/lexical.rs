//! Lexical overlap metrics: ROUGE-L F1 and smoothed sentence BLEU.
//!
//! Both operate on whitespace tokens of normalized text and return values in
//! [0, 1]. As used by the baselines they are symmetric: ROUGE-L F1 is
//! symmetric by construction and BLEU is symmetrized by averaging the two
//! directions.

use std::collections::HashMap;

use crate::pipeline::normalize_answer;

fn tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            curr[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over whitespace tokens. Identical texts score 1; two empty
/// texts score 1; one empty text scores 0.
pub fn rouge_l_f1(a: &str, b: &str) -> f64 {
    let ta = tokens(a);
    let tb = tokens(b);
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&ta, &tb) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / tb.len() as f64;
    let recall = lcs / ta.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn ngram_counts(tokens: &[String], k: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= k {
        for window in tokens.windows(k) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU of `candidate` against `reference`: geometric mean of
/// add-one-smoothed clipped n-gram precisions up to 4-grams, with the usual
/// brevity penalty.
pub fn sentence_bleu(candidate: &str, reference: &str) -> f64 {
    let cand = tokens(candidate);
    let refr = tokens(reference);
    if cand.is_empty() && refr.is_empty() {
        return 1.0;
    }
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    for k in 1..=4usize {
        let cand_grams = ngram_counts(&cand, k);
        let ref_grams = ngram_counts(&refr, k);
        let total: usize = cand_grams.values().sum();
        let matched: usize = cand_grams
            .iter()
            .map(|(gram, &count)| count.min(ref_grams.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = (matched as f64 + 1.0) / (total as f64 + 1.0);
        log_sum += 0.25 * precision.ln();
    }

    let brevity = if cand.len() >= refr.len() {
        1.0
    } else {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    };
    brevity * log_sum.exp()
}

/// Symmetric BLEU: mean of the two directed scores.
pub fn symmetric_bleu(a: &str, b: &str) -> f64 {
    (sentence_bleu(a, b) + sentence_bleu(b, a)) / 2.0
}

/// Mean of `metric` over all unordered pairs; 1.0 for fewer than two texts.
pub fn mean_pairwise(texts: &[String], metric: impl Fn(&str, &str) -> f64) -> f64 {
    if texts.len() < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..texts.len() {
        for j in (i + 1)..texts.len() {
            total += metric(&texts[i], &texts[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}
