//! Domain types shared across the pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::consistency::SimilarityMatrix;
use crate::error::{CruxError, Result};

/// Which corpus a record was loaded from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceDataset {
    Squad,
    Coqa,
    Generic,
}

/// Sampling condition: answers drawn with the context present or withheld.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    WithContext,
    ContextFree,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::WithContext => "with_context",
            Condition::ContextFree => "context_free",
        }
    }
}

/// One dataset item: a question grounded in a passage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub query: String,
    pub context: String,
    pub reference_answer: String,
    pub source_dataset: SourceDataset,
    /// Free-form tags (e.g. question kind) used by rule-based filters.
    #[serde(default)]
    pub tags: Vec<String>,
    /// Precomputed "answerable from context" flag, when the source provides one.
    #[serde(default)]
    pub answerable: Option<bool>,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(CruxError::ConfigInvalid("record id is empty".into()));
        }
        if self.query.is_empty() {
            return Err(CruxError::ConfigInvalid(format!(
                "record '{}' has an empty query",
                self.id
            )));
        }
        Ok(())
    }

    /// Whitespace-token count of the context.
    pub fn context_words(&self) -> usize {
        self.context.split_whitespace().count()
    }
}

/// Decoding parameters for one sampling call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DecodingParams {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(CruxError::ConfigInvalid(format!(
                "temperature must be > 0 (sampling), got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(CruxError::ConfigInvalid("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 64,
            seed: None,
        }
    }
}

/// The n answers sampled under one condition, in generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub condition: Condition,
    pub answers: Vec<String>,
    pub decoding: DecodingParams,
    pub prompt_fingerprint: String,
}

impl AnswerSet {
    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// True when every answer is empty after trimming.
    pub fn all_empty(&self) -> bool {
        self.answers.iter().all(|a| a.trim().is_empty())
    }
}

/// Everything the pipeline computed for one record.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceReport {
    pub record_id: String,
    /// Contextual entropy reduction, in nats. May be negative.
    pub delta_h: f64,
    /// Unified consistency value in [-1, 0]; absent when the GC stage is disabled.
    pub gc: Option<f64>,
    /// Baseline confidence scores keyed by baseline name.
    pub baseline_scores: BTreeMap<String, f64>,
    /// Fused confidence in [0, 1]; absent when no fusion parameters were supplied.
    pub fused_confidence: Option<f64>,
    pub with_context: AnswerSet,
    pub context_free: AnswerSet,
    pub partition_with_context: Partition,
    pub partition_context_free: Partition,
    pub pooled_similarity: Option<SimilarityMatrix>,
}
