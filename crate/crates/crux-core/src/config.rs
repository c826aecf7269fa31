//! Run configuration, loaded from a TOML file with defaults for every key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::FilterRules;
use crate::error::{CruxError, Result};

/// Which unified-consistency estimator to use over the pooled answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcVariant {
    Pairwise,
    Center,
}

/// Which answer pool the graph-based baselines are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePool {
    /// The n with-context answers only (default).
    WithContext,
    /// All 2n pooled answers.
    Pooled,
}

/// Prompt templates for the two sampling conditions.
///
/// `with_context` must contain `{context}` and `{query}`; `context_free`
/// must contain `{query}`. Placeholders inside substituted values are left
/// untouched (single-pass substitution).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub with_context: String,
    pub context_free: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            with_context: "Context: {context}\nQuestion: {query}\nAnswer concisely:".into(),
            context_free: "Question: {query}\nAnswer concisely:".into(),
        }
    }
}

impl PromptTemplates {
    pub fn validate(&self) -> Result<()> {
        if !self.with_context.contains("{query}") || !self.context_free.contains("{query}") {
            return Err(CruxError::TemplateMissingPlaceholder("{query}".into()));
        }
        if !self.with_context.contains("{context}") {
            return Err(CruxError::TemplateMissingPlaceholder("{context}".into()));
        }
        Ok(())
    }
}

/// Pipeline configuration. Every field has a default so a config file only
/// needs the keys it wants to change.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CruxConfig {
    /// Samples per condition.
    pub n: usize,
    /// Bidirectional entailment decision threshold, in (0, 1).
    pub entail_threshold: f64,
    /// Semantic clustering via NLI; when false, answers cluster only if their
    /// normalized texts are byte-identical.
    pub use_clustering: bool,
    /// Compute the unified consistency stage and feed it to fusion.
    pub use_gc: bool,
    pub gc_variant: GcVariant,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Seed for the train/eval split and fusion training.
    pub seed: u64,
    /// Model name sent to the generation endpoint.
    pub gen_model: String,
    /// Cap on simultaneous backend requests.
    pub max_inflight: usize,
    pub baseline_pool: BaselinePool,
    pub templates: PromptTemplates,
    /// Rule-based dataset filter applied after loading.
    pub filter: FilterRules,
}

impl Default for CruxConfig {
    fn default() -> Self {
        Self {
            n: 10,
            entail_threshold: 0.5,
            use_clustering: true,
            use_gc: true,
            gc_variant: GcVariant::Pairwise,
            temperature: 1.0,
            max_tokens: 64,
            seed: 42,
            gen_model: "default".into(),
            max_inflight: 4,
            baseline_pool: BaselinePool::WithContext,
            templates: PromptTemplates::default(),
            filter: FilterRules::default(),
        }
    }
}

impl CruxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CruxError::ConfigInvalid(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        if !(self.entail_threshold > 0.0 && self.entail_threshold < 1.0) {
            return Err(CruxError::ConfigInvalid(format!(
                "entail_threshold must be in (0, 1), got {}",
                self.entail_threshold
            )));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(CruxError::ConfigInvalid(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(CruxError::ConfigInvalid("max_tokens must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(CruxError::ConfigInvalid("max_inflight must be >= 1".into()));
        }
        self.templates.validate()?;
        self.filter.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CruxError::FileUnreadable {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: CruxConfig = toml::from_str(&text)
            .map_err(|e| CruxError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
