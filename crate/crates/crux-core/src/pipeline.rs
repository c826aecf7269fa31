//! End-to-end orchestration: contrastive generation, semantic clustering,
//! entropy reduction, unified consistency, baselines, and fusion.
//!
//! Given a fixed sample cache and fixed fusion parameters the whole pass is
//! deterministic, and reports are immutable once produced. Distinct records
//! may be scored concurrently; all post-sampling math is pure.

use std::collections::BTreeMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::backends::{EntailmentBackend, GenerationBackend};
use crate::baselines::{baseline_score, BaselineInputs, BaselineKind};
use crate::cache::{SampleCache, SampleCacheEntry};
use crate::clustering::{cluster_answers, cluster_distribution, exact_match_partition, Partition};
use crate::config::{BaselinePool, CruxConfig, GcVariant, PromptTemplates};
use crate::consistency::{build_similarity_matrix, gc_center, gc_pairwise, SimilarityMatrix};
use crate::entropy::entropy_reduction;
use crate::error::{CruxError, Result};
use crate::fusion::{mlp_forward, FusionParams};
use crate::labeling::{label_record, CorrectnessLabel};
use crate::types::{AnswerSet, Condition, ConfidenceReport, DecodingParams, QuestionRecord};

/// Canonical text normalization: lowercase, trim, collapse whitespace runs,
/// strip trailing sentence punctuation.
pub fn normalize_answer(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(['.', '!', '?'])
        .trim_end()
        .to_string()
}

/// SHA-256 hex fingerprint of a prompt (cache keys, script keys).
pub fn prompt_fingerprint(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fills a template deterministically. Placeholders are located in the
/// template only, so substituted values containing `{query}` or `{context}`
/// are left verbatim.
fn fill_template(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while !rest.is_empty() {
        let mut earliest: Option<(usize, &str, &str)> = None;
        for &(placeholder, value) in substitutions {
            if let Some(pos) = rest.find(placeholder) {
                if earliest.is_none_or(|(e, _, _)| pos < e) {
                    earliest = Some((pos, placeholder, value));
                }
            }
        }
        match earliest {
            Some((pos, placeholder, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + placeholder.len()..];
            }
            None => {
                out.push_str(rest);
                break 'outer;
            }
        }
    }
    out
}

/// Renders the prompt for one condition. With a context the with-context
/// template applies; without one the context-free template applies.
pub fn build_prompt(
    query: &str,
    context: Option<&str>,
    templates: &PromptTemplates,
) -> Result<String> {
    if query.is_empty() {
        return Err(CruxError::ConfigInvalid("query must be non-empty".into()));
    }
    templates.validate()?;
    Ok(match context {
        Some(ctx) => fill_template(
            &templates.with_context,
            &[("{context}", ctx), ("{query}", query)],
        ),
        None => fill_template(&templates.context_free, &[("{query}", query)]),
    })
}

/// Contextualized form used for NLI calls so entailment judges the answer's
/// meaning in the question's context.
pub fn contextualize(query: &str, answer: &str) -> String {
    format!("Q: {query} A: {answer}")
}

/// A configured scoring pipeline bound to its backends, optional cache, and
/// optional fusion head.
pub struct CruxPipeline {
    cfg: CruxConfig,
    gen: Arc<dyn GenerationBackend>,
    nli: Arc<dyn EntailmentBackend>,
    cache: Option<Arc<SampleCache>>,
    fusion: Option<FusionParams>,
}

impl CruxPipeline {
    pub fn new(
        cfg: CruxConfig,
        gen: Arc<dyn GenerationBackend>,
        nli: Arc<dyn EntailmentBackend>,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            gen,
            nli,
            cache: None,
            fusion: None,
        })
    }

    pub fn with_cache(mut self, cache: Arc<SampleCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_fusion(mut self, fusion: FusionParams) -> Result<Self> {
        fusion.validate()?;
        let expected = self.feature_count();
        if fusion.features != expected {
            return Err(CruxError::DimensionMismatch {
                expected,
                got: fusion.features,
            });
        }
        self.fusion = Some(fusion);
        Ok(self)
    }

    pub fn config(&self) -> &CruxConfig {
        &self.cfg
    }

    pub fn generation_identity(&self) -> String {
        self.gen.identity()
    }

    pub fn nli_identity(&self) -> String {
        self.nli.identity()
    }

    /// Feature-vector width fed to the fusion head: [delta_h, gc] with the
    /// consistency stage enabled, [delta_h] without it.
    pub fn feature_count(&self) -> usize {
        if self.cfg.use_gc {
            2
        } else {
            1
        }
    }

    fn decoding(&self) -> DecodingParams {
        DecodingParams {
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            seed: None,
        }
    }

    /// Samples one condition, serving warm cache entries and writing cold
    /// responses through the cache before use.
    fn sample_condition(&self, record: &QuestionRecord, condition: Condition) -> Result<AnswerSet> {
        let context = match condition {
            Condition::WithContext => Some(record.context.as_str()),
            Condition::ContextFree => None,
        };
        let prompt = build_prompt(&record.query, context, &self.cfg.templates)?;
        let fingerprint = prompt_fingerprint(&prompt);
        let decoding = self.decoding();
        let backend = self.gen.identity();

        let answers = if let Some(cache) = &self.cache {
            match cache.lookup(&record.id, condition, &fingerprint, &decoding, &backend) {
                Some(hit) => hit,
                None => {
                    let fresh = self.gen.sample_answers(&prompt, self.cfg.n, &decoding)?;
                    cache.append(SampleCacheEntry::new(
                        &record.id,
                        condition,
                        &fingerprint,
                        &decoding,
                        fresh.clone(),
                        &backend,
                    ))?;
                    fresh
                }
            }
        } else {
            self.gen.sample_answers(&prompt, self.cfg.n, &decoding)?
        };

        if answers.len() != self.cfg.n {
            return Err(CruxError::MalformedResponse(format!(
                "backend returned {} answers, expected {}",
                answers.len(),
                self.cfg.n
            )));
        }
        Ok(AnswerSet {
            condition,
            answers,
            decoding,
            prompt_fingerprint: fingerprint,
        })
    }

    /// Contrastive generation: both conditions for one record.
    pub fn sample_record(&self, record: &QuestionRecord) -> Result<(AnswerSet, AnswerSet)> {
        record.validate()?;
        if record.context.trim().is_empty() {
            return Err(CruxError::ContextFreeRecord(record.id.clone()));
        }
        let with_context = self.sample_condition(record, Condition::WithContext)?;
        let context_free = self.sample_condition(record, Condition::ContextFree)?;
        if with_context.all_empty() || context_free.all_empty() {
            return Err(CruxError::EmptyAnswer(record.id.clone()));
        }
        Ok((with_context, context_free))
    }

    fn partition(&self, record: &QuestionRecord, answers: &AnswerSet) -> Result<Partition> {
        if self.cfg.use_clustering {
            let contextualized: Vec<String> = answers
                .answers
                .iter()
                .map(|a| contextualize(&record.query, a))
                .collect();
            cluster_answers(&contextualized, self.nli.as_ref(), self.cfg.entail_threshold)
        } else {
            Ok(exact_match_partition(&answers.answers))
        }
    }

    /// Full scoring pass for one record.
    pub fn run_crux(&self, record: &QuestionRecord) -> Result<ConfidenceReport> {
        let (with_context, context_free) = self.sample_record(record)?;
        let n = self.cfg.n;

        let partition_with_context = self.partition(record, &with_context)?;
        let partition_context_free = self.partition(record, &context_free)?;

        let dist_with_context = cluster_distribution(&partition_with_context, n)?;
        let dist_context_free = cluster_distribution(&partition_context_free, n)?;
        let delta_h = entropy_reduction(&dist_context_free, &dist_with_context)?;

        // Pooled order: with-context answers first, then context-free.
        let pooled_texts: Vec<String> = with_context
            .answers
            .iter()
            .chain(&context_free.answers)
            .map(|a| contextualize(&record.query, a))
            .collect();

        let need_pooled = self.cfg.use_gc || self.cfg.baseline_pool == BaselinePool::Pooled;
        let pooled_similarity = if need_pooled {
            Some(build_similarity_matrix(&pooled_texts, self.nli.as_ref())?)
        } else {
            None
        };

        let gc = if self.cfg.use_gc {
            let w = pooled_similarity.as_ref().unwrap();
            Some(match self.cfg.gc_variant {
                GcVariant::Pairwise => gc_pairwise(w)?,
                GcVariant::Center => gc_center(w)?,
            })
        } else {
            None
        };

        let baseline_matrix: SimilarityMatrix = match (self.cfg.baseline_pool, &pooled_similarity) {
            (BaselinePool::Pooled, Some(w)) => w.clone(),
            (BaselinePool::WithContext, Some(w)) => w.principal_submatrix(n)?,
            (BaselinePool::WithContext, None) => {
                build_similarity_matrix(&pooled_texts[..n], self.nli.as_ref())?
            }
            (BaselinePool::Pooled, None) => unreachable!("pooled matrix built above"),
        };

        let mut baseline_scores = BTreeMap::new();
        let inputs = BaselineInputs {
            similarity: Some(&baseline_matrix),
            partition: Some(&partition_with_context),
            answers: Some(&with_context.answers),
        };
        for kind in BaselineKind::ALL {
            baseline_scores.insert(kind.name().to_string(), baseline_score(kind, &inputs)?);
        }

        let features = match gc {
            Some(g) => vec![delta_h, g],
            None => vec![delta_h],
        };
        let fused_confidence = match &self.fusion {
            Some(params) => Some(mlp_forward(&features, params)?),
            None => None,
        };

        Ok(ConfidenceReport {
            record_id: record.id.clone(),
            delta_h,
            gc,
            baseline_scores,
            fused_confidence,
            with_context,
            context_free,
            partition_with_context,
            partition_context_free,
            pooled_similarity,
        })
    }

    /// Feature vector for fusion training, in the same layout `run_crux`
    /// feeds to the head.
    pub fn features(&self, report: &ConfidenceReport) -> Vec<f64> {
        match report.gc {
            Some(g) => vec![report.delta_h, g],
            None => vec![report.delta_h],
        }
    }

    /// Majority-vote correctness label for one record, sampling (or
    /// replaying) the with-context generations.
    pub fn label_record(&self, record: &QuestionRecord) -> Result<CorrectnessLabel> {
        let (with_context, _) = self.sample_record(record)?;
        label_record(&with_context, &record.reference_answer, self.nli.as_ref())
    }
}

/// One-shot convenience wrapper around [`CruxPipeline::run_crux`].
pub fn run_crux(
    record: &QuestionRecord,
    cfg: &CruxConfig,
    gen: Arc<dyn GenerationBackend>,
    nli: Arc<dyn EntailmentBackend>,
) -> Result<ConfidenceReport> {
    CruxPipeline::new(cfg.clone(), gen, nli)?.run_crux(record)
}
