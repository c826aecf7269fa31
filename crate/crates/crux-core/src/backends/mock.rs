//! Deterministic in-process backends for tests and offline runs.
//!
//! Mocks are pure functions of their inputs and scripts: identical calls give
//! identical results.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::backends::{check_nli_args, check_sample_args, EntailmentBackend, GenerationBackend, NliResult};
use crate::error::{CruxError, Result};
use crate::pipeline::{normalize_answer, prompt_fingerprint};
use crate::types::DecodingParams;

/// NLI mock: entailment 1.0 iff the normalized texts are equal, else
/// contradiction 1.0.
#[derive(Default)]
pub struct EqualityNli {
    calls: AtomicUsize,
}

impl EqualityNli {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl EntailmentBackend for EqualityNli {
    fn entailment_probs(&self, premise: &str, hypothesis: &str) -> Result<NliResult> {
        check_nli_args(premise, hypothesis)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        if normalize_answer(premise) == normalize_answer(hypothesis) {
            NliResult::new(1.0, 0.0, 0.0)
        } else {
            NliResult::new(0.0, 0.0, 1.0)
        }
    }

    fn identity(&self) -> String {
        "mock:equality-nli".into()
    }
}

/// NLI mock backed by an explicit (premise, hypothesis) table; pairs absent
/// from the table fall back to the equality rule.
#[derive(Default)]
pub struct TableNli {
    table: HashMap<(String, String), NliResult>,
}

impl TableNli {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entry(
        mut self,
        premise: &str,
        hypothesis: &str,
        entail: f64,
        neutral: f64,
        contradict: f64,
    ) -> Self {
        let result = NliResult::new(entail, neutral, contradict)
            .expect("table mock entries must be valid NLI triples");
        self.table
            .insert((premise.to_string(), hypothesis.to_string()), result);
        self
    }
}

impl EntailmentBackend for TableNli {
    fn entailment_probs(&self, premise: &str, hypothesis: &str) -> Result<NliResult> {
        check_nli_args(premise, hypothesis)?;
        if let Some(r) = self.table.get(&(premise.to_string(), hypothesis.to_string())) {
            return Ok(*r);
        }
        if normalize_answer(premise) == normalize_answer(hypothesis) {
            NliResult::new(1.0, 0.0, 0.0)
        } else {
            NliResult::new(0.0, 0.0, 1.0)
        }
    }

    fn identity(&self) -> String {
        "mock:table-nli".into()
    }
}

/// Generation mock scripted per prompt. Scripts are keyed by the prompt's
/// fingerprint; when `n` exceeds the script length the script cycles.
#[derive(Default)]
pub struct ScriptedGen {
    scripts: HashMap<String, Vec<String>>,
    calls: AtomicUsize,
}

impl ScriptedGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script<S: Into<String>>(mut self, prompt: &str, answers: Vec<S>) -> Self {
        self.scripts.insert(
            prompt_fingerprint(prompt),
            answers.into_iter().map(Into::into).collect(),
        );
        self
    }

    /// Number of sampling calls served (for cache-hit assertions).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl GenerationBackend for ScriptedGen {
    fn sample_answers(&self, prompt: &str, n: usize, params: &DecodingParams) -> Result<Vec<String>> {
        check_sample_args(prompt, n)?;
        params.validate()?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let script = self
            .scripts
            .get(&prompt_fingerprint(prompt))
            .ok_or_else(|| {
                CruxError::MalformedResponse(format!("no script for prompt: {prompt:?}"))
            })?;
        if script.is_empty() {
            return Err(CruxError::MalformedResponse("scripted answer list is empty".into()));
        }
        Ok((0..n)
            .map(|i| script[i % script.len()].trim().to_string())
            .collect())
    }

    fn identity(&self) -> String {
        "mock:scripted-gen".into()
    }
}
