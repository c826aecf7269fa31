//! Confidence estimation for contextual question answering.
//!
//! The pipeline samples answers with and without the provided context,
//! clusters them by meaning via bidirectional entailment, measures the
//! entropy reduction the context buys, measures global consistency over the
//! pooled answers, and fuses both signals into a confidence score with a
//! small learned head. Six classic consistency baselines, NLI majority-vote
//! labeling, and AUROC evaluation round out the toolkit.

pub mod backends;
pub mod baselines;
pub mod cache;
pub mod clustering;
pub mod config;
pub mod consistency;
pub mod dataset;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod labeling;
pub mod lexical;
pub mod pipeline;
pub mod spectral;
pub mod synthetic;
pub mod types;

pub use backends::{EntailmentBackend, GenerationBackend, NliResult};
pub use config::{CruxConfig, GcVariant};
pub use error::{CruxError, Result};
pub use pipeline::{build_prompt, normalize_answer, run_crux, CruxPipeline};
pub use types::{AnswerSet, Condition, ConfidenceReport, DecodingParams, QuestionRecord};
