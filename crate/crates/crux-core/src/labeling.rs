//! NLI majority-vote correctness labeling.
//!
//! Each with-context generation is judged against the reference answer with
//! the reference as premise and the generation as hypothesis; a generation
//! votes "correct" iff its entailment probability beats its contradiction
//! probability (neutral mass is ignored). The record label is the strict
//! majority; an exact tie is labeled incorrect.

use serde::Serialize;

use crate::backends::EntailmentBackend;
use crate::error::{CruxError, Result};
use crate::types::{AnswerSet, Condition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorrectnessLabel {
    pub value: bool,
    pub votes_for: usize,
    pub votes_total: usize,
}

pub fn label_record(
    generations: &AnswerSet,
    reference: &str,
    nli: &dyn EntailmentBackend,
) -> Result<CorrectnessLabel> {
    if generations.condition != Condition::WithContext {
        return Err(CruxError::ConfigInvalid(
            "labeling requires the with-context answer set".into(),
        ));
    }
    if reference.is_empty() {
        return Err(CruxError::ConfigInvalid("reference answer is empty".into()));
    }
    if generations.is_empty() {
        return Err(CruxError::ConfigInvalid("no generations to label".into()));
    }

    let mut votes_for = 0usize;
    for answer in &generations.answers {
        if answer.trim().is_empty() {
            continue; // an empty generation cannot entail the reference
        }
        let probs = nli.entailment_probs(reference, answer)?;
        if probs.entail > probs.contradict {
            votes_for += 1;
        }
    }
    let votes_total = generations.len();
    Ok(CorrectnessLabel {
        value: 2 * votes_for > votes_total,
        votes_for,
        votes_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::EqualityNli;
    use crate::types::DecodingParams;

    fn answer_set(answers: Vec<&str>) -> AnswerSet {
        AnswerSet {
            condition: Condition::WithContext,
            answers: answers.into_iter().map(String::from).collect(),
            decoding: DecodingParams::default(),
            prompt_fingerprint: "fp".into(),
        }
    }

    #[test]
    fn unanimous_entailment_labels_correct() {
        let nli = EqualityNli::new();
        let set = answer_set(vec!["Paris"; 10]);
        let label = label_record(&set, "paris", &nli).unwrap();
        assert!(label.value);
        assert_eq!((label.votes_for, label.votes_total), (10, 10));
    }

    #[test]
    fn three_of_five_is_majority() {
        let nli = EqualityNli::new();
        let set = answer_set(vec!["yes", "yes", "yes", "no", "maybe"]);
        let label = label_record(&set, "yes", &nli).unwrap();
        assert!(label.value);
        assert_eq!(label.votes_for, 3);
    }

    #[test]
    fn exact_tie_is_incorrect() {
        let nli = EqualityNli::new();
        let answers: Vec<&str> = (0..10).map(|i| if i < 5 { "yes" } else { "no" }).collect();
        let set = answer_set(answers);
        let label = label_record(&set, "yes", &nli).unwrap();
        assert!(!label.value);
        assert_eq!(label.votes_for, 5);
    }

    #[test]
    fn order_invariance() {
        let nli = EqualityNli::new();
        let forward = answer_set(vec!["a", "a", "b", "a"]);
        let backward = answer_set(vec!["a", "b", "a", "a"]);
        assert_eq!(
            label_record(&forward, "a", &nli).unwrap(),
            label_record(&backward, "a", &nli).unwrap()
        );
    }

    #[test]
    fn context_free_sets_are_rejected() {
        let nli = EqualityNli::new();
        let mut set = answer_set(vec!["a"]);
        set.condition = Condition::ContextFree;
        assert!(label_record(&set, "a", &nli).is_err());
    }

    #[test]
    fn empty_generations_vote_against() {
        let nli = EqualityNli::new();
        let set = answer_set(vec!["", "", "yes"]);
        let label = label_record(&set, "yes", &nli).unwrap();
        assert_eq!(label.votes_for, 1);
        assert!(!label.value);
    }
}
