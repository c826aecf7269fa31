//! The six baseline confidence scores. Every score is confidence-oriented:
//! higher means more confident, which is what AUROC evaluation assumes.

use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::consistency::SimilarityMatrix;
use crate::error::{CruxError, Result};
use crate::lexical::{mean_pairwise, rouge_l_f1, symmetric_bleu};
use crate::spectral::laplacian_eigen;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    DegreeMatrix,
    Eccentricity,
    EigValLaplacian,
    NumSemSets,
    RougeL,
    Bleu,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::DegreeMatrix,
        BaselineKind::Eccentricity,
        BaselineKind::EigValLaplacian,
        BaselineKind::NumSemSets,
        BaselineKind::RougeL,
        BaselineKind::Bleu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::DegreeMatrix => "degree_matrix",
            BaselineKind::Eccentricity => "eccentricity",
            BaselineKind::EigValLaplacian => "eig_val_laplacian",
            BaselineKind::NumSemSets => "num_sem_sets",
            BaselineKind::RougeL => "rouge_l",
            BaselineKind::Bleu => "bleu",
        }
    }
}

/// Inputs a baseline may need; each kind checks for what it requires.
#[derive(Default, Clone, Copy)]
pub struct BaselineInputs<'a> {
    pub similarity: Option<&'a SimilarityMatrix>,
    pub partition: Option<&'a Partition>,
    pub answers: Option<&'a [String]>,
}

fn require<'a, T: ?Sized>(input: Option<&'a T>, kind: BaselineKind, name: &str) -> Result<&'a T> {
    input.ok_or_else(|| CruxError::MissingInput {
        kind: kind.name().into(),
        input: name.into(),
    })
}

/// Number of eigenvectors used for the spectral embedding.
fn embedding_dim(m: usize) -> usize {
    m.min(5)
}

pub fn baseline_score(kind: BaselineKind, inputs: &BaselineInputs) -> Result<f64> {
    match kind {
        BaselineKind::DegreeMatrix => {
            let w = require(inputs.similarity, kind, "similarity")?;
            let m = w.size() as f64;
            Ok(w.degrees().iter().sum::<f64>() / (m * m))
        }
        BaselineKind::EigValLaplacian => {
            let w = require(inputs.similarity, kind, "similarity")?;
            let eig = laplacian_eigen(w)?;
            Ok(-eig.values.iter().map(|&l| (1.0 - l).max(0.0)).sum::<f64>())
        }
        BaselineKind::Eccentricity => {
            let w = require(inputs.similarity, kind, "similarity")?;
            let m = w.size();
            let k = embedding_dim(m);
            let eig = laplacian_eigen(w)?;
            // Row i of the embedding is (v_1[i], ..., v_k[i]) over the k
            // smallest eigenvectors.
            let mut norm_sq = 0.0;
            for dim in 0..k {
                let v = &eig.vectors[dim];
                let mean = v.iter().sum::<f64>() / m as f64;
                norm_sq += v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            }
            Ok(-norm_sq.sqrt())
        }
        BaselineKind::NumSemSets => {
            let p = require(inputs.partition, kind, "partition")?;
            Ok(-(p.len() as f64))
        }
        BaselineKind::RougeL => {
            let answers = require(inputs.answers, kind, "answers")?;
            Ok(mean_pairwise(answers, rouge_l_f1))
        }
        BaselineKind::Bleu => {
            let answers = require(inputs.answers, kind, "answers")?;
            Ok(mean_pairwise(answers, symmetric_bleu))
        }
    }
}
