//! Symmetric eigendecomposition (cyclic Jacobi) and the normalized graph
//! Laplacian spectrum used by the graph baselines.
//!
//! The answer graphs are tiny (m = 2n, a few dozen at most), so a
//! dependency-free Jacobi sweep is exact enough and fast.

use crate::consistency::SimilarityMatrix;
use crate::error::{CruxError, Result};

/// Eigenpairs of a symmetric matrix, sorted by ascending eigenvalue.
/// `vectors[k]` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigensolver for a dense symmetric matrix in row-major
/// order. Sweeps until the off-diagonal mass falls below 1e-12 of the
/// Frobenius norm (comfortably inside the 1e-8 residual budget).
pub fn jacobi_eigen(matrix: &[f64], m: usize) -> Result<SymmetricEigen> {
    if m == 0 || matrix.len() != m * m {
        return Err(CruxError::MatrixInvalid(format!(
            "expected {m}x{m} entries, got {}",
            matrix.len()
        )));
    }
    let mut a = matrix.to_vec();
    // Symmetrize defensively; inputs are symmetric up to rounding.
    for i in 0..m {
        for j in (i + 1)..m {
            let avg = (a[i * m + j] + a[j * m + i]) / 2.0;
            a[i * m + j] = avg;
            a[j * m + i] = avg;
        }
    }
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }

    let frobenius: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = (frobenius * 1e-12).max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                off += a[i * m + j] * a[i * m + j];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..m)
        .map(|k| {
            let value = a[k * m + k];
            let vector = (0..m).map(|i| v[i * m + k]).collect();
            (value, vector)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    Ok(SymmetricEigen {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors: pairs.into_iter().map(|p| p.1).collect(),
    })
}

/// Entries of the symmetric normalized Laplacian L = I - D^{-1/2} W D^{-1/2}.
pub fn normalized_laplacian(w: &SimilarityMatrix) -> Result<Vec<f64>> {
    let m = w.size();
    let degrees = w.degrees();
    for (i, &d) in degrees.iter().enumerate() {
        if !d.is_finite() || d <= 0.0 {
            return Err(CruxError::ZeroDegreeRow(i));
        }
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let norm = inv_sqrt[i] * w.get(i, j) * inv_sqrt[j];
            l[i * m + j] = if i == j { 1.0 - norm } else { -norm };
        }
    }
    Ok(l)
}

/// Ascending eigenvalues of the normalized Laplacian; all lie in [0, 2] up
/// to solver tolerance and the smallest is 0.
pub fn laplacian_eigenvalues(w: &SimilarityMatrix) -> Result<Vec<f64>> {
    let l = normalized_laplacian(w)?;
    Ok(jacobi_eigen(&l, w.size())?.values)
}

/// Full eigendecomposition of the normalized Laplacian (for the spectral
/// embedding baselines).
pub fn laplacian_eigen(w: &SimilarityMatrix) -> Result<SymmetricEigen> {
    let l = normalized_laplacian(w)?;
    jacobi_eigen(&l, w.size())
}
