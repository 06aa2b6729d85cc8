use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Principal component projection fitted on a set of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    /// One unit-length component per row, ordered by decreasing variance.
    components: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl Pca {
    /// Keeps `min(target_dim, rank)` components. Each component's sign is
    /// fixed so that its largest-magnitude entry is positive.
    pub fn fit(vectors: &[Vec<f64>], target_dim: usize) -> Result<Self> {
        let n = vectors.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("PCA needs at least 2 vectors, got {n}")));
        }
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Shape("PCA input vectors differ in length".into()));
        }
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let x = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
        let denom = (n - 1) as f64;

        // Eigen-decompose whichever Gram matrix is smaller.
        let (values, directions) = if dim <= n {
            let cov = x.tr_mul(&x) / denom;
            let eig = SymmetricEigen::new(cov);
            let dirs: Vec<Vec<f64>> = (0..dim).map(|k| eig.eigenvectors.column(k).iter().copied().collect()).collect();
            (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), dirs)
        } else {
            let gram = &x * x.transpose() / denom;
            let eig = SymmetricEigen::new(gram);
            let mut dirs = Vec::with_capacity(n);
            for k in 0..n {
                let u = eig.eigenvectors.column(k);
                let v = x.tr_mul(&u);
                let norm = v.norm();
                dirs.push(if norm > 0.0 { v.iter().map(|a| a / norm).collect() } else { vec![0.0; dim] });
            }
            (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), dirs)
        };

        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let top = values.iter().cloned().fold(0.0_f64, f64::max);
        let threshold = top * 1e-12 + f64::MIN_POSITIVE;
        let mut components = Vec::new();
        let mut variances = Vec::new();
        for k in order {
            if components.len() == target_dim || values[k] <= threshold {
                break;
            }
            let mut c = directions[k].clone();
            let pivot = c.iter().cloned().fold(0.0_f64, |acc, a| if a.abs() > acc.abs() { a } else { acc });
            if pivot < 0.0 {
                c.iter_mut().for_each(|a| *a = -*a);
            }
            components.push(c);
            variances.push(values[k]);
        }
        Ok(Pca { mean, components, variances })
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }
}

/// Fits PCA on `vectors` and returns their projections.
pub fn pca_project(vectors: &[Vec<f64>], target_dim: usize) -> Result<Vec<Vec<f64>>> {
    let pca = Pca::fit(vectors, target_dim)?;
    Ok(vectors.iter().map(|v| pca.project(v)).collect())
}
