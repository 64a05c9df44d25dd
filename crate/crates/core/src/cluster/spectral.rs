//! Spectral clustering on the unnormalized Laplacian `L = D - S`.
//!
//! The constant vector always lies in the null space of `L` and carries no
//! partition information, so it is the one direction dropped. When the null
//! space is larger (disconnected graph) the remaining null directions are kept
//! first since they separate the components. The next `egn` directions form a
//! per-node feature matrix whose rows go through spherical k-means (best of
//! several seeded restarts).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{spherical_kmeans_restarts, ClusterAssignment, SimilarityMatrix, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};

const EIGEN_MAX_ITER: usize = 10_000;
const ZERO_EIGENVALUE: f64 = 1e-10;
const KMEANS_RESTARTS: usize = 10;

pub fn laplacian(s: &SimilarityMatrix) -> DMatrix<f64> {
    let n = s.n();
    let mut l = -s.values().clone();
    for i in 0..n {
        let d: f64 = s.values().row(i).sum();
        l[(i, i)] += d;
    }
    l
}

/// Laplacian eigenvectors ordered for feature extraction: null-space
/// directions orthogonal to the constant first, then the remaining
/// eigenvectors by ascending eigenvalue. One decomposition serves every
/// `egn` and `k` on the same graph.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    columns: Vec<DVector<f64>>,
}

impl SpectralBasis {
    pub fn new(s: &SimilarityMatrix) -> Result<Self> {
        let n = s.n();
        let eig = SymmetricEigen::try_new(laplacian(s), f64::EPSILON, EIGEN_MAX_ITER)
            .ok_or(Error::EigenNoConvergence(EIGEN_MAX_ITER))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then(a.cmp(&b))
        });
        let largest = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let zero_count = order
            .iter()
            .take_while(|&&i| eig.eigenvalues[i] <= ZERO_EIGENVALUE * largest.max(1.0))
            .count()
            .max(1);

        // null-space basis with the constant direction projected out
        let constant = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
        for &i in &order[..zero_count] {
            let mut v = eig.eigenvectors.column(i).into_owned();
            v -= &constant * constant.dot(&v);
            for c in &columns {
                v -= c * c.dot(&v);
            }
            let norm = v.norm();
            if norm > 1e-8 {
                columns.push(v / norm);
            }
        }
        columns.extend(
            order[zero_count..]
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned()),
        );
        Ok(Self { columns })
    }

    /// `n × egn` feature matrix from the first `egn` directions.
    pub fn features(&self, egn: usize) -> Result<DMatrix<f64>> {
        let n = self.columns.first().map_or(0, |c| c.len());
        if egn == 0 || egn >= n {
            return Err(Error::invalid(format!("egn = {egn} must lie in 1..{n}")));
        }
        if self.columns.len() < egn {
            return Err(Error::invalid(format!(
                "only {} nontrivial eigenvectors available",
                self.columns.len()
            )));
        }
        Ok(DMatrix::from_columns(&self.columns[..egn]))
    }

    pub fn cluster(&self, k: usize, egn: usize, seed: u64) -> Result<ClusterAssignment> {
        let n = self.columns.first().map_or(0, |c| c.len());
        if k == 0 || k > n {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
        }
        if k == 1 {
            return ClusterAssignment::new(vec![0; n]);
        }
        let features = self.features(egn)?;
        let rows: Vec<Vec<f64>> = features
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        spherical_kmeans_restarts(&rows, k, seed, DEFAULT_MAX_ITER, KMEANS_RESTARTS)
    }
}

/// `n × egn` feature matrix: Laplacian eigenvectors in ascending eigenvalue
/// order after removing the constant direction.
pub fn spectral_embedding(s: &SimilarityMatrix, egn: usize) -> Result<DMatrix<f64>> {
    let n = s.n();
    if egn == 0 || egn >= n {
        return Err(Error::invalid(format!("egn = {egn} must lie in 1..{n}")));
    }
    SpectralBasis::new(s)?.features(egn)
}

pub fn spectral_cluster(
    s: &SimilarityMatrix,
    k: usize,
    egn: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    if k == 0 || k > s.n() {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={}", s.n())));
    }
    if k == 1 {
        return ClusterAssignment::new(vec![0; s.n()]);
    }
    SpectralBasis::new(s)?.cluster(k, egn, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(sizes: &[usize], within: f64, across: f64) -> SimilarityMatrix {
        let n: usize = sizes.iter().sum();
        let block_of: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
            .collect();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if block_of[i] == block_of[j] {
                within
            } else {
                across
            }
        });
        SimilarityMatrix::from_matrix(m).unwrap()
    }

    fn recovers(a: &ClusterAssignment, sizes: &[usize]) -> bool {
        let block_of: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
            .collect();
        let n = block_of.len();
        (0..n).all(|i| {
            (0..n).all(|j| (a.labels()[i] == a.labels()[j]) == (block_of[i] == block_of[j]))
        })
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let s = blocks(&[3, 4], 0.8, 0.1);
        let l = laplacian(&s);
        for i in 0..7 {
            assert!(l.row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn block_diagonal_recovered() {
        let sizes = [6, 6];
        let s = blocks(&sizes, 0.9, 0.0);
        for seed in 0..20 {
            let a = spectral_cluster(&s, 2, 2, seed).unwrap();
            assert!(recovers(&a, &sizes), "seed {seed}: {:?}", a.labels());
        }
    }

    #[test]
    fn connected_blocks_recovered() {
        let sizes = [5, 7, 6, 4];
        let s = blocks(&sizes, 0.8, 0.1);
        for seed in 0..10 {
            let a = spectral_cluster(&s, 4, 3, seed).unwrap();
            assert!(recovers(&a, &sizes), "seed {seed}");
        }
    }

    #[test]
    fn reference_configuration_runs() {
        let s = blocks(&[5, 5, 5, 5], 0.8, 0.1);
        let a = spectral_cluster(&s, 4, 6, 0).unwrap();
        assert_eq!(a.len(), 20);
        assert!(a.k() <= 4);
    }

    #[test]
    fn single_cluster() {
        let s = blocks(&[3, 3], 0.9, 0.2);
        let a = spectral_cluster(&s, 1, 2, 0).unwrap();
        assert!(a.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn features_orthogonal_to_constant() {
        let s = blocks(&[4, 4, 4], 0.9, 0.0);
        let f = spectral_embedding(&s, 3).unwrap();
        for c in f.column_iter() {
            assert!(c.sum().abs() < 1e-9);
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
    }
}
