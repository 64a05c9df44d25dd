//! Clustering of knowledgebase paragraphs into super-tactics.
//!
//! The similarity matrix doubles as a weighted graph whose nodes are
//! paragraphs. Self-similarity is not an edge: graph quantities (degrees,
//! total weight, modularity) ignore the diagonal.

mod grid;
mod kmeans;
mod louvain;
mod quality;
mod spectral;

use nalgebra::DMatrix;

use crate::embed::{cosine, unit};
use crate::error::{Error, Result};

pub use grid::{
    pareto_front, run_grid, ClusterMethod, ClusterReportRow, Thresholds, KMEANS_RESTARTS,
};
pub use kmeans::{cohesion, spherical_kmeans, spherical_kmeans_restarts, DEFAULT_MAX_ITER};
pub use louvain::louvain;
pub use quality::{
    balanced_score, entropy_sum, majority_assign, majority_relabel, ClusteringScore,
};
pub use spectral::{laplacian, spectral_cluster, spectral_embedding, SpectralBasis};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl SimilarityMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::invalid("similarity matrix must be square"));
        }
        if labels.len() != values.nrows() {
            return Err(Error::DimensionMismatch {
                left: labels.len(),
                right: values.nrows(),
            });
        }
        let n = values.nrows();
        for i in 0..n {
            for j in 0..i {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "similarity matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { line: 0 });
        }
        Ok(Self { values, labels })
    }

    /// Unlabeled matrix; labels default to the row index.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let labels = (0..values.nrows()).map(|i| i.to_string()).collect();
        Self::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Off-diagonal row sums.
    pub fn degrees(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.values[(i, j)])
                    .sum()
            })
            .collect()
    }
}

/// Partition of `n` items into `k` nonempty clusters with ids `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Validates that ids are dense and every cluster is used.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; k];
        for &l in &labels {
            used[l] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::invalid(format!("cluster {empty} is empty")));
        }
        Ok(Self { labels, k })
    }

    /// Renumbers arbitrary ids densely in order of first appearance.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect();
        Self {
            labels,
            k: map.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Pairwise cosine similarity of `vectors`.
pub fn build_similarity<V: AsRef<[f64]>>(
    vectors: &[V],
    labels: Vec<String>,
) -> Result<SimilarityMatrix> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::invalid("need at least two vectors"));
    }
    let dim = vectors[0].as_ref().len();
    let units = vectors
        .iter()
        .map(|v| {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: v.len(),
                });
            }
            unit(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let c = cosine(&units[i], &units[j])?;
            values[(i, j)] = c;
            values[(j, i)] = c;
        }
    }
    SimilarityMatrix::new(values, labels)
}

/// Zeroes off-diagonal entries below `low` and caps entries above `high` to `high_value`.
pub fn apply_thresholds(
    s: &SimilarityMatrix,
    low: f64,
    high: f64,
    high_value: f64,
) -> Result<SimilarityMatrix> {
    if low > high {
        return Err(Error::invalid(format!(
            "low threshold {low} exceeds high threshold {high}"
        )));
    }
    let n = s.n();
    let mut values = s.values.clone();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = values[(i, j)];
            if x < low {
                values[(i, j)] = 0.0;
            } else if x > high {
                values[(i, j)] = high_value;
            }
        }
    }
    Ok(SimilarityMatrix {
        values,
        labels: s.labels.clone(),
    })
}

/// Weighted modularity of `a` on the graph `s` (diagonal ignored).
pub fn modularity(s: &SimilarityMatrix, a: &ClusterAssignment) -> Result<f64> {
    let n = s.n();
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: n,
        });
    }
    let degrees = s.degrees();
    let two_m: f64 = degrees.iter().sum();
    if two_m <= 0.0 {
        return Err(Error::TrivialGraph);
    }
    let labels = a.labels();
    let mut internal = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && labels[i] == labels[j] {
                internal += s.values[(i, j)];
            }
        }
    }
    let mut totals = vec![0.0; a.k()];
    for i in 0..n {
        totals[labels[i]] += degrees[i];
    }
    let expected: f64 = totals.iter().map(|t| t * t).sum::<f64>() / two_m;
    Ok((internal - expected) / two_m)
}
