//! Method/hyperparameter grid over the three clustering algorithms.
//!
//! There is no principled trade-off between tactic purity and size balance,
//! so the grid reports both criteria and marks the Pareto-efficient rows; the
//! final pick belongs to the caller.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    apply_thresholds, louvain, modularity, spherical_kmeans_restarts, ClusterAssignment,
    ClusteringScore, SimilarityMatrix, SpectralBasis, DEFAULT_MAX_ITER,
};
use crate::error::{Error, Result};

/// Seeded k-means restarts per grid row; the lowest objective wins.
pub const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ClusterMethod {
    Kmeans { k: usize },
    Louvain,
    Spectral { k: usize, egn: usize },
}

impl ClusterMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ClusterMethod::Kmeans { .. } => "kmeans",
            ClusterMethod::Louvain => "louvain",
            ClusterMethod::Spectral { .. } => "spectral",
        }
    }

    pub fn params(&self) -> String {
        match self {
            ClusterMethod::Kmeans { k } => format!("k={k}"),
            ClusterMethod::Louvain => "resolution=1".into(),
            ClusterMethod::Spectral { k, egn } => format!("k={k};egn={egn}"),
        }
    }

    /// The default grid: k-means and spectral for k in 2..=6, egn in {k, 6}, plus Louvain.
    pub fn default_grid() -> Vec<ClusterMethod> {
        let mut grid = vec![ClusterMethod::Louvain];
        for k in 2..=6 {
            grid.push(ClusterMethod::Kmeans { k });
            grid.push(ClusterMethod::Spectral { k, egn: k });
            if k != 6 {
                grid.push(ClusterMethod::Spectral { k, egn: 6 });
            }
        }
        grid
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.params())
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    /// Parses the display form, e.g. `kmeans(k=4)`, `louvain` or
    /// `spectral(k=4;egn=6)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown clustering method {s:?}"));
        let s = s.trim();
        let (name, args) = match s.split_once('(') {
            Some((n, rest)) => (n, rest.strip_suffix(')').ok_or_else(bad)?),
            None => (s, ""),
        };
        let mut k = None;
        let mut egn = None;
        for part in args.split(';').filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "k" => k = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                "egn" => egn = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                "resolution" if name == "louvain" && value.trim() == "1" => {}
                _ => return Err(bad()),
            }
        }
        match (name, k, egn) {
            ("kmeans", Some(k), None) => Ok(ClusterMethod::Kmeans { k }),
            ("louvain", None, None) => Ok(ClusterMethod::Louvain),
            ("spectral", Some(k), Some(egn)) => Ok(ClusterMethod::Spectral { k, egn }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
    pub high_value: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            low: 0.25,
            high: 0.85,
            high_value: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReportRow {
    pub method: ClusterMethod,
    pub k: usize,
    pub score: ClusteringScore,
    /// Modularity on the thresholded graph, whatever the method.
    pub modularity: f64,
    pub pareto: bool,
    pub assignment: ClusterAssignment,
}

/// Indices of rows not dominated in (entropy_sum, balanced_score), both minimized.
pub fn pareto_front(scores: &[ClusteringScore]) -> Vec<usize> {
    (0..scores.len())
        .filter(|&i| {
            let a = scores[i];
            !scores.iter().any(|b| {
                b.entropy_sum <= a.entropy_sum
                    && b.balanced_score <= a.balanced_score
                    && (b.entropy_sum < a.entropy_sum || b.balanced_score < a.balanced_score)
            })
        })
        .collect()
}

/// Runs every method in `grid`. K-means clusters the raw vectors; Louvain and
/// spectral run on the thresholded similarity graph.
pub fn run_grid<V, L>(
    vectors: &[V],
    similarity: &SimilarityMatrix,
    labels: &[L],
    grid: &[ClusterMethod],
    thresholds: Thresholds,
    seed: u64,
) -> Result<Vec<ClusterReportRow>>
where
    V: AsRef<[f64]> + Sync,
    L: Ord + Sync,
{
    let graph = apply_thresholds(
        similarity,
        thresholds.low,
        thresholds.high,
        thresholds.high_value,
    )?;
    let basis = if grid
        .iter()
        .any(|m| matches!(m, ClusterMethod::Spectral { .. }))
    {
        Some(SpectralBasis::new(&graph)?)
    } else {
        None
    };
    let mut rows = grid
        .par_iter()
        .map(|&method| {
            let assignment = match method {
                ClusterMethod::Kmeans { k } => {
                    spherical_kmeans_restarts(vectors, k, seed, DEFAULT_MAX_ITER, KMEANS_RESTARTS)?
                }
                ClusterMethod::Louvain => louvain(&graph, seed)?,
                ClusterMethod::Spectral { k, egn } => basis
                    .as_ref()
                    .expect("built when the grid has spectral rows")
                    .cluster(k, egn, seed)?,
            };
            Ok(ClusterReportRow {
                method,
                k: assignment.k(),
                score: ClusteringScore::of(&assignment, labels)?,
                modularity: modularity(&graph, &assignment)?,
                pareto: false,
                assignment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<ClusteringScore> = rows.iter().map(|r| r.score).collect();
    for i in pareto_front(&scores) {
        rows[i].pareto = true;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::build_similarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pareto_examples() {
        let s = |e, b| ClusteringScore {
            entropy_sum: e,
            balanced_score: b,
        };
        let front = pareto_front(&[
            s(1.0, 5.0),
            s(2.0, 2.0),
            s(3.0, 3.0),
            s(0.5, 9.0),
            s(2.0, 2.0),
        ]);
        assert_eq!(front, vec![0, 1, 3, 4]);
    }

    #[test]
    fn grid_on_planted_topics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for g in 0..3 {
            for _ in 0..12 {
                let mut v = [0.05; 6];
                v[g] = 1.0;
                vectors.push(
                    v.iter()
                        .map(|x| x + 0.05 * rng.random::<f64>())
                        .collect::<Vec<f64>>(),
                );
                labels.push(g);
            }
        }
        let s = build_similarity(&vectors, vec![String::new(); vectors.len()]).unwrap();
        let grid = [
            ClusterMethod::Kmeans { k: 3 },
            ClusterMethod::Louvain,
            ClusterMethod::Spectral { k: 3, egn: 3 },
        ];
        let rows = run_grid(&vectors, &s, &labels, &grid, Thresholds::default(), 7).unwrap();
        for r in &rows {
            assert_eq!(r.k, 3, "{}", r.method);
            assert_eq!(r.score.entropy_sum, 0.0);
            assert!(r.pareto);
            assert!(r.modularity > 0.5);
        }
    }

    #[test]
    fn default_grid_contains_reference_configuration() {
        assert!(ClusterMethod::default_grid().contains(&ClusterMethod::Spectral { k: 4, egn: 6 }));
        assert_eq!(
            ClusterMethod::Spectral { k: 4, egn: 6 }.to_string(),
            "spectral(k=4;egn=6)"
        );
    }

    #[test]
    fn method_display_round_trips() {
        for m in ClusterMethod::default_grid() {
            assert_eq!(m.to_string().parse::<ClusterMethod>().unwrap(), m);
        }
        assert_eq!(
            "louvain".parse::<ClusterMethod>().unwrap(),
            ClusterMethod::Louvain
        );
        for bad in [
            "kmeans",
            "spectral(k=4)",
            "kmeans(k=x)",
            "dbscan(k=2)",
            "kmeans(k=2",
        ] {
            assert!(bad.parse::<ClusterMethod>().is_err(), "{bad}");
        }
    }
}
