//! Selection criteria for candidate clusterings, and the final tactic mapping.

use std::collections::BTreeMap;

use super::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringScore {
    pub entropy_sum: f64,
    pub balanced_score: f64,
}

impl ClusteringScore {
    pub fn of<L: Ord>(a: &ClusterAssignment, labels: &[L]) -> Result<Self> {
        Ok(Self {
            entropy_sum: entropy_sum(a, labels)?,
            balanced_score: balanced_score(a),
        })
    }
}

fn check_len<L>(a: &ClusterAssignment, labels: &[L]) -> Result<()> {
    if a.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: labels.len(),
        });
    }
    Ok(())
}

/// Per-label counts of members in each cluster.
fn crosstab<'a, L: Ord>(a: &ClusterAssignment, labels: &'a [L]) -> BTreeMap<&'a L, Vec<usize>> {
    let mut table: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (l, &c) in labels.iter().zip(a.labels()) {
        table.entry(l).or_insert_with(|| vec![0; a.k()])[c] += 1;
    }
    table
}

/// Sum over labels of the Shannon entropy (natural log) of each label's
/// spread across clusters. Zero iff every label sits in a single cluster.
pub fn entropy_sum<L: Ord>(a: &ClusterAssignment, labels: &[L]) -> Result<f64> {
    check_len(a, labels)?;
    let mut total = 0.0;
    for counts in crosstab(a, labels).values() {
        let n: usize = counts.iter().sum();
        for &c in counts {
            if c > 0 && c < n {
                let p = c as f64 / n as f64;
                total -= p * p.ln();
            }
        }
    }
    Ok(total)
}

/// Population standard deviation of cluster sizes.
pub fn balanced_score(a: &ClusterAssignment) -> f64 {
    let counts = a.counts();
    if counts.is_empty() {
        return 0.0;
    }
    let k = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / k;
    (counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / k)
        .sqrt()
}

/// Maps each label to the cluster holding most of its members; ties go to the
/// lowest cluster id.
pub fn majority_assign<L: Ord + Clone>(
    a: &ClusterAssignment,
    labels: &[L],
) -> Result<BTreeMap<L, usize>> {
    check_len(a, labels)?;
    Ok(crosstab(a, labels)
        .into_iter()
        .map(|(l, counts)| {
            let best = counts
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))
                .map(|(c, _)| c)
                .expect("k >= 1");
            (l.clone(), best)
        })
        .collect())
}

/// Relabels every member with its label's majority cluster. Ids are those of
/// `a`; clusters left without members simply disappear.
pub fn majority_relabel<L: Ord + Clone>(a: &ClusterAssignment, labels: &[L]) -> Result<Vec<usize>> {
    let map = majority_assign(a, labels)?;
    Ok(labels.iter().map(|l| map[l]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tactic::Tactic;

    #[test]
    fn pure_partition_has_zero_entropy() {
        let a = ClusterAssignment::new(vec![0, 0, 1, 1, 2]).unwrap();
        assert_eq!(entropy_sum(&a, &["x", "x", "y", "y", "z"]).unwrap(), 0.0);
        // two labels sharing a cluster is still pure
        let b = ClusterAssignment::new(vec![0, 0, 0, 1]).unwrap();
        assert_eq!(entropy_sum(&b, &["x", "x", "y", "z"]).unwrap(), 0.0);
    }

    #[test]
    fn even_split_costs_ln2() {
        let a = ClusterAssignment::new(vec![0, 1, 2, 2]).unwrap();
        let h = entropy_sum(&a, &["x", "x", "y", "y"]).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_spread_of_fourteen_tactics() {
        let mut labels = Vec::new();
        let mut clusters = Vec::new();
        for t in Tactic::ALL {
            for c in 0..4 {
                labels.push(t);
                clusters.push(c);
            }
        }
        let a = ClusterAssignment::new(clusters).unwrap();
        let h = entropy_sum(&a, &labels).unwrap();
        assert!((h - 14.0 * 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn balanced_score_examples() {
        let equal = ClusterAssignment::new((0..40).map(|i| i % 4).collect()).unwrap();
        assert_eq!(balanced_score(&equal), 0.0);
        let uneven = ClusterAssignment::new([vec![0; 30], vec![1; 10]].concat()).unwrap();
        assert!((balanced_score(&uneven) - 10.0).abs() < 1e-12);
        assert_eq!(
            balanced_score(&ClusterAssignment::new(vec![0; 5]).unwrap()),
            0.0
        );
    }

    #[test]
    fn majority_and_ties() {
        let a = ClusterAssignment::new(vec![0, 1, 2, 2, 2, 3, 1, 1, 3, 3]).unwrap();
        // "t": 60% in cluster 2
        let labels = ["t", "t", "t", "t", "t", "u", "u", "v", "v", "v"];
        let map = majority_assign(&a, &labels).unwrap();
        assert_eq!(map["t"], 2);
        // "u": one member in 3, one in 1 -> lowest id
        assert_eq!(map["u"], 1);
        assert_eq!(map["v"], 3);
        assert_eq!(majority_relabel(&a, &labels).unwrap()[5], 1);
    }

    #[test]
    fn entropy_permutation_invariant() {
        let labels = ["a", "a", "b", "b", "b", "c"];
        let a = ClusterAssignment::new(vec![0, 1, 1, 2, 0, 2]).unwrap();
        let b = ClusterAssignment::new(vec![2, 0, 0, 1, 2, 1]).unwrap();
        assert!(
            (entropy_sum(&a, &labels).unwrap() - entropy_sum(&b, &labels).unwrap()).abs() < 1e-15
        );
    }
}
