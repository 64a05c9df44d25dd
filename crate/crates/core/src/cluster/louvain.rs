//! Louvain modularity maximization (resolution 1).
//!
//! Phase one moves single nodes to the neighbouring community with the best
//! modularity gain; phase two collapses communities into super-nodes. After
//! the hierarchy stops improving, one more node-level sweep runs on the
//! original graph so that the returned partition admits no improving
//! single-node move; if that sweep moves anything, the hierarchy restarts
//! from the refined partition.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClusterAssignment, SimilarityMatrix};
use crate::error::{Error, Result};

/// Symmetric weighted graph; `adj[i]` excludes `i`, self-loop weight kept apart.
#[derive(Debug, Clone)]
struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl Graph {
    fn from_similarity(s: &SimilarityMatrix) -> Result<Self> {
        let n = s.n();
        let mut adj = vec![Vec::new(); n];
        for (i, row) in adj.iter_mut().enumerate() {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = s.get(i, j);
                if w < 0.0 {
                    return Err(Error::NegativeWeight { i, j, weight: w });
                }
                if w > 0.0 {
                    row.push((j, w));
                }
            }
        }
        let degree: Vec<f64> = adj
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect();
        let two_m = degree.iter().sum();
        if two_m <= 0.0 {
            return Err(Error::TrivialGraph);
        }
        Ok(Self {
            adj,
            self_loop: vec![0.0; n],
            degree,
            two_m,
        })
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    /// Collapses nodes by `community` (dense ids) into a new graph.
    fn aggregate(&self, community: &[usize]) -> Self {
        let k = community.iter().max().map_or(0, |m| m + 1);
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loop = vec![0.0; k];
        for i in 0..self.n() {
            let ci = community[i];
            self_loop[ci] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                let cj = community[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    *rows[ci].entry(cj).or_default() += w;
                }
            }
        }
        let mut degree = vec![0.0; k];
        for i in 0..self.n() {
            degree[community[i]] += self.degree[i];
        }
        Self {
            adj: rows.into_iter().map(|r| r.into_iter().collect()).collect(),
            self_loop,
            degree,
            two_m: self.two_m,
        }
    }
}

/// Node-level local moving starting from `community`. Returns whether any node moved.
fn local_moving(g: &Graph, community: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
    let n = g.n();
    let mut total = vec![0.0; n];
    for i in 0..n {
        total[community[i]] += g.degree[i];
    }
    let eps = 1e-12 * g.two_m.max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut links: BTreeMap<usize, f64> = BTreeMap::new();
    let mut moved_any = false;
    loop {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let own = community[i];
            let ki = g.degree[i];
            links.clear();
            for &(j, w) in &g.adj[i] {
                *links.entry(community[j]).or_default() += w;
            }
            total[own] -= ki;
            let gain = |c: usize, w_in: f64| w_in - total[c] * ki / g.two_m;
            let own_gain = gain(own, links.get(&own).copied().unwrap_or(0.0));
            let mut best = (own, own_gain);
            for (&c, &w) in &links {
                let gc = gain(c, w);
                if gc > best.1 + eps {
                    best = (c, gc);
                }
            }
            // an empty community has gain zero
            if best.1 < -eps {
                if let Some(free) = (0..n).find(|c| !community.contains(c)) {
                    best = (free, 0.0);
                }
            }
            total[best.0] += ki;
            if best.0 != own {
                community[i] = best.0;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            return moved_any;
        }
    }
}

fn densify(community: &mut [usize]) {
    let mut map = BTreeMap::new();
    for c in community.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
}

/// Louvain communities of the graph with weights `s` (diagonal ignored).
///
/// Weights must be nonnegative with some positive off-diagonal entry. Node
/// sweep order is a seeded permutation.
pub fn louvain(s: &SimilarityMatrix, seed: u64) -> Result<ClusterAssignment> {
    let base = Graph::from_similarity(s)?;
    let n = base.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership: Vec<usize> = (0..n).collect();
    loop {
        densify(&mut membership);
        let mut level = base.aggregate(&membership);
        loop {
            let mut community: Vec<usize> = (0..level.n()).collect();
            if !local_moving(&level, &mut community, &mut rng) {
                break;
            }
            densify(&mut community);
            for m in membership.iter_mut() {
                *m = community[*m];
            }
            level = level.aggregate(&community);
        }
        if !local_moving(&base, &mut membership, &mut rng) {
            break;
        }
    }
    Ok(ClusterAssignment::from_raw(&membership))
}
