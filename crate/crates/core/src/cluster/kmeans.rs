use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClusterAssignment;
use crate::embed::{dot, unit};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;

fn normalize_into(v: &mut [f64]) -> bool {
    let n = dot(v, v).sqrt();
    if n <= f64::EPSILON {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// k-means++ seeding on unit vectors with squared chord distance `2(1 - cos)`.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| 2.0 * (1.0 - dot(p, &points[chosen[0]])))
        .collect();
    while chosen.len() < k {
        dist.iter_mut().for_each(|d| *d = d.max(0.0));
        for &c in &chosen {
            dist[c] = 0.0;
        }
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            dist[i] = dist[i].min(2.0 * (1.0 - dot(p, &points[next])));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let s = dot(p, centroid);
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

/// Spherical k-means: points go to the centroid of highest cosine, centroids
/// are normalized member means. Stops when no label changes or after `max_iter` rounds.
pub fn spherical_kmeans<V: AsRef<[f64]>>(
    vectors: &[V],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterAssignment> {
    let n = vectors.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points {n}"
        )));
    }
    let points = vectors
        .iter()
        .map(|v| unit(v.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(&points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut scores = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, s) = nearest(p, &centroids);
            scores[i] = s;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        // refill empty clusters with the worst-fitting point of a multi-member cluster
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)))
                .expect("k <= n leaves a multi-member cluster");
            counts[labels[donor]] -= 1;
            counts[c] += 1;
            labels[donor] = c;
            scores[donor] = 1.0;
            centroids[c] = points[donor].clone();
            changed = true;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, mut s) in sums.into_iter().enumerate() {
            if normalize_into(&mut s) {
                centroids[c] = s;
            }
        }
    }
    Ok(ClusterAssignment::from_raw(&labels))
}

/// Sum over points of the cosine to their cluster's normalized mean.
pub fn cohesion<V: AsRef<[f64]>>(vectors: &[V], a: &ClusterAssignment) -> Result<f64> {
    let points = vectors
        .iter()
        .map(|v| unit(v.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; a.k()];
    for (p, &l) in points.iter().zip(a.labels()) {
        sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    for s in sums.iter_mut() {
        normalize_into(s);
    }
    Ok(points
        .iter()
        .zip(a.labels())
        .map(|(p, &l)| dot(p, &sums[l]))
        .sum())
}

/// Best of `restarts` seeded runs by [`cohesion`]; run `r` uses seed `seed + r`.
pub fn spherical_kmeans_restarts<V: AsRef<[f64]>>(
    vectors: &[V],
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<ClusterAssignment> {
    let mut best: Option<(f64, ClusterAssignment)> = None;
    for r in 0..restarts.max(1) as u64 {
        let a = spherical_kmeans(vectors, k, seed.wrapping_add(r), max_iter)?;
        let c = cohesion(vectors, &a)?;
        if best.as_ref().is_none_or(|(b, _)| c > *b + 1e-12) {
            best = Some((c, a));
        }
    }
    Ok(best.expect("at least one run").1)
}
