use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingSpace, InductionConfig, InductionError};

/// Number of farthest-point restarts; the lowest-inertia run is kept.
const RESTARTS: usize = 8;
/// Below this many k-subsets every subset of points seeds one run.
const EXHAUSTIVE_SEEDS: usize = 2000;
const MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub users: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per entry of `users`.
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

impl ClusterModel {
    pub fn cluster_of(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == user_id).map(|i| self.assignment[i])
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn farthest_point_seeds(points: &[Vec<f64>], k: usize, first: usize) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[first].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let mut next = 0;
        for i in 1..points.len() {
            if min_d[i] > min_d[next] {
                next = i;
            }
        }
        centroids.push(points[next].clone());
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    centroids
}

fn means(points: &[Vec<f64>], assignment: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    (sums, counts)
}

/// Moves the point farthest from its centroid (taken from a cluster with
/// more than one member) into each empty cluster.
fn reseed_empty(points: &[Vec<f64>], assignment: &mut [usize], k: usize) {
    loop {
        let (centroids, counts) = means(points, assignment, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[assignment[i]] > 1 {
                let d = sq_dist(p, &centroids[assignment[i]]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        match far {
            Some(i) => assignment[i] = empty,
            None => return,
        }
    }
}

/// Hartigan refinement: moves single points between clusters while a move
/// strictly lowers inertia. Lloyd fixed points are often not stable under
/// such moves.
fn hartigan(points: &[Vec<f64>], assignment: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let (mut centroids, mut counts) = means(points, assignment, k);
    for _ in 0..MAX_ITERATIONS {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let removal = na / (na - 1.0) * sq_dist(p, &centroids[a]);
            let mut best = None;
            let mut best_gain = 1e-12 * (1.0 + removal);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let gain = removal - nb / (nb + 1.0) * sq_dist(p, &centroids[b]);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(b);
                }
            }
            if let Some(b) = best {
                let (na, nb) = (counts[a] as f64, counts[b] as f64);
                for d in 0..p.len() {
                    centroids[a][d] = (centroids[a][d] * na - p[d]) / (na - 1.0);
                    centroids[b][d] = (centroids[b][d] * nb + p[d]) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                assignment[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    // recompute exactly to shed accumulated rounding
    means(points, assignment, k).0
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let k = centroids.len();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        reseed_empty(points, &mut assignment, k);
        centroids = means(points, &assignment, k).0;
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignment || iterations >= MAX_ITERATIONS {
            break;
        }
        assignment = next;
    }
    let centroids = hartigan(points, &mut assignment, k);
    KMeansResult {
        inertia: inertia(points, &centroids, &assignment),
        centroids,
        assignment,
        iterations,
    }
}

fn n_choose_k(n: usize, k: usize) -> Option<usize> {
    let mut c: usize = 1;
    for i in 0..k.min(n - k) {
        c = c.checked_mul(n - i)? / (i + 1);
    }
    Some(c)
}

/// Seeds from every k-subset of points when there are few enough.
fn exhaustive(points: &[Vec<f64>], k: usize) -> Option<KMeansResult> {
    if n_choose_k(points.len(), k)? > EXHAUSTIVE_SEEDS {
        return None;
    }
    let mut best: Option<KMeansResult> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let run = lloyd(points, idx.iter().map(|&i| points[i].clone()).collect());
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
        // next combination in lexicographic order
        let Some(i) = (0..k).rev().find(|&i| idx[i] < points.len() - k + i) else {
            return best;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Lloyd's k-means polished by single-point moves. Small inputs are
/// seeded from every k-subset of points. Larger ones get several
/// farthest-point restarts differing in a seeded first centre. The lowest
/// inertia wins and ties keep the earlier run. Requires
/// `1 <= k <= points.len()`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> KMeansResult {
    assert!(k >= 1 && k <= points.len(), "k must lie in 1..=n");
    if let Some(best) = exhaustive(points, k) {
        return best;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restarts = RESTARTS.min(points.len());
    let firsts = sample(&mut rng, points.len(), restarts);
    let mut best: Option<KMeansResult> = None;
    for first in firsts.iter() {
        let run = lloyd(points, farthest_point_seeds(points, k, first));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

pub fn cluster_users(space: &EmbeddingSpace, config: &InductionConfig) -> Result<ClusterModel, InductionError> {
    let k = config.n_clusters;
    if space.users.len() < k || k == 0 {
        return Err(InductionError::TooFewUsers {
            users: space.users.len(),
            clusters: k,
        });
    }
    let points: Vec<Vec<f64>> = (0..space.users.len())
        .map(|u| space.user_vector(u).iter().map(|&x| x as f64).collect())
        .collect();
    let result = kmeans(&points, k, config.seed);
    Ok(ClusterModel {
        users: space.users.clone(),
        centroids: result.centroids,
        assignment: result.assignment,
        inertia: result.inertia,
    })
}
