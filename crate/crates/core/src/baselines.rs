//! Reference clusterers: K-Means on attributes and spatial K-Means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::GeoDataset;
use crate::error::{Result, SticcError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Weight of the standardized coordinates; `0` clusters on attributes only.
    pub coord_weight: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iter: 300, seed, coord_weight: 0.0 }
    }

    pub fn spatial(k: usize, seed: u64) -> Self {
        Self { coord_weight: 1.0, ..Self::new(k, seed) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// K-Means on a dataset. Attributes are standardized; with `coord_weight > 0`
/// the standardized coordinates scaled by the weight are appended.
pub fn kmeans(ds: &GeoDataset, cfg: &KMeansConfig) -> Result<Vec<usize>> {
    if !(cfg.coord_weight >= 0.0 && cfg.coord_weight.is_finite()) {
        return Err(SticcError::Parameter(format!("coord_weight must be >= 0, got {}", cfg.coord_weight)));
    }
    let (std_ds, _) = ds.standardized();
    let coord_scale = coordinate_scaling(ds);
    let rows: Vec<Vec<f64>> = std_ds
        .points()
        .iter()
        .zip(ds.points())
        .map(|(p, raw)| {
            let mut row = p.attrs.clone();
            if cfg.coord_weight > 0.0 {
                for (c, (mean, sd)) in raw.coord.iter().zip(&coord_scale) {
                    row.push(cfg.coord_weight * (c - mean) / sd);
                }
            }
            row
        })
        .collect();
    Ok(kmeans_vectors(&rows, cfg.k, cfg.max_iter, cfg.seed)?.labels)
}

fn coordinate_scaling(ds: &GeoDataset) -> Vec<(f64, f64)> {
    let n = ds.len() as f64;
    (0..2)
        .map(|axis| {
            let mean = ds.points().iter().map(|p| p.coord[axis]).sum::<f64>() / n;
            let var = ds.points().iter().map(|p| (p.coord[axis] - mean).powi(2)).sum::<f64>() / n;
            (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations on raw vectors.
pub fn kmeans_vectors(rows: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<KMeansResult> {
    let n = rows.len();
    if n == 0 {
        return Err(SticcError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(SticcError::Parameter(format!("K must be in 1..={n}, got {k}")));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(SticcError::Parameter("ragged input rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(rows, k, &mut rng);
    let mut labels: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();
    fill_empty(rows, &mut labels, &mut centroids);
    let mut wcss_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=max_iter.max(1) {
        iterations = it;
        centroids = update_centroids(rows, &labels, k, dim);
        let mut next: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();
        fill_empty(rows, &mut next, &mut centroids);
        let wcss = next.iter().zip(rows).map(|(&l, r)| sq_dist(r, &centroids[l])).sum();
        wcss_trace.push(wcss);
        let done = next == labels;
        labels = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(KMeansResult { labels, centroids, wcss_trace, iterations, converged })
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &rows[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // All remaining points coincide with a centre; take unused indices.
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &rows[next]));
        }
    }
    chosen.into_iter().map(|i| rows[i].clone()).collect()
}

fn update_centroids(rows: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(r) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        } else {
            s.iter_mut().for_each(|v| *v = f64::NAN);
        }
    }
    sums
}

/// Moves the point farthest from its centroid into each empty cluster.
fn fill_empty(rows: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return;
        };
        let far = (0..rows.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(&rows[a], &centroids[labels[a]]);
                let db = sq_dist(&rows[b], &centroids[labels[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two members");
        let old = labels[far];
        labels[far] = empty;
        centroids[empty] = rows[far].clone();
        let members: Vec<&Vec<f64>> = rows.iter().zip(labels.iter()).filter(|(_, &l)| l == old).map(|(r, _)| r).collect();
        let m = members.len() as f64;
        for (d, v) in centroids[old].iter_mut().enumerate() {
            *v = members.iter().map(|r| r[d]).sum::<f64>() / m;
        }
    }
}
