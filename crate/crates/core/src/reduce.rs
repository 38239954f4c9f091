//! Per-class k-means reduction of an instance pool to representative points.

use std::collections::HashSet;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{InstancePool, Label, LabeledSample, Source};
use crate::error::{Error, Result};
use crate::kernel::sq_dist;

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionSpec {
    /// Clusters per class.
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Independent k-means++ starts; the lowest within-cluster sum of squares wins.
    pub restarts: usize,
    /// Replace each centroid by the nearest member instance.
    pub snap_to_medoid: bool,
}

impl Default for ReductionSpec {
    fn default() -> Self {
        ReductionSpec {
            k: 100,
            max_iter: 100,
            seed: 0,
            restarts: 1,
            snap_to_medoid: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub dim: usize,
    /// Row-major `k × dim`.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after seeding and after each Lloyd iteration.
    pub wcss_history: Vec<f64>,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn wcss(&self) -> f64 {
        *self.wcss_history.last().unwrap_or(&0.0)
    }
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = points
        .chunks_exact(dim)
        .map(|p| sq_dist(p, &centroids[..dim]))
        .collect();
    while centroids.len() < k * dim {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // all remaining mass is zero: fall back to any point
            Err(_) => rng.random_range(0..n),
        };
        let start = centroids.len();
        centroids.extend_from_slice(&points[next * dim..(next + 1) * dim]);
        let center = centroids[start..].to_vec();
        for (d, p) in d2.iter_mut().zip(points.chunks_exact(dim)) {
            *d = d.min(sq_dist(p, &center));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding on `n × dim` row-major points.
/// Requires `1 ≤ k ≤ n`.
pub fn kmeans(points: &[f64], dim: usize, k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = points.len() / dim;
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= n (k={k}, n={n})");
    let mut centroids = plus_plus_seeds(points, dim, k, rng);

    let assign = |centroids: &[f64]| -> Vec<(usize, f64)> {
        points
            .par_chunks_exact(dim)
            .map(|p| nearest(p, centroids, dim))
            .collect()
    };

    let mut nearest_now = assign(&centroids);
    let mut assignments: Vec<usize> = nearest_now.iter().map(|a| a.0).collect();
    let mut wcss_history = vec![nearest_now.iter().map(|a| a.1).sum()];

    for _ in 0..max_iter {
        // repair empty clusters with the point farthest from its centroid
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&i, &j| nearest_now[i].1.total_cmp(&nearest_now[j].1).then(j.cmp(&i)));
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                assignments[i] = c;
                counts[c] = 1;
                nearest_now[i] = (c, 0.0);
            }
        }

        // update
        let mut sums = vec![0.0; k * dim];
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let c = assignments[i];
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *dst = s * inv;
            }
        }

        // assignment
        nearest_now = assign(&centroids);
        let next: Vec<usize> = nearest_now.iter().map(|a| a.0).collect();
        let wcss: f64 = nearest_now.iter().map(|a| a.1).sum();
        let converged = next == assignments;
        assignments = next;
        wcss_history.push(wcss);
        if converged {
            break;
        }
    }

    KMeansResult {
        dim,
        centroids,
        assignments,
        wcss_history,
    }
}

fn snap_to_members(result: &mut KMeansResult, points: &[f64]) {
    let dim = result.dim;
    for c in 0..result.k() {
        let center = result.centroid(c).to_vec();
        let best = points
            .chunks_exact(dim)
            .enumerate()
            .filter(|(i, _)| result.assignments[*i] == c)
            .min_by(|a, b| sq_dist(a.1, &center).total_cmp(&sq_dist(b.1, &center)));
        if let Some((_, p)) = best {
            result.centroids[c * dim..(c + 1) * dim].copy_from_slice(p);
        }
    }
}

/// Representative instances of length `ℓ`: k-means per class (positive class
/// first), or the class's distinct instances verbatim when there are at most
/// `k` of them.
pub fn kmeans_reduce(sample: &LabeledSample, length: usize, spec: &ReductionSpec) -> Result<InstancePool> {
    if spec.k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut points_by_class: Vec<(Label, Vec<f64>, Vec<Source>)> = Vec::new();
    for (class_idx, label) in [Label::Positive, Label::Negative].into_iter().enumerate() {
        let mut seen = HashSet::new();
        let mut points = Vec::new();
        let mut sources = Vec::new();
        for (b, bag) in sample.bags().iter().enumerate() {
            if sample.label(b) != label {
                continue;
            }
            let Some(group) = bag.group(length) else { continue };
            for (j, x) in group.iter().enumerate() {
                let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
                if seen.insert(key) {
                    points.extend_from_slice(x);
                    sources.push(Source::Bag { bag: b, instance: j });
                }
            }
        }
        if sources.is_empty() {
            warn!("class {label:?} has no length-{length} instances; it contributes no representatives");
            continue;
        }
        if sources.len() > spec.k {
            let mut best: Option<KMeansResult> = None;
            for restart in 0..spec.restarts.max(1) {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(((length as u64) << 8) | ((restart as u64) << 1) | class_idx as u64);
                let result = kmeans(&points, length, spec.k, spec.max_iter, &mut rng);
                if best.as_ref().is_none_or(|b| result.wcss() < b.wcss()) {
                    best = Some(result);
                }
            }
            let mut best = best.expect("at least one restart");
            if spec.snap_to_medoid {
                snap_to_members(&mut best, &points);
            }
            sources = (0..spec.k)
                .map(|cluster| Source::Centroid { label, cluster })
                .collect();
            points = best.centroids;
        }
        points_by_class.push((label, points, sources));
    }
    let candidates = points_by_class.iter().flat_map(|(_, points, sources)| {
        points.chunks_exact(length).zip(sources.iter().copied())
    });
    InstancePool::from_candidates(length, candidates)
}
