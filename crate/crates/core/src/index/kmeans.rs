//! Seeded Lloyd's k-means, used as the IVF coarse quantizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::vector::squared_l2;

/// Movement (Euclidean, per centroid) below which iteration stops early.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    /// Lloyd iterations actually run.
    pub iterations: usize,
}

/// Index of the centroid nearest to `point`, lowest index on ties, with its
/// squared distance.
pub fn nearest_centroid(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_l2(c, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Clusters `points` into `k` groups.
///
/// Initial centroids are `k` distinct points sampled with a ChaCha8 stream
/// seeded from `seed`. A centroid that ends an iteration with no members is
/// moved onto the point farthest from its own centroid. Callers guarantee
/// `1 <= k <= points.len()` and a uniform dimension.
pub fn kmeans(points: &[&[f64]], k: usize, max_iters: usize, seed: u64) -> KMeans {
    assert!(
        k >= 1 && k <= points.len(),
        "k must be within 1..=points.len()"
    );
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = rand::seq::index::sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].to_vec())
        .collect();

    let mut iterations = 0;
    let mut assignment = vec![0usize; points.len()];
    let mut assigned_dist = vec![0f64; points.len()];
    while iterations < max_iters {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest_centroid(&centroids, p);
            assignment[i] = c;
            assigned_dist[i] = d;
        }

        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p.iter()).for_each(|(s, x)| *s += x);
        }

        // Farthest points first, for reseeding empty clusters.
        let mut by_distance: Vec<usize> = (0..points.len()).collect();
        by_distance.sort_by(|&a, &b| {
            assigned_dist[b]
                .total_cmp(&assigned_dist[a])
                .then(a.cmp(&b))
        });
        let mut reseed = by_distance.into_iter();

        let mut movement = 0f64;
        for c in 0..k {
            let updated = if counts[c] == 0 {
                let far = reseed.next().expect("k <= number of points");
                points[far].to_vec()
            } else {
                let n = counts[c] as f64;
                sums[c].iter().map(|s| s / n).collect()
            };
            movement = movement.max(squared_l2(&centroids[c], &updated).sqrt());
            centroids[c] = updated;
        }
        if movement < CONVERGENCE_TOLERANCE {
            break;
        }
    }
    KMeans {
        centroids,
        iterations,
    }
}
