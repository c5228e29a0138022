use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::sq_dist_f64;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist_f64(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist_f64(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point coincides with a centroid already.
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist_f64(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations. A cluster left empty
/// takes over the point farthest from its own centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints { needed: k, got: points.len() });
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![0; points.len()];
    let mut iterations = 0;

    loop {
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            (assignments[i], dists[i]) = nearest(p, &centroids);
        }
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let victim = (0..points.len())
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("more points than clusters");
            counts[assignments[victim]] -= 1;
            assignments[victim] = empty;
            counts[empty] = 1;
            dists[victim] = 0.0;
        }

        let mut next = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, v) in next[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, &n) in next.iter_mut().zip(&counts) {
            for v in c.iter_mut() {
                *v /= n as f64;
            }
        }
        let shift = centroids.iter().zip(&next).map(|(a, b)| sq_dist_f64(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        iterations += 1;
        if shift < SHIFT_TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }

    let inertia = points.iter().zip(&assignments).map(|(p, &a)| sq_dist_f64(p, &centroids[a])).sum();
    Ok(KMeans { centroids, assignments, inertia, iterations })
}
