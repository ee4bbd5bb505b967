//! Weighted Lloyd iterations with kmeans++-style weighted seeding. Sample
//! weights scale each point's pull on its centroid; zero-weight points are
//! inert (they never shift a centroid and are never picked as seeds).

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::rng::Rng;

pub const MAX_ITER: usize = 100;

#[derive(Clone, Debug)]
pub struct KmeansResult {
    pub centroids: Vec<Vector>,
    pub assignment: Vec<usize>,
    /// Weighted within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &Vector, b: &Vector) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (x - y) * (x - y);
    }
    acc
}

fn nearest(point: &Vector, centroids: &[Vector]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// kmeans++ seeding with sample weights: the first seed is drawn with
/// probability proportional to w_i, later seeds proportional to
/// w_i * D(i)^2 where D is the distance to the closest chosen seed.
fn seed_centroids(points: &[Vector], weights: &[f64], k: usize, rng: &mut Rng) -> Vec<Vector> {
    let n = points.len();
    let mut centroids: Vec<Vector> = Vec::with_capacity(k);
    centroids.push(points[rng.weighted_index(weights)].clone());

    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let mass: Vec<f64> = (0..n).map(|i| weights[i] * d2[i]).collect();
        let total: f64 = mass.iter().sum();
        let idx = if total > 0.0 && total.is_finite() {
            rng.weighted_index(&mass)
        } else {
            // All positive-weight points already coincide with seeds; fall
            // back to the lowest-index positive-weight point.
            (0..n)
                .find(|&i| weights[i] > 0.0)
                .expect("seed_centroids: no positive weights")
        };
        centroids.push(points[idx].clone());
        for i in 0..n {
            let d = sq_dist(&points[i], centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Weighted Lloyd clustering. Converges when assignments stabilize or after
/// `MAX_ITER` iterations. A cluster whose member weight totals zero is
/// reseeded at the point maximizing w_i * dist(i, nearest centroid)^2.
pub fn weighted_kmeans(
    points: &[Vector],
    weights: &[f64],
    k: usize,
    rng: &mut Rng,
) -> Result<KmeansResult> {
    let n = points.len();
    assert_eq!(n, weights.len(), "weighted_kmeans: length mismatch");
    if k == 0 {
        return Err(Error::Selection("kmeans: k must be >= 1".into()));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if k > positive {
        return Err(Error::Selection(format!(
            "kmeans: k={k} exceeds {positive} points with nonzero weight"
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Selection(
            "kmeans: weights must be finite and nonnegative".into(),
        ));
    }

    let mut centroids = seed_centroids(points, weights, k, rng);
    let mut assignment = vec![usize::MAX; n];
    let mut objective_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..MAX_ITER {
        iterations += 1;
        let mut changed = false;
        let mut objective = 0.0;
        for i in 0..n {
            let (c, d) = nearest(&points[i], &centroids);
            objective += weights[i] * d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        objective_trace.push(objective);
        if !changed {
            break;
        }

        let dim = points[0].len();
        let mut sums = vec![Vector::zeros(dim); k];
        let mut mass = vec![0.0; k];
        for i in 0..n {
            sums[assignment[i]].axpy(weights[i], &points[i]);
            mass[assignment[i]] += weights[i];
        }
        for c in 0..k {
            if mass[c] > 0.0 {
                let mut centroid = sums[c].clone();
                centroid.scale(1.0 / mass[c]);
                centroids[c] = centroid;
            } else {
                // Empty (or weightless) cluster: reseed at the
                // highest-weighted farthest point.
                let mut best = None;
                let mut best_score = 0.0;
                for i in 0..n {
                    let (_, d) = nearest(&points[i], &centroids);
                    let score = weights[i] * d;
                    if score > best_score {
                        best_score = score;
                        best = Some(i);
                    }
                }
                if let Some(i) = best {
                    centroids[c] = points[i].clone();
                }
            }
        }
    }

    Ok(KmeansResult {
        centroids,
        assignment,
        objective_trace,
        iterations,
    })
}

/// For each centroid (in order), the index of the nearest not-yet-taken
/// point; distance ties break toward the lower index.
pub fn nearest_distinct_points(points: &[Vector], centroids: &[Vector]) -> Vec<usize> {
    let mut taken = vec![false; points.len()];
    let mut out = Vec::with_capacity(centroids.len());
    for centroid in centroids {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq_dist(p, centroid);
            let better = match best {
                None => true,
                Some((bd, _)) => d < bd,
            };
            if better {
                best = Some((d, i));
            }
        }
        let (_, idx) = best.expect("nearest_distinct_points: more centroids than points");
        taken[idx] = true;
        out.push(idx);
    }
    out
}
