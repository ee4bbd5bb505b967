//! Baseline selectors: uncertainty scores (entropy, margin, source-weighted
//! entropy), greedy k-center coverage, gradient-embedding kmeans++ picking,
//! entropy-weighted kmeans, and greedy MMD minimization.

use crate::error::Result;
use crate::numerics::{euclidean, Vector};
use crate::rng::Rng;

use super::kmeans::{nearest_distinct_points, weighted_kmeans};
use super::ScoredPool;

/// Indices of the pool sorted by (score desc, id asc), truncated to b.
pub fn top_by_score(pool: &ScoredPool, scores: &[f64], b: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.samples.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(pool.samples[i].id.cmp(&pool.samples[j].id))
    });
    order.truncate(b);
    order
}

pub fn select_random(pool: &ScoredPool, b: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.samples.len()).collect();
    rng.shuffle(&mut order);
    order.truncate(b);
    order
}

pub fn select_entropy(pool: &ScoredPool, b: usize) -> Vec<usize> {
    let scores: Vec<f64> = pool.samples.iter().map(|s| s.entropy).collect();
    top_by_score(pool, &scores, b)
}

/// Smallest margins first.
pub fn select_margin(pool: &ScoredPool, b: usize) -> Vec<usize> {
    let scores: Vec<f64> = pool.samples.iter().map(|s| -s.margin).collect();
    top_by_score(pool, &scores, b)
}

/// Augmented entropy G = (1 - q_S)/q_S * H, preferring samples the
/// discriminator already places away from the source.
pub fn aada_score(entropy: f64, q_source: f64) -> f64 {
    (1.0 - q_source) / q_source * entropy
}

pub fn select_aada(pool: &ScoredPool, b: usize) -> Vec<usize> {
    let scores: Vec<f64> = pool
        .samples
        .iter()
        .map(|s| aada_score(s.entropy, s.source_prob))
        .collect();
    top_by_score(pool, &scores, b)
}

/// Greedy k-center on pool features. `seeds` are already-covered points
/// (the labeled set); with no seeds the first pick is the point minimizing
/// the covering radius over the pool, then greedy farthest-first continues.
pub fn kcenter_greedy(points: &[Vector], seeds: &[Vector], b: usize) -> Vec<usize> {
    let n = points.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(b);
    let mut cover: Vec<f64> = if seeds.is_empty() {
        vec![f64::INFINITY; n]
    } else {
        points
            .iter()
            .map(|p| {
                seeds
                    .iter()
                    .map(|s| euclidean(p, s))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };

    if seeds.is_empty() && b > 0 {
        // Best single center: minimax over candidate points.
        let mut best = 0;
        let mut best_radius = f64::INFINITY;
        for i in 0..n {
            let radius = points
                .iter()
                .map(|p| euclidean(&points[i], p))
                .fold(0.0, f64::max);
            if radius < best_radius {
                best_radius = radius;
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..n {
            cover[i] = cover[i].min(euclidean(&points[i], &points[best]));
        }
    }

    while chosen.len() < b {
        let mut far = None;
        let mut far_d = -1.0;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if cover[i] > far_d {
                far_d = cover[i];
                far = Some(i);
            }
        }
        let idx = far.expect("kcenter_greedy: b exceeds pool size");
        chosen.push(idx);
        for i in 0..n {
            cover[i] = cover[i].min(euclidean(&points[i], &points[idx]));
        }
    }
    chosen
}

pub fn select_coreset(pool: &ScoredPool, b: usize, labeled: &[Vector]) -> Vec<usize> {
    let points: Vec<Vector> = pool.samples.iter().map(|s| s.z.clone()).collect();
    kcenter_greedy(&points, labeled, b)
}

/// Gradient embedding (p - onehot(pseudo)) x z, flattened row-major.
pub fn badge_embedding(probs: &Vector, pseudo_label: usize, z: &Vector) -> Vector {
    let mut e = Vector::zeros(probs.len() * z.len());
    for k in 0..probs.len() {
        let g = probs[k] - if k == pseudo_label { 1.0 } else { 0.0 };
        for j in 0..z.len() {
            e[k * z.len() + j] = g * z[j];
        }
    }
    e
}

/// kmeans++ init over gradient embeddings: start at the max-norm embedding,
/// then sample proportionally to squared distance from the chosen set.
pub fn select_badge(pool: &ScoredPool, b: usize, rng: &mut Rng) -> Vec<usize> {
    let n = pool.samples.len();
    let embeddings: Vec<Vector> = pool
        .samples
        .iter()
        .map(|s| badge_embedding(&s.probs, s.pseudo_label, &s.z))
        .collect();
    let mut chosen = Vec::with_capacity(b);
    if b == 0 {
        return chosen;
    }
    let mut first = 0;
    let mut best = -1.0;
    for (i, e) in embeddings.iter().enumerate() {
        let norm = crate::numerics::l2_norm(e);
        if norm > best {
            best = norm;
            first = i;
        }
    }
    chosen.push(first);
    let mut d2: Vec<f64> = embeddings
        .iter()
        .map(|e| {
            let d = euclidean(e, &embeddings[first]);
            d * d
        })
        .collect();
    while chosen.len() < b {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 && total.is_finite() {
            rng.weighted_index(&d2)
        } else {
            (0..n)
                .find(|i| !chosen.contains(i))
                .expect("select_badge: b exceeds pool size")
        };
        chosen.push(idx);
        for i in 0..n {
            let d = euclidean(&embeddings[i], &embeddings[idx]);
            d2[i] = d2[i].min(d * d);
        }
    }
    chosen
}

/// Entropy-weighted kmeans; the sample nearest each centroid is selected.
pub fn select_clue(pool: &ScoredPool, b: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let points: Vec<Vector> = pool.samples.iter().map(|s| s.z.clone()).collect();
    let mut weights: Vec<f64> = pool.samples.iter().map(|s| s.entropy).collect();
    if weights.iter().all(|&w| w <= 0.0) {
        log::warn!("clue: all entropies zero, falling back to uniform weights");
        weights = vec![1.0; points.len()];
    }
    let result = weighted_kmeans(&points, &weights, b, rng)?;
    Ok(nearest_distinct_points(&points, &result.centroids))
}

/// Greedily grow a subset minimizing the RBF-kernel MMD^2 to the full pool.
/// Bandwidth is the median pairwise distance (median heuristic).
pub fn select_greedy_mmd(pool: &ScoredPool, b: usize) -> Vec<usize> {
    let points: Vec<&Vector> = pool.samples.iter().map(|s| &s.z).collect();
    greedy_mmd_indices(&points, b).0
}

/// Returns (chosen indices, final MMD^2 without the constant pool term
/// plus that constant folded in, i.e. the true MMD^2).
pub fn greedy_mmd_indices(points: &[&Vector], b: usize) -> (Vec<usize>, f64) {
    let n = points.len();
    assert!(b <= n, "greedy_mmd: b exceeds pool size");

    // Median-heuristic bandwidth.
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(euclidean(points[i], points[j]));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sigma = if dists.is_empty() {
        1.0
    } else {
        let mid = dists.len() / 2;
        let median = if dists.len() % 2 == 0 {
            0.5 * (dists[mid - 1] + dists[mid])
        } else {
            dists[mid]
        };
        if median > 0.0 {
            median
        } else {
            1.0
        }
    };

    let kernel = |i: usize, j: usize| -> f64 {
        let d = euclidean(points[i], points[j]);
        (-d * d / (2.0 * sigma * sigma)).exp()
    };
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = kernel(i, j);
        }
    }
    let row_sum: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i * n + j]).sum()).collect();
    let pool_term: f64 = row_sum.iter().sum::<f64>() / (n * n) as f64;

    let mut chosen: Vec<usize> = Vec::with_capacity(b);
    let mut in_set = vec![false; n];
    let mut cross: Vec<f64> = vec![0.0; n]; // sum over chosen of k(., a)
    let mut s_sum = 0.0; // sum over chosen x chosen of k
    let mut r_sel = 0.0; // sum over chosen of row_sum
    let mut last_mmd = pool_term; // empty set treated as mmd of pool vs nothing

    while chosen.len() < b {
        let t = (chosen.len() + 1) as f64;
        let mut best: Option<(f64, usize)> = None;
        for c in 0..n {
            if in_set[c] {
                continue;
            }
            let term1 = (s_sum + 2.0 * cross[c] + k[c * n + c]) / (t * t);
            let term2 = -2.0 * (r_sel + row_sum[c]) / (t * n as f64);
            let mmd = term1 + term2 + pool_term;
            let better = match best {
                None => true,
                Some((bm, _)) => mmd < bm,
            };
            if better {
                best = Some((mmd, c));
            }
        }
        let (mmd, idx) = best.unwrap();
        s_sum += 2.0 * cross[idx] + k[idx * n + idx];
        r_sel += row_sum[idx];
        for c in 0..n {
            cross[c] += k[idx * n + c];
        }
        in_set[idx] = true;
        chosen.push(idx);
        last_mmd = mmd;
    }
    (chosen, last_mmd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aada_equilibrium_factor() {
        let h = 1.2;
        assert!((aada_score(h, 0.5) - h).abs() < 1e-15);
        assert!(aada_score(h, 0.999999) < 1e-5);
        assert!(aada_score(h, 0.1) > h);
    }

    #[test]
    fn kcenter_singleton_matches_brute_force() {
        // Points {0,1,10}: the covering-radius-minimal singleton is 1.
        let points = vec![
            Vector::from_vec(vec![0.0]),
            Vector::from_vec(vec![1.0]),
            Vector::from_vec(vec![10.0]),
        ];
        let chosen = kcenter_greedy(&points, &[], 1);
        assert_eq!(chosen, vec![1]);
    }

    #[test]
    fn kcenter_respects_seeds() {
        let points = vec![
            Vector::from_vec(vec![0.0]),
            Vector::from_vec(vec![10.0]),
            Vector::from_vec(vec![10.5]),
        ];
        let seeds = vec![Vector::from_vec(vec![0.0])];
        // The farthest point from the seed set goes first.
        let chosen = kcenter_greedy(&points, &seeds, 1);
        assert_eq!(chosen, vec![2]);
    }
}
