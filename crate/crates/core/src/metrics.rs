//! Evaluation: per-target accuracy, normalized domain distance, and 2-D PCA
//! projections of pools for export.

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::numerics::{dot, euclidean, Matrix, Vector};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of argmax-correct predictions over `samples`.
pub fn accuracy(model: &ModelState, samples: &[&Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Eval("accuracy over an empty sample set".into()));
    }
    let correct = samples
        .iter()
        .filter(|s| {
            let (_, logits, _) = model.forward(&s.x);
            argmax(&logits) == s.label
        })
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Per-target accuracies (index 0 = target domain 1) and their macro
/// average.
pub fn per_target_accuracy(
    model: &ModelState,
    test: &crate::dataset::TestSet,
) -> Result<(Vec<f64>, f64)> {
    let mut accs = Vec::with_capacity(test.n_targets);
    for t in 1..=test.n_targets {
        let samples: Vec<&Sample> = test.domain(t).collect();
        accs.push(accuracy(model, &samples)?);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok((accs, mean))
}

/// Mean pairwise Euclidean distance over the full cross product (ordered
/// pairs, self-pairs included when the sets coincide).
pub fn domain_distance(a: &[Vector], b: &[Vector]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Eval("domain distance of an empty set".into()));
    }
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += euclidean(x, y);
        }
    }
    Ok(total / (a.len() * b.len()) as f64)
}

/// Mean distance over unordered within-set pairs; the normalization
/// denominator.
pub fn mean_pairwise_distance(xs: &[Vector]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::Eval(
            "pairwise distance needs at least 2 samples".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            total += euclidean(&xs[i], &xs[j]);
        }
    }
    let n = xs.len() as f64;
    Ok(total * 2.0 / (n * (n - 1.0)))
}

/// Cross-domain distance normalized by the mean intra-source pairwise
/// distance; invariant under uniform feature scaling.
pub fn normalized_domain_distance(
    a: &[Vector],
    b: &[Vector],
    source: &[Vector],
) -> Result<f64> {
    let denom = mean_pairwise_distance(source)?;
    if denom == 0.0 {
        return Err(Error::Eval(
            "all source features identical: normalization denominator is zero".into(),
        ));
    }
    Ok(domain_distance(a, b)? / denom)
}

/// Symmetric (N+1)x(N+1) matrix of normalized distances. Off-diagonal
/// entries use the ordered-cross-pair mean; diagonal entries use the
/// unordered within-set pair mean, so the (source, source) entry is exactly
/// 1 by construction.
#[derive(Clone, Debug)]
pub struct DomainDistanceMatrix {
    pub n_domains: usize,
    pub values: Vec<f64>,
    /// The D(S,S) denominator every entry was divided by.
    pub source_self: f64,
}

impl DomainDistanceMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n_domains + b]
    }

    /// Mean over off-diagonal unordered pairs: the scalar alignment summary.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n_domains;
        let mut total = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                total += self.get(a, b);
            }
        }
        total / (n * (n - 1) / 2) as f64
    }
}

/// Build the normalized distance matrix from per-domain feature sets
/// (index 0 = source).
pub fn domain_distance_matrix(features: &[Vec<Vector>]) -> Result<DomainDistanceMatrix> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Eval("need source plus at least one target".into()));
    }
    let denom = mean_pairwise_distance(&features[0])?;
    if denom == 0.0 {
        return Err(Error::Eval(
            "all source features identical: normalization denominator is zero".into(),
        ));
    }
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let d = if a == b {
                mean_pairwise_distance(&features[a])?
            } else {
                domain_distance(&features[a], &features[b])?
            };
            values[a * n + b] = d / denom;
            values[b * n + a] = d / denom;
        }
    }
    Ok(DomainDistanceMatrix {
        n_domains: n,
        values,
        source_self: denom,
    })
}

// ── PCA ──────────────────────────────────────────────────────────────────

const POWER_ITERS: usize = 200;
const POWER_TOL: f64 = 1e-9;

/// Top eigenvector of a symmetric PSD matrix by power iteration, kept
/// orthogonal to `ortho` (already-extracted components). Returns the zero
/// vector if the matrix annihilates the iterate (zero variance).
fn power_iteration(m: &Matrix, ortho: &[&Vector], rng_seed: u64) -> (Vector, f64) {
    let n = m.rows();
    let mut rng = crate::rng::Rng::seed_from_u64(rng_seed);
    let mut v: Vector = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let project_out = |v: &mut Vector| {
        for u in ortho {
            let c = dot(v, u);
            v.axpy(-c, u);
        }
    };
    project_out(&mut v);
    let norm = crate::numerics::l2_norm(&v);
    if norm < 1e-300 {
        return (Vector::zeros(n), 0.0);
    }
    v.scale(1.0 / norm);
    for _ in 0..POWER_ITERS {
        let mut mv = crate::numerics::matvec(m, &v);
        project_out(&mut mv);
        let norm = crate::numerics::l2_norm(&mv);
        if norm < 1e-300 {
            return (Vector::zeros(n), 0.0);
        }
        let mut next = mv;
        next.scale(1.0 / norm);
        let mut delta = 0.0;
        for i in 0..n {
            delta += (next[i] - v[i]) * (next[i] - v[i]);
        }
        v = next;
        if delta.sqrt() < POWER_TOL {
            break;
        }
    }
    let mv = crate::numerics::matvec(m, &v);
    let eigenvalue = dot(&v, &mv);
    (v, eigenvalue)
}

fn fix_sign(v: &mut Vector) {
    for i in 0..v.len() {
        if v[i] != 0.0 {
            if v[i] < 0.0 {
                v.scale(-1.0);
            }
            return;
        }
    }
}

/// Mean-centered projection onto the top-2 principal components.
/// Returns per-sample (pc1, pc2). Degenerate directions project to zero.
pub fn pca_2d(features: &[Vector]) -> Result<Vec<(f64, f64)>> {
    if features.len() < 2 {
        return Err(Error::Eval("pca needs at least 2 samples".into()));
    }
    let d = features[0].len();
    let n = features.len() as f64;

    let mut mean = Vector::zeros(d);
    for x in features {
        mean.axpy(1.0 / n, x);
    }
    let centered: Vec<Vector> = features
        .iter()
        .map(|x| {
            let mut c = x.clone();
            c.axpy(-1.0, &mean);
            c
        })
        .collect();

    // Sample covariance, d x d.
    let mut cov = Matrix::zeros(d, d);
    for c in &centered {
        cov.add_outer(1.0 / (n - 1.0), c, c);
    }

    const START_SEED: u64 = 0x9C0_FFEE;
    let (mut v1, lambda1) = power_iteration(&cov, &[], START_SEED);
    fix_sign(&mut v1);
    // Deflate and extract the runner-up, kept orthogonal to v1.
    let mut deflated = cov.clone();
    deflated.add_outer(-lambda1, &v1, &v1);
    let (mut v2, lambda2) = power_iteration(&deflated, &[&v1], START_SEED);
    // Deflation residue can leave a vanishing eigenvalue; treat it as zero
    // variance.
    if lambda2 <= lambda1 * 1e-12 {
        v2 = Vector::zeros(d);
    }
    fix_sign(&mut v2);

    Ok(centered
        .iter()
        .map(|c| (dot(c, &v1), dot(c, &v2)))
        .collect())
}
