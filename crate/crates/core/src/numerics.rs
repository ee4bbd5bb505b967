//! Dense f64 vectors/matrices and the differentiable layer primitives the
//! model is built from. Gradients are hand-derived per primitive; shapes are
//! checked at call sites and mismatches are fatal.

use std::ops::{Index, IndexMut};

/// Dense 64-bit float vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// v += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "axpy: length mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        Vector {
            data: iter.into_iter().collect(),
        }
    }
}

/// Dense row-major 64-bit float matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "from_rows: ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// m += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "axpy: shape mismatch"
        );
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    /// m += alpha * u vᵀ  (rank-one update; the weight-gradient shape).
    pub fn add_outer(&mut self, alpha: f64, u: &Vector, v: &Vector) {
        assert_eq!(self.rows, u.len(), "add_outer: row mismatch");
        assert_eq!(self.cols, v.len(), "add_outer: col mismatch");
        for i in 0..self.rows {
            let ui = alpha * u[i];
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, vj) in row.iter_mut().zip(v.iter()) {
                *r += ui * vj;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// ── Layer primitives ─────────────────────────────────────────────────────

/// y = W x
pub fn matvec(w: &Matrix, x: &Vector) -> Vector {
    assert_eq!(
        w.cols(),
        x.len(),
        "matvec: shape mismatch {}x{} vs {}",
        w.rows(),
        w.cols(),
        x.len()
    );
    let mut y = Vector::zeros(w.rows());
    for i in 0..w.rows() {
        let row = w.row(i);
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        y[i] = acc;
    }
    y
}

/// y = Wᵀ u; propagates a gradient back through `matvec`.
pub fn matvec_t(w: &Matrix, u: &Vector) -> Vector {
    assert_eq!(
        w.rows(),
        u.len(),
        "matvec_t: shape mismatch {}x{} vs {}",
        w.rows(),
        w.cols(),
        u.len()
    );
    let mut y = Vector::zeros(w.cols());
    for i in 0..w.rows() {
        let ui = u[i];
        let row = w.row(i);
        for (j, a) in row.iter().enumerate() {
            y[j] += a * ui;
        }
    }
    y
}

pub fn relu(x: &Vector) -> Vector {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Passes `upstream` where the pre-activation was positive, zero elsewhere.
pub fn relu_grad(x: &Vector, upstream: &Vector) -> Vector {
    assert_eq!(x.len(), upstream.len(), "relu_grad: length mismatch");
    x.iter()
        .zip(upstream.iter())
        .map(|(&xi, &ui)| if xi > 0.0 { ui } else { 0.0 })
        .collect()
}

/// Max-subtracted softmax; output entries are positive and sum to one.
pub fn softmax(logits: &Vector) -> Vector {
    assert!(!logits.is_empty(), "softmax: empty logits");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vector = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.scale(1.0 / sum);
    out
}

/// log(Σ exp(logits)), max-subtracted.
pub fn log_sum_exp(logits: &Vector) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    max + sum.ln()
}

pub fn dot(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &Vector) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity, clamped to [-1, 1]. A zero-norm argument yields 0:
/// no displacement is treated as uncorrelated.
pub fn cosine(a: &Vector, b: &Vector) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn euclidean(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(a.len(), b.len(), "euclidean: length mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn matvec_identity() {
        let w = Matrix::identity(2);
        assert_eq!(matvec(&w, &v(&[3.0, -1.0])), v(&[3.0, -1.0]));
    }

    #[test]
    fn matvec_zero_input() {
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matvec(&w, &v(&[0.0, 0.0])), v(&[0.0, 0.0]));
    }

    #[test]
    fn matvec_hand_oracle() {
        // [[1,2],[3,4]] * (1,1) = (3,7), by explicit row products.
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matvec(&w, &v(&[1.0, 1.0])), v(&[3.0, 7.0]));
    }

    #[test]
    #[should_panic(expected = "matvec: shape mismatch")]
    fn matvec_shape_mismatch_is_fatal() {
        let w = Matrix::identity(2);
        matvec(&w, &v(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn matvec_t_is_transpose_product() {
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        // Wᵀ u with u=(1,1) → (1+3, 2+4)
        assert_eq!(matvec_t(&w, &v(&[1.0, 1.0])), v(&[4.0, 6.0]));
    }

    #[test]
    fn relu_and_grad() {
        assert_eq!(relu(&v(&[-1.0, 2.0])), v(&[0.0, 2.0]));
        assert_eq!(
            relu_grad(&v(&[-1.0, 2.0]), &v(&[5.0, 5.0])),
            v(&[0.0, 5.0])
        );
        assert_eq!(relu(&v(&[-3.0, -0.5])), v(&[0.0, 0.0]));
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax(&v(&[1.7, 1.7, 1.7, 1.7]));
        for i in 0..4 {
            assert!((p[i] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&v(&[0.3, -1.2, 2.0]));
        let b = softmax(&v(&[100.3, 98.8, 102.0]));
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_closed_form() {
        // (0, ln 3) → (1/4, 3/4)
        let p = softmax(&v(&[0.0, 3.0f64.ln()]));
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_extreme_logits_stable() {
        let p = softmax(&v(&[1e3, -1e3, 0.0]));
        assert!(p.all_finite());
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_basics() {
        let a = v(&[0.3, -2.0, 1.1]);
        let mut neg = a.clone();
        neg.scale(-1.0);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        assert!((cosine(&a, &neg) + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])), 0.0);
        assert_eq!(cosine(&v(&[0.0, 0.0, 0.0]), &a), 0.0);
    }
}
