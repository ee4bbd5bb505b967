//! Per-sample training losses: classification cross-entropy and the three
//! domain-discrimination variants. Each returns the scalar value together
//! with the gradient w.r.t. its own logits; backprop into features and
//! parameters happens in `model`.
//!
//! Decomposed discrimination uses the frozen channel layout
//! `[S, T~, T_1..T_N]` (N+2 logits): one softmax over channels {0,1}
//! (source vs. union target) plus one over channels {0, 2..N+1} (source and
//! every individual target). The S logit is shared by both groups.

use crate::numerics::{log_sum_exp, softmax, Vector};

/// Which domain-discrimination head/loss is in play.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiscriminationMode {
    /// Source vs. union target, 2 logits.
    Binary,
    /// Source and each target, N+1 logits.
    AllWay,
    /// Binary + alpha * all-way over the shared (N+2)-logit layout.
    Decomposed { alpha: f64 },
}

impl DiscriminationMode {
    /// Number of domain logits the discriminator must emit.
    pub fn logit_count(&self, n_targets: usize) -> usize {
        match self {
            DiscriminationMode::Binary => 2,
            DiscriminationMode::AllWay => n_targets + 1,
            DiscriminationMode::Decomposed { .. } => n_targets + 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiscriminationMode::Binary => "binary",
            DiscriminationMode::AllWay => "all-way",
            DiscriminationMode::Decomposed { .. } => "decomposed",
        }
    }
}

/// A scalar loss with its gradient w.r.t. the logits it was computed from.
#[derive(Clone, Debug)]
pub struct LossBundle {
    pub value: f64,
    pub grad_logits: Vector,
}

/// Softmax cross-entropy: value = -log p_y, grad = p - onehot(y).
fn softmax_ce(logits: &Vector, target: usize) -> LossBundle {
    assert!(target < logits.len(), "target {target} out of range");
    let value = log_sum_exp(logits) - logits[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    LossBundle {
        value,
        grad_logits: grad,
    }
}

/// Classification loss on K class logits with label `y`.
pub fn cls_loss(class_logits: &Vector, y: usize) -> LossBundle {
    softmax_ce(class_logits, y)
}

/// Binary domain loss over the [S, T~] channel pair. Every target domain
/// index (m >= 1) collapses onto the union channel.
pub fn dom_loss_binary(domain_logits: &Vector, m: usize) -> LossBundle {
    assert_eq!(domain_logits.len(), 2, "binary loss expects 2 channels");
    softmax_ce(domain_logits, usize::from(m != 0))
}

/// All-way domain loss over the [S, T_1..T_N] channel set; the true domain
/// index is the target channel.
pub fn dom_loss_allway(domain_logits: &Vector, m: usize) -> LossBundle {
    assert!(
        domain_logits.len() >= 2,
        "all-way loss expects at least 2 channels"
    );
    softmax_ce(domain_logits, m)
}

/// Decomposed domain loss over the [S, T~, T_1..T_N] layout:
/// binary part on channels {0,1} plus alpha times the all-way part on
/// channels {0, 2..N+1}. Gradients are the channel-wise sum of both parts;
/// the shared S channel receives contributions from each.
pub fn dom_loss_decomposed(domain_logits: &Vector, m: usize, alpha: f64) -> LossBundle {
    let n_plus_2 = domain_logits.len();
    assert!(n_plus_2 >= 3, "decomposed loss expects at least 3 channels");
    assert!(alpha >= 0.0, "alpha must be nonnegative");
    assert!(m == 0 || m + 1 < n_plus_2, "domain index {m} out of range");

    let bin_slice = Vector::from_vec(vec![domain_logits[0], domain_logits[1]]);
    let bin = dom_loss_binary(&bin_slice, m);

    let mut aw_data = Vec::with_capacity(n_plus_2 - 1);
    aw_data.push(domain_logits[0]);
    for c in 2..n_plus_2 {
        aw_data.push(domain_logits[c]);
    }
    let aw = dom_loss_allway(&Vector::from_vec(aw_data), m);

    let mut grad = Vector::zeros(n_plus_2);
    grad[0] += bin.grad_logits[0];
    grad[1] += bin.grad_logits[1];
    grad[0] += alpha * aw.grad_logits[0];
    for c in 2..n_plus_2 {
        grad[c] += alpha * aw.grad_logits[c - 1];
    }

    LossBundle {
        value: bin.value + alpha * aw.value,
        grad_logits: grad,
    }
}

/// Dispatch on the discrimination mode. `m` is the domain index
/// (0 = source, 1..=N = targets).
pub fn dom_loss(mode: DiscriminationMode, domain_logits: &Vector, m: usize) -> LossBundle {
    match mode {
        DiscriminationMode::Binary => dom_loss_binary(domain_logits, m),
        DiscriminationMode::AllWay => dom_loss_allway(domain_logits, m),
        DiscriminationMode::Decomposed { alpha } => {
            dom_loss_decomposed(domain_logits, m, alpha)
        }
    }
}
