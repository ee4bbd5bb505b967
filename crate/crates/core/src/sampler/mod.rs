//! Active sampling: the gradient-utility score with weighted-KMeans
//! selection, plus the classical and adaptation-aware baselines. All
//! strategies score a frozen model snapshot over the unlabeled target union
//! and return exactly `b` distinct sample ids; ties break by ascending id
//! and every random choice draws from the per-stage stream.

pub mod baselines;
pub mod kmeans;

use std::fmt::Write as _;

use crate::dataset::DatasetState;
use crate::error::{Error, Result};
use crate::losses::{cls_loss, dom_loss, DiscriminationMode};
use crate::metrics::argmax;
use crate::model::{ForwardTrace, ModelState};
use crate::numerics::{cosine, l2_norm, softmax, Vector};
use crate::rng::Rng;

/// One pool entry: everything any strategy needs, precomputed once against
/// the frozen model.
#[derive(Clone, Debug)]
pub struct ScoredSample {
    pub id: u64,
    pub domain: usize,
    pub z: Vector,
    pub probs: Vector,
    pub pseudo_label: usize,
    pub domain_logits: Vector,
    /// Discriminator's source probability (binary channel pair for the
    /// decomposed head).
    pub source_prob: f64,
    pub entropy: f64,
    pub margin: f64,
    pub phi_cls: f64,
    pub corr: f64,
    pub phi: f64,
}

/// The scored unlabeled target union.
#[derive(Clone, Debug)]
pub struct ScoredPool {
    pub samples: Vec<ScoredSample>,
    pub mode: DiscriminationMode,
}

/// Negative classification-loss gradient w.r.t. the encoded feature,
/// supervised by the pseudo-label: the displacement annotating the sample
/// would induce.
pub fn grad_cls(model: &ModelState, trace: &ForwardTrace, pseudo_label: usize) -> Vector {
    let bundle = cls_loss(&trace.class_logits, pseudo_label);
    let mut g = model.class_loss_feature_grad(&bundle.grad_logits);
    g.scale(-1.0);
    g
}

/// Negative domain-loss gradient w.r.t. the encoded feature with the label
/// forced to the source domain: the displacement aligning the sample with
/// the source. No gradient reversal is applied here; this is the raw loss
/// gradient.
pub fn grad_da(model: &ModelState, trace: &ForwardTrace) -> Vector {
    let bundle = dom_loss(model.arch.mode, &trace.domain_logits, 0);
    let mut g = model.domain_loss_feature_grad(trace, &bundle.grad_logits);
    g.scale(-1.0);
    g
}

/// (phi_cls, corr, phi): phi_cls is the classification displacement
/// magnitude, corr the cosine between the two task displacements, and
/// phi = phi_cls * (1 + corr) the combined utility, in [0, 2*phi_cls].
pub fn gradient_utility(g_cls: &Vector, g_da: &Vector) -> (f64, f64, f64) {
    let phi_cls = l2_norm(g_cls);
    let corr = cosine(g_cls, g_da);
    let phi_da = phi_cls * corr;
    (phi_cls, corr, phi_cls + phi_da)
}

/// Max-normalized scores raised to beta: w_i = (phi_i / max phi)^beta.
/// All-zero scores degrade to uniform weights with a warning.
pub fn gu_weights(phis: &[f64], beta: f64) -> Vec<f64> {
    let max = phis.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        log::warn!("gu_weights: all scores zero, using uniform weights");
        return vec![1.0; phis.len()];
    }
    phis.iter().map(|&p| (p / max).powf(beta)).collect()
}

/// Entropy of a probability vector, 0 ln 0 := 0.
pub fn entropy(probs: &Vector) -> f64 {
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Margin between the two most confident classes.
pub fn margin(probs: &Vector) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &p in probs.iter() {
        if p > top {
            second = top;
            top = p;
        } else if p > second {
            second = p;
        }
    }
    if second == f64::NEG_INFINITY {
        // Single class: maximal margin.
        return 1.0;
    }
    top - second
}

fn source_probability(mode: DiscriminationMode, domain_logits: &Vector) -> f64 {
    match mode {
        DiscriminationMode::Binary | DiscriminationMode::AllWay => {
            softmax(domain_logits)[0]
        }
        DiscriminationMode::Decomposed { .. } => {
            let pair = Vector::from_vec(vec![domain_logits[0], domain_logits[1]]);
            softmax(&pair)[0]
        }
    }
}

/// Score every unlabeled target sample against a frozen model snapshot.
pub fn build_pool(model: &ModelState, dataset: &DatasetState) -> ScoredPool {
    let mut samples = Vec::new();
    for id in dataset.unlabeled_union() {
        let s = dataset.sample(id);
        let trace = model.forward_trace(&s.x, None);
        let probs = softmax(&trace.class_logits);
        let pseudo_label = argmax(&probs);
        let g_cls = grad_cls(model, &trace, pseudo_label);
        let g_da = grad_da(model, &trace);
        let (phi_cls, corr, phi) = gradient_utility(&g_cls, &g_da);
        samples.push(ScoredSample {
            id,
            domain: s.domain,
            source_prob: source_probability(model.arch.mode, &trace.domain_logits),
            entropy: entropy(&probs),
            margin: margin(&probs),
            z: trace.z,
            probs,
            pseudo_label,
            domain_logits: trace.domain_logits,
            phi_cls,
            corr,
            phi,
        });
    }
    ScoredPool {
        samples,
        mode: model.arch.mode,
    }
}

/// Strategy registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Random,
    Entropy,
    Margin,
    Coreset,
    Badge,
    Aada,
    Clue,
    GreedyMmd,
    GuKmeans,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 9] = [
        SamplerKind::Random,
        SamplerKind::Entropy,
        SamplerKind::Margin,
        SamplerKind::Coreset,
        SamplerKind::Badge,
        SamplerKind::Aada,
        SamplerKind::Clue,
        SamplerKind::GreedyMmd,
        SamplerKind::GuKmeans,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Entropy => "entropy",
            SamplerKind::Margin => "margin",
            SamplerKind::Coreset => "coreset",
            SamplerKind::Badge => "badge",
            SamplerKind::Aada => "aada",
            SamplerKind::Clue => "clue",
            SamplerKind::GreedyMmd => "greedy-mmd",
            SamplerKind::GuKmeans => "gu-kmeans",
        }
    }

    pub fn parse(s: &str) -> Result<SamplerKind> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sampler {s:?}; expected one of {}",
                    Self::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// Outcome of one selection: chosen ids, per-domain counts, and the
/// clustering/sampling weight each pool sample carried (1.0 where the
/// strategy uses none).
#[derive(Clone, Debug)]
pub struct SelectionResult {
    pub chosen: Vec<u64>,
    /// Indexed by domain (0 = source, always 0 there).
    pub per_domain: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Parameters shared by every strategy invocation.
pub struct SelectionRequest<'a> {
    pub pool: &'a ScoredPool,
    pub budget: usize,
    pub beta: f64,
    /// Encoded features of the labeled set (for coverage-style strategies).
    pub labeled_features: &'a [Vector],
    pub n_targets: usize,
}

/// Run a strategy. Deterministic given (pool, request, rng state).
pub fn select(kind: SamplerKind, req: &SelectionRequest, rng: &mut Rng) -> Result<SelectionResult> {
    let n = req.pool.samples.len();
    let b = req.budget;
    if b > n {
        return Err(Error::Selection(format!(
            "budget {b} exceeds pool size {n}"
        )));
    }
    let mut weights = vec![1.0; n];
    let indices: Vec<usize> = match kind {
        SamplerKind::Random => baselines::select_random(req.pool, b, rng),
        SamplerKind::Entropy => baselines::select_entropy(req.pool, b),
        SamplerKind::Margin => baselines::select_margin(req.pool, b),
        SamplerKind::Coreset => baselines::select_coreset(req.pool, b, req.labeled_features),
        SamplerKind::Badge => baselines::select_badge(req.pool, b, rng),
        SamplerKind::Aada => baselines::select_aada(req.pool, b),
        SamplerKind::Clue => {
            for (w, s) in weights.iter_mut().zip(req.pool.samples.iter()) {
                *w = s.entropy;
            }
            if weights.iter().all(|&w| w <= 0.0) {
                weights = vec![1.0; n];
            }
            baselines::select_clue(req.pool, b, rng)?
        }
        SamplerKind::GreedyMmd => baselines::select_greedy_mmd(req.pool, b),
        SamplerKind::GuKmeans => {
            let phis: Vec<f64> = req.pool.samples.iter().map(|s| s.phi).collect();
            weights = gu_weights(&phis, req.beta);
            let points: Vec<Vector> = req.pool.samples.iter().map(|s| s.z.clone()).collect();
            if b == 0 {
                Vec::new()
            } else {
                let km = kmeans::weighted_kmeans(&points, &weights, b, rng)?;
                kmeans::nearest_distinct_points(&points, &km.centroids)
            }
        }
    };

    debug_assert_eq!(indices.len(), b);
    let mut seen = std::collections::BTreeSet::new();
    let mut per_domain = vec![0usize; req.n_targets + 1];
    let mut chosen = Vec::with_capacity(b);
    for &i in &indices {
        let s = &req.pool.samples[i];
        assert!(seen.insert(s.id), "duplicate selection of id {}", s.id);
        per_domain[s.domain] += 1;
        chosen.push(s.id);
    }
    Ok(SelectionResult {
        chosen,
        per_domain,
        weights,
    })
}

/// Score-trace CSV: `id,domain,entropy,margin,phi_cls,corr,phi,weight,selected`.
pub fn score_trace_csv(pool: &ScoredPool, result: &SelectionResult) -> String {
    let chosen: std::collections::BTreeSet<u64> = result.chosen.iter().copied().collect();
    let mut out = String::from("id,domain,entropy,margin,phi_cls,corr,phi,weight,selected\n");
    for (s, w) in pool.samples.iter().zip(result.weights.iter()) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.id,
            s.domain,
            s.entropy,
            s.margin,
            s.phi_cls,
            s.corr,
            s.phi,
            w,
            u8::from(chosen.contains(&s.id))
        );
    }
    out
}
