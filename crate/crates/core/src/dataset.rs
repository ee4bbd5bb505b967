//! Seeded synthetic multi-domain classification data: one labeled source
//! domain plus N unlabeled target domains sharing class-conditional
//! structure, each deformed by an affine shift and additive noise. Also the
//! annotation oracle (moving samples from unlabeled to labeled pools) and
//! CSV serialization.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::rng::Rng;

/// One data point: feature vector, class label, domain index, unique id.
/// Whether the label may be consumed is tracked by the pool the sample sits
/// in, not by the sample itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    /// 0 = source, 1..=N = targets.
    pub domain: usize,
    pub label: usize,
    pub x: Vector,
}

/// Affine deformation + noise defining one domain's view of the shared
/// class-conditional distribution: x' = scale * rot(x) + translation + noise.
/// Rotation acts on the first two coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainShiftSpec {
    pub rotation: f64,
    pub translation: Vector,
    pub scale: f64,
    pub noise: f64,
}

impl DomainShiftSpec {
    pub fn identity(dim: usize) -> Self {
        DomainShiftSpec {
            rotation: 0.0,
            translation: Vector::zeros(dim),
            scale: 1.0,
            noise: 0.0,
        }
    }

    pub fn is_affine_identity(&self) -> bool {
        self.rotation == 0.0
            && self.scale == 1.0
            && self.translation.iter().all(|&t| t == 0.0)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.scale <= 0.0 {
            return Err(Error::Config(format!("scale must be > 0, got {}", self.scale)));
        }
        if self.noise < 0.0 {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        if self.translation.len() != dim {
            return Err(Error::Config(format!(
                "translation has dim {}, expected {dim}",
                self.translation.len()
            )));
        }
        if self.rotation != 0.0 && dim < 2 {
            return Err(Error::Config("rotation needs dim >= 2".into()));
        }
        Ok(())
    }

    fn apply(&self, x: &Vector, rng: &mut Rng) -> Vector {
        let mut out = x.clone();
        if self.rotation != 0.0 {
            let (s, c) = self.rotation.sin_cos();
            let (x0, x1) = (out[0], out[1]);
            out[0] = c * x0 - s * x1;
            out[1] = s * x0 + c * x1;
        }
        for i in 0..out.len() {
            out[i] = self.scale * out[i] + self.translation[i];
        }
        if self.noise > 0.0 {
            for i in 0..out.len() {
                out[i] += self.noise * rng.next_gaussian();
            }
        } else {
            // Keep the PRNG sequence independent of sigma so toggling noise
            // on one domain does not reshape the others.
            for _ in 0..out.len() {
                rng.next_gaussian();
            }
        }
        out
    }
}

/// Generation parameters for one benchmark dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n_classes: usize,
    pub n_targets: usize,
    pub dim: usize,
    pub train_per_domain: usize,
    pub test_per_domain: usize,
    /// Radius of the sphere class means are drawn on.
    pub class_separation: f64,
    /// Within-class Gaussian spread of the shared base points.
    pub class_spread: f64,
    /// N+1 shift specs, source first (affine identity).
    pub shifts: Vec<DomainShiftSpec>,
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.n_targets < 1 {
            return Err(Error::Config("need at least 1 target domain".into()));
        }
        if self.dim < 1 {
            return Err(Error::Config("feature dim must be >= 1".into()));
        }
        if self.train_per_domain < self.n_classes * 4 {
            return Err(Error::Config(format!(
                "train_per_domain {} < 4 per class (K={})",
                self.train_per_domain, self.n_classes
            )));
        }
        if self.shifts.len() != self.n_targets + 1 {
            return Err(Error::Config(format!(
                "expected {} shift specs, got {}",
                self.n_targets + 1,
                self.shifts.len()
            )));
        }
        if !self.shifts[0].is_affine_identity() {
            return Err(Error::Config(
                "source shift spec must be the affine identity".into(),
            ));
        }
        for (i, s) in self.shifts.iter().enumerate() {
            s.validate(self.dim)
                .map_err(|e| Error::Config(format!("shift spec {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Labeled/unlabeled training pools across all domains. The source pool is
/// fully labeled from the start; target pools start fully unlabeled.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetState {
    pub n_classes: usize,
    pub n_targets: usize,
    pub dim: usize,
    samples: Vec<Sample>,
    /// Per-domain id sets, index 0 = source.
    labeled: Vec<BTreeSet<u64>>,
    unlabeled: Vec<BTreeSet<u64>>,
}

/// Held-out evaluation samples; never annotated, never trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet {
    pub n_targets: usize,
    samples: Vec<Sample>,
}

/// A complete benchmark dataset: training pools plus held-out test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: DatasetState,
    pub test: TestSet,
}

impl DatasetState {
    fn new(n_classes: usize, n_targets: usize, dim: usize, mut samples: Vec<Sample>) -> Self {
        // Keep id order for binary-search lookup.
        samples.sort_by_key(|s| s.id);
        let mut labeled = vec![BTreeSet::new(); n_targets + 1];
        let mut unlabeled = vec![BTreeSet::new(); n_targets + 1];
        for s in &samples {
            if s.domain == 0 {
                labeled[0].insert(s.id);
            } else {
                unlabeled[s.domain].insert(s.id);
            }
        }
        DatasetState {
            n_classes,
            n_targets,
            dim,
            samples,
            labeled,
            unlabeled,
        }
    }

    pub fn sample(&self, id: u64) -> &Sample {
        let idx = self
            .samples
            .binary_search_by_key(&id, |s| s.id)
            .unwrap_or_else(|_| panic!("unknown sample id {id}"));
        &self.samples[idx]
    }

    /// Ids of labeled samples in a domain, ascending.
    pub fn labeled_ids(&self, domain: usize) -> Vec<u64> {
        self.labeled[domain].iter().copied().collect()
    }

    /// Ids of unlabeled samples in a domain, ascending.
    pub fn unlabeled_ids(&self, domain: usize) -> Vec<u64> {
        self.unlabeled[domain].iter().copied().collect()
    }

    /// Every train sample of a domain (labeled or not), ascending id order.
    pub fn domain_ids(&self, domain: usize) -> Vec<u64> {
        self.samples
            .iter()
            .filter(|s| s.domain == domain)
            .map(|s| s.id)
            .collect()
    }

    /// The active-sampling pool: unlabeled samples of all targets, ascending id.
    pub fn unlabeled_union(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = (1..=self.n_targets)
            .flat_map(|d| self.unlabeled[d].iter().copied())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn labeled_count(&self, domain: usize) -> usize {
        self.labeled[domain].len()
    }

    pub fn unlabeled_count(&self, domain: usize) -> usize {
        self.unlabeled[domain].len()
    }

    pub fn total_count(&self) -> usize {
        self.samples.len()
    }

    /// Reveal labels for the given unlabeled target samples: moves them from
    /// the unlabeled pool to the labeled pool of their domain.
    pub fn annotate(&mut self, domain: usize, ids: &[u64]) -> Result<()> {
        if domain == 0 || domain > self.n_targets {
            return Err(Error::Selection(format!(
                "annotate: domain {domain} is not a target domain"
            )));
        }
        for &id in ids {
            if !self.unlabeled[domain].contains(&id) {
                return Err(Error::Selection(format!(
                    "annotate: id {id} not in unlabeled pool of domain {domain}"
                )));
            }
        }
        for &id in ids {
            self.unlabeled[domain].remove(&id);
            self.labeled[domain].insert(id);
        }
        Ok(())
    }
}

impl TestSet {
    pub fn all(&self) -> &[Sample] {
        &self.samples
    }

    pub fn domain(&self, domain: usize) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.domain == domain)
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }
}

/// Generate a dataset. Deterministic: the full PRNG sequence is a function
/// of (seed, config). Shared base points are drawn once per split and every
/// domain deforms the same base set, so identity shifts with zero noise give
/// identical point sets across domains.
pub fn generate(seed: u64, cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = Rng::substream(seed, crate::rng::streams::DATASET);
    let d = cfg.dim;

    // Class means on the sphere of radius class_separation.
    let mut means = Vec::with_capacity(cfg.n_classes);
    for _ in 0..cfg.n_classes {
        let mut m: Vector = (0..d).map(|_| rng.next_gaussian()).collect();
        let norm = crate::numerics::l2_norm(&m);
        if norm > 0.0 {
            m.scale(cfg.class_separation / norm);
        }
        means.push(m);
    }

    let draw_bases = |count: usize, rng: &mut Rng| -> Vec<(usize, Vector)> {
        (0..count)
            .map(|i| {
                let y = i % cfg.n_classes;
                let mut x = means[y].clone();
                for j in 0..d {
                    x[j] += cfg.class_spread * rng.next_gaussian();
                }
                (y, x)
            })
            .collect()
    };
    let train_bases = draw_bases(cfg.train_per_domain, &mut rng);
    let test_bases = draw_bases(cfg.test_per_domain, &mut rng);

    let mut next_id = 0u64;
    let mut train_samples = Vec::new();
    let mut test_samples = Vec::new();
    for m in 0..=cfg.n_targets {
        for (y, base) in &train_bases {
            train_samples.push(Sample {
                id: next_id,
                domain: m,
                label: *y,
                x: cfg.shifts[m].apply(base, &mut rng),
            });
            next_id += 1;
        }
    }
    for m in 0..=cfg.n_targets {
        for (y, base) in &test_bases {
            test_samples.push(Sample {
                id: next_id,
                domain: m,
                label: *y,
                x: cfg.shifts[m].apply(base, &mut rng),
            });
            next_id += 1;
        }
    }

    Ok(Dataset {
        train: DatasetState::new(cfg.n_classes, cfg.n_targets, d, train_samples),
        test: TestSet {
            n_targets: cfg.n_targets,
            samples: test_samples,
        },
    })
}

// ── CSV serialization ────────────────────────────────────────────────────
// Schema: id,domain,split,label,x0,...,x{d-1}; floats shortest-round-trip.

pub fn dataset_to_csv(ds: &Dataset) -> String {
    let d = ds.train.dim;
    let mut out = String::from("id,domain,split,label");
    for j in 0..d {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    let mut emit = |s: &Sample, split: &str| {
        let _ = write!(out, "{},{},{},{}", s.id, s.domain, split, s.label);
        for j in 0..s.x.len() {
            let _ = write!(out, ",{}", s.x[j]);
        }
        out.push('\n');
    };
    for s in &ds.train.samples {
        emit(s, "train");
    }
    for s in &ds.test.samples {
        emit(s, "test");
    }
    out
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_csv(ds))?;
    Ok(())
}

pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[0] != "id" || cols[1] != "domain" || cols[2] != "split" || cols[3] != "label" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header: {header}"),
        });
    }
    let dim = cols.len() - 4;

    let mut train_samples = Vec::new();
    let mut test_samples = Vec::new();
    let mut max_domain = 0usize;
    let mut max_label = 0usize;
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} columns, got {}", cols.len(), fields.len()),
            });
        }
        let parse_err = |what: &str, v: &str| Error::Parse {
            line: lineno,
            msg: format!("bad {what}: {v:?}"),
        };
        let id: u64 = fields[0].parse().map_err(|_| parse_err("id", fields[0]))?;
        let domain: usize = fields[1].parse().map_err(|_| parse_err("domain", fields[1]))?;
        let label: usize = fields[3].parse().map_err(|_| parse_err("label", fields[3]))?;
        let mut x = Vector::zeros(dim);
        for j in 0..dim {
            x[j] = fields[4 + j]
                .parse()
                .map_err(|_| parse_err("feature", fields[4 + j]))?;
        }
        let sample = Sample { id, domain, label, x };
        max_domain = max_domain.max(domain);
        max_label = max_label.max(label);
        match fields[2] {
            "train" => train_samples.push(sample),
            "test" => test_samples.push(sample),
            other => return Err(parse_err("split", other)),
        }
    }
    let n_targets = max_domain;
    let n_classes = max_label + 1;
    let mut seen = BTreeSet::new();
    for s in train_samples.iter().chain(test_samples.iter()) {
        if !seen.insert(s.id) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("duplicate sample id {}", s.id),
            });
        }
    }
    Ok(Dataset {
        train: DatasetState::new(n_classes, n_targets, dim, train_samples),
        test: TestSet {
            n_targets,
            samples: test_samples,
        },
    })
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    dataset_from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, l2_norm};

    pub fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            n_classes: 2,
            n_targets: 1,
            dim: 2,
            train_per_domain: 40,
            test_per_domain: 40,
            class_separation: 2.0,
            class_spread: 0.3,
            shifts: vec![
                DomainShiftSpec::identity(2),
                DomainShiftSpec {
                    rotation: std::f64::consts::PI,
                    translation: Vector::zeros(2),
                    scale: 1.0,
                    noise: 0.0,
                },
            ],
        }
    }

    #[test]
    fn deterministic_generation() {
        let cfg = small_config();
        let a = generate(7, &cfg).unwrap();
        let b = generate(7, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(dataset_to_csv(&a), dataset_to_csv(&b));
    }

    #[test]
    fn identity_shifts_give_identical_domains() {
        let mut cfg = small_config();
        cfg.shifts = vec![DomainShiftSpec::identity(2), DomainShiftSpec::identity(2)];
        let ds = generate(3, &cfg).unwrap();
        let src: Vec<_> = ds.train.domain_ids(0);
        let tgt: Vec<_> = ds.train.domain_ids(1);
        for (a, b) in src.iter().zip(tgt.iter()) {
            assert_eq!(ds.train.sample(*a).x, ds.train.sample(*b).x);
            assert_eq!(ds.train.sample(*a).label, ds.train.sample(*b).label);
        }
    }

    #[test]
    fn invalid_counts_rejected() {
        let mut cfg = small_config();
        cfg.train_per_domain = 5; // < 4*K
        assert!(matches!(generate(1, &cfg), Err(Error::Config(_))));
        let mut cfg = small_config();
        cfg.shifts.pop();
        assert!(matches!(generate(1, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn annotate_moves_and_conserves() {
        let cfg = small_config();
        let mut ds = generate(11, &cfg).unwrap();
        let before_l = ds.train.labeled_count(1);
        let before_u = ds.train.unlabeled_count(1);
        assert_eq!(before_l, 0);

        // Empty annotation is a no-op.
        ds.train.annotate(1, &[]).unwrap();
        assert_eq!(ds.train.labeled_count(1), 0);

        let pick: Vec<u64> = ds.train.unlabeled_ids(1)[..5].to_vec();
        ds.train.annotate(1, &pick).unwrap();
        assert_eq!(ds.train.labeled_count(1), 5);
        assert_eq!(
            ds.train.labeled_count(1) + ds.train.unlabeled_count(1),
            before_l + before_u
        );

        // Annotating everything empties the pool.
        let rest = ds.train.unlabeled_ids(1);
        ds.train.annotate(1, &rest).unwrap();
        assert_eq!(ds.train.unlabeled_count(1), 0);

        // Already-annotated id is a selection error.
        assert!(matches!(
            ds.train.annotate(1, &[pick[0]]),
            Err(Error::Selection(_))
        ));
    }

    #[test]
    fn csv_round_trip_exact() {
        let ds = generate(19, &small_config()).unwrap();
        let text = dataset_to_csv(&ds);
        let back = dataset_from_csv(&text).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn csv_bad_column_count_reports_line() {
        let ds = generate(5, &small_config()).unwrap();
        let mut text = dataset_to_csv(&ds);
        // Corrupt the third data line.
        let mut lines: Vec<&str> = text.lines().collect();
        let corrupted = format!("{},extra", lines[3]);
        lines[3] = &corrupted;
        text = lines.join("\n");
        match dataset_from_csv(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn reflected_target_confuses_source_linear_model() {
        // K=2, d=2, rotation pi: a logistic model fit on source is at or
        // below chance on the reflected target.
        let cfg = small_config();
        let ds = generate(24, &cfg).unwrap();

        // Tiny logistic regression on the source pool.
        let src_ids = ds.train.labeled_ids(0);
        let mut w = Vector::zeros(2);
        let mut b = 0.0;
        for _ in 0..500 {
            let mut gw = Vector::zeros(2);
            let mut gb = 0.0;
            for &id in &src_ids {
                let s = ds.train.sample(id);
                let t = if s.label == 1 { 1.0 } else { 0.0 };
                let p = 1.0 / (1.0 + (-(dot(&w, &s.x) + b)).exp());
                gw.axpy(p - t, &s.x);
                gb += p - t;
            }
            gw.scale(1.0 / src_ids.len() as f64);
            gb /= src_ids.len() as f64;
            w.axpy(-0.5, &gw);
            b -= 0.5 * gb;
        }
        let acc = |ids: &[u64]| {
            let correct = ids
                .iter()
                .filter(|&&id| {
                    let s = ds.train.sample(id);
                    let pred = usize::from(dot(&w, &s.x) + b > 0.0);
                    pred == s.label
                })
                .count();
            correct as f64 / ids.len() as f64
        };
        let src_acc = acc(&src_ids);
        let tgt_acc = acc(&ds.train.domain_ids(1));
        assert!(src_acc >= 0.9, "source accuracy {src_acc}");
        assert!(
            tgt_acc <= 0.55,
            "reflected target should be at or below chance, got {tgt_acc}"
        );
        assert!(l2_norm(&w) > 0.0);
    }
}
