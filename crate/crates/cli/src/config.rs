//! Flat `key = value` experiment configuration with `#` comments and
//! comma-separated lists. The canonical serialization (`config.echo`) is
//! reparseable and reproduces itself byte-for-byte, which is what makes run
//! directories self-describing.

use anyhow::{anyhow, bail, Context, Result};
use mtada_core::dataset::{DomainShiftSpec, GeneratorConfig};
use mtada_core::losses::DiscriminationMode;
use mtada_core::model::OptimizerConfig;
use mtada_core::numerics::Vector;
use mtada_core::sampler::SamplerKind;
use mtada_core::trainer::{BatchPlan, RunConfig};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub classes: usize,
    pub targets: usize,
    pub dim: usize,
    pub train_per_domain: usize,
    pub test_per_domain: usize,
    pub class_separation: f64,
    pub class_spread: f64,
    /// Per-domain shift parameters, source first (index 0).
    pub rotations: Vec<f64>,
    /// Translation magnitude along (e0+e1)/sqrt(2), the rotation plane.
    pub translations: Vec<f64>,
    pub scales: Vec<f64>,
    pub noises: Vec<f64>,
    pub mode: String,
    pub alpha: f64,
    pub sampler: String,
    pub beta: f64,
    pub stages: usize,
    pub budgets: Vec<usize>,
    pub hidden: usize,
    pub embed: usize,
    pub disc_hidden: usize,
    pub disc_dropout: f64,
    pub batch_source: usize,
    pub batch_target: usize,
    pub batch_labeled: usize,
    pub pretrain_epochs: usize,
    pub active_epochs: usize,
    pub pretrain_lr: f64,
    pub active_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub pretrain_q: f64,
    pub active_q: f64,
    /// Load this dataset CSV instead of generating from the seed.
    pub dataset: Option<String>,
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            classes: 4,
            targets: 2,
            dim: 8,
            train_per_domain: 300,
            test_per_domain: 300,
            class_separation: 2.0,
            class_spread: 0.8,
            rotations: vec![0.0, 0.5236, 1.0472],
            translations: vec![0.0, 1.5, 2.5],
            scales: vec![1.0, 1.0, 1.0],
            noises: vec![0.1, 0.1, 0.1],
            mode: "binary".into(),
            alpha: 0.5,
            sampler: "gu-kmeans".into(),
            beta: 4.0,
            stages: 4,
            budgets: vec![10, 10, 10, 10],
            hidden: 32,
            embed: 16,
            disc_hidden: 32,
            disc_dropout: 0.0,
            batch_source: 32,
            batch_target: 16,
            batch_labeled: 8,
            pretrain_epochs: 600,
            active_epochs: 300,
            pretrain_lr: 0.001,
            active_lr: 0.0003,
            momentum: 0.9,
            weight_decay: 0.005,
            pretrain_q: 10.0,
            active_q: 1.0,
            dataset: None,
            out: "runs/default".into(),
        }
    }
}

impl ExperimentConfig {
    /// The active-sampling comparison setup: severe opposing rotations and
    /// short training so annotation quality, not alignment, dominates.
    pub fn sampler_benchmark() -> Self {
        ExperimentConfig {
            rotations: vec![0.0, 2.0944, -2.0944],
            translations: vec![0.0, 0.0, 0.0],
            class_separation: 3.0,
            class_spread: 0.6,
            pretrain_epochs: 60,
            active_epochs: 30,
            ..ExperimentConfig::default()
        }
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| anyhow!("bad list entry {p:?} for key {key}"))
        })
        .collect()
}

impl ExperimentConfig {
    /// Canonical serialization; parsing it back reproduces this config and
    /// re-serializing reproduces the bytes.
    pub fn to_echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("classes", self.classes.to_string());
        kv("targets", self.targets.to_string());
        kv("dim", self.dim.to_string());
        kv("train_per_domain", self.train_per_domain.to_string());
        kv("test_per_domain", self.test_per_domain.to_string());
        kv("class_separation", self.class_separation.to_string());
        kv("class_spread", self.class_spread.to_string());
        kv("rotations", join(&self.rotations));
        kv("translations", join(&self.translations));
        kv("scales", join(&self.scales));
        kv("noises", join(&self.noises));
        kv("mode", self.mode.clone());
        kv("alpha", self.alpha.to_string());
        kv("sampler", self.sampler.clone());
        kv("beta", self.beta.to_string());
        kv("stages", self.stages.to_string());
        kv("budgets", join(&self.budgets));
        kv("hidden", self.hidden.to_string());
        kv("embed", self.embed.to_string());
        kv("disc_hidden", self.disc_hidden.to_string());
        kv("disc_dropout", self.disc_dropout.to_string());
        kv("batch_source", self.batch_source.to_string());
        kv("batch_target", self.batch_target.to_string());
        kv("batch_labeled", self.batch_labeled.to_string());
        kv("pretrain_epochs", self.pretrain_epochs.to_string());
        kv("active_epochs", self.active_epochs.to_string());
        kv("pretrain_lr", self.pretrain_lr.to_string());
        kv("active_lr", self.active_lr.to_string());
        kv("momentum", self.momentum.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("pretrain_q", self.pretrain_q.to_string());
        kv("active_q", self.active_q.to_string());
        if let Some(d) = &self.dataset {
            kv("dataset", d.clone());
        }
        kv("out", self.out.clone());
        s
    }

    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = v.parse().context("seed")?,
            "classes" => self.classes = v.parse().context("classes")?,
            "targets" => self.targets = v.parse().context("targets")?,
            "dim" => self.dim = v.parse().context("dim")?,
            "train_per_domain" => self.train_per_domain = v.parse().context("train_per_domain")?,
            "test_per_domain" => self.test_per_domain = v.parse().context("test_per_domain")?,
            "class_separation" => self.class_separation = v.parse().context("class_separation")?,
            "class_spread" => self.class_spread = v.parse().context("class_spread")?,
            "rotations" => self.rotations = parse_list(v, key)?,
            "translations" => self.translations = parse_list(v, key)?,
            "scales" => self.scales = parse_list(v, key)?,
            "noises" => self.noises = parse_list(v, key)?,
            "mode" => self.mode = v.to_string(),
            "alpha" => self.alpha = v.parse().context("alpha")?,
            "sampler" => self.sampler = v.to_string(),
            "beta" => self.beta = v.parse().context("beta")?,
            "stages" => self.stages = v.parse().context("stages")?,
            "budgets" => self.budgets = parse_list(v, key)?,
            "budget" => {
                // Uniform per-stage budget; expanded against `stages` at
                // finalize time.
                let b: usize = v.parse().context("budget")?;
                self.budgets = vec![b];
            }
            "hidden" => self.hidden = v.parse().context("hidden")?,
            "embed" => self.embed = v.parse().context("embed")?,
            "disc_hidden" => self.disc_hidden = v.parse().context("disc_hidden")?,
            "disc_dropout" => self.disc_dropout = v.parse().context("disc_dropout")?,
            "batch_source" => self.batch_source = v.parse().context("batch_source")?,
            "batch_target" => self.batch_target = v.parse().context("batch_target")?,
            "batch_labeled" => self.batch_labeled = v.parse().context("batch_labeled")?,
            "pretrain_epochs" => self.pretrain_epochs = v.parse().context("pretrain_epochs")?,
            "active_epochs" => self.active_epochs = v.parse().context("active_epochs")?,
            "pretrain_lr" => self.pretrain_lr = v.parse().context("pretrain_lr")?,
            "active_lr" => self.active_lr = v.parse().context("active_lr")?,
            "momentum" => self.momentum = v.parse().context("momentum")?,
            "weight_decay" => self.weight_decay = v.parse().context("weight_decay")?,
            "pretrain_q" => self.pretrain_q = v.parse().context("pretrain_q")?,
            "active_q" => self.active_q = v.parse().context("active_q")?,
            "dataset" => self.dataset = Some(v.to_string()),
            "out" => self.out = v.to_string(),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Parse a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        Ok(Self::parse_tracking(text)?.0)
    }

    /// Like `parse`, also reporting which keys the file set (the seed
    /// fallback needs to know whether the file mentioned one).
    pub fn parse_tracking(
        text: &str,
    ) -> Result<(ExperimentConfig, std::collections::BTreeSet<String>)> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", i + 1))?;
            cfg.set(k.trim(), v)
                .with_context(|| format!("line {}", i + 1))?;
            seen.insert(k.trim().to_string());
        }
        Ok((cfg, seen))
    }

    /// Expand shorthand (uniform budget) and check list lengths.
    pub fn finalize(&mut self) -> Result<()> {
        if self.budgets.len() == 1 && self.stages > 1 {
            self.budgets = vec![self.budgets[0]; self.stages];
        }
        if self.budgets.len() != self.stages {
            bail!(
                "{} budgets given for {} stages",
                self.budgets.len(),
                self.stages
            );
        }
        let domains = self.targets + 1;
        for (name, list) in [
            ("rotations", self.rotations.len()),
            ("translations", self.translations.len()),
            ("scales", self.scales.len()),
            ("noises", self.noises.len()),
        ] {
            if list != domains {
                bail!("{name} needs {domains} entries (source first), got {list}");
            }
        }
        self.discrimination_mode()?;
        self.sampler_kind()?;
        Ok(())
    }

    pub fn discrimination_mode(&self) -> Result<DiscriminationMode> {
        match self.mode.as_str() {
            "binary" => Ok(DiscriminationMode::Binary),
            "all-way" => Ok(DiscriminationMode::AllWay),
            "decomposed" => Ok(DiscriminationMode::Decomposed { alpha: self.alpha }),
            other => bail!("unknown mode {other:?}; expected binary, all-way, or decomposed"),
        }
    }

    pub fn sampler_kind(&self) -> Result<SamplerKind> {
        SamplerKind::parse(&self.sampler).map_err(|e| anyhow!("{e}"))
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let d = self.dim;
        let unit = 1.0 / 2f64.sqrt();
        let shifts = (0..=self.targets)
            .map(|m| {
                let mut t = Vector::zeros(d);
                t[0] = self.translations[m] * unit;
                if d > 1 {
                    t[1] = self.translations[m] * unit;
                }
                DomainShiftSpec {
                    rotation: self.rotations[m],
                    translation: t,
                    scale: self.scales[m],
                    noise: self.noises[m],
                }
            })
            .collect();
        GeneratorConfig {
            n_classes: self.classes,
            n_targets: self.targets,
            dim: d,
            train_per_domain: self.train_per_domain,
            test_per_domain: self.test_per_domain,
            class_separation: self.class_separation,
            class_spread: self.class_spread,
            shifts,
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            seed: self.seed,
            hidden_dim: self.hidden,
            embed_dim: self.embed,
            disc_hidden: self.disc_hidden,
            disc_dropout: self.disc_dropout,
            mode: self.discrimination_mode()?,
            sampler: self.sampler_kind()?,
            beta: self.beta,
            batch: BatchPlan {
                source: self.batch_source,
                target_unlabeled: self.batch_target,
                target_labeled: self.batch_labeled,
            },
            stages: self.stages,
            budgets: self.budgets.clone(),
            pretrain_epochs: self.pretrain_epochs,
            active_epochs: self.active_epochs,
            pretrain_opt: OptimizerConfig {
                base_lr: self.pretrain_lr,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                decay_exponent: 0.75,
                decay_factor_q: self.pretrain_q,
                backbone_lr_ratio: 1.0,
            },
            active_opt: OptimizerConfig {
                base_lr: self.active_lr,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                decay_exponent: 0.75,
                decay_factor_q: self.active_q,
                backbone_lr_ratio: 1.0,
            },
        })
    }

    /// Keys that must agree for runs to be aggregated together; sampler,
    /// mode, alpha, beta, seed, and the output path are the compared axes.
    pub fn aggregation_signature(&self) -> Vec<(String, String)> {
        let mut base = self.clone();
        base.seed = 0;
        base.sampler = String::new();
        base.mode = String::new();
        base.alpha = 0.0;
        base.beta = 0.0;
        base.out = String::new();
        base.dataset = None;
        base.to_echo()
            .lines()
            .map(|l| {
                let (k, v) = l.split_once(" = ").unwrap();
                (k.to_string(), v.to_string())
            })
            .collect()
    }
}
