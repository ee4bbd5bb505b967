//! Ignored diagnostics for benchmark tuning. Run with:
//! cargo test --release -p mtada-core --test probe -- --ignored --nocapture

use mtada_core::dataset::{generate, DomainShiftSpec, GeneratorConfig};
use mtada_core::losses::DiscriminationMode;
use mtada_core::metrics::per_target_accuracy;
use mtada_core::model::ModelState;
use mtada_core::numerics::Vector;
use mtada_core::rng::{streams, Rng};
use mtada_core::trainer::{pretrain, train_source_only, RunConfig};

struct Task {
    rotations: Vec<f64>,
    translations: Vec<f64>,
    in_plane: bool,
    noise: f64,
    spread: f64,
    separation: f64,
}

fn benchmark_dataset(seed: u64, task: &Task) -> mtada_core::dataset::Dataset {
    let dim = 8;
    let shifts = task
        .rotations
        .iter()
        .zip(task.translations.iter())
        .map(|(&r, &t)| {
            let mut translation = Vector::zeros(dim);
            if task.in_plane {
                let unit = 1.0 / 2f64.sqrt();
                translation[0] = t * unit;
                translation[1] = t * unit;
            } else {
                let unit = 1.0 / (dim as f64).sqrt();
                for i in 0..dim {
                    translation[i] = t * unit;
                }
            }
            DomainShiftSpec {
                rotation: r,
                translation,
                scale: 1.0,
                noise: task.noise,
            }
        })
        .collect();
    let cfg = GeneratorConfig {
        n_classes: 4,
        n_targets: task.rotations.len() - 1,
        dim,
        train_per_domain: 300,
        test_per_domain: 300,
        class_separation: task.separation,
        class_spread: task.spread,
        shifts,
    };
    generate(seed, &cfg).unwrap()
}

fn da_gain(task: &Task, epochs: usize) -> (f64, f64) {
    let mut adapted_total = 0.0;
    let mut plain_total = 0.0;
    for seed in 1..=5u64 {
        let ds = benchmark_dataset(seed, task);
        let mut cfg = RunConfig {
            mode: DiscriminationMode::Binary,
            ..RunConfig::default_for(seed)
        };
        cfg.pretrain_epochs = epochs;
        for adapted in [true, false] {
            let mut rng = Rng::substream(seed, streams::MODEL_INIT);
            let mut model = ModelState::init(cfg.arch_for(&ds.train), &mut rng);
            let mut log = Vec::new();
            let mut audit = Default::default();
            if adapted {
                pretrain(
                    &mut model, &ds.train, cfg.batch, epochs,
                    &cfg.pretrain_opt, seed, &mut log, &mut audit,
                )
                .unwrap();
            } else {
                train_source_only(
                    &mut model, &ds.train, cfg.batch, epochs,
                    &cfg.pretrain_opt, seed, &mut log, &mut audit,
                )
                .unwrap();
            }
            let (_, mean) = per_target_accuracy(&model, &ds.test).unwrap();
            if adapted {
                adapted_total += mean;
            } else {
                plain_total += mean;
            }
        }
    }
    (adapted_total / 5.0, plain_total / 5.0)
}

#[test]
#[ignore]
fn probe_da_gain() {
    let mk = |rot: Vec<f64>, trans: Vec<f64>, in_plane: bool, noise: f64, spread: f64, sep: f64| Task {
        rotations: rot, translations: trans, in_plane, noise, spread, separation: sep,
    };
    for (label, task, epochs) in [
        ("c1 rot30/60 tIn1.5/2.5 e600", mk(vec![0.0, 0.5236, 1.0472], vec![0.0, 1.5, 2.5], true, 0.1, 0.8, 2.0), 600),
        ("c2 rot30/60 tIn2/3 e600", mk(vec![0.0, 0.5236, 1.0472], vec![0.0, 2.0, 3.0], true, 0.1, 0.8, 2.0), 600),
        ("c3 rot45/60 tIn1.5/2.5 e600", mk(vec![0.0, 0.7854, 1.0472], vec![0.0, 1.5, 2.5], true, 0.1, 0.8, 2.0), 600),
        ("c4 rot30/60 tIn1.5/2.5 e400", mk(vec![0.0, 0.5236, 1.0472], vec![0.0, 1.5, 2.5], true, 0.1, 0.8, 2.0), 400),
    ] {
        let (adapted, plain) = da_gain(&task, epochs);
        eprintln!(
            "{label}: adapted {:.2} source-only {:.2} gain {:+.2}",
            adapted * 100.0,
            plain * 100.0,
            (adapted - plain) * 100.0
        );
    }
}

#[test]
#[ignore]
fn probe_alignment_dynamics() {
    use mtada_core::metrics::domain_distance_matrix;
    use mtada_core::trainer::encode_test_features;

    let ds = benchmark_dataset(1, &Task {
        rotations: vec![0.0, 0.0, 0.0],
        translations: vec![0.0, 2.5, 3.5],
        in_plane: true,
        noise: 0.1,
        spread: 0.8,
        separation: 2.0,
    });
    let cfg = RunConfig {
        mode: DiscriminationMode::Binary,
        ..RunConfig::default_for(1)
    };
    for adapted in [false, true] {
        let mut rng = Rng::substream(1, streams::MODEL_INIT);
        let mut model = ModelState::init(cfg.arch_for(&ds.train), &mut rng);
        let mut log = Vec::new();
        let mut audit = Default::default();
        if adapted {
            pretrain(
                &mut model, &ds.train, cfg.batch, cfg.pretrain_epochs,
                &cfg.pretrain_opt, 1, &mut log, &mut audit,
            )
            .unwrap();
        } else {
            train_source_only(
                &mut model, &ds.train, cfg.batch, cfg.pretrain_epochs,
                &cfg.pretrain_opt, 1, &mut log, &mut audit,
            )
            .unwrap();
        }
        let feats = encode_test_features(&model, &ds);
        let dmat = domain_distance_matrix(&feats).unwrap();
        let (_, mean) = per_target_accuracy(&model, &ds.test).unwrap();
        let l_dom_head: Vec<f64> = log.iter().take(3).map(|r| r.l_dom).collect();
        let l_dom_tail: Vec<f64> = log.iter().rev().take(3).map(|r| r.l_dom).collect();
        eprintln!(
            "adapted={adapted}: acc {:.3} dprime S-T1 {:.3} S-T2 {:.3} l_dom head {:?} tail {:?}",
            mean,
            dmat.get(0, 1),
            dmat.get(0, 2),
            l_dom_head,
            l_dom_tail
        );
    }
}

#[test]
#[ignore]
fn probe_z_separability() {
    let task = Task {
        rotations: vec![0.0, 0.0],
        translations: vec![0.0, 3.0],
        in_plane: true,
        noise: 0.1,
        spread: 0.8,
        separation: 2.0,
    };
    let ds = benchmark_dataset(1, &task);
    let cfg = RunConfig {
        mode: DiscriminationMode::Binary,
        ..RunConfig::default_for(1)
    };

    let gap = |model: &ModelState| -> f64 {
        let mut means = vec![Vector::zeros(cfg.embed_dim), Vector::zeros(cfg.embed_dim)];
        let mut counts = [0usize; 2];
        let mut all: Vec<(usize, Vector)> = Vec::new();
        for d in 0..=1usize {
            for s in ds.test.domain(d) {
                let z = model.encode(&s.x);
                means[d].axpy(1.0, &z);
                counts[d] += 1;
                all.push((d, z));
            }
        }
        for d in 0..=1usize {
            means[d].scale(1.0 / counts[d] as f64);
        }
        let mut pooled_var = 0.0;
        for (d, z) in &all {
            let mut diff = z.clone();
            diff.axpy(-1.0, &means[*d]);
            pooled_var += mtada_core::numerics::dot(&diff, &diff);
        }
        pooled_var /= all.len() as f64;
        let mut gapv = means[0].clone();
        gapv.axpy(-1.0, &means[1]);
        mtada_core::numerics::l2_norm(&gapv) / pooled_var.sqrt()
    };

    let mut rng = Rng::substream(1, streams::MODEL_INIT);
    let init = ModelState::init(cfg.arch_for(&ds.train), &mut rng);
    eprintln!("effect size at init: {:.4}", gap(&init));

    for epochs in [60, 150, 300, 600] {
        let mut plain = init.clone();
        let (mut log, mut audit) = (Vec::new(), Default::default());
        train_source_only(&mut plain, &ds.train, cfg.batch, epochs, &cfg.pretrain_opt, 1, &mut log, &mut audit).unwrap();
        let (_, acc_p) = per_target_accuracy(&plain, &ds.test).unwrap();

        let mut adv = init.clone();
        let (mut log2, mut audit2) = (Vec::new(), Default::default());
        pretrain(&mut adv, &ds.train, cfg.batch, epochs, &cfg.pretrain_opt, 1, &mut log2, &mut audit2).unwrap();
        let (_, acc_a) = per_target_accuracy(&adv, &ds.test).unwrap();
        let tail: Vec<f64> = log2.iter().rev().take(3).map(|r| r.l_dom).collect();
        eprintln!(
            "epochs {epochs}: src-only eff {:.3} acc {:.3} | adv eff {:.3} acc {:.3} l_dom tail {tail:?}",
            gap(&plain), acc_p, gap(&adv), acc_a
        );
    }
}
