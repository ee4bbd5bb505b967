//! Run-directory plumbing for `generate`, `run`, and `eval`.

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mtada_core::dataset::{dataset_to_csv, generate, load_csv, Dataset};
use mtada_core::model::{load_model, model_to_string};
use mtada_core::trainer::{losses_csv, run_experiment, stages_csv, RunOutput};

use crate::config::ExperimentConfig;

fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!(
            "{} already exists; pass --force to overwrite",
            path.display()
        );
    }
    Ok(())
}

fn obtain_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, String)> {
    let ds = match &cfg.dataset {
        Some(path) => load_csv(Path::new(path))
            .with_context(|| format!("loading dataset {path}"))?,
        None => generate(cfg.seed, &cfg.generator_config())?,
    };
    let hash = sha256_hex(&dataset_to_csv(&ds));
    Ok((ds, hash))
}

pub fn cmd_generate(cfg: &ExperimentConfig, force: bool) -> Result<()> {
    let out_dir = PathBuf::from(&cfg.out);
    ensure_dir(&out_dir)?;
    let csv_path = out_dir.join("dataset.csv");
    refuse_overwrite(&csv_path, force)?;

    let ds = generate(cfg.seed, &cfg.generator_config())?;
    let csv = dataset_to_csv(&ds);
    let hash = sha256_hex(&csv);
    std::fs::write(&csv_path, &csv)?;
    std::fs::write(out_dir.join("dataset.sha256"), format!("{hash}\n"))?;
    std::fs::write(out_dir.join("config.echo"), cfg.to_echo())?;
    println!(
        "wrote {} ({} train + {} test rows per domain, {} domains, sha256 {})",
        csv_path.display(),
        cfg.train_per_domain,
        cfg.test_per_domain,
        cfg.targets + 1,
        &hash[..12]
    );
    Ok(())
}

/// Execute one resolved configuration into its output directory.
/// Returns per-stage mean target accuracies (index = stage).
pub fn run_single(cfg: &ExperimentConfig, force: bool) -> Result<Vec<f64>> {
    let out_dir = PathBuf::from(&cfg.out);
    ensure_dir(&out_dir)?;
    refuse_overwrite(&out_dir.join("stages.csv"), force)?;

    let (ds, hash) = obtain_dataset(cfg)?;
    let run_cfg = cfg.run_config()?;
    let output: RunOutput = run_experiment(&ds, &run_cfg)?;

    std::fs::write(out_dir.join("config.echo"), cfg.to_echo())?;
    std::fs::write(out_dir.join("dataset.sha256"), format!("{hash}\n"))?;
    std::fs::write(out_dir.join("stages.csv"), stages_csv(&output.reports))?;
    std::fs::write(out_dir.join("losses.csv"), losses_csv(&output.loss_log))?;
    for artifact in &output.artifacts {
        std::fs::write(
            out_dir.join(format!("scores_stage{}.csv", artifact.stage)),
            &artifact.score_trace_csv,
        )?;
        std::fs::write(
            out_dir.join(format!("pca_stage{}.csv", artifact.stage)),
            &artifact.pca_csv,
        )?;
    }
    for (stage, model) in output.checkpoints.iter().enumerate() {
        std::fs::write(
            out_dir.join(format!("model_stage{stage}.csv")),
            model_to_string(model),
        )?;
    }

    let accs: Vec<f64> = output
        .reports
        .iter()
        .map(|r| r.mean_target_accuracy)
        .collect();
    for r in &output.reports {
        log::info!(
            "seed {} sampler {} stage {}: mean target accuracy {:.4} ({} ms)",
            cfg.seed,
            cfg.sampler,
            r.stage,
            r.mean_target_accuracy,
            r.wall_ms
        );
    }
    Ok(accs)
}

pub fn cmd_run(
    base: &ExperimentConfig,
    seeds: &[u64],
    samplers: &[String],
    force: bool,
) -> Result<()> {
    if seeds.len() == 1 && samplers.len() == 1 {
        let mut cfg = base.clone();
        cfg.seed = seeds[0];
        cfg.sampler = samplers[0].clone();
        cfg.finalize()?;
        let accs = run_single(&cfg, force)?;
        for (stage, acc) in accs.iter().enumerate() {
            println!("stage {stage}: mean target accuracy {acc:.4}");
        }
        return Ok(());
    }

    // Matrix run: one subdirectory per (sampler, seed), plus a comparison
    // table of mean target accuracy per stage.
    let root = PathBuf::from(&base.out);
    ensure_dir(&root)?;
    let mut comparison = String::from("sampler,seed,stage,mean_target_accuracy\n");
    for sampler in samplers {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.sampler = sampler.clone();
            cfg.out = root
                .join(format!("{sampler}-seed{seed}"))
                .to_string_lossy()
                .into_owned();
            cfg.finalize()?;
            let accs = run_single(&cfg, force)
                .with_context(|| format!("run {sampler} seed {seed}"))?;
            for (stage, acc) in accs.iter().enumerate() {
                let _ = writeln!(comparison, "{sampler},{seed},{stage},{acc}");
            }
        }
    }
    std::fs::write(root.join("comparison.csv"), &comparison)?;
    print!("{comparison}");
    Ok(())
}

pub fn cmd_eval(dataset_path: &str, model_path: &str) -> Result<()> {
    let ds = load_csv(Path::new(dataset_path))
        .with_context(|| format!("loading dataset {dataset_path}"))?;
    let model = load_model(Path::new(model_path))
        .with_context(|| format!("loading checkpoint {model_path}"))?;

    let report = mtada_core::trainer::evaluate(&model, &ds, 0, 0, None, 0)?;
    println!("target,accuracy,normalized_distance_to_source");
    for t in &report.targets {
        println!("{},{},{}", t.domain, t.accuracy, t.dprime_to_source);
    }
    println!("mean,{},", report.mean_target_accuracy);

    let features = mtada_core::trainer::encode_test_features(&model, &ds);
    let dmat = mtada_core::metrics::domain_distance_matrix(&features)?;
    println!("normalized_domain_distance_matrix");
    for a in 0..dmat.n_domains {
        let row: Vec<String> = (0..dmat.n_domains)
            .map(|b| format!("{:.6}", dmat.get(a, b)))
            .collect();
        println!("{}", row.join(","));
    }
    println!("mean_off_diagonal,{:.6}", dmat.mean_off_diagonal());
    Ok(())
}
