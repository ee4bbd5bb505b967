//! Aggregation of finished run directories into mean/std tables.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::ExperimentConfig;

struct RunRecord {
    cfg: ExperimentConfig,
    /// stage -> mean target accuracy (macro average over targets).
    stage_accuracy: BTreeMap<usize, f64>,
}

fn load_run(dir: &str) -> Result<RunRecord> {
    let echo = std::fs::read_to_string(Path::new(dir).join("config.echo"))
        .with_context(|| format!("{dir}: missing config.echo"))?;
    let cfg = ExperimentConfig::parse(&echo).with_context(|| format!("{dir}: bad config.echo"))?;

    let stages = std::fs::read_to_string(Path::new(dir).join("stages.csv"))
        .with_context(|| format!("{dir}: missing stages.csv"))?;
    let mut acc_by_stage: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (i, line) in stages.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("{dir}: stages.csv line {}: expected 5 columns", i + 1);
        }
        let stage: usize = fields[0].parse()?;
        let acc: f64 = fields[2].parse()?;
        acc_by_stage.entry(stage).or_default().push(acc);
    }
    let stage_accuracy = acc_by_stage
        .into_iter()
        .map(|(stage, accs)| (stage, accs.iter().sum::<f64>() / accs.len() as f64))
        .collect();
    Ok(RunRecord {
        cfg,
        stage_accuracy,
    })
}

fn check_consistency(runs: &[(String, RunRecord)]) -> Result<()> {
    let (first_dir, first) = &runs[0];
    let reference = first.cfg.aggregation_signature();
    for (dir, run) in &runs[1..] {
        let sig = run.cfg.aggregation_signature();
        if sig != reference {
            let mut diff = String::new();
            for ((k, va), (_, vb)) in reference.iter().zip(sig.iter()) {
                if va != vb {
                    let _ = writeln!(diff, "  {k}: {va:?} ({first_dir}) vs {vb:?} ({dir})");
                }
            }
            bail!("run directories disagree on shared configuration:\n{diff}");
        }
    }
    Ok(())
}

pub fn cmd_report(dirs: &[String], out: Option<&str>) -> Result<()> {
    let runs: Vec<(String, RunRecord)> = dirs
        .iter()
        .map(|d| load_run(d).map(|r| (d.clone(), r)))
        .collect::<Result<_>>()?;
    check_consistency(&runs)?;

    // Group by (sampler, mode, alpha, beta, stage) across seeds.
    type Key = (String, String, String, String, usize);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for (_, run) in &runs {
        for (&stage, &acc) in &run.stage_accuracy {
            let key = (
                run.cfg.sampler.clone(),
                run.cfg.mode.clone(),
                run.cfg.alpha.to_string(),
                run.cfg.beta.to_string(),
                stage,
            );
            groups.entry(key).or_default().push(acc);
        }
    }

    // Population mean/std; a single run reports its raw value with std 0.
    let stats: BTreeMap<Key, (usize, f64, f64)> = groups
        .iter()
        .map(|(k, accs)| {
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            (k.clone(), (accs.len(), mean, var.sqrt()))
        })
        .collect();

    let mut csv = String::from(
        "sampler,mode,alpha,beta,stage,runs,mean_accuracy,std_accuracy,delta_vs_random\n",
    );
    for (key, (n, mean, std)) in &stats {
        let (sampler, mode, alpha, beta, stage) = key;
        let random_key: Key = (
            "random".into(),
            mode.clone(),
            alpha.clone(),
            beta.clone(),
            *stage,
        );
        let delta = if sampler != "random" {
            stats
                .get(&random_key)
                .map(|(_, rm, _)| format!("{}", mean - rm))
                .unwrap_or_default()
        } else {
            String::new()
        };
        let _ = writeln!(
            csv,
            "{sampler},{mode},{alpha},{beta},{stage},{n},{mean},{std},{delta}"
        );
    }

    print!("{csv}");
    if let Some(path) = out {
        std::fs::write(path, &csv).with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}
