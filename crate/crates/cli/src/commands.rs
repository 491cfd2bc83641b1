//! The `run`, `compare` and `snapshot` commands.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use svn_core::curvature::{dump_curvature, estimate};
use svn_core::inference::{train, EpochRecord, NoObserver, TrainObserver};
use svn_core::metrics::{ensemble_outputs, evaluate, predictive_regression, summarize_classification};
use svn_core::output::{write_atomic, write_csv, MetricsReport};
use svn_core::{Batch, CurvatureEstimate, CurvatureKind, DatasetSplit, ParticleEnsemble, PriorSpec};

use crate::config::{load_experiment, Experiment, Overrides};

/// Outcome of one fold. `report` is `None` when training failed.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub report: Option<MetricsReport>,
    pub history: Vec<EpochRecord>,
    pub error: Option<String>,
}

fn fold_dir(root: &Path, fold: usize) -> PathBuf {
    root.join(format!("fold_{fold}"))
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn history_rows(history: &[EpochRecord]) -> Vec<[String; 4]> {
    let mut rows = Vec::with_capacity(history.len() * 6);
    for r in history {
        let e = r.epoch.to_string();
        let mut push = |split: &str, metric: &str, v: f64| {
            rows.push([e.clone(), split.to_string(), metric.to_string(), fmt(v)]);
        };
        push("train", "loss", r.train_loss);
        push("val", "nll", r.val_nll);
        push("train", "rejections", r.rejections as f64);
        push("train", "cg_iters", r.cg_iters as f64);
        push("train", "fallbacks", r.fallbacks as f64);
        push("train", "wall_time", r.wall_time);
    }
    rows
}

fn write_predictions(path: &Path, ens: &ParticleEnsemble, split: &DatasetSplit) -> anyhow::Result<()> {
    let x = split.test_inputs_original();
    let mut header: Vec<String> = if x.cols() == 1 {
        vec!["x".into()]
    } else {
        (0..x.cols()).map(|j| format!("x{j}")).collect()
    };
    header.push("target".into());
    let head = ens.arch.head();
    let mut rows: Vec<Vec<String>> = (0..x.rows()).map(|i| x.row(i).iter().map(|&v| fmt(v)).collect()).collect();
    if head.is_regression() {
        let s = predictive_regression(&ens.arch, &ens.particles, &split.test.x)?;
        header.extend(["pred_mean".into(), "pred_std".into()]);
        for (i, row) in rows.iter_mut().enumerate() {
            let (y, _) = split.destandardize(split.test.y[i], 0.0);
            let (m, sd) = split.destandardize(s.mean[i], s.std[i]);
            row.extend([fmt(y), fmt(m), fmt(sd)]);
        }
    } else {
        let outs = ensemble_outputs(&ens.arch, &ens.particles, &split.test.x)?;
        let s = summarize_classification(head, &outs)?;
        let classes = s.probs.first().map_or(0, Vec::len);
        header.extend((0..classes).map(|c| format!("prob_{c}")));
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(fmt(split.test.y[i]));
            row.extend(s.probs[i].iter().map(|&p| fmt(p)));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, rows)?;
    Ok(())
}

/// Trains one fold and writes its files into `dir`.
fn run_fold(
    exp: &Experiment,
    fold: usize,
    split: &DatasetSplit,
    dir: &Path,
    observer: &mut dyn TrainObserver,
) -> FoldResult {
    let history_path = dir.join("history.csv");
    let header = ["epoch", "split", "metric", "value"];
    let outcome = match train(split, &exp.arch, &exp.method, observer) {
        Ok(o) => o,
        Err(e) => {
            log::error!("{} fold {fold}: {e}", exp.name);
            let msg = e.to_string();
            let _ = write_csv(&history_path, &header, history_rows(&e.history));
            let _ = write_atomic(&dir.join("error.txt"), format!("{msg}\n").as_bytes());
            return FoldResult {
                fold,
                report: None,
                history: e.history,
                error: Some(msg),
            };
        }
    };
    let finish = || -> anyhow::Result<MetricsReport> {
        let best = &outcome.best;
        let mut metrics = evaluate(&best.arch, &best.particles, &split.test.x, &split.test.y)?;
        metrics.insert("val_nll".into(), outcome.best_val_nll);
        metrics.retain(|k, v| {
            if !v.is_finite() {
                log::warn!("{} fold {fold}: metric {k} is not finite and is omitted", exp.name);
            }
            v.is_finite()
        });
        let report = MetricsReport {
            method: exp.method.method.name().to_string(),
            dataset: exp.dataset.clone(),
            fold,
            seed: exp.method.seed,
            best_epoch: outcome.best_epoch,
            metrics,
        };
        report.write(&dir.join("metrics.json"))?;
        write_csv(&history_path, &header, history_rows(&outcome.history))?;
        write_predictions(&dir.join("predictions.csv"), best, split)?;
        let ck = best.checkpoint(exp.method.seed).to_json()?;
        write_atomic(&dir.join("checkpoint.json"), ck.as_bytes())?;
        Ok(report)
    };
    match finish() {
        Ok(report) => FoldResult {
            fold,
            report: Some(report),
            history: outcome.history,
            error: None,
        },
        Err(e) => {
            let msg = format!("{e:#}");
            log::error!("{} fold {fold}: {msg}", exp.name);
            let _ = write_atomic(&dir.join("error.txt"), format!("{msg}\n").as_bytes());
            FoldResult {
                fold,
                report: None,
                history: outcome.history,
                error: Some(msg),
            }
        }
    }
}

/// Runs every selected fold of `exp`, in parallel, writing into
/// `exp.output_dir/fold_<k>/`.
pub fn run_experiment(exp: &Experiment) -> Vec<FoldResult> {
    exp.folds
        .par_iter()
        .map(|(k, split)| run_fold(exp, *k, split, &fold_dir(&exp.output_dir, *k), &mut NoObserver))
        .collect()
}

fn exit_code(results: &[FoldResult]) -> i32 {
    if results.iter().all(|r| r.error.is_none()) {
        0
    } else {
        1
    }
}

pub fn cmd_run(config: &Path, over: &Overrides) -> anyhow::Result<i32> {
    let exp = load_experiment(config, over)?;
    let results = run_experiment(&exp);
    for r in &results {
        if let Some(rep) = &r.report {
            log::info!("{} fold {}: test {:?}", exp.name, r.fold, rep.metrics);
        }
    }
    Ok(exit_code(&results))
}

/// Runs several configs on the same folds and seeds. Each config gets its own
/// subdirectory; `comparison.csv` has one row per config and fold and
/// `history.csv` stacks every run's history.
pub fn cmd_compare(configs: &[PathBuf], over: &Overrides) -> anyhow::Result<i32> {
    if configs.is_empty() {
        anyhow::bail!("compare needs at least one config");
    }
    let root = over.out.clone().unwrap_or_else(|| PathBuf::from("runs/compare"));
    let mut exps = Vec::with_capacity(configs.len());
    let mut seen = BTreeSet::new();
    for (i, path) in configs.iter().enumerate() {
        let mut exp = load_experiment(path, &Overrides { out: None, ..over.clone() })
            .with_context(|| format!("config {}", path.display()))?;
        let mut label = exp.name.clone();
        if !seen.insert(label.clone()) {
            label = format!("{label}_{i}");
            seen.insert(label.clone());
        }
        exp.output_dir = root.join(&label);
        exps.push((label, exp));
    }
    let fold_sets: BTreeSet<Vec<usize>> = exps
        .iter()
        .map(|(_, e)| e.folds.iter().map(|(k, _)| *k).collect())
        .collect();
    if fold_sets.len() > 1 {
        anyhow::bail!("configs select different folds; pass --folds to align them");
    }

    let mut all = Vec::new();
    for (label, exp) in &exps {
        all.push((label.clone(), run_experiment(exp)));
    }

    let keys: BTreeSet<String> = all
        .iter()
        .flat_map(|(_, rs)| rs.iter().filter_map(|r| r.report.as_ref()))
        .flat_map(|r| r.metrics.keys().cloned())
        .collect();
    let mut header: Vec<String> = ["run", "method", "fold", "best_epoch", "status"].map(String::from).to_vec();
    header.extend(keys.iter().cloned());
    let mut table = Vec::new();
    let mut joint = Vec::new();
    for (label, results) in &all {
        for r in results {
            let method = exps.iter().find(|(l, _)| l == label).map(|(_, e)| e.method.method.name()).unwrap_or("");
            let mut row = vec![label.clone(), method.to_string(), r.fold.to_string()];
            match &r.report {
                Some(rep) => {
                    row.push(rep.best_epoch.to_string());
                    row.push("ok".into());
                    row.extend(keys.iter().map(|k| rep.metrics.get(k).map_or(String::new(), |&v| fmt(v))));
                }
                None => {
                    row.push(String::new());
                    row.push("failed".into());
                    row.extend(keys.iter().map(|_| String::new()));
                }
            }
            table.push(row);
            for h in history_rows(&r.history) {
                let mut row = vec![label.clone(), r.fold.to_string()];
                row.extend(h);
                joint.push(row);
            }
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&root.join("comparison.csv"), &header, table)?;
    write_csv(
        &root.join("history.csv"),
        &["run", "fold", "epoch", "split", "metric", "value"],
        joint,
    )?;
    let results: Vec<FoldResult> = all.into_iter().flat_map(|(_, r)| r).collect();
    Ok(exit_code(&results))
}

/// Dumps per-particle curvature and its particle mean on the full training
/// set at epoch 1 and every `every` epochs.
struct SnapshotObserver<'a> {
    exp: &'a Experiment,
    kind: CurvatureKind,
    batch: Batch,
    prior: PriorSpec,
    dir: PathBuf,
    every: usize,
    taken: Vec<usize>,
}

impl TrainObserver for SnapshotObserver<'_> {
    fn epoch_end(&mut self, record: &EpochRecord, ens: &ParticleEnsemble) -> svn_core::Result<()> {
        let e = record.epoch;
        if e != 1 && !e.is_multiple_of(self.every) {
            return Ok(());
        }
        let d = ens.dim();
        let cap = self.exp.method.full_cap;
        let ests: Vec<CurvatureEstimate> = ens
            .particles
            .par_iter()
            .map(|p| estimate(self.kind, &ens.arch, p, &self.batch, &self.prior, 0..d, cap))
            .collect::<svn_core::Result<_>>()?;
        let dir = self.dir.join(format!("epoch_{e:04}"));
        for (i, est) in ests.iter().enumerate() {
            dump_curvature(est, &dir.join(format!("particle_{i}.csv")))?;
        }
        dump_curvature(&CurvatureEstimate::average(&ests)?, &dir.join("mean.csv"))?;
        self.taken.push(e);
        Ok(())
    }
}

/// Number of snapshot sets a run of `epochs` epochs produces.
pub fn snapshot_epochs(epochs: usize, every: usize) -> Vec<usize> {
    (1..=epochs).filter(|&e| e == 1 || e % every == 0).collect()
}

pub fn cmd_snapshot(config: &Path, over: &Overrides) -> anyhow::Result<i32> {
    let exp = load_experiment(config, over)?;
    let kind = exp.method.curvature_kind().or(exp.method.curvature).unwrap_or(CurvatureKind::Full);
    let d = exp.arch.num_params();
    if kind == CurvatureKind::Full && d > exp.method.full_cap {
        return Err(svn_core::Error::CurvatureTooLarge { d, cap: exp.method.full_cap }.into());
    }
    let prior = PriorSpec::new(exp.method.prior_precision)?;
    let results: Vec<FoldResult> = exp
        .folds
        .par_iter()
        .map(|(k, split)| {
            let dir = fold_dir(&exp.output_dir, *k);
            let batch = match Batch::full(split.train.x.clone(), split.train.y.clone()) {
                Ok(b) => b,
                Err(e) => {
                    return FoldResult {
                        fold: *k,
                        report: None,
                        history: Vec::new(),
                        error: Some(e.to_string()),
                    }
                }
            };
            let mut obs = SnapshotObserver {
                exp: &exp,
                kind,
                batch,
                prior,
                dir: dir.join("snapshots"),
                every: exp.snapshot_every,
                taken: Vec::new(),
            };
            let r = run_fold(&exp, *k, split, &dir, &mut obs);
            log::info!("{} fold {k}: curvature snapshots at epochs {:?}", exp.name, obs.taken);
            r
        })
        .collect();
    Ok(exit_code(&results))
}

/// Mean and standard error of a metric over the successful folds.
pub fn fold_summary(results: &[FoldResult], metric: &str) -> Option<(f64, f64)> {
    let v: Vec<f64> = results
        .iter()
        .filter_map(|r| r.report.as_ref()?.metrics.get(metric).copied())
        .collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Some((mean, se))
}
