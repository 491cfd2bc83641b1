#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};
use std::process::Command;

use svn_cli::{cmd_compare, cmd_run, cmd_snapshot, snapshot_epochs, Overrides};
use svn_core::output::MetricsReport;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn toy_config(method: &str, epochs: usize, extra: &str) -> String {
    format!(
        "[dataset]\nbuiltin = \"toy\"\n[model]\nhidden = [4]\n[method]\nmethod = \"{method}\"\nepochs = {epochs}\nbatch_size = 50\nstep_size = 0.001\n{extra}"
    )
}

fn out(dir: &Path) -> Overrides {
    Overrides {
        out: Some(dir.to_path_buf()),
        ..Overrides::default()
    }
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// 60 rows of `y = x0 - 2 x1 + noise`.
fn regression_manifest(dir: &Path) -> PathBuf {
    let mut csv = String::from("x0,x1,y\n");
    for i in 0..60 {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 0.11).cos();
        csv.push_str(&format!("{a},{b},{}\n", a - 2.0 * b + 0.01 * (i % 7) as f64));
    }
    write(dir, "data.csv", &csv);
    write(dir, "data.toml", "name = \"lin\"\npath = \"data.csv\"\ntarget = \"y\"\n")
}

#[test]
fn zero_epochs_reports_the_untrained_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &toy_config("svn", 0, ""));
    let o = dir.path().join("out");
    assert_eq!(cmd_run(&cfg, &out(&o)).unwrap(), 0);
    let r = MetricsReport::read(&o.join("fold_0/metrics.json")).unwrap();
    assert_eq!(r.best_epoch, 0);
    assert!(r.metrics.contains_key("nll"));
    for f in ["history.csv", "predictions.csv", "checkpoint.json"] {
        assert!(o.join("fold_0").join(f).exists(), "{f}");
    }
}

#[test]
fn invalid_method_exits_nonzero_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &toy_config("newton", 1, ""));
    let o = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_svn"))
        .args(["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("newton"));
    assert!(!o.exists());
}

#[test]
fn binary_runs_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &toy_config("svgd", 1, ""));
    let o = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_svn"))
        .env("SVN_WORKERS", "2")
        .args(["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap(), "--seed", "7"])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(MetricsReport::read(&o.join("fold_0/metrics.json")).unwrap().seed, 7);
}

#[test]
fn toy_predictions_cover_the_test_domain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &toy_config("svn", 2, "curvature = \"full\"\n"));
    let o = dir.path().join("out");
    assert_eq!(cmd_run(&cfg, &out(&o)).unwrap(), 0);
    let rows = read_csv(&o.join("fold_0/predictions.csv"));
    assert_eq!(rows[0], ["x", "target", "pred_mean", "pred_std"]);
    assert_eq!(rows.len(), 201);
    let xs: Vec<f64> = rows[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    assert!((xs[0] - 0.0).abs() < 1e-12 && (xs[199] - 7.0).abs() < 1e-12);
    assert!(rows[1..].iter().all(|r| r[3].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn history_has_the_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &toy_config("ensemble", 3, ""));
    let o = dir.path().join("out");
    cmd_run(&cfg, &out(&o)).unwrap();
    let rows = read_csv(&o.join("fold_0/history.csv"));
    assert_eq!(rows[0], ["epoch", "split", "metric", "value"]);
    let val: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "val" && r[2] == "nll").collect();
    assert_eq!(val.len(), 3);
}

#[test]
fn identical_configs_give_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", &toy_config("svgd", 2, ""));
    let b = write(dir.path(), "b.toml", &toy_config("svgd", 2, ""));
    let o = dir.path().join("out");
    assert_eq!(cmd_compare(&[a, b], &out(&o)).unwrap(), 0);
    let rows = read_csv(&o.join("comparison.csv"));
    assert_eq!(rows.len(), 3);
    assert_ne!(rows[1][0], rows[2][0]);
    assert_eq!(rows[1][1..], rows[2][1..]);
}

#[test]
fn compare_histories_have_equal_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfgs: Vec<PathBuf> = ["ensemble", "svgd", "svn"]
        .iter()
        .map(|m| write(dir.path(), &format!("{m}.toml"), &toy_config(m, 4, "")))
        .collect();
    let o = dir.path().join("out");
    assert_eq!(cmd_compare(&cfgs, &out(&o)).unwrap(), 0);
    let rows = read_csv(&o.join("history.csv"));
    assert_eq!(rows[0], ["run", "fold", "epoch", "split", "metric", "value"]);
    for m in ["ensemble", "svgd", "svn"] {
        let n = rows.iter().filter(|r| r[0] == m && r[3] == "val").count();
        assert_eq!(n, 4, "{m}");
    }
}

#[test]
fn comparison_table_has_one_row_per_method_and_fold() {
    let dir = tempfile::tempdir().unwrap();
    regression_manifest(dir.path());
    let body = |m: &str| {
        format!("[dataset]\nmanifest = \"data.toml\"\nk_folds = 3\n[model]\nhidden = [3]\n[method]\nmethod = \"{m}\"\nepochs = 2\nstep_size = 0.001\n")
    };
    let a = write(dir.path(), "a.toml", &body("svgd"));
    let b = write(dir.path(), "b.toml", &body("svn"));
    let o = dir.path().join("out");
    assert_eq!(cmd_compare(&[a, b], &out(&o)).unwrap(), 0);
    let rows = read_csv(&o.join("comparison.csv"));
    assert_eq!(rows.len() - 1, 2 * 3);
    for k in 0..3 {
        assert!(o.join(format!("svn/fold_{k}/metrics.json")).exists());
    }
}

#[test]
fn folds_flag_selects_folds() {
    let dir = tempfile::tempdir().unwrap();
    regression_manifest(dir.path());
    let cfg = write(
        dir.path(),
        "c.toml",
        "[dataset]\nmanifest = \"data.toml\"\nk_folds = 4\n[model]\nhidden = [2]\n[method]\nmethod = \"svgd\"\nepochs = 1\nstep_size = 0.001\n",
    );
    let o = dir.path().join("out");
    let over = Overrides {
        folds: Some(vec![1, 3]),
        ..out(&o)
    };
    assert_eq!(cmd_run(&cfg, &over).unwrap(), 0);
    let mut made: Vec<String> = std::fs::read_dir(&o).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    made.sort();
    assert_eq!(made, ["fold_1", "fold_3"]);
}

#[test]
fn failed_folds_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    regression_manifest(dir.path());
    let cfg = write(
        dir.path(),
        "c.toml",
        "[dataset]\nmanifest = \"data.toml\"\nk_folds = 2\n[model]\nhidden = [2]\n[method]\nmethod = \"svgd\"\nepochs = 2\nstep_size = 1e300\nprior_precision = 1e300\n",
    );
    let o = dir.path().join("out");
    assert_eq!(cmd_run(&cfg, &out(&o)).unwrap(), 1);
    for k in 0..2 {
        let err = std::fs::read_to_string(o.join(format!("fold_{k}/error.txt"))).unwrap();
        assert!(!err.is_empty());
        assert!(!o.join(format!("fold_{k}/metrics.json")).exists());
    }
}

#[test]
fn snapshots_at_epoch_one_and_every_cadence() {
    assert_eq!(snapshot_epochs(100, 20), [1, 20, 40, 60, 80, 100]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "snapshot_every = 20\n[dataset]\nbuiltin = \"toy\"\n[model]\nhidden = [3]\n[method]\nmethod = \"svgd\"\nparticles = 2\nepochs = 100\nstep_size = 0.0005\n",
    );
    let o = dir.path().join("out");
    assert_eq!(cmd_snapshot(&cfg, &out(&o)).unwrap(), 0);
    let snap = o.join("fold_0/snapshots");
    let mut sets: Vec<String> = std::fs::read_dir(&snap).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    sets.sort();
    assert_eq!(sets, ["epoch_0001", "epoch_0020", "epoch_0040", "epoch_0060", "epoch_0080", "epoch_0100"]);
    for s in &sets {
        for f in ["particle_0.csv", "particle_1.csv", "mean.csv"] {
            let m: Vec<Vec<f64>> = read_csv(&snap.join(s).join(f))
                .iter()
                .map(|r| r.iter().map(|v| v.parse().unwrap()).collect())
                .collect();
            assert_eq!(m.len(), 14);
            for i in 0..14 {
                for j in 0..14 {
                    assert_eq!(m[i][j], m[j][i], "{s}/{f}");
                }
            }
        }
    }
}

#[test]
fn snapshot_refuses_oversized_full_curvature() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[dataset]\nbuiltin = \"toy\"\n[model]\nhidden = [8]\n[method]\nmethod = \"svgd\"\nepochs = 1\nfull_cap = 10\n",
    );
    let o = dir.path().join("out");
    let err = cmd_snapshot(&cfg, &out(&o)).unwrap_err();
    assert!(format!("{err:#}").contains("full curvature"));
    assert!(!o.exists());
}
