//! Dataset loading, fold construction, standardisation and the synthetic
//! cubic regression problem.
//!
//! All randomness comes from `ChaCha8Rng`, so splits and toy data are
//! identical across platforms for a given seed.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Regression,
    Binary,
    Multiclass,
}

/// Numeric table read from a CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: DenseMatrix,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no column named {name:?}")))
    }

    /// Splits off `target` as the response; the remaining columns (or just
    /// `features`, if given) become inputs in file order.
    pub fn to_dataset(&self, target: &str, features: Option<&[String]>) -> Result<Dataset> {
        let t = self.column_index(target)?;
        let cols: Vec<usize> = match features {
            Some(names) => names.iter().map(|n| self.column_index(n)).collect::<Result<_>>()?,
            None => (0..self.columns.len()).filter(|&c| c != t).collect(),
        };
        let n = self.rows.rows();
        let mut x = DenseMatrix::zeros(n, cols.len());
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let row = self.rows.row(i);
            for (j, &c) in cols.iter().enumerate() {
                x.set(i, j, row[c]);
            }
            y.push(row[t]);
        }
        Dataset::new(x, y)
    }
}

/// Reads a comma-separated numeric file with a header row. Errors name the
/// 1-based file line and column of the offending cell.
pub fn load_csv(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(n + 2, |p| p.line() as usize);
        if rec.len() != columns.len() {
            return Err(Error::Parse {
                line,
                column: rec.len().min(columns.len()) + 1,
                message: format!("expected {} fields, found {}", columns.len(), rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(v);
        }
        n += 1;
    }
    let rows = DenseMatrix::from_vec(n, columns.len(), data)?;
    Ok(Table { columns, rows })
}

pub fn write_table_csv(table: &Table, path: &Path) -> Result<()> {
    let rows = (0..table.rows.rows()).map(|i| table.rows.row(i).iter().map(f64::to_string).collect::<Vec<_>>());
    let header: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    crate::output::write_csv(path, &header, rows)
}

/// Where to find a dataset and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    /// Resolved against the manifest's directory when relative.
    pub path: PathBuf,
    pub target: String,
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub task: Task,
}

impl DatasetManifest {
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        let p = if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        };
        load_csv(&p)?.to_dataset(&self.target, self.features.as_deref())
    }
}

/// Inputs and targets with aligned rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        check_len("Dataset rows", x.rows(), y.len())?;
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let d = self.x.cols();
        let mut x = DenseMatrix::zeros(idx.len(), d);
        for (r, &i) in idx.iter().enumerate() {
            x.data_mut()[r * d..(r + 1) * d].copy_from_slice(self.x.row(i));
        }
        Dataset {
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Per-column affine map `(v - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(cols: usize) -> Self {
        Self {
            mean: vec![0.0; cols],
            std: vec![1.0; cols],
        }
    }

    /// Population statistics of each column. Constant columns get `std = 1`.
    pub fn fit(x: &DenseMatrix) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        if n == 0 {
            return Self { mean, std };
        }
        for j in 0..d {
            let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
            mean[j] = m;
            let s = var.sqrt();
            if s > 1e-12 * m.abs().max(1.0) {
                std[j] = s;
            } else {
                log::warn!("column {j} is constant on the training rows; leaving its scale at 1");
            }
        }
        Self { mean, std }
    }

    pub fn transform(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        let d = x.cols();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        out
    }

    pub fn inverse_column(&self, j: usize, v: f64) -> f64 {
        v * self.std[j] + self.mean[j]
    }
}

fn column(y: &[f64]) -> DenseMatrix {
    DenseMatrix::from_vec(y.len(), 1, y.to_vec()).expect("column shape")
}

/// Train/validation/test partition of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub task: Task,
    pub x_scaler: Scaler,
    /// Present when regression targets were standardised.
    pub y_scaler: Option<Scaler>,
}

impl DatasetSplit {
    /// Fits scalers on the training rows and applies them to every part.
    /// Regression targets are standardised as well.
    pub fn standardize(self) -> DatasetSplit {
        let xs = Scaler::fit(&self.train.x);
        let ys = (self.task == Task::Regression).then(|| Scaler::fit(&column(&self.train.y)));
        let apply = |d: Dataset| {
            let y = match &ys {
                Some(s) => d.y.iter().map(|v| (v - s.mean[0]) / s.std[0]).collect(),
                None => d.y,
            };
            Dataset { x: xs.transform(&d.x), y }
        };
        DatasetSplit {
            train: apply(self.train),
            val: apply(self.val),
            test: apply(self.test),
            task: self.task,
            x_scaler: xs.clone(),
            y_scaler: ys.clone(),
        }
    }

    /// Maps a standardised target-scale mean and std back to original units.
    pub fn destandardize(&self, mean: f64, std: f64) -> (f64, f64) {
        match &self.y_scaler {
            Some(s) => (s.inverse_column(0, mean), std * s.std[0]),
            None => (mean, std),
        }
    }

    /// Original-unit inputs of the test rows.
    pub fn test_inputs_original(&self) -> DenseMatrix {
        let mut x = self.test.x.clone();
        let d = x.cols();
        for (k, v) in x.data_mut().iter_mut().enumerate() {
            *v = self.x_scaler.inverse_column(k % d, *v);
        }
        x
    }
}

/// Standardises `split` using its training rows only.
pub fn standardize(split: DatasetSplit) -> DatasetSplit {
    split.standardize()
}

/// `k` folds over a seeded permutation. Fold `i` tests on the `i`-th block of
/// the permutation; `val_fraction` of the remaining rows (rounded) become the
/// validation set. Splits are not standardised.
pub fn kfold_splits(data: &Dataset, task: Task, k: usize, val_fraction: f64, seed: u64) -> Result<Vec<DatasetSplit>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidConfig(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    let n = data.len();
    if n < 2 * k {
        return Err(Error::NotEnoughRows(format!("{n} rows for {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(k);
    for fold in 0..k {
        let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
        let test: Vec<usize> = perm[lo..hi].to_vec();
        let rest: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
        let n_val = (val_fraction * rest.len() as f64).round() as usize;
        if n_val >= rest.len() {
            return Err(Error::NotEnoughRows(format!("fold {fold} has no training rows")));
        }
        out.push(DatasetSplit {
            train: data.select(&rest[n_val..]),
            val: data.select(&rest[..n_val]),
            test: data.select(&test),
            task,
            x_scaler: Scaler::identity(data.x.cols()),
            y_scaler: None,
        });
    }
    Ok(out)
}

/// Settings of the cubic regression generator. Base points are spread
/// uniformly over the training domain `[2, 3] ∪ [4.5, 6]` (proportional to
/// interval length); blob points add extra density on `[2, 2.5]` and
/// `[4.5, 6]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub seed: u64,
    pub base_train: usize,
    pub blob_train: [usize; 2],
    pub val: usize,
    pub test: usize,
    pub noise_std: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            base_train: 110,
            blob_train: [20, 20],
            val: 50,
            test: 200,
            noise_std: 0.25,
        }
    }
}

pub const TOY_TRAIN_DOMAIN: [(f64, f64); 2] = [(2.0, 3.0), (4.5, 6.0)];
pub const TOY_BLOBS: [(f64, f64); 2] = [(2.0, 2.5), (4.5, 6.0)];
pub const TOY_TEST_DOMAIN: (f64, f64) = (0.0, 7.0);

pub fn toy_function(x: f64) -> f64 {
    (x - 3.0).powi(3)
}

fn sample_domain<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let lens: Vec<f64> = TOY_TRAIN_DOMAIN.iter().map(|(a, b)| b - a).collect();
    let total: f64 = lens.iter().sum();
    (0..n)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            for (&(a, b), &l) in TOY_TRAIN_DOMAIN.iter().zip(&lens) {
                if u < l {
                    return a + u.min(b - a);
                }
                u -= l;
            }
            TOY_TRAIN_DOMAIN[1].1
        })
        .collect()
}

fn labelled<R: Rng>(rng: &mut R, xs: Vec<f64>, noise: &Normal<f64>) -> Dataset {
    let y = xs.iter().map(|&x| toy_function(x) + noise.sample(rng)).collect();
    Dataset::new(column(&xs), y).expect("aligned toy rows")
}

/// Raw (unstandardised) cubic regression split. Test inputs are an even
/// grid over `[0, 7]`.
pub fn toy_regression_with(cfg: &ToyConfig) -> Result<DatasetSplit> {
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::InvalidConfig(format!("toy noise_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train_x = sample_domain(&mut rng, cfg.base_train);
    for (&(a, b), &count) in TOY_BLOBS.iter().zip(&cfg.blob_train) {
        train_x.extend((0..count).map(|_| rng.random_range(a..=b)));
    }
    let train = labelled(&mut rng, train_x, &noise);
    let val_x = sample_domain(&mut rng, cfg.val);
    let val = labelled(&mut rng, val_x, &noise);
    let (lo, hi) = TOY_TEST_DOMAIN;
    let test_x: Vec<f64> = match cfg.test {
        0 => Vec::new(),
        1 => vec![lo],
        t => (0..t).map(|i| lo + (hi - lo) * i as f64 / (t - 1) as f64).collect(),
    };
    let test = labelled(&mut rng, test_x, &noise);
    Ok(DatasetSplit {
        train,
        val,
        test,
        task: Task::Regression,
        x_scaler: Scaler::identity(1),
        y_scaler: None,
    })
}

/// The default cubic problem: 150 training points and 200 test points.
pub fn toy_regression(seed: u64) -> DatasetSplit {
    toy_regression_with(&ToyConfig {
        seed,
        ..ToyConfig::default()
    })
    .expect("default toy config is valid")
}
