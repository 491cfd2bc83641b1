//! Experiment configuration files.
//!
//! A config is one TOML document:
//!
//! ```toml
//! name = "toy-svn"
//! output_dir = "runs/toy-svn"
//! snapshot_every = 20
//!
//! [dataset]
//! builtin = "toy"            # or: manifest = "data/yacht.toml"
//!
//! [model]
//! hidden = [10]
//!
//! [method]
//! method = "svn"
//! epochs = 100
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use svn_core::data::{kfold_splits, toy_regression_with, DatasetManifest, ToyConfig};
use svn_core::{Activation, DatasetSplit, Head, MethodConfig, MlpArchitecture, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Toy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub builtin: Option<Builtin>,
    /// Path to a dataset manifest (TOML).
    pub manifest: Option<PathBuf>,
    pub toy: ToyConfig,
    pub k_folds: usize,
    pub val_fraction: f64,
    /// Seed of the fold permutation, kept apart from the method seed so that
    /// different methods see the same folds.
    pub split_seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            builtin: None,
            manifest: None,
            toy: ToyConfig::default(),
            k_folds: 5,
            val_fraction: 0.2,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Defaults to the head matching the dataset's task.
    pub head: Option<Head>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![10],
            activation: Activation::Tanh,
            head: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Fold indices to run; all folds when unset.
    #[serde(default)]
    pub folds: Option<Vec<usize>>,
    /// Curvature dumps at epoch 1 and every this many epochs.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    20
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub folds: Option<Vec<usize>>,
}

/// A validated config with its data loaded and split.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub dataset: String,
    pub arch: MlpArchitecture,
    pub method: MethodConfig,
    /// `(fold index, standardised split)` for every selected fold.
    pub folds: Vec<(usize, DatasetSplit)>,
    pub output_dir: PathBuf,
    pub snapshot_every: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Loads data, builds the architecture and checks every setting. Nothing
    /// is written to disk.
    pub fn prepare(mut self, base: &Path, over: &Overrides) -> anyhow::Result<Experiment> {
        if let Some(seed) = over.seed {
            self.method.seed = seed;
        }
        if let Some(f) = &over.folds {
            self.folds = Some(f.clone());
        }
        if self.snapshot_every == 0 {
            bail!("snapshot_every must be at least 1");
        }
        let ds = &self.dataset;
        let (dataset, splits) = match (ds.builtin, &ds.manifest) {
            (Some(Builtin::Toy), None) => ("toy".to_string(), vec![toy_regression_with(&ds.toy)?]),
            (None, Some(m)) => {
                let mpath = base.join(m);
                let text = std::fs::read_to_string(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
                let manifest: DatasetManifest =
                    toml::from_str(&text).with_context(|| format!("parsing {}", mpath.display()))?;
                let data = manifest
                    .load(mpath.parent().unwrap_or(Path::new(".")))
                    .with_context(|| format!("loading dataset {}", manifest.name))?;
                let splits = kfold_splits(&data, manifest.task, ds.k_folds, ds.val_fraction, ds.split_seed)?;
                (manifest.name, splits)
            }
            (Some(_), Some(_)) => bail!("dataset: set either builtin or manifest, not both"),
            (None, None) => bail!("dataset: one of builtin or manifest is required"),
        };
        let selected = match &self.folds {
            Some(f) => {
                if f.is_empty() {
                    bail!("folds must not be empty");
                }
                for &i in f {
                    if i >= splits.len() {
                        bail!("fold {i} out of range: dataset has {} folds", splits.len());
                    }
                }
                f.clone()
            }
            None => (0..splits.len()).collect(),
        };
        let task = splits[0].task;
        let head = match self.model.head {
            Some(h) => h,
            None => match task {
                Task::Regression => Head::GaussianRegression,
                Task::Binary => Head::Binary,
                Task::Multiclass => Head::Multiclass,
            },
        };
        let outputs = match head {
            Head::GaussianRegression => 2,
            Head::Homoscedastic { .. } | Head::Binary => 1,
            Head::Multiclass => num_classes(&splits)?,
        };
        if head.is_regression() != (task == Task::Regression) {
            bail!("head {head:?} does not match task {task:?}");
        }
        let mut sizes = vec![splits[0].train.x.cols()];
        sizes.extend(&self.model.hidden);
        sizes.push(outputs);
        let arch = MlpArchitecture::new(sizes, self.model.activation, head)?;
        self.method.validate(arch.num_params())?;

        let name = self.name.clone().unwrap_or_else(|| self.method.method.name().to_string());
        let output_dir = over
            .out
            .clone()
            .or_else(|| self.output_dir.as_ref().map(|p| base.join(p)))
            .unwrap_or_else(|| PathBuf::from("runs").join(&name));
        let mut splits: Vec<Option<DatasetSplit>> = splits.into_iter().map(Some).collect();
        let folds = selected
            .into_iter()
            .map(|i| {
                let s = splits[i].take().context("fold listed twice")?;
                Ok((i, s.standardize()))
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(Experiment {
            name,
            dataset,
            arch,
            method: self.method,
            folds,
            output_dir,
            snapshot_every: self.snapshot_every,
        })
    }
}

fn num_classes(splits: &[DatasetSplit]) -> anyhow::Result<usize> {
    let mut max = 0usize;
    for s in splits {
        for &y in s.train.y.iter().chain(&s.val.y).chain(&s.test.y) {
            if y < 0.0 || y.fract() != 0.0 {
                bail!("class labels must be non-negative integers, found {y}");
            }
            max = max.max(y as usize);
        }
    }
    Ok(max + 1)
}

/// Reads and validates `path` relative to its own directory.
pub fn load_experiment(path: &Path, over: &Overrides) -> anyhow::Result<Experiment> {
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::load(path)?.prepare(base, over)
}
