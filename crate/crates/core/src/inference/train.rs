use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::step::{StepStats, Stepper};
use super::target::NetworkPosterior;
use super::{MethodConfig, ParticleEnsemble};
use crate::data::DatasetSplit;
use crate::error::{check_len, Error, Result};
use crate::metrics::ensemble_nll;
use crate::nn::MlpArchitecture;
use crate::posterior::{log_likelihood, Batch, PriorSpec};

/// Stream of the shuffling generator; particle initialisation uses streams
/// `0..N` of the same seed.
const SHUFFLE_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample negative log-likelihood over the epoch's batches and
    /// particles, measured before each step.
    pub train_loss: f64,
    pub val_nll: f64,
    /// Seconds since training started.
    pub wall_time: f64,
    pub rejections: usize,
    pub cg_iters: usize,
    pub fallbacks: usize,
}

/// Hooks into the training loop. Both default to doing nothing.
pub trait TrainObserver {
    /// Called after every accepted step with the particles before and after it.
    fn after_step(
        &mut self,
        _epoch: usize,
        _before: &[Vec<f64>],
        _after: &[Vec<f64>],
        _batch: &Batch,
        _stepper: &Stepper,
    ) -> Result<()> {
        Ok(())
    }

    fn epoch_end(&mut self, _record: &EpochRecord, _ensemble: &ParticleEnsemble) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Ensemble with the lowest validation NLL (epoch 0 is the initial one).
    pub best: ParticleEnsemble,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub last: ParticleEnsemble,
    pub history: Vec<EpochRecord>,
}

/// A failed run keeps everything recorded before the failure.
#[derive(Debug)]
pub struct TrainError {
    pub error: Error,
    pub history: Vec<EpochRecord>,
    pub last: ParticleEnsemble,
}

impl std::fmt::Display for TrainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training aborted after {} epochs: {}", self.history.len(), self.error)
    }
}

impl std::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Initialises `cfg.particles` members from `cfg.seed` and trains them.
pub fn train(
    data: &DatasetSplit,
    arch: &MlpArchitecture,
    cfg: &MethodConfig,
    observer: &mut dyn TrainObserver,
) -> std::result::Result<TrainOutcome, Box<TrainError>> {
    let init = ParticleEnsemble::init(arch.clone(), cfg.particles, cfg.seed).map_err(|error| {
        Box::new(TrainError {
            error,
            history: Vec::new(),
            last: ParticleEnsemble {
                arch: arch.clone(),
                particles: Vec::new(),
            },
        })
    })?;
    train_ensemble(data, init, cfg, observer)
}

fn val_nll(ens: &ParticleEnsemble, data: &DatasetSplit) -> Result<f64> {
    if data.val.is_empty() {
        return Ok(f64::NAN);
    }
    ensemble_nll(&ens.arch, &ens.particles, &data.val.x, &data.val.y)
}

/// Trains an existing ensemble: shuffled minibatches each epoch, validation
/// NLL after each epoch, best-validation checkpoint kept.
pub fn train_ensemble(
    data: &DatasetSplit,
    init: ParticleEnsemble,
    cfg: &MethodConfig,
    observer: &mut dyn TrainObserver,
) -> std::result::Result<TrainOutcome, Box<TrainError>> {
    let mut ens = init;
    let mut history = Vec::with_capacity(cfg.epochs);
    let result = run(data, &mut ens, cfg, observer, &mut history);
    match result {
        Ok((best, best_epoch, best_val_nll)) => Ok(TrainOutcome {
            best,
            best_epoch,
            best_val_nll,
            last: ens,
            history,
        }),
        Err(error) => Err(Box::new(TrainError {
            error,
            history,
            last: ens,
        })),
    }
}

fn run(
    data: &DatasetSplit,
    ens: &mut ParticleEnsemble,
    cfg: &MethodConfig,
    observer: &mut dyn TrainObserver,
    history: &mut Vec<EpochRecord>,
) -> Result<(ParticleEnsemble, usize, f64)> {
    let arch = ens.arch.clone();
    check_len("training inputs", arch.input_dim(), data.train.x.cols())?;
    let prior = PriorSpec::new(cfg.prior_precision)?;
    let mut stepper = Stepper::new(cfg, ens.len(), ens.dim())?;
    let n = data.train.len();
    if n == 0 && cfg.epochs > 0 {
        return Err(Error::NotEnoughRows("empty training set".into()));
    }
    let b = if cfg.batch_size == 0 || cfg.batch_size > n {
        n
    } else {
        cfg.batch_size
    };

    let start = Instant::now();
    let mut best = ens.clone();
    let mut best_epoch = 0;
    let mut best_val = val_nll(ens, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut stats = StepStats::default();
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in order.chunks(b) {
            let part = data.train.select(chunk);
            let batch = Batch::new(part.x, part.y, n)?;
            for p in &ens.particles {
                loss_sum -= log_likelihood(&arch, p, &batch)? / batch.len() as f64;
                loss_count += 1;
            }
            let target = NetworkPosterior {
                arch: &arch,
                batch: &batch,
                prior,
                full_cap: cfg.full_cap,
            };
            let before = ens.particles.clone();
            stats += stepper.step(&target, &mut ens.particles)?;
            observer.after_step(epoch, &before, &ens.particles, &batch, &stepper)?;
        }
        let v = val_nll(ens, data)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / loss_count.max(1) as f64,
            val_nll: v,
            wall_time: start.elapsed().as_secs_f64(),
            rejections: stats.rejections,
            cg_iters: stats.cg_iters,
            fallbacks: stats.fallbacks,
        };
        log::info!(
            "{} epoch {epoch}: train loss {:.6}, val nll {:.6}, rejections {}, cg iters {}",
            cfg.method.name(),
            rec.train_loss,
            rec.val_nll,
            rec.rejections,
            rec.cg_iters
        );
        // With no validation rows the latest ensemble is kept.
        if v < best_val || best_val.is_nan() {
            best = ens.clone();
            best_epoch = epoch;
            best_val = v;
        }
        observer.epoch_end(&rec, ens)?;
        history.push(rec);
    }
    Ok((best, best_epoch, best_val))
}
