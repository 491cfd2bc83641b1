//! Particle update engines and the training loop.

mod adam;
mod step;
pub mod svgd;
pub mod svn;
mod target;
mod train;

use serde::{Deserialize, Serialize};

use crate::curvature::{CurvatureKind, DEFAULT_FULL_CAP};
use crate::error::{Error, Result};
use crate::kernel::Bandwidth;
use crate::linalg::CgOptions;
use crate::nn::{init_params_stream, Checkpoint, MlpArchitecture};

pub use adam::{Adam, AdamOptions};
pub use step::{StepStats, Stepper};
pub use svgd::svgd_direction;
pub use svn::{
    solve_block_diagonal, solve_full_system, svn_block_matvec, svn_direction, svn_hessian_matvec, CrossTerm, SolveInfo,
};
pub use target::{GaussianTarget, NetworkPosterior, Target};
pub use train::{train, EpochRecord, NoObserver, TrainError, TrainObserver, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Independent MAP training of every member with Adam.
    Ensemble,
    Svgd,
    #[default]
    Svn,
    /// SVN on the output layer, SVGD on the rest.
    LlSvn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ensemble => "ensemble",
            Method::Svgd => "svgd",
            Method::Svn => "svn",
            Method::LlSvn => "ll_svn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SvnSystem {
    #[default]
    Full,
    BlockDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelMetric {
    #[default]
    Identity,
    AvgCurvature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub method: Method,
    /// Curvature estimator; unset means full for `svn` and kfac for `ll_svn`.
    pub curvature: Option<CurvatureKind>,
    pub svn_system: SvnSystem,
    /// Ordering of the kernel-gradient outer product in off-diagonal blocks.
    pub cross_term: CrossTerm,
    pub kernel_metric: KernelMetric,
    pub bandwidth: Bandwidth,
    pub particles: usize,
    pub step_size: f64,
    pub epochs: usize,
    /// Zero means full batch.
    pub batch_size: usize,
    pub seed: u64,
    pub prior_precision: f64,
    /// Recompute curvatures every this many steps.
    pub curvature_refresh: usize,
    pub full_cap: usize,
    pub cg: CgOptions,
    pub adam: AdamOptions,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::Svn,
            curvature: None,
            svn_system: SvnSystem::Full,
            cross_term: CrossTerm::Gram,
            kernel_metric: KernelMetric::Identity,
            bandwidth: Bandwidth::Fixed,
            particles: 5,
            step_size: 0.1,
            epochs: 50,
            batch_size: 0,
            seed: 42,
            prior_precision: 1.0,
            curvature_refresh: 1,
            full_cap: DEFAULT_FULL_CAP,
            cg: CgOptions::default(),
            adam: AdamOptions::default(),
        }
    }
}

impl MethodConfig {
    /// The curvature estimator this config will use, if it needs one.
    pub fn curvature_kind(&self) -> Option<CurvatureKind> {
        let needs = matches!(self.method, Method::Svn | Method::LlSvn) || self.kernel_metric == KernelMetric::AvgCurvature;
        if self.method == Method::Ensemble || !needs {
            return None;
        }
        Some(self.curvature.unwrap_or(match self.method {
            Method::LlSvn => CurvatureKind::Kfac,
            _ => CurvatureKind::Full,
        }))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.particles == 0 {
            return bad("particles must be at least 1");
        }
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return bad("step_size must be finite and non-negative");
        }
        if !(self.prior_precision.is_finite() && self.prior_precision >= 0.0) {
            return bad("prior_precision must be finite and non-negative");
        }
        if self.curvature_refresh == 0 {
            return bad("curvature_refresh must be at least 1");
        }
        if self.cg.max_iters == 0 || self.cg.tol.is_nan() || self.cg.tol < 0.0 || self.cg.damping.is_nan() || self.cg.damping < 0.0 {
            return bad("cg options must have max_iters >= 1 and non-negative tol and damping");
        }
        if self.curvature_kind() == Some(CurvatureKind::Full) {
            let checked = match self.method {
                Method::LlSvn if self.kernel_metric == KernelMetric::Identity => None,
                _ => Some(dim),
            };
            if let Some(d) = checked {
                if d > self.full_cap {
                    return Err(Error::CurvatureTooLarge { d, cap: self.full_cap });
                }
            }
        }
        Ok(())
    }
}

/// `N` flat parameter vectors sharing one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub arch: MlpArchitecture,
    pub particles: Vec<Vec<f64>>,
}

impl ParticleEnsemble {
    /// Particle `i` is initialised from stream `i` of the seeded generator.
    pub fn init(arch: MlpArchitecture, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("an ensemble needs at least one particle".into()));
        }
        let particles = (0..n as u64).map(|i| init_params_stream(&arch, seed, i)).collect();
        Ok(Self { arch, particles })
    }

    pub fn from_particles(arch: MlpArchitecture, particles: Vec<Vec<f64>>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidConfig("an ensemble needs at least one particle".into()));
        }
        for p in &particles {
            crate::error::check_len("ParticleEnsemble", arch.num_params(), p.len())?;
        }
        Ok(Self { arch, particles })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.arch.num_params()
    }

    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint {
            architecture: self.arch.clone(),
            seed,
            particles: self.particles.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        Self::from_particles(c.architecture, c.particles)
    }
}
