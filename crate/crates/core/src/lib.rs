//! Particle ensembles of small fully-connected networks trained with Stein
//! variational Newton, SVGD or independent MAP updates.

#![allow(clippy::needless_range_loop)]

pub mod curvature;
pub mod data;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod output;
pub mod posterior;

pub use curvature::{CurvatureEstimate, CurvatureKind};
pub use data::{Dataset, DatasetSplit, Task};
pub use error::{Error, Result};
pub use inference::{MethodConfig, ParticleEnsemble};
pub use kernel::{KernelState, MetricOperator};
pub use linalg::{CgOptions, DenseMatrix, LinearOperator};
pub use nn::{Activation, Head, MlpArchitecture};
pub use posterior::{Batch, PriorSpec};
