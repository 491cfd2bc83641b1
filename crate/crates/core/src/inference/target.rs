//! Log densities the particle methods can be pointed at.

use std::ops::Range;

use crate::curvature::{estimate, CurvatureEstimate, CurvatureKind};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::nn::MlpArchitecture;
use crate::posterior::{grad_log_posterior, log_posterior, Batch, PriorSpec};

/// An unnormalised log density with a PSD curvature oracle.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> Result<f64>;

    fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Curvature of `-log density` over the coordinates in `range`.
    fn curvature(&self, x: &[f64], kind: CurvatureKind, range: Range<usize>) -> Result<CurvatureEstimate>;

    /// Coordinates of the output layer, for last-layer updates.
    fn last_layer(&self) -> Range<usize> {
        0..self.dim()
    }
}

/// Posterior of network parameters given one minibatch.
pub struct NetworkPosterior<'a> {
    pub arch: &'a MlpArchitecture,
    pub batch: &'a Batch,
    pub prior: PriorSpec,
    pub full_cap: usize,
}

impl Target for NetworkPosterior<'_> {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        log_posterior(self.arch, x, self.batch, &self.prior)
    }

    fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        grad_log_posterior(self.arch, x, self.batch, &self.prior)
    }

    fn curvature(&self, x: &[f64], kind: CurvatureKind, range: Range<usize>) -> Result<CurvatureEstimate> {
        estimate(kind, self.arch, x, self.batch, &self.prior, range, self.full_cap)
    }

    fn last_layer(&self) -> Range<usize> {
        self.arch.last_layer_slice().range()
    }
}

/// `N(mean, precision^-1)`; its curvature is the precision matrix itself.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: Vec<f64>,
    precision: DenseMatrix,
}

impl GaussianTarget {
    pub fn new(mean: Vec<f64>, precision: DenseMatrix) -> Result<Self> {
        check_len("GaussianTarget", mean.len(), precision.rows())?;
        check_len("GaussianTarget", mean.len(), precision.cols())?;
        Ok(Self { mean, precision })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &DenseMatrix {
        &self.precision
    }
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_len("GaussianTarget::log_density", self.dim(), x.len())?;
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(-0.5 * dot(&r, &self.precision.matvec_unchecked(&r)))
    }

    fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("GaussianTarget::grad", self.dim(), x.len())?;
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(self.precision.matvec_unchecked(&r).into_iter().map(|v| -v).collect())
    }

    fn curvature(&self, x: &[f64], kind: CurvatureKind, range: Range<usize>) -> Result<CurvatureEstimate> {
        check_len("GaussianTarget::curvature", self.dim(), x.len())?;
        let sub = self.precision.submatrix(range.clone(), range);
        match kind {
            CurvatureKind::Full => Ok(CurvatureEstimate::Full(sub)),
            CurvatureKind::Diagonal => Ok(CurvatureEstimate::Diagonal(sub.diag())),
            CurvatureKind::Kfac => Err(Error::UnsupportedCurvature(
                "Gaussian target has no layer structure".into(),
            )),
        }
    }
}
