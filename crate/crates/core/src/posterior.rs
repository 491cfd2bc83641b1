//! Unnormalised log posterior of network parameters over a minibatch.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::DenseMatrix;
use crate::nn::{forward_tape, MlpArchitecture};

/// Isotropic Gaussian prior `N(0, precision^-1 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub precision: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { precision: 1.0 }
    }
}

impl PriorSpec {
    pub fn new(precision: f64) -> Result<Self> {
        if !(precision >= 0.0 && precision.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "prior precision must be finite and non-negative, got {precision}"
            )));
        }
        Ok(Self { precision })
    }

    /// Curvature of `-log prior`: the constant diagonal `precision * I`.
    pub fn curvature_diag(&self, d: usize) -> Vec<f64> {
        vec![self.precision; d]
    }
}

/// A minibatch drawn from a dataset of `dataset_size` rows.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: DenseMatrix,
    pub targets: Vec<f64>,
    pub dataset_size: usize,
}

impl Batch {
    pub fn new(inputs: DenseMatrix, targets: Vec<f64>, dataset_size: usize) -> Result<Self> {
        check_len("batch targets", inputs.rows(), targets.len())?;
        if targets.len() > dataset_size {
            return Err(Error::InvalidConfig(format!(
                "batch of {} rows exceeds dataset size {dataset_size}",
                targets.len()
            )));
        }
        Ok(Self {
            inputs,
            targets,
            dataset_size,
        })
    }

    /// The whole dataset as one batch.
    pub fn full(inputs: DenseMatrix, targets: Vec<f64>) -> Result<Self> {
        let n = targets.len();
        Self::new(inputs, targets, n)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `n / b`, the factor that makes batch sums unbiased for the full data.
    /// Zero for an empty batch.
    pub fn scale(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.dataset_size as f64 / self.len() as f64
        }
    }
}

/// Sum over the batch of `log p(y_i | g(x_i))`.
pub fn log_likelihood(arch: &MlpArchitecture, params: &[f64], batch: &Batch) -> Result<f64> {
    let head = arch.head();
    let mut total = 0.0;
    for i in 0..batch.len() {
        let tape = forward_tape(arch, params, batch.inputs.row(i))?;
        total += head.log_lik(tape.output(), batch.targets[i]);
    }
    if !total.is_finite() {
        return Err(Error::PoisonedParameters("log-likelihood"));
    }
    Ok(total)
}

/// `(n/b) * grad sum_batch log p - precision * params`.
pub fn grad_log_posterior(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
) -> Result<Vec<f64>> {
    let head = arch.head();
    let mut grad = vec![0.0; params.len()];
    let scale = batch.scale();
    for i in 0..batch.len() {
        let tape = forward_tape(arch, params, batch.inputs.row(i))?;
        let og = head.dlog_lik(tape.output(), batch.targets[i]);
        let deltas = tape.deltas(arch, params, &og);
        tape.accumulate_param_grad(arch, &deltas, scale, &mut grad);
    }
    for (g, p) in grad.iter_mut().zip(params) {
        *g -= prior.precision * p;
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::PoisonedParameters("posterior gradient"));
    }
    Ok(grad)
}

/// `(n/b) * sum_batch log p - precision * ||params||^2 / 2`.
pub fn log_posterior(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
) -> Result<f64> {
    let ll = log_likelihood(arch, params, batch)?;
    let sq: f64 = params.iter().map(|p| p * p).sum();
    Ok(batch.scale() * ll - 0.5 * prior.precision * sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation, Head};

    #[test]
    fn gaussian_loglik_zero_at_mean_with_unit_variance() {
        let arch = MlpArchitecture::new(vec![1, 2], Activation::Tanh, Head::GaussianRegression).unwrap();
        // mean = 0.5 * x, log-variance = 0
        let params = [0.5, 0.0, 0.0, 0.0];
        let batch = Batch::full(DenseMatrix::from_rows(&[vec![2.0]]).unwrap(), vec![1.0]).unwrap();
        assert_eq!(log_likelihood(&arch, &params, &batch).unwrap(), 0.0);
    }

    #[test]
    fn binary_logit_zero_gives_minus_log_two() {
        let arch = MlpArchitecture::new(vec![2, 1], Activation::Tanh, Head::Binary).unwrap();
        let params = [0.0; 3];
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 0.0]]).unwrap();
        let batch = Batch::full(x, vec![1.0, 0.0, 1.0]).unwrap();
        let ll = log_likelihood(&arch, &params, &batch).unwrap();
        assert!((ll + 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn prior_precision_only_shifts_by_params() {
        let arch = MlpArchitecture::new(vec![2, 3, 2], Activation::Tanh, Head::GaussianRegression).unwrap();
        let p = init_params(&arch, 5);
        let x = DenseMatrix::from_rows(&[vec![0.3, -0.7], vec![1.1, 0.2]]).unwrap();
        let batch = Batch::new(x, vec![0.5, -1.0], 10).unwrap();
        let g1 = grad_log_posterior(&arch, &p, &batch, &PriorSpec { precision: 0.5 }).unwrap();
        let g2 = grad_log_posterior(&arch, &p, &batch, &PriorSpec { precision: 3.0 }).unwrap();
        for i in 0..p.len() {
            let expect = (0.5 - 3.0) * p[i];
            assert!(((g2[i] - g1[i]) - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn prior_curvature_examples() {
        assert_eq!(PriorSpec { precision: 0.0 }.curvature_diag(3), vec![0.0; 3]);
        assert_eq!(PriorSpec { precision: 2.0 }.curvature_diag(3), vec![2.0; 3]);
        assert!(PriorSpec::new(-1.0).is_err());
    }

    #[test]
    fn empty_batch_scale_is_zero() {
        let b = Batch::new(DenseMatrix::zeros(0, 2), vec![], 10).unwrap();
        assert_eq!(b.scale(), 0.0);
    }
}
