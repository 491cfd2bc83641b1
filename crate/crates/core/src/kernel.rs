//! Gaussian kernels between particles under an identity or curvature metric.
//!
//! `k(a, b) = exp(-s (a - b)^T M (a - b))` with `s = 1 / (2d)` by default, so
//! `grad_a k(a, b) = -2 s k(a, b) M (a - b)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureEstimate;
use crate::error::{check_len, Result};
use crate::linalg::{dot, LinearOperator};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricOperator {
    Identity,
    Curvature(CurvatureEstimate),
    /// Identity on the first `split` coordinates and `tail` on the rest.
    Partitioned { split: usize, tail: CurvatureEstimate },
}

impl MetricOperator {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            MetricOperator::Identity => v.to_vec(),
            MetricOperator::Curvature(c) => c.hvp_unchecked(v),
            MetricOperator::Partitioned { split, tail } => {
                let mut out = v[..*split].to_vec();
                out.extend(tail.hvp_unchecked(&v[*split..]));
                out
            }
        }
    }

    /// Dimension the metric acts on, if it is fixed.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            MetricOperator::Identity => None,
            MetricOperator::Curvature(c) => Some(c.dim()),
            MetricOperator::Partitioned { split, tail } => Some(split + tail.dim()),
        }
    }
}

/// Operator view of a metric at a concrete dimension.
pub struct MetricView<'a> {
    pub metric: &'a MetricOperator,
    pub dim: usize,
}

impl LinearOperator for MetricView<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.metric.apply(x)
    }
}

/// Mean of the particles' curvature estimates, used as the kernel metric.
pub fn average_curvature(estimates: &[CurvatureEstimate]) -> Result<MetricOperator> {
    Ok(MetricOperator::Curvature(CurvatureEstimate::average(estimates)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Fixed exponent scale `1 / (2d)`.
    #[default]
    Fixed,
    /// `1 / h` with `h = median squared pairwise distance / ln N`.
    Median,
}

fn fixed_scale(d: usize) -> f64 {
    1.0 / (2.0 * d as f64)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn kernel_eval(m: &MetricOperator, a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("kernel_eval", a.len(), b.len())?;
    let delta = diff(a, b);
    let q = dot(&delta, &m.apply(&delta));
    Ok((-fixed_scale(a.len()) * q).exp())
}

/// Gradient of `k(a, b)` with respect to `a`.
pub fn kernel_grad(m: &MetricOperator, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len("kernel_grad", a.len(), b.len())?;
    let delta = diff(a, b);
    let md = m.apply(&delta);
    let s = fixed_scale(a.len());
    let k = (-s * dot(&delta, &md)).exp();
    Ok(md.into_iter().map(|v| -2.0 * s * k * v).collect())
}

/// Pairwise kernel values and gradients for an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelState {
    n: usize,
    dim: usize,
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

impl KernelState {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `k(φ_i, φ_j)`
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// `grad_{φ_i} k(φ_i, φ_j)`
    #[inline]
    pub fn grad(&self, i: usize, j: usize) -> &[f64] {
        &self.grads[i * self.n + j]
    }

    /// Same kernel values with gradients restricted to `range`.
    pub fn restrict(&self, range: std::ops::Range<usize>) -> KernelState {
        KernelState {
            n: self.n,
            dim: range.len(),
            values: self.values.clone(),
            grads: self.grads.iter().map(|g| g[range.clone()].to_vec()).collect(),
        }
    }

    /// Builds a state from explicit values and gradients (row-major `n x n`).
    pub fn from_parts(n: usize, dim: usize, values: Vec<f64>, grads: Vec<Vec<f64>>) -> Result<Self> {
        check_len("KernelState values", n * n, values.len())?;
        check_len("KernelState grads", n * n, grads.len())?;
        for g in &grads {
            check_len("KernelState grad", dim, g.len())?;
        }
        Ok(Self {
            n,
            dim,
            values,
            grads,
        })
    }
}

pub fn build_kernel_state(
    m: &MetricOperator,
    particles: &[Vec<f64>],
    bandwidth: Bandwidth,
) -> Result<KernelState> {
    let n = particles.len();
    let d = particles.first().map_or(0, Vec::len);
    for p in particles {
        check_len("build_kernel_state", d, p.len())?;
    }
    if let Some(md) = m.fixed_dim() {
        check_len("kernel metric", md, d)?;
    }

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    // (M delta, delta^T M delta) for delta = φ_i - φ_j
    let quads: Vec<(Vec<f64>, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let delta = diff(&particles[i], &particles[j]);
            let md = m.apply(&delta);
            let q = dot(&delta, &md);
            (md, q)
        })
        .collect();

    let s = match bandwidth {
        Bandwidth::Fixed => fixed_scale(d.max(1)),
        Bandwidth::Median => {
            let mut qs: Vec<f64> = quads.iter().map(|(_, q)| *q).collect();
            qs.sort_by(f64::total_cmp);
            let h = if n < 2 || qs.is_empty() {
                1.0
            } else {
                let mid = qs.len() / 2;
                let med = if qs.len().is_multiple_of(2) {
                    0.5 * (qs[mid - 1] + qs[mid])
                } else {
                    qs[mid]
                };
                med / (n as f64).ln()
            };
            if h > 0.0 && h.is_finite() {
                1.0 / h
            } else {
                1.0
            }
        }
    };

    let mut values = vec![0.0; n * n];
    let mut grads = vec![Vec::new(); n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        grads[i * n + i] = vec![0.0; d];
    }
    for (&(i, j), (md, q)) in pairs.iter().zip(quads) {
        let k = (-s * q).exp();
        values[i * n + j] = k;
        values[j * n + i] = k;
        let c = 2.0 * s * k;
        grads[i * n + j] = md.iter().map(|v| -c * v).collect();
        grads[j * n + i] = md.iter().map(|v| c * v).collect();
    }
    Ok(KernelState {
        n,
        dim: d,
        values,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    #[test]
    fn coincident_points() {
        let m = MetricOperator::Identity;
        assert_eq!(kernel_eval(&m, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(kernel_grad(&m, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_metric_closed_form() {
        let k = kernel_eval(&MetricOperator::Identity, &[2.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn metric_scaling_scales_log_kernel() {
        let base = CurvatureEstimate::Full(
            DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap(),
        );
        let scaled = CurvatureEstimate::Full(
            DenseMatrix::from_rows(&[vec![8.0, 2.0], vec![2.0, 4.0]]).unwrap(),
        );
        let a = [0.5, -1.0];
        let b = [1.5, 0.25];
        let k1 = kernel_eval(&MetricOperator::Curvature(base), &a, &b).unwrap();
        let k4 = kernel_eval(&MetricOperator::Curvature(scaled), &a, &b).unwrap();
        assert!((k4.ln() - 4.0 * k1.ln()).abs() < 1e-14);
    }

    #[test]
    fn grad_antisymmetry_and_translation() {
        let m = MetricOperator::Identity;
        let a = [0.5, 1.25, -2.0];
        let b = [1.0, -0.75, 0.5];
        let ga = kernel_grad(&m, &a, &b).unwrap();
        let gb = kernel_grad(&m, &b, &a).unwrap();
        for (x, y) in ga.iter().zip(&gb) {
            assert_eq!(*x, -*y);
        }
        let c = [4.0, 8.0, -16.0];
        let ac: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x + y).collect();
        let bc: Vec<f64> = b.iter().zip(&c).map(|(x, y)| x + y).collect();
        assert_eq!(
            kernel_eval(&m, &a, &b).unwrap(),
            kernel_eval(&m, &ac, &bc).unwrap()
        );
    }

    #[test]
    fn single_particle_state() {
        let ks = build_kernel_state(&MetricOperator::Identity, &[vec![1.0, 2.0]], Bandwidth::Fixed).unwrap();
        assert_eq!(ks.value(0, 0), 1.0);
        assert_eq!(ks.grad(0, 0), &[0.0, 0.0]);
        let med = build_kernel_state(&MetricOperator::Identity, &[vec![1.0, 2.0]], Bandwidth::Median).unwrap();
        assert_eq!(med.value(0, 0), 1.0);
    }

    #[test]
    fn state_invariants() {
        let ps = vec![vec![0.0, 1.0], vec![1.0, -1.0], vec![0.5, 0.5], vec![3.0, 0.0]];
        for bw in [Bandwidth::Fixed, Bandwidth::Median] {
            let ks = build_kernel_state(&MetricOperator::Identity, &ps, bw).unwrap();
            for i in 0..4 {
                assert_eq!(ks.value(i, i), 1.0);
                assert!(ks.grad(i, i).iter().all(|&g| g == 0.0));
                for j in 0..4 {
                    assert_eq!(ks.value(i, j), ks.value(j, i));
                    assert!(ks.value(i, j) > 0.0 && ks.value(i, j) <= 1.0);
                }
            }
        }
    }
}
