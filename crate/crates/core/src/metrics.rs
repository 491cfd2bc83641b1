//! Ensemble predictive distributions and evaluation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::DenseMatrix;
use crate::nn::{forward_batch, log_sum_exp, sigmoid, softmax, Head, MlpArchitecture, VAR_FLOOR};

/// Outputs of every member on `xs`, one `n x k` matrix per particle.
pub fn ensemble_outputs(arch: &MlpArchitecture, particles: &[Vec<f64>], xs: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    use rayon::prelude::*;
    particles.par_iter().map(|p| forward_batch(arch, p, xs)).collect()
}

/// Per-point moments of the equally weighted mixture of member Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Member means and variances, `[member][point]`.
    pub member_mean: Vec<Vec<f64>>,
    pub member_var: Vec<Vec<f64>>,
}

pub fn summarize_regression(head: Head, outputs: &[DenseMatrix]) -> Result<RegressionSummary> {
    if !head.is_regression() {
        return Err(Error::InvalidConfig("regression summary needs a regression head".into()));
    }
    let n = outputs.first().map_or(0, DenseMatrix::rows);
    let mut member_mean = Vec::with_capacity(outputs.len());
    let mut member_var = Vec::with_capacity(outputs.len());
    for o in outputs {
        check_len("summarize_regression", n, o.rows())?;
        let (m, v): (Vec<f64>, Vec<f64>) = (0..n).map(|i| head.mean_var(o.row(i))).unzip();
        member_mean.push(m);
        member_var.push(v);
    }
    let inv = 1.0 / outputs.len().max(1) as f64;
    let mut mean = vec![0.0; n];
    let mut std = vec![0.0; n];
    for i in 0..n {
        let mu: f64 = member_mean.iter().map(|m| m[i]).sum::<f64>() * inv;
        let second: f64 = member_mean
            .iter()
            .zip(&member_var)
            .map(|(m, v)| v[i] + m[i] * m[i])
            .sum::<f64>()
            * inv;
        mean[i] = mu;
        std[i] = (second - mu * mu).max(0.0).sqrt();
    }
    Ok(RegressionSummary {
        mean,
        std,
        member_mean,
        member_var,
    })
}

pub fn predictive_regression(arch: &MlpArchitecture, particles: &[Vec<f64>], xs: &DenseMatrix) -> Result<RegressionSummary> {
    summarize_regression(arch.head(), &ensemble_outputs(arch, particles, xs)?)
}

/// Gaussian NLL per point without the constant, `(log v + r^2 / v) / 2` with
/// `v = max(var, 1e-6)`.
pub fn gaussian_nll(y: f64, mean: f64, var: f64) -> f64 {
    let v = var.max(VAR_FLOOR);
    let r = y - mean;
    0.5 * (v.ln() + r * r / v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegressionNll {
    /// Single Gaussian with the mixture's mean and variance.
    #[default]
    Moments,
    /// Exact likelihood of the equally weighted member mixture.
    Mixture,
}

/// Mean regression NLL over points.
pub fn nll_regression(summary: &RegressionSummary, targets: &[f64], mode: RegressionNll) -> Result<f64> {
    check_len("nll_regression", summary.mean.len(), targets.len())?;
    if targets.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = match mode {
        RegressionNll::Moments => targets
            .iter()
            .enumerate()
            .map(|(i, &y)| gaussian_nll(y, summary.mean[i], summary.std[i] * summary.std[i]))
            .sum(),
        RegressionNll::Mixture => {
            let ln_n = (summary.member_mean.len() as f64).ln();
            targets
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    let logs: Vec<f64> = summary
                        .member_mean
                        .iter()
                        .zip(&summary.member_var)
                        .map(|(m, v)| -gaussian_nll(y, m[i], v[i]))
                        .collect();
                    ln_n - log_sum_exp(&logs)
                })
                .sum()
        }
    };
    Ok(total / targets.len() as f64)
}

/// Member logits averaged over the ensemble, with class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSummary {
    pub head: Head,
    pub logits: DenseMatrix,
    /// `n x C` probabilities; binary heads give two columns `(1 - p, p)`.
    pub probs: Vec<Vec<f64>>,
}

pub fn summarize_classification(head: Head, outputs: &[DenseMatrix]) -> Result<ClassificationSummary> {
    if head.is_regression() {
        return Err(Error::InvalidConfig("classification summary needs a classification head".into()));
    }
    let first = outputs
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty ensemble".into()))?;
    let mut logits = DenseMatrix::zeros(first.rows(), first.cols());
    for o in outputs {
        logits.add_assign(o)?;
    }
    logits.scale(1.0 / outputs.len() as f64);
    let probs = (0..logits.rows())
        .map(|i| match head {
            Head::Binary => {
                let p = sigmoid(logits.row(i)[0]);
                vec![1.0 - p, p]
            }
            _ => softmax(logits.row(i)),
        })
        .collect();
    Ok(ClassificationSummary { head, logits, probs })
}

/// Mean cross-entropy of the averaged logits.
pub fn nll_classification(summary: &ClassificationSummary, labels: &[f64]) -> Result<f64> {
    check_len("nll_classification", summary.logits.rows(), labels.len())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -summary.head.log_lik(summary.logits.row(i), y))
        .sum();
    Ok(total / labels.len() as f64)
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

pub fn accuracy(probs: &[Vec<f64>], labels: &[f64]) -> Result<f64> {
    check_len("accuracy", probs.len(), labels.len())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = probs.iter().zip(labels).filter(|(p, &y)| argmax(p) == y as usize).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn mse(pred: &[f64], targets: &[f64]) -> Result<f64> {
    check_len("mse", pred.len(), targets.len())?;
    if targets.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / targets.len() as f64)
}

/// Expected calibration error over `bins` equal-width confidence bins of the
/// top-class probability.
pub fn ece(probs: &[Vec<f64>], labels: &[f64], bins: usize) -> Result<f64> {
    check_len("ece", probs.len(), labels.len())?;
    if labels.is_empty() || bins == 0 {
        return Ok(0.0);
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut hits = vec![0.0; bins];
    for (p, &y) in probs.iter().zip(labels) {
        let k = argmax(p);
        let c = p[k];
        let b = ((c * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += c;
        if k == y as usize {
            hits[b] += 1.0;
        }
    }
    let n = labels.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (hits[b] - conf[b]).abs() / n)
        .sum())
}

/// Mean over points of the squared distance between the probability vector
/// and the one-hot label, summed over classes.
pub fn brier(probs: &[Vec<f64>], labels: &[f64]) -> Result<f64> {
    check_len("brier", probs.len(), labels.len())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            p.iter()
                .enumerate()
                .map(|(c, &q)| {
                    let t = if c == y as usize { 1.0 } else { 0.0 };
                    (q - t) * (q - t)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Rank-based AUROC; tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_len("auroc", scores.len(), labels.len())?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks (1-based) over tie groups.
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&y| y > 0.5).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Ok(0.5);
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y > 0.5).map(|(r, _)| r).sum();
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Validation/test loss used for model selection: moment-form Gaussian NLL
/// for regression heads, averaged-logit cross-entropy otherwise.
pub fn ensemble_nll(arch: &MlpArchitecture, particles: &[Vec<f64>], xs: &DenseMatrix, ys: &[f64]) -> Result<f64> {
    let outs = ensemble_outputs(arch, particles, xs)?;
    if arch.head().is_regression() {
        nll_regression(&summarize_regression(arch.head(), &outs)?, ys, RegressionNll::Moments)
    } else {
        nll_classification(&summarize_classification(arch.head(), &outs)?, ys)
    }
}

/// Full metric set for one split.
pub fn evaluate(arch: &MlpArchitecture, particles: &[Vec<f64>], xs: &DenseMatrix, ys: &[f64]) -> Result<BTreeMap<String, f64>> {
    let outs = ensemble_outputs(arch, particles, xs)?;
    let mut m = BTreeMap::new();
    if arch.head().is_regression() {
        let s = summarize_regression(arch.head(), &outs)?;
        m.insert("nll".into(), nll_regression(&s, ys, RegressionNll::Moments)?);
        m.insert("nll_mixture".into(), nll_regression(&s, ys, RegressionNll::Mixture)?);
        m.insert("mse".into(), mse(&s.mean, ys)?);
    } else {
        let s = summarize_classification(arch.head(), &outs)?;
        m.insert("nll".into(), nll_classification(&s, ys)?);
        m.insert("accuracy".into(), accuracy(&s.probs, ys)?);
        m.insert("ece".into(), ece(&s.probs, ys, 10)?);
        m.insert("brier".into(), brier(&s.probs, ys)?);
        if arch.head() == Head::Binary {
            let scores: Vec<f64> = s.probs.iter().map(|p| p[1]).collect();
            m.insert("auroc".into(), auroc(&scores, ys)?);
        }
    }
    Ok(m)
}
