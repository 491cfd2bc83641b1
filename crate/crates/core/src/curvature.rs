//! PSD curvature of the negative log posterior.
//!
//! All estimates approximate `-grad^2 log pi` and therefore already include
//! the prior precision. Three representations are supported: a dense matrix,
//! its diagonal, and per-layer Kronecker factors.

use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{DenseMatrix, LinearOperator};
use crate::nn::{forward_tape, jacobian_from_tape, MlpArchitecture};
use crate::output::write_atomic;
use crate::posterior::{Batch, PriorSpec};

/// Default limit on `d` for dense `d x d` curvature.
pub const DEFAULT_FULL_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    #[default]
    Full,
    Diagonal,
    Kfac,
}

/// One layer's `Q ⊗ K` block. `q` is `fan_out x fan_out` and acts on output
/// units; `k` is `(fan_in + 1) x (fan_in + 1)` and acts on layer inputs with a
/// trailing homogeneous coordinate for the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct KronBlock {
    pub offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub q: DenseMatrix,
    pub k: DenseMatrix,
}

impl KronBlock {
    pub fn len(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reshapes this block's slice of `v` into the row-major
    /// `fan_out x (fan_in + 1)` matrix `[W | b]`.
    fn gather(&self, v: &[f64]) -> DenseMatrix {
        let cols = self.fan_in + 1;
        let mut x = DenseMatrix::zeros(self.fan_out, cols);
        let w = &v[self.offset..self.offset + self.fan_in * self.fan_out];
        let b = &v[self.offset + self.fan_in * self.fan_out..self.offset + self.len()];
        for o in 0..self.fan_out {
            x.data_mut()[o * cols..o * cols + self.fan_in]
                .copy_from_slice(&w[o * self.fan_in..(o + 1) * self.fan_in]);
            x.set(o, self.fan_in, b[o]);
        }
        x
    }

    fn scatter(&self, x: &DenseMatrix, out: &mut [f64]) {
        let cols = self.fan_in + 1;
        for o in 0..self.fan_out {
            out[self.offset + o * self.fan_in..self.offset + (o + 1) * self.fan_in]
                .copy_from_slice(&x.data()[o * cols..o * cols + self.fan_in]);
            out[self.offset + self.fan_in * self.fan_out + o] = x.get(o, self.fan_in);
        }
    }

    /// `(Q ⊗ K) vec(X) = vec(Q X K^T)` with `vec` traversing rows.
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let x = self.gather(v);
        let qx = self.q.matmul(&x).expect("block shapes");
        let y = qx.matmul(&self.k.transpose()).expect("block shapes");
        self.scatter(&y, out);
    }

    /// Position of parameter `p` (relative to `offset`) in `[W | b]`.
    fn coords(&self, p: usize) -> (usize, usize) {
        let wlen = self.fan_in * self.fan_out;
        if p < wlen {
            (p / self.fan_in, p % self.fan_in)
        } else {
            (p - wlen, self.fan_in)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurvatureEstimate {
    Full(DenseMatrix),
    Diagonal(Vec<f64>),
    Kronecker { dim: usize, blocks: Vec<KronBlock> },
}

impl CurvatureEstimate {
    pub fn dim(&self) -> usize {
        match self {
            CurvatureEstimate::Full(m) => m.rows(),
            CurvatureEstimate::Diagonal(d) => d.len(),
            CurvatureEstimate::Kronecker { dim, .. } => *dim,
        }
    }

    pub fn kind(&self) -> CurvatureKind {
        match self {
            CurvatureEstimate::Full(_) => CurvatureKind::Full,
            CurvatureEstimate::Diagonal(_) => CurvatureKind::Diagonal,
            CurvatureEstimate::Kronecker { .. } => CurvatureKind::Kfac,
        }
    }

    /// Curvature-vector product without materialising anything beyond the
    /// stored representation.
    pub fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("hvp", self.dim(), v.len())?;
        Ok(self.hvp_unchecked(v))
    }

    pub(crate) fn hvp_unchecked(&self, v: &[f64]) -> Vec<f64> {
        match self {
            CurvatureEstimate::Full(m) => m.matvec_unchecked(v),
            CurvatureEstimate::Diagonal(d) => d.iter().zip(v).map(|(h, x)| h * x).collect(),
            CurvatureEstimate::Kronecker { dim, blocks } => {
                let mut out = vec![0.0; *dim];
                for b in blocks {
                    b.apply_into(v, &mut out);
                }
                out
            }
        }
    }

    /// Dense `d x d` form.
    pub fn materialize(&self) -> DenseMatrix {
        match self {
            CurvatureEstimate::Full(m) => m.clone(),
            CurvatureEstimate::Diagonal(d) => DenseMatrix::from_diag(d),
            CurvatureEstimate::Kronecker { dim, blocks } => {
                let mut m = DenseMatrix::zeros(*dim, *dim);
                for b in blocks {
                    for p in 0..b.len() {
                        let (i, j) = b.coords(p);
                        for r in 0..b.len() {
                            let (k, l) = b.coords(r);
                            m.set(b.offset + p, b.offset + r, b.q.get(i, k) * b.k.get(j, l));
                        }
                    }
                }
                m
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            CurvatureEstimate::Full(m) => m.all_finite(),
            CurvatureEstimate::Diagonal(d) => d.iter().all(|v| v.is_finite()),
            CurvatureEstimate::Kronecker { blocks, .. } => {
                blocks.iter().all(|b| b.q.all_finite() && b.k.all_finite())
            }
        }
    }

    /// Element-wise (or factor-wise, for Kronecker) mean.
    pub fn average(estimates: &[CurvatureEstimate]) -> Result<CurvatureEstimate> {
        let first = estimates.first().ok_or(Error::MixedCurvature)?;
        let dim = first.dim();
        let inv = 1.0 / estimates.len() as f64;
        if estimates.iter().any(|e| e.kind() != first.kind() || e.dim() != dim) {
            return Err(Error::MixedCurvature);
        }
        Ok(match first {
            CurvatureEstimate::Full(_) => {
                let mut acc = DenseMatrix::zeros(dim, dim);
                for e in estimates {
                    if let CurvatureEstimate::Full(m) = e {
                        acc.add_assign(m)?;
                    }
                }
                acc.scale(inv);
                CurvatureEstimate::Full(acc)
            }
            CurvatureEstimate::Diagonal(_) => {
                let mut acc = vec![0.0; dim];
                for e in estimates {
                    if let CurvatureEstimate::Diagonal(d) = e {
                        acc.iter_mut().zip(d).for_each(|(a, v)| *a += v);
                    }
                }
                acc.iter_mut().for_each(|a| *a *= inv);
                CurvatureEstimate::Diagonal(acc)
            }
            CurvatureEstimate::Kronecker { blocks, .. } => {
                let mut acc = blocks.clone();
                for b in acc.iter_mut() {
                    b.q.scale(0.0);
                    b.k.scale(0.0);
                }
                for e in estimates {
                    let CurvatureEstimate::Kronecker { blocks: eb, .. } = e else {
                        return Err(Error::MixedCurvature);
                    };
                    if eb.len() != acc.len() {
                        return Err(Error::MixedCurvature);
                    }
                    for (a, b) in acc.iter_mut().zip(eb) {
                        if a.offset != b.offset || a.fan_in != b.fan_in || a.fan_out != b.fan_out {
                            return Err(Error::MixedCurvature);
                        }
                        a.q.add_assign(&b.q)?;
                        a.k.add_assign(&b.k)?;
                    }
                }
                for b in acc.iter_mut() {
                    b.q.scale(inv);
                    b.k.scale(inv);
                }
                CurvatureEstimate::Kronecker { dim, blocks: acc }
            }
        })
    }
}

impl LinearOperator for CurvatureEstimate {
    fn dim(&self) -> usize {
        CurvatureEstimate::dim(self)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.hvp_unchecked(x)
    }
}

fn check_range(arch: &MlpArchitecture, range: &Range<usize>) -> Result<()> {
    if range.start > range.end || range.end > arch.num_params() {
        return Err(Error::InvalidConfig(format!(
            "parameter range {range:?} outside 0..{}",
            arch.num_params()
        )));
    }
    Ok(())
}

/// Gauss-Newton matrix `(n/b) sum_i J_i^T Λ_i J_i + precision I` over the
/// whole parameter vector.
pub fn ggn_full(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
) -> Result<CurvatureEstimate> {
    ggn_full_range(arch, params, batch, prior, 0..arch.num_params(), DEFAULT_FULL_CAP)
}

/// [`ggn_full`] restricted to the parameters in `range`, refusing to build
/// matrices wider than `cap`.
pub fn ggn_full_range(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
    range: Range<usize>,
    cap: usize,
) -> Result<CurvatureEstimate> {
    check_range(arch, &range)?;
    let dim = range.len();
    if dim > cap {
        return Err(Error::CurvatureTooLarge { d: dim, cap });
    }
    let head = arch.head();
    let k = arch.output_dim();
    let mut g = DenseMatrix::zeros(dim, dim);
    for i in 0..batch.len() {
        let tape = forward_tape(arch, params, batch.inputs.row(i))?;
        let jac = jacobian_from_tape(arch, params, &tape);
        let lam = head.output_curvature(tape.output());
        // G += sum_{c,c'} Λ[c,c'] J_c J_c'^T, upper triangle only
        for c in 0..k {
            let jc = &jac.row(c)[range.clone()];
            for c2 in 0..k {
                let w = lam.get(c, c2);
                if w == 0.0 {
                    continue;
                }
                let jc2 = &jac.row(c2)[range.clone()];
                for a in 0..dim {
                    let s = w * jc[a];
                    if s == 0.0 {
                        continue;
                    }
                    let row = &mut g.data_mut()[a * dim..(a + 1) * dim];
                    for b in a..dim {
                        row[b] += s * jc2[b];
                    }
                }
            }
        }
    }
    g.symmetrize_from_upper();
    g.scale(batch.scale());
    g.add_diag(prior.precision);
    if !g.all_finite() {
        return Err(Error::PoisonedParameters("GGN"));
    }
    Ok(CurvatureEstimate::Full(g))
}

/// Monte-Carlo Fisher: `(n/b) sum_i mean_s g_is g_is^T + precision I` with
/// `g_is` the score at a target drawn from the model.
pub fn fisher_full_mc(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
    samples: usize,
    seed: u64,
) -> Result<CurvatureEstimate> {
    let d = arch.num_params();
    if d > DEFAULT_FULL_CAP {
        return Err(Error::CurvatureTooLarge {
            d,
            cap: DEFAULT_FULL_CAP,
        });
    }
    let head = arch.head();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = DenseMatrix::zeros(d, d);
    if samples > 0 {
        let w = batch.scale() / samples as f64;
        for i in 0..batch.len() {
            let tape = forward_tape(arch, params, batch.inputs.row(i))?;
            for _ in 0..samples {
                let y = head.sample(tape.output(), &mut rng);
                let og = head.dlog_lik(tape.output(), y);
                let deltas = tape.deltas(arch, params, &og);
                let mut gs = vec![0.0; d];
                tape.accumulate_param_grad(arch, &deltas, 1.0, &mut gs);
                for a in 0..d {
                    let s = w * gs[a];
                    if s == 0.0 {
                        continue;
                    }
                    let row = &mut f.data_mut()[a * d..(a + 1) * d];
                    for b in a..d {
                        row[b] += s * gs[b];
                    }
                }
            }
        }
    }
    f.symmetrize_from_upper();
    f.add_diag(prior.precision);
    if !f.all_finite() {
        return Err(Error::PoisonedParameters("Fisher"));
    }
    Ok(CurvatureEstimate::Full(f))
}

pub fn curvature_diagonal(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
) -> Result<CurvatureEstimate> {
    curvature_diagonal_range(arch, params, batch, prior, 0..arch.num_params())
}

/// Diagonal of the Gauss-Newton matrix, accumulated as
/// `sum_{c,c'} Λ[c,c'] (J_c ⊙ J_c')`.
pub fn curvature_diagonal_range(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
    range: Range<usize>,
) -> Result<CurvatureEstimate> {
    check_range(arch, &range)?;
    let head = arch.head();
    let k = arch.output_dim();
    let mut diag = vec![0.0; range.len()];
    for i in 0..batch.len() {
        let tape = forward_tape(arch, params, batch.inputs.row(i))?;
        let jac = jacobian_from_tape(arch, params, &tape);
        let lam = head.output_curvature(tape.output());
        for c in 0..k {
            for c2 in 0..k {
                let w = lam.get(c, c2);
                if w == 0.0 {
                    continue;
                }
                let jc = &jac.row(c)[range.clone()];
                let jc2 = &jac.row(c2)[range.clone()];
                for ((h, a), b) in diag.iter_mut().zip(jc).zip(jc2) {
                    *h += w * a * b;
                }
            }
        }
    }
    let scale = batch.scale();
    for h in diag.iter_mut() {
        *h = scale * *h + prior.precision;
    }
    if diag.iter().any(|v| !v.is_finite()) {
        return Err(Error::PoisonedParameters("diagonal curvature"));
    }
    Ok(CurvatureEstimate::Diagonal(diag))
}

pub fn curvature_kfac(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
) -> Result<CurvatureEstimate> {
    curvature_kfac_layers(arch, params, batch, prior, 0..arch.layers().len())
}

/// Kronecker-factored curvature for the given layer indices. Block offsets
/// are relative to the first selected layer, so the estimate acts on the
/// contiguous parameter range those layers occupy.
///
/// Per layer, `Q = (n/b) sum_i D_i^T Λ_i D_i` with `D_i` the output Jacobian
/// with respect to the layer's pre-activations, and `K = mean_i ā_i ā_i^T`
/// with `ā_i` the layer input extended by a constant 1. The prior precision
/// enters as `sqrt(precision)` on each factor's diagonal.
pub fn curvature_kfac_layers(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
    layers: Range<usize>,
) -> Result<CurvatureEstimate> {
    let all = arch.layers();
    if layers.is_empty() || layers.end > all.len() {
        return Err(Error::InvalidConfig(format!(
            "layer range {layers:?} outside 0..{}",
            all.len()
        )));
    }
    let base = all[layers.start].offset;
    let dim: usize = all[layers.clone()].iter().map(|l| l.length).sum();
    let head = arch.head();
    let k = arch.output_dim();

    let mut blocks: Vec<KronBlock> = all[layers.clone()]
        .iter()
        .map(|l| KronBlock {
            offset: l.offset - base,
            fan_in: l.fan_in,
            fan_out: l.fan_out,
            q: DenseMatrix::zeros(l.fan_out, l.fan_out),
            k: DenseMatrix::zeros(l.fan_in + 1, l.fan_in + 1),
        })
        .collect();

    let mut unit = vec![0.0; k];
    for i in 0..batch.len() {
        let tape = forward_tape(arch, params, batch.inputs.row(i))?;
        let lam = head.output_curvature(tape.output());
        // per-output pre-activation Jacobians, indexed [c][layer]
        let per_output: Vec<Vec<Vec<f64>>> = (0..k)
            .map(|c| {
                unit.iter_mut().for_each(|v| *v = 0.0);
                unit[c] = 1.0;
                tape.deltas(arch, params, &unit)
            })
            .collect();
        for (bi, l) in layers.clone().enumerate() {
            let block = &mut blocks[bi];
            let n_out = block.fan_out;
            for c in 0..k {
                for c2 in 0..k {
                    let w = lam.get(c, c2);
                    if w == 0.0 {
                        continue;
                    }
                    let dc = &per_output[c][l];
                    let dc2 = &per_output[c2][l];
                    for a in 0..n_out {
                        let s = w * dc[a];
                        for b in 0..n_out {
                            block.q.add_at(a, b, s * dc2[b]);
                        }
                    }
                }
            }
            let mut abar = tape.inputs[l].clone();
            abar.push(1.0);
            let m = abar.len();
            for a in 0..m {
                for b in 0..m {
                    block.k.add_at(a, b, abar[a] * abar[b]);
                }
            }
        }
    }

    let root = prior.precision.sqrt();
    let b = batch.len();
    for block in blocks.iter_mut() {
        block.q.scale(batch.scale());
        block.k.scale(if b == 0 { 0.0 } else { 1.0 / b as f64 });
        block.q.add_diag(root);
        block.k.add_diag(root);
        if !(block.q.all_finite() && block.k.all_finite()) {
            return Err(Error::PoisonedParameters("KFAC factors"));
        }
    }
    Ok(CurvatureEstimate::Kronecker { dim, blocks })
}

/// Computes the requested curvature over the parameters in `range`. For
/// [`CurvatureKind::Kfac`] the range must align with layer boundaries.
pub fn estimate(
    kind: CurvatureKind,
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Batch,
    prior: &PriorSpec,
    range: Range<usize>,
    cap: usize,
) -> Result<CurvatureEstimate> {
    match kind {
        CurvatureKind::Full => ggn_full_range(arch, params, batch, prior, range, cap),
        CurvatureKind::Diagonal => curvature_diagonal_range(arch, params, batch, prior, range),
        CurvatureKind::Kfac => {
            let layers = arch.layers();
            let first = layers.iter().position(|l| l.offset == range.start);
            let last = layers.iter().position(|l| l.offset + l.length == range.end);
            match (first, last) {
                (Some(a), Some(b)) if a <= b => {
                    curvature_kfac_layers(arch, params, batch, prior, a..b + 1)
                }
                _ => Err(Error::UnsupportedCurvature(format!(
                    "kfac needs layer-aligned range, got {range:?}"
                ))),
            }
        }
    }
}

/// Writes the materialised matrix as CSV (no header, one row per line).
pub fn dump_curvature(estimate: &CurvatureEstimate, path: &Path) -> Result<()> {
    let m = estimate.materialize();
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        for i in 0..m.rows() {
            w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation, Head};

    fn kron_explicit(q: &DenseMatrix, k: &DenseMatrix) -> DenseMatrix {
        let (a, b) = (q.rows(), k.rows());
        let mut m = DenseMatrix::zeros(a * b, a * b);
        for i in 0..a {
            for j in 0..b {
                for r in 0..a {
                    for s in 0..b {
                        m.set(i * b + j, r * b + s, q.get(i, r) * k.get(j, s));
                    }
                }
            }
        }
        m
    }

    #[test]
    fn diagonal_hvp_is_hadamard() {
        let h = CurvatureEstimate::Diagonal(vec![1.0, 2.0, 3.0]);
        assert_eq!(h.hvp(&[4.0, 5.0, 6.0]).unwrap(), vec![4.0, 10.0, 18.0]);
    }

    #[test]
    fn full_identity_hvp() {
        let h = CurvatureEstimate::Full(DenseMatrix::identity(3));
        assert_eq!(h.hvp(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        assert!(h.hvp(&[1.0]).is_err());
    }

    #[test]
    fn kron_block_matches_explicit_kronecker() {
        // fan_out = 2, fan_in = 1: X is 2 x 2 ([W | b]).
        let q = DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let k = DenseMatrix::from_rows(&[vec![3.0, -1.0], vec![-1.0, 4.0]]).unwrap();
        let block = KronBlock {
            offset: 0,
            fan_in: 1,
            fan_out: 2,
            q: q.clone(),
            k: k.clone(),
        };
        let est = CurvatureEstimate::Kronecker {
            dim: 4,
            blocks: vec![block],
        };
        // layout: w0, w1, b0, b1 -> [W|b] rows (w0,b0), (w1,b1)
        let v = [1.0, 2.0, 3.0, 4.0];
        let xrow = [1.0, 3.0, 2.0, 4.0];
        let explicit = kron_explicit(&q, &k).matvec(&xrow).unwrap();
        let got = est.hvp(&v).unwrap();
        let back = [got[0], got[2], got[1], got[3]];
        for (a, b) in back.iter().zip(&explicit) {
            assert!((a - b).abs() < 1e-12);
        }
        let dense = est.materialize();
        assert_eq!(dense.matvec(&v).unwrap(), got);
    }

    #[test]
    fn empty_batch_gives_prior_only() {
        let arch = MlpArchitecture::new(vec![2, 3, 2], Activation::Tanh, Head::GaussianRegression).unwrap();
        let p = init_params(&arch, 0);
        let batch = Batch::new(DenseMatrix::zeros(0, 2), vec![], 5).unwrap();
        let prior = PriorSpec { precision: 0.7 };
        let CurvatureEstimate::Full(m) = ggn_full(&arch, &p, &batch, &prior).unwrap() else {
            panic!()
        };
        let mut expect = DenseMatrix::identity(p.len());
        expect.scale(0.7);
        assert_eq!(m, expect);
        let CurvatureEstimate::Full(f) = fisher_full_mc(&arch, &p, &batch, &prior, 0, 1).unwrap() else {
            panic!()
        };
        assert_eq!(f, expect);
    }

    #[test]
    fn cap_is_enforced() {
        let arch = MlpArchitecture::new(vec![2, 3, 2], Activation::Tanh, Head::GaussianRegression).unwrap();
        let p = init_params(&arch, 0);
        let batch = Batch::full(DenseMatrix::from_rows(&[vec![0.1, 0.2]]).unwrap(), vec![0.0]).unwrap();
        let err = ggn_full_range(&arch, &p, &batch, &PriorSpec::default(), 0..p.len(), 5).unwrap_err();
        assert!(matches!(err, Error::CurvatureTooLarge { .. }));
    }

    #[test]
    fn average_of_diagonals() {
        let a = CurvatureEstimate::Diagonal(vec![2.0, 4.0]);
        let b = CurvatureEstimate::Diagonal(vec![4.0, 2.0]);
        assert_eq!(
            CurvatureEstimate::average(&[a.clone(), b]).unwrap(),
            CurvatureEstimate::Diagonal(vec![3.0, 3.0])
        );
        let f = CurvatureEstimate::Full(DenseMatrix::identity(2));
        assert!(matches!(
            CurvatureEstimate::average(&[a, f]),
            Err(Error::MixedCurvature)
        ));
    }

    #[test]
    fn zero_jacobian_gives_prior_diagonal() {
        // zero inputs and zero params: every Jacobian entry except the output
        // biases vanishes; homoscedastic head with tiny precision on outputs.
        let arch = MlpArchitecture::new(vec![2, 1], Activation::Tanh, Head::Binary).unwrap();
        let p = vec![0.0; 3];
        let batch = Batch::full(DenseMatrix::zeros(1, 2), vec![1.0]).unwrap();
        let CurvatureEstimate::Diagonal(h) =
            curvature_diagonal(&arch, &p, &batch, &PriorSpec { precision: 0.3 }).unwrap()
        else {
            panic!()
        };
        assert_eq!(&h[..2], &[0.3, 0.3]);
        assert!((h[2] - (0.3 + 0.25)).abs() < 1e-15);
    }
}
