//! The Stein variational Newton linear system and its matrix-free solves.
//!
//! With `H_p` the PSD curvature of `-log π` at particle `p` and
//! `g_pm = grad_{φ_p} k(φ_p, φ_m)`, block `(m, n)` of the SVN-Hessian is
//!
//! `h^{mn} = (1/N) sum_p [ k(φ_p, φ_m) k(φ_p, φ_n) H_p + g_pm g_pn^T ]`
//!
//! and the update is `v_i = sum_j k(φ_j, φ_i) α_j` for the solution `α` of
//! `H^SVN α = v^SVGD`. The cross term can also be taken as `g_pn g_pm^T`
//! (see [`CrossTerm`]); the diagonal blocks are the same either way.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureEstimate;
use crate::error::{check_len, Error, Result};
use crate::kernel::KernelState;
use crate::linalg::{conjugate_gradient, dot, axpy, CgOptions, FnOperator};

/// Outer-product order of the kernel-gradient term in the off-diagonal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossTerm {
    /// `g_pm g_pn^T`: the whole operator is a sum of Gram matrices, hence PSD.
    #[default]
    Gram,
    /// `g_pn g_pm^T`: still symmetric, but indefinite in general, so CG may
    /// break down and fall back to the block-diagonal solve.
    Swapped,
}

fn check_inputs(ks: &KernelState, curvatures: &[CurvatureEstimate]) -> Result<()> {
    check_len("svn curvatures", ks.len(), curvatures.len())?;
    for c in curvatures {
        check_len("svn curvature dim", ks.dim(), c.dim())?;
    }
    Ok(())
}

/// `H^SVN α` for `α` stored as `N` consecutive blocks of length `d`.
pub fn svn_hessian_matvec(
    alpha: &[f64],
    ks: &KernelState,
    curvatures: &[CurvatureEstimate],
    cross: CrossTerm,
) -> Result<Vec<f64>> {
    check_inputs(ks, curvatures)?;
    check_len("svn_hessian_matvec", ks.len() * ks.dim(), alpha.len())?;
    Ok(matvec_unchecked(alpha, ks, curvatures, cross))
}

fn matvec_unchecked(alpha: &[f64], ks: &KernelState, curvatures: &[CurvatureEstimate], cross: CrossTerm) -> Vec<f64> {
    let n = ks.len();
    let d = ks.dim();
    let block = |i: usize| &alpha[i * d..(i + 1) * d];

    // Per p: w_p = H_p (sum_n k_pn α_n), plus the table c[m * N + n] = g_pm · α_n.
    let per_p: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut u = vec![0.0; d];
            for j in 0..n {
                axpy(ks.value(p, j), block(j), &mut u);
            }
            let w = curvatures[p].hvp_unchecked(&u);
            let mut c = vec![0.0; n * n];
            for m in 0..n {
                let gpm = ks.grad(p, m);
                for j in 0..n {
                    c[m * n + j] = dot(gpm, block(j));
                }
            }
            (w, c)
        })
        .collect();

    let inv = 1.0 / n as f64;
    let mut out = vec![0.0; n * d];
    for m in 0..n {
        let om = &mut out[m * d..(m + 1) * d];
        for (p, (w, c)) in per_p.iter().enumerate() {
            axpy(ks.value(p, m), w, om);
            match cross {
                CrossTerm::Gram => {
                    // g_pm sum_n (g_pn · α_n)
                    let s: f64 = (0..n).map(|j| c[j * n + j]).sum();
                    if s != 0.0 {
                        axpy(s, ks.grad(p, m), om);
                    }
                }
                CrossTerm::Swapped => {
                    // sum_n g_pn (g_pm · α_n)
                    for j in 0..n {
                        let s = c[m * n + j];
                        if s != 0.0 {
                            axpy(s, ks.grad(p, j), om);
                        }
                    }
                }
            }
        }
        om.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

/// `h^{mm} x = (1/N) sum_p [ k_pm^2 H_p x + grad k_pm (grad k_pm · x) ]`
pub fn svn_block_matvec(m: usize, x: &[f64], ks: &KernelState, curvatures: &[CurvatureEstimate]) -> Vec<f64> {
    let n = ks.len();
    let mut out = vec![0.0; x.len()];
    for (p, h) in curvatures.iter().enumerate() {
        let k = ks.value(p, m);
        if k != 0.0 {
            axpy(k * k, &h.hvp_unchecked(x), &mut out);
        }
        let g = ks.grad(p, m);
        let s = dot(g, x);
        if s != 0.0 {
            axpy(s, g, &mut out);
        }
    }
    let inv = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveInfo {
    pub cg_iters: usize,
    /// Number of fallbacks taken (full -> block-diagonal, or block -> identity).
    pub fallbacks: usize,
}

fn flatten(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn unflatten(v: Vec<f64>, d: usize) -> Vec<Vec<f64>> {
    v.chunks(d.max(1)).map(<[f64]>::to_vec).collect()
}

/// Solves the full `Nd x Nd` system by CG. Falls back to the block-diagonal
/// solve if CG breaks down.
pub fn solve_full_system(
    ks: &KernelState,
    curvatures: &[CurvatureEstimate],
    v_svgd: &[Vec<f64>],
    cross: CrossTerm,
    cg: &CgOptions,
) -> Result<(Vec<Vec<f64>>, SolveInfo)> {
    check_inputs(ks, curvatures)?;
    check_len("solve_full_system rhs", ks.len(), v_svgd.len())?;
    let d = ks.dim();
    let rhs = flatten(v_svgd);
    check_len("solve_full_system rhs", ks.len() * d, rhs.len())?;
    let op = FnOperator::new(rhs.len(), |x: &[f64]| matvec_unchecked(x, ks, curvatures, cross));
    match conjugate_gradient(&op, &rhs, cg) {
        Ok(sol) => Ok((
            unflatten(sol.x, d),
            SolveInfo {
                cg_iters: sol.iters,
                fallbacks: 0,
            },
        )),
        Err(Error::SolverBreakdown { iters, .. }) => {
            log::warn!("full SVN system broke down after {iters} CG iterations; using block-diagonal solve");
            let (alpha, mut info) = solve_block_diagonal(ks, curvatures, v_svgd, cg)?;
            info.cg_iters += iters;
            info.fallbacks += 1;
            Ok((alpha, info))
        }
        Err(e) => Err(e),
    }
}

/// Solves `h^{mm} α_m = v_m` independently per particle. A particle whose
/// solve breaks down keeps `α_m = v_m`.
pub fn solve_block_diagonal(
    ks: &KernelState,
    curvatures: &[CurvatureEstimate],
    v_svgd: &[Vec<f64>],
    cg: &CgOptions,
) -> Result<(Vec<Vec<f64>>, SolveInfo)> {
    check_inputs(ks, curvatures)?;
    check_len("solve_block_diagonal rhs", ks.len(), v_svgd.len())?;
    let d = ks.dim();
    let results: Vec<Result<(Vec<f64>, usize, bool)>> = v_svgd
        .par_iter()
        .enumerate()
        .map(|(m, rhs)| {
            check_len("solve_block_diagonal rhs", d, rhs.len())?;
            let op = FnOperator::new(d, |x: &[f64]| svn_block_matvec(m, x, ks, curvatures));
            match conjugate_gradient(&op, rhs, cg) {
                Ok(sol) => Ok((sol.x, sol.iters, false)),
                Err(Error::SolverBreakdown { iters, .. }) => {
                    log::warn!("SVN block {m} broke down after {iters} CG iterations; using the SVGD direction");
                    Ok((rhs.clone(), iters, true))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut info = SolveInfo::default();
    let mut alpha = Vec::with_capacity(results.len());
    for r in results {
        let (a, iters, fell_back) = r?;
        info.cg_iters += iters;
        info.fallbacks += usize::from(fell_back);
        alpha.push(a);
    }
    Ok((alpha, info))
}

/// `v_i = sum_j k(φ_j, φ_i) α_j`
pub fn svn_direction(alpha: &[Vec<f64>], ks: &KernelState) -> Result<Vec<Vec<f64>>> {
    let n = ks.len();
    check_len("svn_direction", n, alpha.len())?;
    let d = ks.dim();
    let mut out = vec![vec![0.0; d]; n];
    for (i, oi) in out.iter_mut().enumerate() {
        for (j, aj) in alpha.iter().enumerate() {
            check_len("svn_direction alpha", d, aj.len())?;
            axpy(ks.value(j, i), aj, oi);
        }
    }
    Ok(out)
}
