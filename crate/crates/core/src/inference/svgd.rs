use crate::error::{check_len, Result};
use crate::kernel::KernelState;

/// Stein variational gradient direction for every particle:
///
/// `v_i = (1/N) sum_j [ k(φ_j, φ_i) grad log π(φ_j) + grad_{φ_j} k(φ_j, φ_i) ]`
pub fn svgd_direction(grads: &[Vec<f64>], ks: &KernelState) -> Result<Vec<Vec<f64>>> {
    let n = ks.len();
    let d = ks.dim();
    check_len("svgd_direction particles", n, grads.len())?;
    for g in grads {
        check_len("svgd_direction grad", d, g.len())?;
    }
    let inv = 1.0 / n as f64;
    let out = (0..n)
        .map(|i| {
            let mut v = vec![0.0; d];
            for (j, gj) in grads.iter().enumerate() {
                let k = ks.value(j, i);
                let rep = ks.grad(j, i);
                for ((vi, g), r) in v.iter_mut().zip(gj).zip(rep) {
                    *vi += k * g + r;
                }
            }
            v.iter_mut().for_each(|x| *x *= inv);
            v
        })
        .collect();
    Ok(out)
}
