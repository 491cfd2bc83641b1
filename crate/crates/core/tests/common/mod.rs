//! Independent reference implementations for integration tests. Nothing here
//! calls into the library's numerical routines; everything is plain loops
//! over `Vec<Vec<f64>>`.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use svn_core::DenseMatrix;

pub type Mat = Vec<Vec<f64>>;

pub fn to_rows(m: &DenseMatrix) -> Mat {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn from_rows(m: &Mat) -> DenseMatrix {
    DenseMatrix::from_rows(m).unwrap()
}

pub fn matvec(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

/// Gaussian elimination with partial pivoting.
pub fn lu_solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Mat = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for r in col + 1..n {
            let f = m[r][col] / p;
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// Central differences.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let a = f(&xp);
            xp[i] = x[i] - h;
            let b = f(&xp);
            xp[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

/// `out x in` Jacobian by central differences.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Mat {
    let k = f(x).len();
    let mut jac = zeros(k, x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let a = f(&xp);
        xp[i] = x[i] - h;
        let b = f(&xp);
        xp[i] = x[i];
        for c in 0..k {
            jac[c][i] = (a[c] - b[c]) / (2.0 * h);
        }
    }
    jac
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    max_abs_diff(a, b) / max_abs(b).max(floor)
}

pub fn flatten(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    (0..r).map(|_| random_vec(rng, c)).collect()
}

/// `A A^T + shift I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat {
    let a = random_mat(rng, n, n);
    let mut m = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[i][j] = (0..n).map(|k| a[i][k] * a[j][k]).sum();
        }
        m[i][i] += shift;
    }
    m
}

/// Dense `Q ⊗ K` block of one layer placed in a `dim x dim` matrix.
///
/// Parameters of the layer at `offset` are laid out as the row-major weight
/// matrix (`fan_out` rows of `fan_in` entries) followed by `fan_out` biases.
/// Weight `(o, i)` pairs with input coordinate `i`, bias `o` with the extra
/// coordinate `fan_in`.
pub fn kron_layer_dense(dim: usize, offset: usize, fan_in: usize, fan_out: usize, q: &Mat, k: &Mat) -> Mat {
    let mut coords = Vec::new();
    for o in 0..fan_out {
        for i in 0..fan_in {
            coords.push((offset + o * fan_in + i, o, i));
        }
    }
    for o in 0..fan_out {
        coords.push((offset + fan_out * fan_in + o, o, fan_in));
    }
    let mut m = zeros(dim, dim);
    for &(p, o1, i1) in &coords {
        for &(r, o2, i2) in &coords {
            m[p][r] = q[o1][o2] * k[i1][i2];
        }
    }
    m
}

/// Gaussian kernel with identity metric `exp(-s |a - b|^2)`. Returns values
/// `k[i][j]` and gradients `g[i][j] = d k(φ_i, φ_j) / d φ_i`.
pub fn naive_kernel(particles: &Mat, s: f64) -> (Mat, Vec<Mat>) {
    let n = particles.len();
    let d = particles[0].len();
    let mut k = zeros(n, n);
    let mut g = vec![zeros(n, d); n];
    for i in 0..n {
        for j in 0..n {
            let diff: Vec<f64> = (0..d).map(|a| particles[i][a] - particles[j][a]).collect();
            let sq: f64 = diff.iter().map(|x| x * x).sum();
            k[i][j] = (-s * sq).exp();
            for a in 0..d {
                g[i][j][a] = -2.0 * s * k[i][j] * diff[a];
            }
        }
    }
    (k, g)
}

/// `v_i = (1/N) sum_j [k(φ_j, φ_i) ∇log π(φ_j) + ∇_{φ_j} k(φ_j, φ_i)]`
pub fn naive_svgd(k: &Mat, g: &[Mat], grads: &Mat) -> Mat {
    let n = grads.len();
    let d = grads[0].len();
    let mut out = zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            for a in 0..d {
                out[i][a] += (k[j][i] * grads[j][a] + g[j][i][a]) / n as f64;
            }
        }
    }
    out
}

/// Assembles the `Nd x Nd` SVN-Hessian with blocks
/// `(1/N) sum_p [k_pm k_pn H_p + outer_p(m, n)]` where `outer_p(m, n)` is
/// `g_pm g_pn^T`, or `g_pn g_pm^T` when `swapped`.
pub fn dense_svn_hessian(k: &Mat, g: &[Mat], h: &[Mat], swapped: bool) -> Mat {
    let n = k.len();
    let d = h[0].len();
    let mut out = zeros(n * d, n * d);
    for m in 0..n {
        for nn in 0..n {
            for p in 0..n {
                let (u, v) = if swapped { (&g[p][nn], &g[p][m]) } else { (&g[p][m], &g[p][nn]) };
                for a in 0..d {
                    for b in 0..d {
                        out[m * d + a][nn * d + b] += (k[p][m] * k[p][nn] * h[p][a][b] + u[a] * v[b]) / n as f64;
                    }
                }
            }
        }
    }
    out
}

/// Sample mean and unbiased (n - 1) covariance of the rows.
pub fn sample_moments(xs: &Mat) -> (Vec<f64>, Mat) {
    let n = xs.len() as f64;
    let d = xs[0].len();
    let mean: Vec<f64> = (0..d).map(|a| xs.iter().map(|x| x[a]).sum::<f64>() / n).collect();
    let mut cov = zeros(d, d);
    for x in xs {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (x[a] - mean[a]) * (x[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

pub fn frobenius_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
