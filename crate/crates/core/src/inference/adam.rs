use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamOptions {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamOptions {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    opts: AdamOptions,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(dim: usize, opts: AdamOptions) -> Self {
        Self {
            opts,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    /// Bias-corrected update for a descent on the function whose gradient is
    /// `grad`. Returns the increment to add to the parameters and leaves the
    /// moment state untouched until [`Adam::commit`].
    pub fn propose(&self, grad: &[f64], lr: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let AdamOptions { beta1, beta2, eps } = self.opts;
        let t = (self.t + 1) as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let m: Vec<f64> = self.m.iter().zip(grad).map(|(m, g)| beta1 * m + (1.0 - beta1) * g).collect();
        let v: Vec<f64> = self.v.iter().zip(grad).map(|(v, g)| beta2 * v + (1.0 - beta2) * g * g).collect();
        let delta = m
            .iter()
            .zip(&v)
            .map(|(m, v)| -lr * (m / c1) / ((v / c2).sqrt() + eps))
            .collect();
        (delta, m, v)
    }

    pub fn commit(&mut self, m: Vec<f64>, v: Vec<f64>) {
        self.m = m;
        self.v = v;
        self.t += 1;
    }
}
