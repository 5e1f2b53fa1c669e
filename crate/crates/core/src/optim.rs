//! Adam with bias-corrected moment estimates, shared by field training and
//! goal-pose refinement.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step `p ← p − α m̂ / (√v̂ + ε)`. Returns the Euclidean norm
    /// of the applied update.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> f64 {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let mut sq = 0.0;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let u = learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            params[i] -= u;
            sq += u * u;
        }
        sq.sqrt()
    }

    /// Clears the first moment and scales the learning rate by `factor`.
    pub fn damp(&mut self, factor: f64) {
        self.m.iter_mut().for_each(|m| *m = 0.0);
        self.cfg.learning_rate *= factor;
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }
}
