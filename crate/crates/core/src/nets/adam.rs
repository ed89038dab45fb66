use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::NetworkParams;

/// Adam optimiser state for one network.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

/// Serializable scalar part of the optimiser state (moments are not kept in
/// checkpoints).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
}

impl Adam {
    pub fn new(lr: f64, params: &NetworkParams) -> Self {
        let zeros = || params.tensors.iter().map(|t| Array2::zeros(t.dim())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step along `grads` (one per tensor, same order).
    pub fn step(&mut self, params: &mut NetworkParams, grads: &[Array2<f64>]) {
        assert_eq!(grads.len(), params.tensors.len(), "one gradient per tensor");
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in params.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}
