//! Adam over [`ScorerParams`], with optional frozen parameter groups.

use alloc::collections::BTreeSet;

use crate::params::{ParamGroup, ScorerParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    frozen: BTreeSet<ParamGroup>,
    step: i32,
    first: ScorerParams,
    second: ScorerParams,
}

impl Adam {
    pub fn new(params: &ScorerParams, learning_rate: f64) -> Self {
        let zeros = ScorerParams::zeros(params.visual_dim(), params.word_dim());
        Self {
            learning_rate,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            frozen: BTreeSet::new(),
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Gradients for frozen groups are still computed by the caller but
    /// never applied.
    pub fn freeze(&mut self, group: ParamGroup) {
        self.frozen.insert(group);
    }

    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        self.frozen.contains(&group)
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ScorerParams, grads: &ScorerParams) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut().into_iter().zip(self.second.tensors_mut()));
        for (((group, p), (_, g)), ((_, m), (_, v))) in tensors {
            if self.frozen.contains(&group) {
                continue;
            }
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
    }
}
