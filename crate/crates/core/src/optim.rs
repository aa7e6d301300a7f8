//! Adam with bias correction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment buffers, one slot per optimized parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f32>> = sizes.into_iter().map(|n| vec![0.0; n]).collect();
        let v = m.clone();
        Self { config, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, slot: usize) -> &[f32] {
        &self.m[slot]
    }

    pub fn second_moment(&self, slot: usize) -> &[f32] {
        &self.v[slot]
    }

    /// One optimizer step. `params[i]` and `grads[i]` belong to slot `i`.
    pub fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err!(
                "adam: {} slots but {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(shape_err!("adam: slot {} size mismatch", i));
            }
        }

        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.t as f64;
        let bc1 = (1.0 - libm::pow(beta1 as f64, t)) as f32;
        let bc2 = (1.0 - libm::pow(beta2 as f64, t)) as f32;

        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= learning_rate * m_hat / (libm::sqrtf(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut state = AdamState::new(AdamConfig::default(), [1]);
        let mut w = [0.0f32];
        state.step(&mut [&mut w[..]], &[&[1.0][..]]).unwrap();
        assert_eq!(state.step_count(), 1);
        assert!((w[0] + 0.001).abs() < 1e-6);
        assert!((state.first_moment(0)[0] - 0.1).abs() < 1e-7);
        assert!((state.second_moment(0)[0] - 0.001).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::new(AdamConfig::default(), [3]);
        let mut w = [0.5f32, -1.0, 2.0];
        state.step(&mut [&mut w[..]], &[&[0.0; 3][..]]).unwrap();
        assert_eq!(w, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn quadratic_loss_decreases() {
        // f(w) = (w − 3)², gradient 2(w − 3).
        let loss = |w: f32| (w - 3.0) * (w - 3.0);
        let mut state = AdamState::new(AdamConfig { learning_rate: 0.1, ..AdamConfig::default() }, [1]);
        let mut w = [0.0f32];
        let mut prev = loss(w[0]);
        for _ in 0..2 {
            let g = [2.0 * (w[0] - 3.0)];
            state.step(&mut [&mut w[..]], &[&g[..]]).unwrap();
            let cur = loss(w[0]);
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn slot_mismatch_rejected() {
        let mut state = AdamState::new(AdamConfig::default(), [2]);
        let mut w = [0.0f32; 3];
        assert!(state.step(&mut [&mut w[..]], &[&[0.0; 3][..]]).is_err());
        assert_eq!(state.step_count(), 0);
    }
}
