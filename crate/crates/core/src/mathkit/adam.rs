use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return usage(format!(
                "adam state has {} entries, params {}, grads {}",
                self.first.len(),
                params.len(),
                grads.len()
            ));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    state.update(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2, AdamConfig::default());
        adam_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(s.first_moment(), &[0.0, 0.0]);
        assert_eq!(s.second_moment(), &[0.0, 0.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so Δθ = −α·g/(|g| + ε) = −0.001/(1 + 1e-8).
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, AdamConfig::default());
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-6);
    }

    #[test]
    fn constant_gradient_steps_do_not_grow() {
        // Reference recurrences written out independently.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 1e-3);
        let g = 0.7;
        let (mut m, mut v, mut theta) = (0.0, 0.0, 0.0);
        let mut reference = Vec::new();
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let step = lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            theta -= step;
            reference.push(theta);
        }
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut deltas = Vec::new();
        for r in &reference {
            let before = p[0];
            adam_step(&mut p, &[g], &mut s).unwrap();
            assert!((p[0] - r).abs() < 1e-15);
            deltas.push((p[0] - before).abs());
        }
        assert!(deltas[1] <= deltas[0] + 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = vec![1.0, 2.0, 3.0];
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(3, cfg);
        for _ in 0..5 {
            adam_step(&mut p, &[0.4, -9.0, 1e3], &mut s).unwrap();
        }
        assert_eq!(p, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut s = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut s).is_err());
    }
}
