//! Adam with bias correction.

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one update `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Non-finite gradients abort before any state is touched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dim("adam parameters", self.m.len(), params.len())?;
        check_dim("adam gradients", self.m.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i}")));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut adam = Adam::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        let (m0, v0) = (adam.first_moment()[0], adam.second_moment()[0]);
        adam.step(&mut p, &[0.0]).unwrap();
        assert!((adam.first_moment()[0] - 0.9 * m0).abs() < 1e-15);
        assert!((adam.second_moment()[0] - 0.999 * v0).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // m_hat = g, v_hat = g^2 => delta = -lr * g / (|g| + eps)
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(2, cfg);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[0.7, -3.0]).unwrap();
        let want0 = -cfg.lr * 0.7 / (0.7 + cfg.eps);
        let want1 = cfg.lr * 3.0 / (3.0 + cfg.eps);
        assert!((p[0] - want0).abs() < 1e-18);
        assert!((p[1] - want1).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let cfg = AdamConfig::with_lr(1e-3);
        let mut adam = Adam::new(1, cfg);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            adam.step(&mut p, &[2.5]).unwrap();
            last = p[0] - before;
        }
        assert!(last < 0.0);
        assert!((last.abs() - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut adam = Adam::new(2, AdamConfig::default());
        let mut p = vec![1.0, 1.0];
        assert!(matches!(
            adam.step(&mut p, &[0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(adam.step_count(), 0);
    }
}
