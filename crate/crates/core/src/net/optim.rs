//! Adam and momentum SGD over flat parameter slices.

use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("adam parameters", self.m.len(), params.len())?;
        check_len("adam gradients", self.m.len(), grads.len())?;
        let AdamConfig {
            rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= rate * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumConfig {
    pub rate: f64,
    pub momentum: f64,
}

impl Default for MomentumConfig {
    fn default() -> Self {
        Self {
            rate: 1e-2,
            momentum: 0.9,
        }
    }
}

/// Heavy-ball momentum: `v <- mu v - rate g; p <- p + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSgd {
    pub config: MomentumConfig,
    velocity: Vec<f64>,
    step: u64,
}

impl MomentumSgd {
    pub fn new(config: MomentumConfig, len: usize) -> Self {
        Self {
            config,
            velocity: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("momentum parameters", self.velocity.len(), params.len())?;
        check_len("momentum gradients", self.velocity.len(), grads.len())?;
        let MomentumConfig { rate, momentum } = self.config;
        self.step += 1;
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = momentum * *v - rate * g;
            *p += *v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.5];
        let before = p.clone();
        Adam::new(AdamConfig::default(), 3)
            .step(&mut p, &[0.0; 3])
            .unwrap();
        assert_eq!(p, before);
        MomentumSgd::new(MomentumConfig::default(), 3)
            .step(&mut p, &[0.0; 3])
            .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_adam_step_moves_by_rate() {
        // m_hat = g, v_hat = g^2 on the first step, so the update is
        // rate * g / (|g| + eps).
        for &g in &[0.37, -4.0, 1e-3] {
            let mut p = vec![0.5];
            let mut adam = Adam::new(AdamConfig::default(), 1);
            adam.step(&mut p, &[g]).unwrap();
            let expected = 0.5 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert_eq!(adam.steps(), 1);
        }
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = vec![1.0, 2.0];
        let mut opt = MomentumSgd::new(
            MomentumConfig {
                rate: 0.1,
                momentum: 0.0,
            },
            2,
        );
        opt.step(&mut p, &[1.0, -3.0]).unwrap();
        opt.step(&mut p, &[1.0, -3.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15 && (p[1] - 2.6).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut p = vec![0.0];
        let mut opt = MomentumSgd::new(
            MomentumConfig {
                rate: 1.0,
                momentum: 0.5,
            },
            1,
        );
        opt.step(&mut p, &[1.0]).unwrap();
        opt.step(&mut p, &[1.0]).unwrap();
        // v1 = -1, v2 = -1.5
        assert_eq!(p[0], -2.5);
        assert_eq!(opt.velocity(), &[-1.5]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut p = vec![0.0; 2];
        assert!(Adam::new(AdamConfig::default(), 3)
            .step(&mut p, &[0.0; 2])
            .is_err());
        assert!(MomentumSgd::new(MomentumConfig::default(), 2)
            .step(&mut p, &[0.0; 3])
            .is_err());
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut p = vec![0.3, -0.2];
            let mut adam = Adam::new(AdamConfig::default(), 2);
            for i in 0..10 {
                adam.step(&mut p, &[i as f64 * 0.1, -0.4]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
