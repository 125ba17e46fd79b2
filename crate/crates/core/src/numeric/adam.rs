use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let zeros: Vec<_> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Adam {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::dim(format!(
                "adam: {} moments, {} params, {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::dim(format!(
                    "adam: parameter {i} shape {:?}, gradient {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    self.first[i].shape()
                )));
            }
        }

        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.epsilon);
        let correction1 = T::one() - T::of(c.beta1.powi(self.step as i32));
        let correction2 = T::one() - T::of(c.beta2.powi(self.step as i32));

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let gd = g.data();
            for (j, ((pj, mj), vj)) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).enumerate() {
                *mj = b1 * *mj + (T::one() - b1) * gd[j];
                *vj = b2 * *vj + (T::one() - b2) * gd[j] * gd[j];
                let m_hat = *mj / correction1;
                let v_hat = *vj / correction2;
                *pj = *pj - lr * m_hat / (v_hat.sqrt() + eps);
            }
            if !p.is_finite() {
                return Err(Error::Numeric("adam produced a non-finite parameter".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::scalar(v).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0]).unwrap()];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let grads = vec![Tensor::zeros(&[2])];
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // bias correction makes m̂ = g and v̂ = g², so the step is lr·g/(|g|+ε)
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut params = vec![scalar(2.0)];
        let mut adam = Adam::new(config, &params);
        adam.step(&mut params, &[scalar(1.0)]).unwrap();
        let expected = 2.0 - 0.1 / (1.0 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-12);
    }

    #[test]
    fn converges_on_quadratic() {
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut params = vec![scalar(5.0)];
        let mut adam = Adam::new(config, &params);
        let mut reached = None;
        for step in 0..2000 {
            let x = params[0].item();
            if x.abs() < 0.01 {
                reached = Some(step);
                break;
            }
            adam.step(&mut params, &[scalar(2.0 * x)]).unwrap();
        }
        assert!(reached.is_some(), "x = {}", params[0].item());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::vector(vec![1.0, 2.0]).unwrap()];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let bad = vec![Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap()];
        assert!(matches!(adam.step(&mut params, &bad), Err(Error::Dimension(_))));
    }
}
