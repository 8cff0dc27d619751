//! Adam optimizer with bias correction and `1/(1 + d*t)` learning-rate decay.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Adam hyperparameters. Defaults: `lr 0.001`, `decay 1e-5`, `beta1 0.9`,
/// `beta2 0.999`, `epsilon 1e-8`.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second-moment accumulators plus the cumulative batch counter.
///
/// The effective rate for the step that advances the counter to `t` is
/// `lr / (1 + decay * t)`, so it is positive and non-increasing.
#[derive(Clone, Debug)]
pub struct AdamState<T = f32> {
    config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Zero-initialized accumulators, one pair per parameter tensor.
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    #[inline]
    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Learning rate that the next call to [`AdamState::step`] will apply.
    pub fn next_effective_lr(&self) -> f64 {
        self.config.learning_rate / (1.0 + self.config.decay * (self.t + 1) as f64)
    }

    /// One Adam update over every parameter tensor. `params` and `grads`
    /// must line up with the shapes the state was built from.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                what: "adam parameter group size",
                expected: self.m.len().to_string(),
                got: format!("{} params / {} grads", params.len(), grads.len()),
            });
        }
        for g in grads.iter() {
            g.check_finite("gradient")?;
        }

        self.t += 1;
        let alpha = T::from_f64(self.next_lr_after_increment());
        let beta1 = T::from_f64(self.config.beta1);
        let beta2 = T::from_f64(self.config.beta2);
        let eps = T::from_f64(self.config.epsilon);
        let bc1 = T::from_f64(1.0 - self.config.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.config.beta2.powi(self.t as i32));
        let one = T::one();

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if param.shape() != m.shape() || grad.shape() != m.shape() {
                return Err(Error::ShapeMismatch {
                    what: "adam tensor shape",
                    expected: format!("{:?}", m.shape()),
                    got: format!("{:?} / {:?}", param.shape(), grad.shape()),
                });
            }
            let pd = param.data_mut();
            let gd = grad.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = gd[i];
                md[i] = beta1 * md[i] + (one - beta1) * g;
                vd[i] = beta2 * vd[i] + (one - beta2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    fn next_lr_after_increment(&self) -> f64 {
        self.config.learning_rate / (1.0 + self.config.decay * self.t as f64)
    }
}
