use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

/// Adam with bias correction. Moment buffers are created lazily per parameter.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter that has a gradient entry.
    /// All shapes are checked before anything is modified.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::MissingParam(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(Error::invalid(format!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if let Some((m, _)) = self.moments.get(name) {
                if m.shape() != p.shape() {
                    return Err(Error::invalid(format!(
                        "optimizer state for `{name}` has shape {:?}, parameter has {:?}",
                        m.shape(),
                        p.shape()
                    )));
                }
            }
        }

        self.step += 1;
        let c = &self.config;
        let (lr, b1, b2, eps) = (
            T::lit(c.learning_rate),
            T::lit(c.beta1),
            T::lit(c.beta2),
            T::lit(c.epsilon),
        );
        let one = T::one();
        let t = self.step as i32;
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);

        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamStore<f64> {
        ParamStore::from([("w".to_owned(), Tensor::vector(vec![v]))])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = one_param(0.25);
        let grads = one_param(0.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params["w"].data(), &[0.25]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; bias-corrected m̂ = 1, v̂ = 1 -> Δ = -0.1 / (1 + 1e-8)
        let mut params = one_param(0.0);
        let grads = one_param(1.0);
        let mut adam = Adam::new(AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        });
        adam.step(&mut params, &grads).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((params["w"].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut params = one_param(0.7);
        let mut adam = Adam::new(AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        });
        for g in [1.0, -3.0, 0.5] {
            adam.step(&mut params, &one_param(g)).unwrap();
        }
        assert_eq!(params["w"].data(), &[0.7]);
    }

    #[test]
    fn shape_mismatch_is_rejected_without_side_effects() {
        let mut params = one_param(1.0);
        let grads = ParamStore::from([("w".to_owned(), Tensor::vector(vec![1.0, 2.0]))]);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.step(&mut params, &grads).is_err());
        assert_eq!(adam.steps(), 0);
        assert_eq!(params["w"].data(), &[1.0]);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params = one_param(0.3);
            let mut adam = Adam::new(AdamConfig::default());
            for i in 0..50 {
                let g = ((i as f64) * 0.37).sin();
                adam.step(&mut params, &one_param(g)).unwrap();
            }
            params["w"].data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
