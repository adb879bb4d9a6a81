use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::graph::Mat;
use super::param::ParamSet;
use crate::error::{Error, Result};

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
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Mat>,
    pub second_moment: Vec<Mat>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|t| Array2::zeros(t.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    /// Applies one update from the gradients stored in `params`.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        assert_eq!(params.len(), self.first_moment.len());
        for t in params.iter() {
            if !t.grad().iter().all(|g| g.is_finite()) {
                return Err(Error::numeric(format!("adam_step gradient {}", t.name())));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);

        for (i, t) in params.iter_mut().enumerate() {
            let grad = t.grad().to_owned();
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            Zip::from(t.value_mut())
                .and(m)
                .and(v)
                .and(&grad)
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(value: f64, grad: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("p", array![[value]]);
        ps.set_grads(vec![Some(array![[grad]])]);
        ps
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = single(1.5, 0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &ps);
        adam.step(&mut ps).unwrap();
        assert_eq!(ps.tensor(0).value()[[0, 0]], 1.5);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after bias correction, so Δ = lr·g/(|g| + ε).
        let mut ps = single(0.0, 1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &ps);
        adam.step(&mut ps).unwrap();
        let expected = -3e-4 * 1.0 / (1.0 + 1e-8);
        assert!((ps.tensor(0).value()[[0, 0]] - expected).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_update_tends_to_learning_rate() {
        let mut ps = single(0.0, 0.37);
        let cfg = AdamConfig {
            learning_rate: 1e-3,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &ps);
        let mut prev = 0.0;
        let mut last_delta = 0.0;
        for _ in 0..2000 {
            ps.set_grads(vec![Some(array![[0.37]])]);
            adam.step(&mut ps).unwrap();
            let now = ps.tensor(0).value()[[0, 0]];
            last_delta = prev - now;
            prev = now;
        }
        assert!((last_delta - 1e-3).abs() < 1e-9, "delta {last_delta}");
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut ps = single(0.0, f64::NAN);
        let mut adam = AdamState::new(AdamConfig::default(), &ps);
        assert!(matches!(adam.step(&mut ps), Err(Error::Numeric { .. })));
        assert_eq!(adam.step, 0);
    }
}
