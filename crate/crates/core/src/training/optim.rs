use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{HasParams, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.weight_decay >= 0.0
            && [self.lr, self.adam_eps, self.weight_decay]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// Adam with decoupled weight decay. Moments are allocated on the first step.
#[derive(Clone, Debug)]
pub struct AdamW<S> {
    pub config: AdamWConfig,
    t: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Real> AdamW<S> {
    pub fn new(config: AdamWConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update from the gradients currently stored in `model`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step<M: HasParams<S> + ?Sized>(&mut self, model: &mut M) -> Result<()> {
        let mut params = model.params_mut();
        if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || self
                .m
                .iter()
                .zip(&params)
                .any(|(m, p)| m.len() != p.numel())
        {
            return Err(Error::InvalidArgument(
                "optimizer state does not match the model's parameters".into(),
            ));
        }
        self.t += 1;
        let c = self.config;
        let lr = S::of(c.lr);
        let decay = S::of(1.0 - c.lr * c.weight_decay);
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let (one_b1, one_b2) = (S::of(1.0 - c.beta1), S::of(1.0 - c.beta2));
        let bc1 = S::of(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = S::of(1.0 - c.beta2.powi(self.t as i32));
        let eps = S::of(c.adam_eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data().to_vec();
            for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                *theta = *theta * decay;
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Param, Tensor};

    fn one(theta: f64, grad: f64) -> Vec<Param<f64>> {
        let mut p = Param::new("theta", Tensor::from_vec(vec![theta]));
        p.grad = Tensor::from_vec(vec![grad]);
        vec![p]
    }

    #[test]
    fn zero_grad_zero_decay_is_fixed_point() {
        let mut ps = one(0.7, 0.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        })
        .unwrap();
        for _ in 0..5 {
            opt.step(&mut ps).unwrap();
        }
        assert_eq!(ps[0].value[0], 0.7);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        // f = theta^2 / 2 at theta = 1: m_hat = g, v_hat = g^2.
        let mut ps = one(1.0, 1.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        })
        .unwrap();
        opt.step(&mut ps).unwrap();
        let expected = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((ps[0].value[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn pure_decay_path() {
        let mut ps = one(2.0, 0.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        })
        .unwrap();
        opt.step(&mut ps).unwrap();
        assert!((ps[0].value[0] - 2.0 * (1.0 - 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let mut ps = one(3.0, 0.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        })
        .unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let theta = ps[0].value[0];
            let loss = 0.5 * theta * theta;
            assert!(loss < last);
            last = loss;
            ps[0].grad = Tensor::from_vec(vec![theta]);
            opt.step(&mut ps).unwrap();
        }
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut ps = one(1.0, f64::NAN);
        let mut opt = AdamW::new(AdamWConfig::default()).unwrap();
        match opt.step(&mut ps) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "theta"),
            other => panic!("{other:?}"),
        }
        assert_eq!(ps[0].value[0], 1.0);
    }
}
