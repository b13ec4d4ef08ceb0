//! Adaptive-moment optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::layers::Module;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments<T> {
    name: String,
    m: Vec<T>,
    v: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Applies one update from the gradients accumulated in `module`.
    pub fn step(&mut self, module: &mut dyn Module<T>) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        // folds both bias corrections into the step size
        let step_size = T::lit(lr * c2.sqrt() / c1);
        let eps_hat = T::lit(eps * c2.sqrt());
        let moments = &mut self.moments;
        let mut idx = 0;
        module.params(&mut |name, p| {
            if moments.len() <= idx {
                moments.push(Moments {
                    name: name.to_string(),
                    m: vec![T::zero(); p.value.len()],
                    v: vec![T::zero(); p.value.len()],
                });
            }
            let st = &mut moments[idx];
            for ((w, &g), (m, v)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(&p.grad)
                .zip(st.m.iter_mut().zip(st.v.iter_mut()))
            {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *w -= step_size * *m / (v.sqrt() + eps_hat);
            }
            idx += 1;
        });
    }

    /// Moment buffers as named tensors, in parameter order.
    pub fn state(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::with_capacity(self.moments.len() * 2);
        for st in &self.moments {
            out.push((format!("{}.m", st.name), Tensor::new(vec![st.m.len()], st.m.clone()).expect("1-d")));
            out.push((format!("{}.v", st.name), Tensor::new(vec![st.v.len()], st.v.clone()).expect("1-d")));
        }
        out
    }

    pub fn restore(config: AdamConfig, step: u64, state: Vec<(String, Tensor<T>)>) -> Result<Self> {
        if !state.len().is_multiple_of(2) {
            return Err(Error::Model("optimizer state must pair m and v buffers".into()));
        }
        let mut moments = Vec::with_capacity(state.len() / 2);
        let mut it = state.into_iter();
        while let (Some((mn, m)), Some((vn, v))) = (it.next(), it.next()) {
            let name = mn
                .strip_suffix(".m")
                .ok_or_else(|| Error::Model(format!("unexpected optimizer tensor {mn}")))?;
            if vn != format!("{name}.v") || m.len() != v.len() {
                return Err(Error::Model(format!("optimizer tensors {mn} / {vn} do not pair")));
            }
            moments.push(Moments {
                name: name.to_string(),
                m: m.into_data(),
                v: v.into_data(),
            });
        }
        Ok(Adam { config, step, moments })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Param;

    struct Vector(Param<f64>);

    impl Module<f64> for Vector {
        fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<f64>)) {
            f("p", &mut self.0);
        }
    }

    fn vector(values: &[f64]) -> Vector {
        Vector(Param::new(Tensor::new(vec![values.len()], values.to_vec()).unwrap()))
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = vector(&[1.0, -2.0, 3.0]);
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            opt.step(&mut m);
        }
        assert_eq!(m.0.value.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        for g in [0.37, -5.0, 1e-3] {
            let mut m = vector(&[0.5]);
            m.0.grad[0] = g;
            let mut opt = Adam::new(cfg);
            opt.step(&mut m);
            let moved = (m.0.value.data()[0] - 0.5).abs();
            assert!((moved - cfg.lr).abs() < 1e-6 * cfg.lr.max(1.0), "g={g} moved={moved}");
        }
    }

    #[test]
    fn quadratic_bowl_decreases() {
        let mut m = vector(&[1.0, -0.7, 0.3, 2.0]);
        let mut opt = Adam::new(AdamConfig::default());
        let loss = |m: &Vector| m.0.value.data().iter().map(|x| x * x).sum::<f64>();
        let mut prev = loss(&m);
        for _ in 0..100 {
            let grads: Vec<f64> = m.0.value.data().iter().map(|x| 2.0 * x).collect();
            m.0.grad.copy_from_slice(&grads);
            opt.step(&mut m);
            let l = loss(&m);
            assert!(l < prev, "{l} >= {prev}");
            prev = l;
        }
    }

    #[test]
    fn state_round_trip() {
        let mut m = vector(&[1.0, 2.0]);
        m.0.grad = vec![0.1, -0.2];
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut m);
        let restored = Adam::restore(opt.config, opt.step, opt.state()).unwrap();
        assert_eq!(restored, opt);
    }
}
