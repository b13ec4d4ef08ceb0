//! Central finite-difference checks for parameter and input gradients.
//!
//! Intended for `f64` instances of the layers: the loss closure runs a
//! forward pass and, when asked, a backward pass that accumulates gradients.

use super::layers::Module;
use super::tensor::Tensor;

/// Relative error used throughout: `|analytic − numeric| / (|analytic| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + 1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheck {
    fn new() -> Self {
        GradCheck {
            checked: 0,
            max_relative_error: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = relative_error(analytic, numeric);
        if err > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = self.max_relative_error.max(err);
            self.worst = Some((name.to_string(), index, analytic, numeric));
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_relative_error < tol
    }
}

/// Compares accumulated parameter gradients against central differences.
///
/// `run(model, backward)` must return the scalar loss; when `backward` is
/// true it must also leave d(loss)/d(param) in each parameter's `grad`.
/// At most `per_param` entries of each parameter are perturbed, spread
/// evenly over the tensor.
pub fn check_params<M, F>(model: &mut M, mut run: F, eps: f64, per_param: usize) -> GradCheck
where
    M: Module<f64>,
    F: FnMut(&mut M, bool) -> f64,
{
    model.zero_grad();
    run(model, true);
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.params(&mut |name, p| analytic.push((name.to_string(), p.grad.clone())));

    let mut report = GradCheck::new();
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        let n = grads.len();
        let stride = (n / per_param.max(1)).max(1);
        for idx in (0..n).step_by(stride).take(per_param) {
            let plus = perturb(model, pi, idx, eps, &mut run);
            let minus = perturb(model, pi, idx, -eps, &mut run);
            report.record(name, idx, grads[idx], (plus - minus) / (2.0 * eps));
        }
    }
    report
}

fn perturb<M, F>(model: &mut M, target: usize, idx: usize, delta: f64, run: &mut F) -> f64
where
    M: Module<f64>,
    F: FnMut(&mut M, bool) -> f64,
{
    let set = |model: &mut M, delta: f64| {
        let mut i = 0;
        model.params(&mut |_, p| {
            if i == target {
                p.value.data_mut()[idx] += delta;
            }
            i += 1;
        });
    };
    set(model, delta);
    let loss = run(model, false);
    set(model, -delta);
    loss
}

/// Compares an analytic input gradient against central differences of `loss`.
pub fn check_input<F>(x: &Tensor<f64>, analytic: &Tensor<f64>, mut loss: F, eps: f64) -> GradCheck
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let mut report = GradCheck::new();
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = loss(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = loss(&probe);
        probe.data_mut()[i] = orig;
        report.record("input", i, analytic.data()[i], (plus - minus) / (2.0 * eps));
    }
    report
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::layers::{BatchNorm, Conv2d, Dense, Flatten, Layer, LeakyRelu, Mode, Sequential, Sigmoid};

    const EPS: f64 = 1e-3;
    const TOL: f64 = 1e-3;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    // loss = Σ y ⊙ r, so dL/dy = r
    fn weighted_sum(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    }

    fn check_layer<L: Layer<f64>>(mut layer: L, x: Tensor<f64>, rng: &mut ChaCha8Rng) {
        let y = layer.forward(&x, Mode::Train).unwrap();
        let r = random(y.shape(), rng);
        let has_params = layer.param_count() > 0;
        let params = check_params(
            &mut layer,
            |l, backward| {
                let y = l.forward(&x, Mode::Train).unwrap();
                if backward {
                    l.backward(&r).unwrap();
                }
                weighted_sum(&y, &r)
            },
            EPS,
            16,
        );
        assert!(!has_params || params.passes(TOL), "{params:?}");

        layer.forward(&x, Mode::Train).unwrap();
        let gx = layer.backward(&r).unwrap();
        let input = check_input(
            &x,
            &gx,
            |probe| weighted_sum(&layer.forward(probe, Mode::Train).unwrap(), &r),
            EPS,
        );
        assert!(input.passes(TOL), "{input:?}");
    }

    #[test]
    fn dense_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let layer = Dense::new(8, 8, &mut rng);
            let x = random(&[5, 8], &mut rng);
            check_layer(layer, x, &mut rng);
        }
    }

    #[test]
    fn spectral_dense_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut layer = Dense::new(6, 5, &mut rng).with_spectral_norm(&mut rng);
        for _ in 0..20 {
            layer.forward(&Tensor::zeros(&[1, 6]), Mode::Train).unwrap();
        }
        // power iteration is not differentiated; hold (u, v) fixed
        layer.freeze_spectral = true;
        let x = random(&[4, 6], &mut rng);
        check_layer(layer, x, &mut rng);
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let layer = Conv2d::new(2, 3, 3, 2, 1, &mut rng);
        let x = random(&[2, 2, 6, 5], &mut rng);
        check_layer(layer, x, &mut rng);
        let layer = Conv2d::new(1, 2, 3, 1, 0, &mut rng);
        let x = random(&[1, 1, 5, 4], &mut rng);
        check_layer(layer, x, &mut rng);
    }

    #[test]
    fn batchnorm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut bn = BatchNorm::new(3);
        bn.gamma.value = random(&[3], &mut rng);
        bn.beta.value = random(&[3], &mut rng);
        check_layer(bn, random(&[5, 3], &mut rng), &mut rng);
        let mut bn = BatchNorm::new(2);
        bn.gamma.value = random(&[2], &mut rng);
        check_layer(bn, random(&[3, 2, 3, 2], &mut rng), &mut rng);
    }

    #[test]
    fn activation_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        // keep inputs away from the leaky-ReLU kink
        let x = Tensor::from_fn(&[4, 5], |i| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if i % 2 == 0 { v } else { -v }
        });
        check_layer(LeakyRelu::new(), x.clone(), &mut rng);
        check_layer(Sigmoid::new(), x, &mut rng);
    }

    #[test]
    fn sequential_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let net = Sequential::new()
            .push(Conv2d::new(1, 2, 3, 2, 1, &mut rng))
            .push(BatchNorm::new(2))
            .push(LeakyRelu::new())
            .push(Flatten::new())
            .push(Dense::new(2 * 3 * 2, 4, &mut rng))
            .push(Sigmoid::new());
        check_layer(net, random(&[3, 1, 6, 4], &mut rng), &mut rng);
    }
}
