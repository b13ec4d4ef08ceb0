//! Layers with explicit forward and backward passes.
//!
//! `forward` caches whatever `backward` needs and accumulates parameter
//! gradients on `backward`; `infer` is the cache-free inference path that
//! only needs `&self`, so a frozen model can be shared across threads.

use rand::Rng;

use super::spectral::SpectralNorm;
use super::tensor::{axpy, dot, Scalar, Tensor};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const SPECTRAL_WARMUP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Anything that owns named parameters and state buffers.
pub trait Module<T: Scalar> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>));

    /// Non-trainable state (running statistics, power-iteration vectors).
    fn buffers(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<T>)) {}

    fn zero_grad(&mut self) {
        self.params(&mut |_, p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.params(&mut |_, p| n += p.value.len());
        n
    }
}

pub trait Layer<T: Scalar>: Module<T> + Send + Sync {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;
    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>>;
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    /// Stops power-iteration updates in spectrally normalized layers.
    fn set_spectral_frozen(&mut self, _frozen: bool) {}
}

fn missing_cache(layer: &str) -> Error {
    Error::Usage(format!("{layer}: backward called before forward"))
}

fn kaiming_bound(fan_in: usize) -> f64 {
    let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
    gain * (3.0 / fan_in as f64).sqrt()
}

fn uniform_tensor<T: Scalar, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..=bound)))
}

/// Fully connected layer `y = W x + b`, optionally spectrally normalized.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub spectral: Option<SpectralNorm<T>>,
    /// When set, training passes skip the power-iteration update.
    pub freeze_spectral: bool,
    cache_x: Option<Tensor<T>>,
    cache_eff: Option<(Vec<T>, T)>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            inputs,
            outputs,
            weight: Param::new(uniform_tensor(&[outputs, inputs], kaiming_bound(inputs), rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
            spectral: None,
            freeze_spectral: false,
            cache_x: None,
            cache_eff: None,
        }
    }

    /// Enables spectral normalization; the singular-vector estimates are
    /// warmed up on the initial weight so that `σ̂ > 0` from the start.
    pub fn with_spectral_norm<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let mut sn = SpectralNorm::new(self.outputs, self.inputs, rng);
        for _ in 0..SPECTRAL_WARMUP {
            sn.power_iteration(self.weight.value.data());
        }
        self.spectral = Some(sn);
        self
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "dense weight {:?} / bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        let (outputs, inputs) = (weight.shape()[0], weight.shape()[1]);
        Ok(Dense {
            inputs,
            outputs,
            weight: Param::new(weight),
            bias: Param::new(bias),
            spectral: None,
            freeze_spectral: false,
            cache_x: None,
            cache_eff: None,
        })
    }

    /// Weight used by the forward pass and `σ̂` (1 without spectral norm).
    pub fn effective_weight(&self) -> (Vec<T>, T) {
        match &self.spectral {
            Some(sn) => sn.normalized(self.weight.value.data()),
            None => (self.weight.value.data().to_vec(), T::one()),
        }
    }

    fn apply(&self, x: &Tensor<T>, w: &[T]) -> Result<Tensor<T>> {
        if x.shape().len() != 2 || x.shape()[1] != self.inputs {
            return Err(Error::Shape(format!(
                "dense expects (N, {}), got {:?}",
                self.inputs,
                x.shape()
            )));
        }
        let n = x.batch();
        let b = self.bias.value.data();
        let mut y = Tensor::zeros(&[n, self.outputs]);
        for i in 0..n {
            let xi = x.row(i);
            let yi = y.row_mut(i);
            for o in 0..self.outputs {
                yi[o] = dot(&w[o * self.inputs..(o + 1) * self.inputs], xi) + b[o];
            }
        }
        Ok(y)
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }

    fn buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        if let Some(sn) = &mut self.spectral {
            f("sn_u", &mut sn.u);
            f("sn_v", &mut sn.v);
        }
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Train && !self.freeze_spectral {
            if let Some(sn) = &mut self.spectral {
                sn.power_iteration(self.weight.value.data());
            }
        }
        let (w, sigma) = self.effective_weight();
        let y = self.apply(x, &w)?;
        self.cache_x = Some(x.clone());
        self.cache_eff = Some((w, sigma));
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache_x.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let (w, sigma) = self.cache_eff.as_ref().ok_or_else(|| missing_cache("dense"))?;
        grad.expect_shape(&[x.batch(), self.outputs], "dense grad")?;
        let (nin, nout) = (self.inputs, self.outputs);
        let mut grad_x = Tensor::zeros(x.shape());
        let mut grad_w = vec![T::zero(); nout * nin];
        for i in 0..x.batch() {
            let g = grad.row(i);
            let xi = x.row(i);
            let gx = grad_x.row_mut(i);
            for o in 0..nout {
                let go = g[o];
                if go == T::zero() {
                    continue;
                }
                axpy(go, &w[o * nin..(o + 1) * nin], gx);
                axpy(go, xi, &mut grad_w[o * nin..(o + 1) * nin]);
                self.bias.grad[o] += go;
            }
        }
        match &self.spectral {
            Some(sn) => sn.backward(&grad_w, w, *sigma, &mut self.weight.grad),
            None => axpy(T::one(), &grad_w, &mut self.weight.grad),
        }
        Ok(grad_x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (w, _) = self.effective_weight();
        self.apply(x, &w)
    }

    fn set_spectral_frozen(&mut self, frozen: bool) {
        self.freeze_spectral = frozen;
    }
}

/// 2-D cross-correlation over `(N, C, H, W)` inputs.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    input_shape: Vec<usize>,
    // per sample: (out_h * out_w) x (in_c * k * k)
    cols: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(uniform_tensor(
                &[out_channels, in_channels, kernel, kernel],
                kaiming_bound(fan_in),
                rng,
            )),
            bias: Some(Param::new(Tensor::zeros(&[out_channels]))),
            cache: None,
        }
    }

    /// Drops the bias, which is redundant ahead of batch normalization.
    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < self.kernel || wp < self.kernel || self.stride == 0 {
            return Err(Error::Shape(format!(
                "conv kernel {} does not fit {h}x{w} input",
                self.kernel
            )));
        }
        Ok(((hp - self.kernel) / self.stride + 1, (wp - self.kernel) / self.stride + 1))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects (N, {}, H, W), got {s:?}",
                self.in_channels
            )));
        }
        let (oh, ow) = self.output_size(s[2], s[3])?;
        Ok((s[2], s[3], oh, ow))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn im2col(&self, sample: &[T], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T]) {
        let k = self.kernel;
        let pl = self.patch_len();
        for oy in 0..oh {
            for ox in 0..ow {
                let col = &mut cols[(oy * ow + ox) * pl..(oy * ow + ox + 1) * pl];
                let mut idx = 0;
                for c in 0..self.in_channels {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            col[idx] = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                sample[c * h * w + iy as usize * w + ix as usize]
                            } else {
                                T::zero()
                            };
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    fn apply_cols(&self, cols: &[T], oh: usize, ow: usize, out: &mut [T]) {
        let pl = self.patch_len();
        let w = self.weight.value.data();
        let positions = oh * ow;
        for o in 0..self.out_channels {
            let wo = &w[o * pl..(o + 1) * pl];
            let b = self.bias.as_ref().map_or(T::zero(), |b| b.value.data()[o]);
            for p in 0..positions {
                out[o * positions + p] = dot(wo, &cols[p * pl..(p + 1) * pl]) + b;
            }
        }
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("weight", &mut self.weight);
        if let Some(b) = &mut self.bias {
            f("bias", b);
        }
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (h, w, oh, ow) = self.check_input(x)?;
        let n = x.batch();
        let per = oh * ow * self.patch_len();
        let mut cols = vec![T::zero(); n * per];
        let mut y = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        for i in 0..n {
            let c = &mut cols[i * per..(i + 1) * per];
            self.im2col(x.row(i), h, w, oh, ow, c);
            self.apply_cols(c, oh, ow, y.row_mut(i));
        }
        self.cache = Some(ConvCache {
            input_shape: x.shape().to_vec(),
            cols,
        });
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("conv2d"))?;
        let s = &cache.input_shape;
        let (n, h, w) = (s[0], s[2], s[3]);
        let (oh, ow) = self.output_size(h, w)?;
        grad.expect_shape(&[n, self.out_channels, oh, ow], "conv2d grad")?;
        let pl = self.patch_len();
        let positions = oh * ow;
        let per = positions * pl;
        let k = self.kernel;
        let wts = self.weight.value.data();
        let mut grad_x = Tensor::zeros(s);
        let mut dcol = vec![T::zero(); per];
        for i in 0..n {
            let cols = &cache.cols[i * per..(i + 1) * per];
            let g = grad.row(i);
            dcol.iter_mut().for_each(|v| *v = T::zero());
            for o in 0..self.out_channels {
                let wo = &wts[o * pl..(o + 1) * pl];
                for p in 0..positions {
                    let go = g[o * positions + p];
                    if go == T::zero() {
                        continue;
                    }
                    if let Some(b) = &mut self.bias {
                        b.grad[o] += go;
                    }
                    axpy(go, &cols[p * pl..(p + 1) * pl], &mut self.weight.grad[o * pl..(o + 1) * pl]);
                    axpy(go, wo, &mut dcol[p * pl..(p + 1) * pl]);
                }
            }
            // col2im
            let gx = grad_x.row_mut(i);
            for oy in 0..oh {
                for ox in 0..ow {
                    let col = &dcol[(oy * ow + ox) * pl..(oy * ow + ox + 1) * pl];
                    let mut idx = 0;
                    for c in 0..self.in_channels {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    gx[c * h * w + iy as usize * w + ix as usize] += col[idx];
                                }
                                idx += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, oh, ow) = self.check_input(x)?;
        let n = x.batch();
        let mut cols = vec![T::zero(); oh * ow * self.patch_len()];
        let mut y = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        for i in 0..n {
            self.im2col(x.row(i), h, w, oh, ow, &mut cols);
            self.apply_cols(&cols, oh, ow, y.row_mut(i));
        }
        Ok(y)
    }
}

/// Batch normalization over `(N, F)` features or `(N, C, H, W)` channels.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub features: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    shape: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            features,
            gamma: Param::new(Tensor::from_fn(&[features], |_| T::one())),
            beta: Param::new(Tensor::zeros(&[features])),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::from_fn(&[features], |_| T::one()),
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    // (batch, features, spatial) view of the input
    fn layout(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() < 2 || s[1] != self.features {
            return Err(Error::Shape(format!(
                "batchnorm expects {} features on axis 1, got {s:?}",
                self.features
            )));
        }
        Ok((s[0], s[2..].iter().product()))
    }

    /// Per-feature batch mean and biased variance.
    pub fn batch_stats(&self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        let (n, sp) = self.layout(x)?;
        let m = T::lit((n * sp) as f64);
        let d = x.data();
        let mut mean = vec![T::zero(); self.features];
        let mut var = vec![T::zero(); self.features];
        for f in 0..self.features {
            let mut s = T::zero();
            for i in 0..n {
                let base = (i * self.features + f) * sp;
                s += d[base..base + sp].iter().fold(T::zero(), |a, &b| a + b);
            }
            mean[f] = s / m;
            let mut v = T::zero();
            for i in 0..n {
                let base = (i * self.features + f) * sp;
                v += d[base..base + sp]
                    .iter()
                    .fold(T::zero(), |a, &b| a + (b - mean[f]) * (b - mean[f]));
            }
            var[f] = v / m;
        }
        Ok((mean, var))
    }

    fn normalize_with(&self, x: &Tensor<T>, mean: &[T], var: &[T]) -> (Tensor<T>, Vec<T>, Vec<T>) {
        let (n, sp) = self.layout(x).expect("validated by caller");
        let eps = T::lit(BN_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut x_hat = vec![T::zero(); x.len()];
        let mut y = Tensor::zeros(x.shape());
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        let d = x.data();
        let out = y.data_mut();
        for i in 0..n {
            for f in 0..self.features {
                let base = (i * self.features + f) * sp;
                for j in base..base + sp {
                    let h = (d[j] - mean[f]) * inv_std[f];
                    x_hat[j] = h;
                    out[j] = g[f] * h + b[f];
                }
            }
        }
        (y, x_hat, inv_std)
    }
}

impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("gamma", &mut self.gamma);
        f("beta", &mut self.beta);
    }

    fn buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f("running_mean", &mut self.running_mean);
        f("running_var", &mut self.running_var);
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Infer {
            return self.infer(x);
        }
        let (n, sp) = self.layout(x)?;
        if n < 2 {
            return Err(Error::Usage("batchnorm training needs a batch of at least 2".into()));
        }
        let (mean, var) = self.batch_stats(x)?;
        let (y, x_hat, inv_std) = self.normalize_with(x, &mean, &var);
        let m = T::lit(self.momentum);
        let count = (n * sp) as f64;
        let unbias = T::lit(count / (count - 1.0));
        for f in 0..self.features {
            let rm = &mut self.running_mean.data_mut()[f];
            *rm = (T::one() - m) * *rm + m * mean[f];
            let rv = &mut self.running_var.data_mut()[f];
            *rv = (T::one() - m) * *rv + m * var[f] * unbias;
        }
        self.cache = Some(BnCache {
            shape: x.shape().to_vec(),
            x_hat,
            inv_std,
        });
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batchnorm"))?;
        grad.expect_shape(&cache.shape, "batchnorm grad")?;
        let n = cache.shape[0];
        let sp: usize = cache.shape[2..].iter().product();
        let m = T::lit((n * sp) as f64);
        let g = grad.data();
        let mut grad_x = Tensor::zeros(&cache.shape);
        let gx = grad_x.data_mut();
        let gamma = self.gamma.value.data();
        for f in 0..self.features {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for i in 0..n {
                let base = (i * self.features + f) * sp;
                for j in base..base + sp {
                    sum_g += g[j];
                    sum_gx += g[j] * cache.x_hat[j];
                }
            }
            self.beta.grad[f] += sum_g;
            self.gamma.grad[f] += sum_gx;
            let scale = gamma[f] * cache.inv_std[f] / m;
            for i in 0..n {
                let base = (i * self.features + f) * sp;
                for j in base..base + sp {
                    gx[j] = scale * (m * g[j] - sum_g - cache.x_hat[j] * sum_gx);
                }
            }
        }
        Ok(grad_x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.layout(x)?;
        let (y, _, _) = self.normalize_with(x, self.running_mean.data(), self.running_var.data());
        Ok(y)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LeakyRelu<T> {
    cache_x: Option<Tensor<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new() -> Self {
        LeakyRelu { cache_x: None }
    }
}

impl<T: Scalar> Module<T> for LeakyRelu<T> {
    fn params(&mut self, _f: &mut dyn FnMut(&str, &mut Param<T>)) {}
}

impl<T: Scalar> Layer<T> for LeakyRelu<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.cache_x = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache_x.as_ref().ok_or_else(|| missing_cache("leaky_relu"))?;
        grad.expect_shape(x.shape(), "leaky_relu grad")?;
        let a = T::lit(LEAKY_SLOPE);
        let mut out = grad.clone();
        for (g, &xi) in out.data_mut().iter_mut().zip(x.data()) {
            if xi < T::zero() {
                *g *= a;
            }
        }
        Ok(out)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let a = T::lit(LEAKY_SLOPE);
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| {
            if *v < T::zero() {
                *v *= a;
            }
        });
        Ok(y)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<T> {
    cache_y: Option<Tensor<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { cache_y: None }
    }
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> Module<T> for Sigmoid<T> {
    fn params(&mut self, _f: &mut dyn FnMut(&str, &mut Param<T>)) {}
}

impl<T: Scalar> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache_y = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cache_y.as_ref().ok_or_else(|| missing_cache("sigmoid"))?;
        grad.expect_shape(y.shape(), "sigmoid grad")?;
        let mut out = grad.clone();
        for (g, &yi) in out.data_mut().iter_mut().zip(y.data()) {
            *g *= yi * (T::one() - yi);
        }
        Ok(out)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(y)
    }
}

/// Collapses all trailing axes into one.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { input_shape: None }
    }
}

impl<T: Scalar> Module<T> for Flatten {
    fn params(&mut self, _f: &mut dyn FnMut(&str, &mut Param<T>)) {}
}

impl<T: Scalar> Layer<T> for Flatten {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.input_shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.as_ref().ok_or_else(|| missing_cache("flatten"))?;
        grad.clone().reshape(shape)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.clone().reshape(&[x.batch(), x.row_len()])
    }
}

/// Layers applied in order; parameters are named `<index>.<name>`.
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Default for Sequential<T> {
    fn default() -> Self {
        Sequential { layers: Vec::new() }
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, layer: impl Layer<T> + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<T: Scalar> Module<T> for Sequential<T> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.params(&mut |name, p| f(&format!("{i}.{name}"), p));
        }
    }

    fn buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.buffers(&mut |name, b| f(&format!("{i}.{name}"), b));
        }
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    fn set_spectral_frozen(&mut self, frozen: bool) {
        for layer in &mut self.layers {
            layer.set_spectral_frozen(frozen);
        }
    }
}
