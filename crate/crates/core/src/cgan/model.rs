//! Generator and Discriminator networks.
//!
//! Both networks embed the condition mask with their own convolutional
//! encoder. Within a batch, the encoder runs once per distinct mask and each
//! point row picks up its condition features through an index, so a batch
//! is `(points (N, 2), masks (S, 1, 32, 24), index: [0, S)^N)`. Point
//! coordinates enter the trunks rescaled from `[0, 1]` to `[-1, 1]`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{export_module, import_module};
use crate::nn::layers::{BatchNorm, Conv2d, Dense, Flatten, Layer, LeakyRelu, Mode, Module, Param, Sequential};
use crate::nn::{Checkpoint, NamedTensor, OptimizerState, Scalar, Tensor};
use crate::scenarios::{ConditionMask, MASK_COLS, MASK_ROWS};

/// Joint count of the arm, and therefore the latent dimension.
pub const LATENT_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub cond_features: usize,
    pub hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            conv1_channels: 8,
            conv2_channels: 16,
            cond_features: 64,
            hidden: 128,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv1_channels == 0 || self.conv2_channels == 0 || self.cond_features == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("architecture widths must be positive: {self:?}")));
        }
        Ok(())
    }

    // spatial size after two stride-2, padding-1, 3x3 convolutions
    fn encoded_len(&self) -> usize {
        let half = |n: usize| (n + 2 - 3) / 2 + 1;
        self.conv2_channels * half(half(MASK_ROWS)) * half(half(MASK_COLS))
    }

    fn trunk_inputs(&self) -> usize {
        LATENT_DIM + self.cond_features
    }
}

/// Stacks masks into a `(S, 1, 32, 24)` tensor of 0/1 values.
pub fn masks_tensor<T: Scalar>(masks: &[&ConditionMask]) -> Tensor<T> {
    let per = MASK_ROWS * MASK_COLS;
    let mut t = Tensor::zeros(&[masks.len(), 1, MASK_ROWS, MASK_COLS]);
    for (i, m) in masks.iter().enumerate() {
        for (dst, &src) in t.data_mut()[i * per..(i + 1) * per].iter_mut().zip(m.as_slice()) {
            *dst = T::lit(f64::from(src));
        }
    }
    t
}

/// Condition branch: two strided convolutions with batch norm, then a
/// dense projection to `cond_features`.
pub struct ConditionEncoder<T> {
    net: Sequential<T>,
}

impl<T: Scalar> ConditionEncoder<T> {
    pub fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Self {
        let net = Sequential::new()
            .push(Conv2d::new(1, arch.conv1_channels, 3, 2, 1, rng).without_bias())
            .push(BatchNorm::new(arch.conv1_channels))
            .push(LeakyRelu::new())
            .push(Conv2d::new(arch.conv1_channels, arch.conv2_channels, 3, 2, 1, rng).without_bias())
            .push(BatchNorm::new(arch.conv2_channels))
            .push(LeakyRelu::new())
            .push(Flatten::new())
            .push(Dense::new(arch.encoded_len(), arch.cond_features, rng))
            .push(LeakyRelu::new());
        ConditionEncoder { net }
    }

    pub fn forward(&mut self, masks: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.net.forward(masks, mode)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.net.backward(grad).map(|_| ())
    }

    pub fn infer(&self, masks: &Tensor<T>) -> Result<Tensor<T>> {
        self.net.infer(masks)
    }
}

impl<T: Scalar> Module<T> for ConditionEncoder<T> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.net.params(f)
    }

    fn buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.net.buffers(f)
    }
}

/// `[2p - 1, features[index[i]]]` per row.
fn assemble<T: Scalar>(points: &Tensor<T>, features: &Tensor<T>, index: &[usize]) -> Result<Tensor<T>> {
    let n = points.batch();
    if points.shape() != [n, LATENT_DIM] || index.len() != n {
        return Err(Error::Shape(format!(
            "points {:?} with {} condition indices",
            points.shape(),
            index.len()
        )));
    }
    let s = features.batch();
    if let Some(&bad) = index.iter().find(|&&i| i >= s) {
        return Err(Error::Shape(format!("condition index {bad} out of {s} masks")));
    }
    let f = features.row_len();
    let two = T::lit(2.0);
    let mut x = Tensor::zeros(&[n, LATENT_DIM + f]);
    for i in 0..n {
        let row = x.row_mut(i);
        let p = points.row(i);
        row[0] = two * p[0] - T::one();
        row[1] = two * p[1] - T::one();
        row[LATENT_DIM..].copy_from_slice(features.row(index[i]));
    }
    Ok(x)
}

/// Splits a trunk input gradient into point and (scattered) feature parts.
fn split_grad<T: Scalar>(
    grad: &Tensor<T>,
    index: &[usize],
    masks: usize,
    want_features: bool,
) -> (Tensor<T>, Option<Tensor<T>>) {
    let n = grad.batch();
    let f = grad.row_len() - LATENT_DIM;
    let two = T::lit(2.0);
    let mut gp = Tensor::zeros(&[n, LATENT_DIM]);
    let mut gf = want_features.then(|| Tensor::zeros(&[masks, f]));
    for i in 0..n {
        let g = grad.row(i);
        let p = gp.row_mut(i);
        p[0] = two * g[0];
        p[1] = two * g[1];
        if let Some(gf) = gf.as_mut() {
            for (dst, &src) in gf.row_mut(index[i]).iter_mut().zip(&g[LATENT_DIM..]) {
                *dst += src;
            }
        }
    }
    (gp, gf)
}

/// `G(z, c)`: latent point and condition to normalized joint angles.
pub struct Generator<T> {
    pub arch: ArchConfig,
    pub encoder: ConditionEncoder<T>,
    pub trunk: Sequential<T>,
    cache: Option<(Vec<usize>, usize)>,
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Self {
        let encoder = ConditionEncoder::new(arch, rng);
        let trunk = Sequential::new()
            .push(Dense::new(arch.trunk_inputs(), arch.hidden, rng))
            .push(LeakyRelu::new())
            .push(Dense::new(arch.hidden, arch.hidden, rng))
            .push(LeakyRelu::new())
            .push(Dense::new(arch.hidden, LATENT_DIM, rng))
            .push(crate::nn::Sigmoid::new());
        Generator {
            arch: *arch,
            encoder,
            trunk,
            cache: None,
        }
    }

    pub fn forward(&mut self, z: &Tensor<T>, masks: &Tensor<T>, index: &[usize], mode: Mode) -> Result<Tensor<T>> {
        let features = self.encoder.forward(masks, mode)?;
        let x = assemble(z, &features, index)?;
        let y = self.trunk.forward(&x, mode)?;
        self.cache = Some((index.to_vec(), masks.batch()));
        Ok(y)
    }

    /// Accumulates parameter gradients for `d(loss)/d(output)`.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<()> {
        let (index, masks) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("generator backward called before forward".into()))?;
        let gx = self.trunk.backward(grad)?;
        let (_, gf) = split_grad(&gx, &index, masks, true);
        self.encoder.backward(&gf.expect("requested"))
    }

    pub fn infer(&self, z: &Tensor<T>, masks: &Tensor<T>, index: &[usize]) -> Result<Tensor<T>> {
        let features = self.encoder.infer(masks)?;
        self.infer_with_features(z, &features, index)
    }

    /// Trunk-only inference with precomputed condition features.
    pub fn infer_with_features(&self, z: &Tensor<T>, features: &Tensor<T>, index: &[usize]) -> Result<Tensor<T>> {
        let x = assemble(z, features, index)?;
        self.trunk.infer(&x)
    }

    /// Generates normalized joint pairs for many latent points under one
    /// condition. The condition is encoded once.
    pub fn generate_batch(&self, zs: &[[f64; 2]], mask: &ConditionMask) -> Result<Vec<[f64; 2]>> {
        const CHUNK: usize = 4096;
        if let Some(z) = zs.iter().find(|z| !z.iter().all(|v| (0.0..=1.0).contains(v))) {
            return Err(Error::Range(format!("latent point {z:?} outside [0,1]^2")));
        }
        let features = self.encoder.infer(&masks_tensor(&[mask]))?;
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(CHUNK) {
            let z = Tensor::from_fn(&[chunk.len(), LATENT_DIM], |i| T::lit(chunk[i / 2][i % 2]));
            let index = vec![0; chunk.len()];
            let y = self.infer_with_features(&z, &features, &index)?;
            out.extend(y.data().chunks_exact(2).map(|r| [r[0].as_f64(), r[1].as_f64()]));
        }
        Ok(out)
    }

    pub fn generate(&self, z: [f64; 2], mask: &ConditionMask) -> Result<[f64; 2]> {
        Ok(self.generate_batch(&[z], mask)?[0])
    }
}

impl<T: Scalar> Module<T> for Generator<T> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.encoder.params(&mut |n, p| f(&format!("enc.{n}"), p));
        self.trunk.params(&mut |n, p| f(&format!("trunk.{n}"), p));
    }

    fn buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.encoder.buffers(&mut |n, b| f(&format!("enc.{n}"), b));
        self.trunk.buffers(&mut |n, b| f(&format!("trunk.{n}"), b));
    }
}

/// Discriminator forward result: pre-sigmoid scores and the penultimate
/// activations used for feature matching.
#[derive(Debug, Clone)]
pub struct DiscOutput<T> {
    pub logits: Tensor<T>,
    pub features: Tensor<T>,
}

impl<T: Scalar> DiscOutput<T> {
    pub fn probabilities(&self) -> Vec<T> {
        self.logits.data().iter().map(|&l| crate::nn::layers::sigmoid(l)).collect()
    }
}

/// `D(θ, c)`: scores normalized joint angles under a condition; 1 means
/// collision-free and real.
pub struct Discriminator<T> {
    pub arch: ArchConfig,
    pub encoder: ConditionEncoder<T>,
    pub body: Sequential<T>,
    pub head: Dense<T>,
    cache: Option<(Vec<usize>, usize)>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Self {
        let encoder = ConditionEncoder::new(arch, rng);
        let body = Sequential::new()
            .push(Dense::new(arch.trunk_inputs(), arch.hidden, rng).with_spectral_norm(rng))
            .push(LeakyRelu::new())
            .push(Dense::new(arch.hidden, arch.hidden, rng).with_spectral_norm(rng))
            .push(LeakyRelu::new());
        let head = Dense::new(arch.hidden, 1, rng).with_spectral_norm(rng);
        Discriminator {
            arch: *arch,
            encoder,
            body,
            head,
            cache: None,
        }
    }

    /// Stops (or resumes) power-iteration updates in training passes.
    pub fn set_spectral_frozen(&mut self, frozen: bool) {
        self.head.set_spectral_frozen(frozen);
        self.body.set_spectral_frozen(frozen);
    }

    pub fn forward(&mut self, points: &Tensor<T>, masks: &Tensor<T>, index: &[usize], mode: Mode) -> Result<DiscOutput<T>> {
        let features = self.encoder.forward(masks, mode)?;
        let x = assemble(points, &features, index)?;
        let h = self.body.forward(&x, mode)?;
        let logits = self.head.forward(&h, mode)?;
        self.cache = Some((index.to_vec(), masks.batch()));
        Ok(DiscOutput { logits, features: h })
    }

    /// Backpropagates logit and (optionally) feature-layer gradients.
    /// Returns `d(loss)/d(points)`. With `through_encoder == false` the
    /// condition encoder receives no gradient.
    pub fn backward(
        &mut self,
        grad_logits: &Tensor<T>,
        grad_features: Option<&Tensor<T>>,
        through_encoder: bool,
    ) -> Result<Tensor<T>> {
        let (index, masks) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("discriminator backward called before forward".into()))?;
        let mut gh = self.head.backward(grad_logits)?;
        if let Some(gf) = grad_features {
            gf.expect_shape(gh.shape(), "feature gradient")?;
            for (a, &b) in gh.data_mut().iter_mut().zip(gf.data()) {
                *a += b;
            }
        }
        let gx = self.body.backward(&gh)?;
        let (gp, gf) = split_grad(&gx, &index, masks, through_encoder);
        if let Some(gf) = gf {
            self.encoder.backward(&gf)?;
        }
        Ok(gp)
    }

    pub fn infer(&self, points: &Tensor<T>, masks: &Tensor<T>, index: &[usize]) -> Result<DiscOutput<T>> {
        let features = self.encoder.infer(masks)?;
        let x = assemble(points, &features, index)?;
        let h = self.body.infer(&x)?;
        let logits = self.head.infer(&h)?;
        Ok(DiscOutput { logits, features: h })
    }

    /// `D(θ, c)` probabilities for many normalized joint pairs under one condition.
    pub fn score_batch(&self, thetas: &[[f64; 2]], mask: &ConditionMask) -> Result<Vec<f64>> {
        let points = Tensor::from_fn(&[thetas.len(), LATENT_DIM], |i| T::lit(thetas[i / 2][i % 2]));
        let out = self.infer(&points, &masks_tensor(&[mask]), &vec![0; thetas.len()])?;
        Ok(out.probabilities().into_iter().map(|p| p.as_f64()).collect())
    }
}

impl<T: Scalar> Module<T> for Discriminator<T> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.encoder.params(&mut |n, p| f(&format!("enc.{n}"), p));
        self.body.params(&mut |n, p| f(&format!("body.{n}"), p));
        self.head.params(&mut |n, p| f(&format!("head.{n}"), p));
    }

    fn buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.encoder.buffers(&mut |n, b| f(&format!("enc.{n}"), b));
        self.body.buffers(&mut |n, b| f(&format!("body.{n}"), b));
        self.head.buffers(&mut |n, b| f(&format!("head.{n}"), b));
    }
}

/// Provenance stored in the checkpoint metadata block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub arch: ArchConfig,
    /// Epochs completed when the checkpoint was written.
    pub epochs: usize,
    /// Free-form description (training ids, fold, diagnostic reason).
    pub note: String,
}

/// A Generator/Discriminator pair in training precision.
pub struct CganModel {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
}

impl CganModel {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        arch.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let generator = Generator::new(arch, &mut rng);
        let discriminator = Discriminator::new(arch, &mut rng);
        Ok(CganModel {
            generator,
            discriminator,
        })
    }

    pub fn arch(&self) -> ArchConfig {
        self.generator.arch
    }

    pub fn tensors(&mut self) -> Vec<NamedTensor> {
        let mut out = export_module("G", &mut self.generator);
        out.extend(export_module("D", &mut self.discriminator));
        out
    }

    pub fn to_checkpoint(&mut self, meta: &ModelMeta, optimizers: Option<Vec<OptimizerState>>) -> Result<Checkpoint> {
        Ok(Checkpoint {
            metadata: serde_json::to_string(meta)?,
            tensors: self.tensors(),
            optimizers,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, ModelMeta)> {
        let meta: ModelMeta = serde_json::from_str(&ck.metadata)
            .map_err(|e| Error::Model(format!("unreadable checkpoint metadata: {e}")))?;
        let mut model = CganModel::new(&meta.arch, 0).map_err(|e| Error::Model(e.to_string()))?;
        let map: BTreeMap<&str, &Tensor<f32>> = ck.tensor_map();
        import_module("G", &mut model.generator, &map)?;
        import_module("D", &mut model.discriminator, &map)?;
        if map.len() != model.tensors().len() {
            return Err(Error::Model("checkpoint holds tensors the model does not use".into()));
        }
        Ok((model, meta))
    }

    pub fn save(&mut self, path: &std::path::Path, meta: &ModelMeta, optimizers: Option<Vec<OptimizerState>>) -> Result<()> {
        let ck = self.to_checkpoint(meta, optimizers)?;
        std::fs::write(path, ck.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, ModelMeta, Checkpoint)> {
        let bytes = std::fs::read(path).map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
        let ck = Checkpoint::from_bytes(&bytes)?;
        let (model, meta) = Self::from_checkpoint(&ck)?;
        Ok((model, meta, ck))
    }
}
