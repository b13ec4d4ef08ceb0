//! Alternating Discriminator/Generator training.
//!
//! Each step draws `scenarios_per_step` training scenarios (with
//! replacement) and, per scenario, `batch_size / scenarios_per_step`
//! collision-free points, as many latent samples, and as many collision
//! points when the scenario has any. One epoch is
//! `ceil(total free points / batch_size)` steps.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss;
use super::model::{masks_tensor, ArchConfig, CganModel, Discriminator, Generator, ModelMeta, LATENT_DIM};
use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::nn::layers::{Mode, Module};
use crate::nn::{Adam, AdamConfig, NamedTensor, OptimizerState, Scalar, Tensor};
use crate::scenarios::ConditionMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub scenarios_per_step: usize,
    pub lambda_identity: f64,
    pub lambda_fm: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 256,
            scenarios_per_step: 8,
            lambda_identity: 10.0,
            lambda_fm: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights_ok = [self.lambda_identity, self.lambda_fm]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if !weights_ok {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size {} < 2", self.batch_size)));
        }
        if self.scenarios_per_step < 2 || !self.batch_size.is_multiple_of(self.scenarios_per_step) {
            return Err(Error::Config(format!(
                "scenarios per step ({}) must be >= 2 and divide the batch size ({})",
                self.scenarios_per_step, self.batch_size
            )));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {a:?}")));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            identity: self.lambda_identity,
            feature_match: self.lambda_fm,
        }
    }

    fn points_per_scenario(&self) -> usize {
        self.batch_size / self.scenarios_per_step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub identity: f64,
    pub feature_match: f64,
}

/// Training samples of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSamples {
    pub id: u32,
    pub mask: ConditionMask,
    pub free: Vec<[f32; 2]>,
    pub collision: Vec<[f32; 2]>,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub scenarios: Vec<ScenarioSamples>,
}

impl TrainingSet {
    pub fn from_dataset(ds: &Dataset, ids: &[u32]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Data("no training scenarios".into()));
        }
        let scenarios = ids
            .iter()
            .map(|&id| {
                let grid = ds.grid(id)?;
                let free = grid.normalized_with(Label::Free);
                if free.is_empty() {
                    return Err(Error::Data(format!("scenario {id} has no collision-free points")));
                }
                Ok(ScenarioSamples {
                    id,
                    mask: ds.scenario(id)?.mask.clone(),
                    free,
                    collision: grid.normalized_with(Label::Collision),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingSet { scenarios })
    }

    pub fn ids(&self) -> Vec<u32> {
        self.scenarios.iter().map(|s| s.id).collect()
    }

    pub fn free_points(&self) -> usize {
        self.scenarios.iter().map(|s| s.free.len()).sum()
    }
}

/// One step's inputs. Row `i` of each point block belongs to mask `*_idx[i]`.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub masks: Tensor<T>,
    pub real: Tensor<T>,
    pub real_idx: Vec<usize>,
    pub z: Tensor<T>,
    pub z_idx: Vec<usize>,
    pub collision: Tensor<T>,
    pub collision_idx: Vec<usize>,
}

fn points_tensor<T: Scalar>(points: &[[f32; 2]]) -> Tensor<T> {
    Tensor::from_fn(&[points.len(), LATENT_DIM], |i| T::lit(f64::from(points[i / 2][i % 2])))
}

/// Draws a batch as described in the module documentation.
pub fn sample_batch<T: Scalar, R: Rng + ?Sized>(data: &TrainingSet, cfg: &TrainConfig, rng: &mut R) -> Batch<T> {
    let k = cfg.points_per_scenario();
    let mut masks = Vec::with_capacity(cfg.scenarios_per_step);
    let (mut real, mut real_idx) = (Vec::new(), Vec::new());
    let (mut z, mut z_idx) = (Vec::new(), Vec::new());
    let (mut col, mut col_idx) = (Vec::new(), Vec::new());
    for s in 0..cfg.scenarios_per_step {
        let scn = data.scenarios.choose(rng).expect("non-empty training set");
        masks.push(&scn.mask);
        for _ in 0..k {
            real.push(*scn.free.choose(rng).expect("non-empty"));
            real_idx.push(s);
            z.push([rng.gen::<f32>(), rng.gen::<f32>()]);
            z_idx.push(s);
            if let Some(&c) = scn.collision.choose(rng) {
                col.push(c);
                col_idx.push(s);
            }
        }
    }
    Batch {
        masks: masks_tensor(&masks),
        real: points_tensor(&real),
        real_idx,
        z: points_tensor(&z),
        z_idx,
        collision: points_tensor(&col),
        collision_idx: col_idx,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DTerms {
    pub d_term: f64,
    pub collision: f64,
}

impl DTerms {
    /// Discriminator objective: adversarial plus collision term.
    pub fn total(&self) -> f64 {
        self.d_term + self.collision
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GTerms {
    pub g_term: f64,
    pub identity: f64,
    pub feature_match: f64,
    pub total: f64,
}

/// Discriminator objective on `[real; fake; collision]`. With `backward`
/// the parameter gradients of `d` are accumulated.
pub fn discriminator_objective<T: Scalar>(
    d: &mut Discriminator<T>,
    batch: &Batch<T>,
    fake: &Tensor<T>,
    backward: bool,
) -> Result<DTerms> {
    let (nr, nf, nc) = (batch.real.batch(), fake.batch(), batch.collision.batch());
    let mut parts = vec![&batch.real, fake];
    if nc > 0 {
        parts.push(&batch.collision);
    }
    let points = Tensor::concat_rows(&parts)?;
    let index: Vec<usize> = batch
        .real_idx
        .iter()
        .chain(&batch.z_idx)
        .chain(&batch.collision_idx)
        .copied()
        .collect();
    let out = d.forward(&points, &batch.masks, &index, Mode::Train)?;
    let logits = out.logits.data();
    let (d_term, gr, gf) = loss::d_term(&logits[..nr], &logits[nr..nr + nf]);
    let (collision, gc) = loss::collision(&logits[nr + nf..]);
    if backward {
        let grad: Vec<T> = gr.into_iter().chain(gf).chain(gc).collect();
        let grad = Tensor::new(vec![nr + nf + nc, 1], grad)?;
        d.backward(&grad, None, true)?;
    }
    Ok(DTerms { d_term, collision })
}

/// Generator objective `g_term + λ_id·identity + λ_fm·feature_match`.
/// With `backward` the parameter gradients of `g` are accumulated; `d`
/// is left with stale gradients the caller must discard.
pub fn generator_objective<T: Scalar>(
    g: &mut Generator<T>,
    d: &mut Discriminator<T>,
    batch: &Batch<T>,
    weights: LossWeights,
    backward: bool,
) -> Result<GTerms> {
    let (nz, nr) = (batch.z.batch(), batch.real.batch());
    let inputs = Tensor::concat_rows(&[&batch.z, &batch.real])?;
    let index: Vec<usize> = batch.z_idx.iter().chain(&batch.real_idx).copied().collect();
    let out = g.forward(&inputs, &batch.masks, &index, Mode::Train)?;
    let fake = out.slice_rows(0, nz);
    let recon = out.slice_rows(nz, nz + nr);

    let points = Tensor::concat_rows(&[&batch.real, &fake])?;
    let d_index: Vec<usize> = batch.real_idx.iter().chain(&batch.z_idx).copied().collect();
    let dout = d.forward(&points, &batch.masks, &d_index, Mode::Train)?;
    let logits = dout.logits.data();
    let (g_term, g_grad) = loss::g_term(&logits[nr..]);
    let feat_real = dout.features.slice_rows(0, nr);
    let feat_fake = dout.features.slice_rows(nr, nr + nz);
    let (fm, _, fm_grad) = loss::feature_match(&feat_real, &feat_fake);
    let (identity, id_grad) = loss::identity(&recon, &batch.real);
    let total = g_term + weights.identity * identity + weights.feature_match * fm;

    if backward {
        let h = dout.features.row_len();
        let mut grad_logits = Tensor::zeros(&[nr + nz, 1]);
        grad_logits.data_mut()[nr..].copy_from_slice(&g_grad);
        let wfm = T::lit(weights.feature_match);
        let mut grad_feat = Tensor::zeros(&[nr + nz, h]);
        for (dst, &src) in grad_feat.data_mut()[nr * h..].iter_mut().zip(fm_grad.data()) {
            *dst = wfm * src;
        }
        let grad_points = d.backward(&grad_logits, Some(&grad_feat), false)?;
        let wid = T::lit(weights.identity);
        let mut grad_out = Tensor::zeros(&[nz + nr, LATENT_DIM]);
        grad_out.data_mut()[..nz * LATENT_DIM].copy_from_slice(&grad_points.data()[nr * LATENT_DIM..]);
        for (dst, &src) in grad_out.data_mut()[nz * LATENT_DIM..].iter_mut().zip(id_grad.data()) {
            *dst = wid * src;
        }
        g.backward(&grad_out)?;
    }
    Ok(GTerms {
        g_term,
        identity,
        feature_match: fm,
        total,
    })
}

/// Loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub d: DTerms,
    pub g: GTerms,
}

/// Per-epoch means of the step losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub collision_loss: f64,
    pub identity_loss: f64,
    pub fm_loss: f64,
    pub wall_seconds: f64,
}

pub const LOG_HEADER: &str = "epoch,d_loss,g_loss,collision_loss,identity_loss,fm_loss,wall_seconds";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.epoch, self.d_loss, self.g_loss, self.collision_loss, self.identity_loss, self.fm_loss, self.wall_seconds
        )
    }

    /// Every column except the wall-clock time.
    pub fn same_losses(&self, other: &EpochLog) -> bool {
        self.epoch == other.epoch
            && self.d_loss.to_bits() == other.d_loss.to_bits()
            && self.g_loss.to_bits() == other.g_loss.to_bits()
            && self.collision_loss.to_bits() == other.collision_loss.to_bits()
            && self.identity_loss.to_bits() == other.identity_loss.to_bits()
            && self.fm_loss.to_bits() == other.fm_loss.to_bits()
    }
}

/// Training log CSV preceded by `#` provenance lines.
pub fn log_csv(log: &[EpochLog], provenance: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in provenance {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str(LOG_HEADER);
    out.push('\n');
    for e in log {
        out.push_str(&e.csv_row());
        out.push('\n');
    }
    out
}

fn optimizer_state(name: &str, opt: &Adam<f32>) -> OptimizerState {
    OptimizerState {
        name: name.into(),
        step: opt.step,
        tensors: opt
            .state()
            .into_iter()
            .map(|(name, tensor)| NamedTensor { name, tensor })
            .collect(),
    }
}

pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub model: CganModel,
    data: &'a TrainingSet,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: CganModel, data: &'a TrainingSet, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if data.scenarios.is_empty() {
            return Err(Error::Data("no training scenarios".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Trainer {
            opt_g: Adam::new(cfg.adam),
            opt_d: Adam::new(cfg.adam),
            cfg,
            model,
            data,
            rng,
            epochs_done: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.data.free_points().div_ceil(self.cfg.batch_size)
    }

    /// One D update followed by one G update. Parameters are untouched when
    /// a loss turns out non-finite.
    pub fn step(&mut self) -> Result<StepLosses> {
        let batch: Batch<f32> = sample_batch(self.data, &self.cfg, &mut self.rng);
        let CganModel {
            generator: g,
            discriminator: d,
        } = &mut self.model;

        let fake = g.forward(&batch.z, &batch.masks, &batch.z_idx, Mode::Train)?;
        d.zero_grad();
        let d_terms = discriminator_objective(d, &batch, &fake, true)?;
        if !d_terms.total().is_finite() {
            return Err(Error::Diverged(format!("discriminator loss {d_terms:?}")));
        }
        self.opt_d.step(d);

        g.zero_grad();
        let g_terms = generator_objective(g, d, &batch, self.cfg.weights(), true)?;
        d.zero_grad();
        if !g_terms.total.is_finite() {
            return Err(Error::Diverged(format!("generator loss {g_terms:?}")));
        }
        self.opt_g.step(g);
        Ok(StepLosses { d: d_terms, g: g_terms })
    }

    pub fn epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let steps = self.steps_per_epoch();
        let mut sums = [0.0f64; 5];
        for _ in 0..steps {
            let s = self.step()?;
            for (acc, v) in sums
                .iter_mut()
                .zip([s.d.d_term, s.g.g_term, s.d.collision, s.g.identity, s.g.feature_match])
            {
                *acc += v;
            }
        }
        self.epochs_done += 1;
        let n = steps as f64;
        Ok(EpochLog {
            epoch: self.epochs_done,
            d_loss: sums[0] / n,
            g_loss: sums[1] / n,
            collision_loss: sums[2] / n,
            identity_loss: sums[3] / n,
            fm_loss: sums[4] / n,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn optimizer_states(&self) -> Vec<OptimizerState> {
        vec![optimizer_state("G", &self.opt_g), optimizer_state("D", &self.opt_d)]
    }

    pub fn meta(&self, note: impl Into<String>) -> ModelMeta {
        ModelMeta {
            tool_version: crate::VERSION.into(),
            seed: self.cfg.seed,
            config_hash: crate::config_hash(&self.cfg),
            arch: self.model.arch(),
            epochs: self.epochs_done,
            note: note.into(),
        }
    }

    /// Checkpoint with optimizer state.
    pub fn save(&mut self, path: &Path, note: &str) -> Result<()> {
        let meta = self.meta(note);
        let opts = self.optimizer_states();
        self.model.save(path, &meta, Some(opts))
    }
}

/// Result of a complete training run.
pub struct TrainOutcome {
    pub model: CganModel,
    pub meta: ModelMeta,
    pub log: Vec<EpochLog>,
}

/// Trains a fresh model for `cfg.epochs` epochs.
///
/// `on_epoch` runs after every epoch (for logging or periodic
/// checkpoints). On a non-finite loss the pre-step model is written to
/// `diagnostic` when given, and `Error::Diverged` is returned.
pub fn train(
    data: &TrainingSet,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    diagnostic: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog, &mut Trainer) -> Result<()>,
) -> Result<TrainOutcome> {
    let model = CganModel::new(arch, cfg.seed)?;
    let mut trainer = Trainer::new(model, data, cfg.clone())?;
    let mut log = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        match trainer.epoch() {
            Ok(entry) => {
                on_epoch(&entry, &mut trainer)?;
                log.push(entry);
            }
            Err(Error::Diverged(msg)) => {
                let mut msg = format!("epoch {}: {msg}", trainer.epochs_done() + 1);
                if let Some(path) = diagnostic {
                    trainer.save(path, &format!("diagnostic: {msg}"))?;
                    msg.push_str(&format!("; diagnostic checkpoint at {}", path.display()));
                }
                return Err(Error::Diverged(msg));
            }
            Err(e) => return Err(e),
        }
    }
    let note = format!("trained on scenarios {:?}", data.ids());
    let meta = trainer.meta(note);
    Ok(TrainOutcome {
        model: trainer.model,
        meta,
        log,
    })
}
