//! Conditional GAN: networks, objective terms and the training loop.

pub mod loss;
pub mod model;
pub mod train;

pub use model::{ArchConfig, CganModel, Discriminator, Generator, ModelMeta, LATENT_DIM};
pub use train::{train, EpochLog, TrainConfig, TrainOutcome, Trainer, TrainingSet};

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::model::masks_tensor;
    use super::train::{discriminator_objective, generator_objective, Batch, LossWeights};
    use super::*;
    use crate::geometry::{Obstacle, Point};
    use crate::nn::gradcheck::check_params;
    use crate::nn::layers::Module;
    use crate::nn::Tensor;
    use crate::scenarios::{ConditionMask, ObstacleScenario};

    fn tiny() -> ArchConfig {
        ArchConfig {
            conv1_channels: 2,
            conv2_channels: 2,
            cond_features: 3,
            hidden: 6,
        }
    }

    fn masks() -> (ConditionMask, ConditionMask) {
        let a = ObstacleScenario::new(1, vec![Obstacle::rect(Point::new(0.5, -0.5), Point::new(1.2, 0.4))]);
        let b = ObstacleScenario::new(2, vec![Obstacle::circle(Point::new(-0.3, 1.2), 0.4)]);
        (a.mask, b.mask)
    }

    fn batch(rng: &mut ChaCha8Rng) -> Batch<f64> {
        let (a, b) = masks();
        let mut pts = |n: usize| Tensor::from_fn(&[n, 2], |_| rng.gen_range(0.0..1.0));
        let (real, z, collision) = (pts(4), pts(4), pts(3));
        Batch {
            masks: masks_tensor(&[&a, &b]),
            real,
            real_idx: vec![0, 1, 0, 1],
            z,
            z_idx: vec![1, 0, 0, 1],
            collision,
            collision_idx: vec![0, 0, 1],
        }
    }

    #[test]
    fn discriminator_objective_gradients() {
        // central differences straddling a leaky-ReLU kink are meaningless; this
        // instance keeps every pre-activation farther than ε from zero
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let mut d = Discriminator::<f64>::new(&tiny(), &mut rng);
        d.set_spectral_frozen(true);
        let b = batch(&mut rng);
        let fake = Tensor::from_fn(&[4, 2], |_| rng.gen_range(0.0..1.0));
        assert!(d.head.effective_weight().1 > 0.0);
        let report = check_params(
            &mut d,
            |d, bw| discriminator_objective(d, &b, &fake, bw).unwrap().total(),
            1e-3,
            12,
        );
        assert!(report.passes(1e-3), "{report:?}");
    }

    #[test]
    fn generator_objective_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut g = Generator::<f64>::new(&tiny(), &mut rng);
        let mut d = Discriminator::<f64>::new(&tiny(), &mut rng);
        d.set_spectral_frozen(true);
        let b = batch(&mut rng);
        for weights in [
            LossWeights { identity: 0.0, feature_match: 0.0 },
            LossWeights { identity: 1.0, feature_match: 0.0 },
            LossWeights { identity: 0.0, feature_match: 1.0 },
            LossWeights { identity: 10.0, feature_match: 1.0 },
        ] {
            let report = check_params(
                &mut g,
                |g, bw| generator_objective(g, &mut d, &b, weights, bw).unwrap().total,
                1e-3,
                12,
            );
            assert!(report.passes(1e-3), "{weights:?}: {report:?}");
        }
    }

    #[test]
    fn objective_totals_are_term_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut g = Generator::<f64>::new(&tiny(), &mut rng);
        let mut d = Discriminator::<f64>::new(&tiny(), &mut rng);
        let b = batch(&mut rng);
        let w = LossWeights { identity: 10.0, feature_match: 1.0 };
        let gt = generator_objective(&mut g, &mut d, &b, w, false).unwrap();
        assert_eq!(gt.total, gt.g_term + 10.0 * gt.identity + gt.feature_match);
        let fake = Tensor::from_fn(&[4, 2], |i| i as f64 / 8.0);
        let dt = discriminator_objective(&mut d, &b, &fake, false).unwrap();
        assert_eq!(dt.total(), dt.d_term + dt.collision);
        for v in [gt.g_term, gt.identity, gt.feature_match, dt.d_term, dt.collision] {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn generator_output_in_open_unit_square() {
        let mut model = CganModel::new(&ArchConfig::default(), 5).unwrap();
        let (a, _) = masks();
        let zs: Vec<[f64; 2]> = (0..50).map(|i| [(i % 10) as f64 / 9.0, (i / 10) as f64 / 4.0]).collect();
        let out = model.generator.generate_batch(&zs, &a).unwrap();
        assert!(out.iter().flatten().all(|&v| v > 0.0 && v < 1.0));
        assert!(model.generator.generate([1.5, 0.0], &a).is_err());
        let probs = model.discriminator.score_batch(&zs, &a).unwrap();
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(model.tensors().len() > 10);
    }

    #[test]
    fn batched_generation_matches_pointwise() {
        let model = CganModel::new(&ArchConfig::default(), 6).unwrap();
        let (_, b) = masks();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let zs: Vec<[f64; 2]> = (0..5000).map(|_| [rng.gen(), rng.gen()]).collect();
        let batched = model.generator.generate_batch(&zs, &b).unwrap();
        for (z, y) in zs.iter().zip(&batched).step_by(97) {
            let single = model.generator.generate(*z, &b).unwrap();
            assert!((single[0] - y[0]).abs() < 1e-6 && (single[1] - y[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut model = CganModel::new(&ArchConfig::default(), 8).unwrap();
        let meta = ModelMeta {
            tool_version: crate::VERSION.into(),
            seed: 8,
            config_hash: "00".into(),
            arch: model.arch(),
            epochs: 0,
            note: String::new(),
        };
        let ck = model.to_checkpoint(&meta, None).unwrap();
        let bytes = ck.to_bytes();
        let (mut back, meta_back) = CganModel::from_checkpoint(&crate::nn::Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(meta_back, meta);
        assert_eq!(back.to_checkpoint(&meta, None).unwrap().to_bytes(), bytes);

        let mut g = Generator::<f32>::new(&tiny(), &mut ChaCha8Rng::seed_from_u64(1));
        let mut wrong = ck.clone();
        wrong.tensors.retain(|t| !t.name.starts_with("D.head"));
        assert!(CganModel::from_checkpoint(&wrong).is_err());
        assert!(g.param_count() > 0);
    }
}
