//! Objective terms and their gradients.
//!
//! Adversarial terms take Discriminator logits `l` with `D = σ(l)`. Values
//! clamp the probability inside each log at `LOG_EPS`; gradients are those of
//! the unclamped log-sigmoid, so a saturated Discriminator still passes a
//! signal to the Generator.

use crate::nn::{Scalar, Tensor};

pub const LOG_EPS: f64 = 1e-7;

/// `-ln σ(l)` with `σ(l)` clamped below at `LOG_EPS`.
fn neg_log_sigmoid(l: f64) -> f64 {
    // softplus(-l), computed stably
    let v = if l > 0.0 { (-l).exp().ln_1p() } else { -l + l.exp().ln_1p() };
    v.min(-LOG_EPS.ln())
}

fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

fn mean_of(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// `-mean ln D(real) - mean ln(1 - D(fake))` and its logit gradients.
pub fn d_term<T: Scalar>(real: &[T], fake: &[T]) -> (f64, Vec<T>, Vec<T>) {
    let (nr, nf) = (real.len().max(1), fake.len().max(1));
    let value = mean_of(real.iter().map(|l| neg_log_sigmoid(l.as_f64())), nr)
        + mean_of(fake.iter().map(|l| neg_log_sigmoid(-l.as_f64())), nf);
    let gr = real.iter().map(|l| T::lit((sigmoid(l.as_f64()) - 1.0) / nr as f64)).collect();
    let gf = fake.iter().map(|l| T::lit(sigmoid(l.as_f64()) / nf as f64)).collect();
    (value, gr, gf)
}

/// Non-saturating Generator term `-mean ln D(fake)`.
pub fn g_term<T: Scalar>(fake: &[T]) -> (f64, Vec<T>) {
    let n = fake.len().max(1);
    let value = mean_of(fake.iter().map(|l| neg_log_sigmoid(l.as_f64())), n);
    let g = fake.iter().map(|l| T::lit((sigmoid(l.as_f64()) - 1.0) / n as f64)).collect();
    (value, g)
}

/// `-mean ln(1 - D(collision))`; zero with no gradient for an empty batch.
pub fn collision<T: Scalar>(col: &[T]) -> (f64, Vec<T>) {
    if col.is_empty() {
        return (0.0, Vec::new());
    }
    let n = col.len();
    let value = mean_of(col.iter().map(|l| neg_log_sigmoid(-l.as_f64())), n);
    let g = col.iter().map(|l| T::lit(sigmoid(l.as_f64()) / n as f64)).collect();
    (value, g)
}

/// `mean_i ‖out_i - target_i‖²` over rows.
pub fn identity<T: Scalar>(out: &Tensor<T>, target: &Tensor<T>) -> (f64, Tensor<T>) {
    debug_assert_eq!(out.shape(), target.shape());
    let n = out.batch().max(1) as f64;
    let mut grad = Tensor::zeros(out.shape());
    let mut value = 0.0;
    for ((g, &o), &t) in grad.data_mut().iter_mut().zip(out.data()).zip(target.data()) {
        let d = o.as_f64() - t.as_f64();
        value += d * d;
        *g = T::lit(2.0 * d / n);
    }
    (value / n, grad)
}

/// `‖mean(real) - mean(fake)‖²` over feature rows, with gradients for both.
pub fn feature_match<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> (f64, Tensor<T>, Tensor<T>) {
    debug_assert_eq!(real.row_len(), fake.row_len());
    let f = real.row_len();
    let (nr, nf) = (real.batch().max(1) as f64, fake.batch().max(1) as f64);
    let column_mean = |t: &Tensor<T>, n: f64| {
        let mut m = vec![0.0; f];
        for i in 0..t.batch() {
            for (acc, v) in m.iter_mut().zip(t.row(i)) {
                *acc += v.as_f64();
            }
        }
        m.iter_mut().for_each(|v| *v /= n);
        m
    };
    let diff: Vec<f64> = column_mean(real, nr)
        .iter()
        .zip(column_mean(fake, nf))
        .map(|(a, b)| a - b)
        .collect();
    let value = diff.iter().map(|d| d * d).sum();
    let gr = Tensor::from_fn(real.shape(), |i| T::lit(2.0 * diff[i % f] / nr));
    let gf = Tensor::from_fn(fake.shape(), |i| T::lit(-2.0 * diff[i % f] / nf));
    (value, gr, gf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{normalize, training_grid};
    use crate::nn::gradcheck::check_input;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn half_discriminator_closed_forms() {
        let zeros = [0.0f64; 7];
        assert!((d_term(&zeros, &zeros[..3]).0 - 2.0 * LN2).abs() < 1e-12);
        assert!((collision(&zeros).0 - LN2).abs() < 1e-12);
        assert!((g_term(&zeros).0 - LN2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_limit() {
        assert!(d_term(&[40.0f64; 4], &[-40.0; 4]).0 < 1e-12);
        assert!(collision(&[-40.0f64; 4]).0 < 1e-12);
    }

    #[test]
    fn clamped_values_are_bounded() {
        let cap = -LOG_EPS.ln();
        assert!((g_term(&[-1e3f64]).0 - cap).abs() < 1e-12);
        assert!((d_term(&[-1e3f64], &[1e3]).0 - 2.0 * cap).abs() < 1e-12);
        for l in [-50.0f64, -3.0, 0.0, 2.0, 60.0] {
            assert!(d_term(&[l], &[l]).0 >= 0.0);
            assert!(collision(&[l]).0 >= 0.0);
        }
    }

    #[test]
    fn empty_collision_batch() {
        let (v, g) = collision::<f32>(&[]);
        assert_eq!(v, 0.0);
        assert!(g.is_empty());
    }

    #[test]
    fn identity_closed_forms() {
        let t = Tensor::from_fn(&[5, 2], |i| i as f64 * 0.1);
        assert_eq!(identity(&t, &t).0, 0.0);

        // constant 0.5 against the normalized 5° grid
        let grid = training_grid();
        let target = Tensor::from_fn(&[grid.len(), 2], |i| normalize(grid[i / 2]).unwrap()[i % 2]);
        let out = Tensor::from_fn(&[grid.len(), 2], |_| 0.5f64);
        let (v, _) = identity(&out, &target);
        let direct: f64 = grid
            .iter()
            .map(|&q| normalize(q).unwrap().iter().map(|u| (u - 0.5).powi(2)).sum::<f64>())
            .sum::<f64>()
            / grid.len() as f64;
        assert!((v - direct).abs() < 1e-12);
        // n evenly spaced points on [0,1] have variance (n² - 1) / (12 (n - 1)²),
        // which tends to Var(U[0,1]) = 1/12
        let discrete = |n: f64| (n * n - 1.0) / (12.0 * (n - 1.0) * (n - 1.0));
        assert!((v - discrete(37.0) - discrete(30.0)).abs() < 1e-12, "{v}");
        assert!((v - 1.0 / 6.0).abs() < 0.011);
    }

    #[test]
    fn feature_match_closed_forms() {
        let a = Tensor::from_fn(&[4, 3], |i| (i as f64).sin());
        assert_eq!(feature_match(&a, &a).0, 0.0);
        let b = Tensor::from_fn(&[2, 3], |i| (i as f64).cos() + 1.0);
        let mean = |t: &Tensor<f64>, c: usize| (0..t.batch()).map(|r| t.row(r)[c]).sum::<f64>() / t.batch() as f64;
        let direct: f64 = (0..3).map(|c| (mean(&a, c) - mean(&b, c)).powi(2)).sum();
        assert!((feature_match(&a, &b).0 - direct).abs() < 1e-12);
    }

    fn logits(n: usize, seed: f64) -> Tensor<f64> {
        Tensor::from_fn(&[n, 1], |i| ((i as f64 + seed) * 1.7).sin() * 3.0)
    }

    #[test]
    fn adversarial_gradients() {
        let real = logits(5, 0.3);
        let fake = logits(4, 1.1);
        let (_, gr, gf) = d_term(real.data(), fake.data());
        let gr = Tensor::new(vec![5, 1], gr).unwrap();
        let gf = Tensor::new(vec![4, 1], gf).unwrap();
        assert!(check_input(&real, &gr, |r| d_term(r.data(), fake.data()).0, 1e-3).passes(1e-3));
        assert!(check_input(&fake, &gf, |f| d_term(real.data(), f.data()).0, 1e-3).passes(1e-3));

        let (_, g) = g_term(fake.data());
        let g = Tensor::new(vec![4, 1], g).unwrap();
        assert!(check_input(&fake, &g, |f| g_term(f.data()).0, 1e-3).passes(1e-3));

        let (_, g) = collision(real.data());
        let g = Tensor::new(vec![5, 1], g).unwrap();
        assert!(check_input(&real, &g, |c| collision(c.data()).0, 1e-3).passes(1e-3));
    }

    #[test]
    fn regression_gradients() {
        let out = Tensor::from_fn(&[6, 2], |i| ((i * 37) % 11) as f64 / 11.0);
        let target = Tensor::from_fn(&[6, 2], |i| ((i * 13) % 7) as f64 / 7.0);
        let (_, g) = identity(&out, &target);
        assert!(check_input(&out, &g, |o| identity(o, &target).0, 1e-3).passes(1e-3));

        let real = Tensor::from_fn(&[5, 4], |i| (i as f64 * 0.7).sin());
        let fake = Tensor::from_fn(&[3, 4], |i| (i as f64 * 0.3).cos());
        let (_, gr, gf) = feature_match(&real, &fake);
        assert!(check_input(&real, &gr, |r| feature_match(r, &fake).0, 1e-3).passes(1e-3));
        assert!(check_input(&fake, &gf, |f| feature_match(&real, f).0, 1e-3).passes(1e-3));
    }
}
