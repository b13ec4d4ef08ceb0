//! Spectral normalization by power iteration.
//!
//! A weight of shape `(out, rest...)` is viewed as an `out x rest` matrix.
//! Each training forward pass refines the singular-vector estimates `(u, v)`
//! with one power-iteration step; the effective weight is `W / σ̂` with
//! `σ̂ = uᵀ W v`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::{axpy, dot, Scalar, Tensor};

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNorm<T> {
    pub rows: usize,
    pub cols: usize,
    pub u: Tensor<T>,
    pub v: Tensor<T>,
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let n = dot(x, x).sqrt().max(T::lit(NORM_EPS));
    x.iter_mut().for_each(|v| *v /= n);
}

impl<T: Scalar> SpectralNorm<T> {
    pub fn new<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut u: Vec<T> = (0..rows).map(|_| T::lit(standard_normal(rng))).collect();
        let mut v: Vec<T> = (0..cols).map(|_| T::lit(standard_normal(rng))).collect();
        normalize(&mut u);
        normalize(&mut v);
        SpectralNorm {
            rows,
            cols,
            u: Tensor::new(vec![rows], u).expect("length matches"),
            v: Tensor::new(vec![cols], v).expect("length matches"),
        }
    }

    /// One power-iteration step: `v ← Wᵀu / ‖Wᵀu‖`, `u ← Wv / ‖Wv‖`.
    pub fn power_iteration(&mut self, w: &[T]) {
        debug_assert_eq!(w.len(), self.rows * self.cols);
        let v = self.v.data_mut();
        v.iter_mut().for_each(|x| *x = T::zero());
        for (r, &ur) in self.u.data().iter().enumerate() {
            axpy(ur, &w[r * self.cols..(r + 1) * self.cols], v);
        }
        normalize(v);
        let v = self.v.data();
        for (r, ur) in self.u.data_mut().iter_mut().enumerate() {
            *ur = dot(&w[r * self.cols..(r + 1) * self.cols], v);
        }
        normalize(self.u.data_mut());
    }

    /// `σ̂ = uᵀ W v` with the current estimates.
    pub fn sigma(&self, w: &[T]) -> T {
        let v = self.v.data();
        self.u
            .data()
            .iter()
            .enumerate()
            .map(|(r, &ur)| ur * dot(&w[r * self.cols..(r + 1) * self.cols], v))
            .fold(T::zero(), |a, b| a + b)
    }

    /// `W / σ̂` and `σ̂`.
    pub fn normalized(&self, w: &[T]) -> (Vec<T>, T) {
        let sigma = self.sigma(w).max(T::lit(NORM_EPS));
        (w.iter().map(|&x| x / sigma).collect(), sigma)
    }

    /// Maps the gradient of the effective weight back onto the raw weight,
    /// holding `u` and `v` fixed:
    /// `∂L/∂W = G/σ − (Σ G∘W_eff)/σ · u vᵀ`.
    pub fn backward(&self, grad_eff: &[T], w_eff: &[T], sigma: T, grad_w: &mut [T]) {
        let coupling = dot(grad_eff, w_eff) / sigma;
        let (u, v) = (self.u.data(), self.v.data());
        for r in 0..self.rows {
            let row = &mut grad_w[r * self.cols..(r + 1) * self.cols];
            let g = &grad_eff[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                row[c] += g[c] / sigma - coupling * u[r] * v[c];
            }
        }
    }
}

/// Spectral norm estimate of a matrix by `iters` power-iteration steps.
pub fn estimate_spectral_norm<T: Scalar, R: Rng + ?Sized>(
    w: &[T],
    rows: usize,
    cols: usize,
    iters: usize,
    rng: &mut R,
) -> T {
    let mut sn = SpectralNorm::new(rows, cols, rng);
    for _ in 0..iters {
        sn.power_iteration(w);
    }
    sn.sigma(w).abs()
}
