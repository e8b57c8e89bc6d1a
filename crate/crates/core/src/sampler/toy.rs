//! Closed-form targets for testing the samplers.

use rand::Rng;

use super::{ChainRng, Target};
use crate::bounds::ParamBounds;
use crate::error::{Error, Result};
use crate::special::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Flat density on `(0, 1]^dim`.
#[derive(Debug, Clone)]
pub struct ConstantTarget {
    bounds: ParamBounds,
}

impl ConstantTarget {
    pub fn new(dim: usize) -> Self {
        Self {
            bounds: ParamBounds::cube(dim, 0.0, 1.0).expect("unit cube"),
        }
    }
}

impl Target for ConstantTarget {
    type Eval = ();
    type Latent = ();

    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        self.bounds.contains(theta)
    }

    fn evaluate(&self, _theta: &[f64]) -> Option<()> {
        Some(())
    }

    fn log_element(&self, _theta: &[f64], eval: Option<&()>, _latent: &()) -> f64 {
        if eval.is_some() {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_shared(&self, _latent: &()) -> f64 {
        0.0
    }

    fn initial_latent(&self) {}

    fn sample_prior(&self, rng: &mut ChainRng) -> Vec<f64> {
        (0..self.dim()).map(|_| 1.0 - rng.random::<f64>()).collect()
    }
}

/// Isotropic Gaussian mixture restricted to a box.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTarget {
    means: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    sd: f64,
    bounds: ParamBounds,
}

impl GaussianMixtureTarget {
    pub fn new(means: Vec<Vec<f64>>, weights: Vec<f64>, sd: f64, bounds: ParamBounds) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() {
            return Err(Error::InvalidArgument("need one weight per component".into()));
        }
        if means.iter().any(|m| m.len() != bounds.dim()) {
            return Err(Error::InvalidArgument("component mean has the wrong dimension".into()));
        }
        if !(sd > 0.0) || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("sd and weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            means,
            sd,
            bounds,
        })
    }

    /// Two equal components at `±offset` on the first axis, `sd = 1`,
    /// inside `[-half_width, half_width]^dim`.
    pub fn two_modes(dim: usize, offset: f64, half_width: f64) -> Result<Self> {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = -offset;
        b[0] = offset;
        Self::new(vec![a, b], vec![1.0, 1.0], 1.0, ParamBounds::cube(dim, -half_width, half_width)?)
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Mixture mean, ignoring the (negligible) mass cut off by the box.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.bounds.dim();
        (0..dim)
            .map(|j| self.means.iter().zip(&self.weights).map(|(m, w)| w * m[j]).sum())
            .collect()
    }

    /// Mixture second moment `E[θ_j²]`.
    pub fn second_moment(&self) -> Vec<f64> {
        let dim = self.bounds.dim();
        (0..dim)
            .map(|j| {
                self.means
                    .iter()
                    .zip(&self.weights)
                    .map(|(m, w)| w * (m[j] * m[j] + self.sd * self.sd))
                    .sum()
            })
            .collect()
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let dim = theta.len() as f64;
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.log_weights)
            .map(|(m, lw)| {
                let d2: f64 = theta.iter().zip(m).map(|(t, mu)| (t - mu) * (t - mu)).sum();
                lw - 0.5 * dim * (LN_2PI + 2.0 * self.sd.ln()) - d2 / (2.0 * self.sd * self.sd)
            })
            .collect();
        log_sum_exp(&terms)
    }
}

impl Target for GaussianMixtureTarget {
    type Eval = ();
    type Latent = ();

    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        self.bounds.contains(theta)
    }

    fn evaluate(&self, _theta: &[f64]) -> Option<()> {
        Some(())
    }

    fn log_element(&self, theta: &[f64], eval: Option<&()>, _latent: &()) -> f64 {
        if eval.is_none() || !self.bounds.contains(theta) {
            return f64::NEG_INFINITY;
        }
        self.log_density(theta)
    }

    fn log_shared(&self, _latent: &()) -> f64 {
        0.0
    }

    fn initial_latent(&self) {}

    fn sample_prior(&self, rng: &mut ChainRng) -> Vec<f64> {
        let u: Vec<f64> = (0..self.dim()).map(|_| 1.0 - rng.random::<f64>()).collect();
        self.bounds.to_natural(&u)
    }
}

/// A target started at a fixed point, for runs that must begin inside one mode.
#[derive(Debug, Clone)]
pub struct StartAt<T> {
    pub inner: T,
    pub start: Vec<f64>,
}

impl<T: Target> Target for StartAt<T> {
    type Eval = T::Eval;
    type Latent = T::Latent;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        self.inner.in_support(theta)
    }

    fn evaluate(&self, theta: &[f64]) -> Option<Self::Eval> {
        self.inner.evaluate(theta)
    }

    fn log_element(&self, theta: &[f64], eval: Option<&Self::Eval>, latent: &Self::Latent) -> f64 {
        self.inner.log_element(theta, eval, latent)
    }

    fn log_shared(&self, latent: &Self::Latent) -> f64 {
        self.inner.log_shared(latent)
    }

    fn latent_blocks(&self) -> Vec<super::LatentBlock> {
        self.inner.latent_blocks()
    }

    fn propose_latent(
        &self,
        block: usize,
        latent: &Self::Latent,
        steps: &[f64],
        rng: &mut ChainRng,
    ) -> Option<Self::Latent> {
        self.inner.propose_latent(block, latent, steps, rng)
    }

    fn initial_latent(&self) -> Self::Latent {
        self.inner.initial_latent()
    }

    fn sample_prior(&self, _rng: &mut ChainRng) -> Vec<f64> {
        self.start.clone()
    }

    fn latent_columns(&self) -> Vec<String> {
        self.inner.latent_columns()
    }

    fn latent_values(&self, latent: &Self::Latent) -> Vec<f64> {
        self.inner.latent_values(latent)
    }
}
