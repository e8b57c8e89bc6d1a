//! Multiset and single-chain Metropolis-within-Gibbs samplers.
//!
//! Both samplers target a density that factors as
//!
//! ```text
//! π(θ, L) ∝ A(L) · F(θ, L)
//! ```
//!
//! where `L` is the shared latent block (spectra, τ², optionally σ²), `A`
//! collects the factors that do not involve `θ` and `F` those that do. The
//! multiset sampler replaces `F(θ, L)` with the mixture
//! `(1/M) Σ_m F(θ_m, L) Π_{l≠m} g(θ_l)`.

mod chain;
mod diagnostics;
mod gmss;
mod mh;
pub mod toy;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use chain::{read_chain, Chain, ChainHeader, ChainWriter, SampleSink};
pub use diagnostics::{cumulative_histogram_diagnostic, HistogramDiagnostic};
pub use gmss::{
    compute_weights, gmss_sampling_log_density, initialize, mixture_terms, Checkpoint, Element, Gmss, LiveState,
};
pub use mh::StandardMh;

use crate::bounds::ParamBounds;
use crate::error::{Error, Result};
use crate::prognostic::ProspectMap;
use crate::special::log_sum_exp;

/// Random stream used by every chain; its state is serialized in checkpoints.
pub type ChainRng = ChaCha8Rng;

/// A latent block update, identified by its step-size group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentBlock {
    pub group: usize,
}

/// A posterior that the samplers can explore.
pub trait Target: Sync {
    /// Expensive per-parameter evaluation (e.g. a model spectrum), cached per element.
    type Eval: Clone + Send + Sync;
    type Latent: Clone + Serialize + DeserializeOwned + Send + Sync;

    fn dim(&self) -> usize;

    fn in_support(&self, theta: &[f64]) -> bool;

    /// `None` marks a failed evaluation; the element density is then `-inf`.
    fn evaluate(&self, theta: &[f64]) -> Option<Self::Eval>;

    /// `log F(θ, L)`: every factor that involves `θ`, including its prior.
    fn log_element(&self, theta: &[f64], eval: Option<&Self::Eval>, latent: &Self::Latent) -> f64;

    /// `log A(L)`: factors that involve only the latent block.
    fn log_shared(&self, latent: &Self::Latent) -> f64;

    fn latent_blocks(&self) -> Vec<LatentBlock> {
        Vec::new()
    }

    /// Normal random-walk proposal for one latent block; `None` when it
    /// leaves the support.
    fn propose_latent(
        &self,
        _block: usize,
        _latent: &Self::Latent,
        _steps: &[f64],
        _rng: &mut ChainRng,
    ) -> Option<Self::Latent> {
        None
    }

    fn initial_latent(&self) -> Self::Latent;

    /// A starting draw used when no prospect cell is available.
    fn sample_prior(&self, rng: &mut ChainRng) -> Vec<f64>;

    fn latent_columns(&self) -> Vec<String> {
        Vec::new()
    }

    fn latent_values(&self, _latent: &Self::Latent) -> Vec<f64> {
        Vec::new()
    }
}

/// Instrumental density `g` shared by every multiset element.
pub trait Instrumental: Sync {
    fn log_density(&self, theta: &[f64]) -> f64;

    /// Prospect map used to place initial elements, when there is one.
    fn prospect(&self) -> Option<(&ProspectMap, &ParamBounds)> {
        None
    }
}

/// Uniform density on a parameter box.
#[derive(Debug, Clone)]
pub struct UniformInstrumental {
    bounds: ParamBounds,
    log_density: f64,
}

impl UniformInstrumental {
    pub fn new(bounds: ParamBounds) -> Self {
        let log_density = bounds.log_jacobian();
        Self { bounds, log_density }
    }
}

impl Instrumental for UniformInstrumental {
    fn log_density(&self, theta: &[f64]) -> f64 {
        if self.bounds.contains(theta) {
            self.log_density
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// The two-level prospect density carried to natural units through the
/// bounds' affine map.
#[derive(Debug, Clone)]
pub struct ProspectInstrumental {
    map: ProspectMap,
    bounds: ParamBounds,
    log_jacobian: f64,
}

impl ProspectInstrumental {
    pub fn new(map: ProspectMap, bounds: ParamBounds) -> Result<Self> {
        if map.p() != bounds.dim() {
            return Err(Error::InvalidArgument(format!(
                "prospect map has p={} but bounds have {} dimensions",
                map.p(),
                bounds.dim()
            )));
        }
        let log_jacobian = bounds.log_jacobian();
        Ok(Self {
            map,
            bounds,
            log_jacobian,
        })
    }

    pub fn map(&self) -> &ProspectMap {
        &self.map
    }
}

impl Instrumental for ProspectInstrumental {
    fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.bounds.contains(theta) {
            return f64::NEG_INFINITY;
        }
        let u = self.bounds.to_unit(theta);
        self.map.log_density_unchecked(&u) + self.log_jacobian
    }

    fn prospect(&self) -> Option<(&ProspectMap, &ParamBounds)> {
        Some((&self.map, &self.bounds))
    }
}

/// Random-walk standard deviations: one per `θ` coordinate (shared across
/// multiset elements) and one vector per latent group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub theta: Vec<f64>,
    pub latent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Acceptance counts over the whole run and over the current adaptation window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub theta: Vec<Counter>,
    pub latent: Vec<Counter>,
    pub window_theta: Vec<Counter>,
    pub window_latent: Vec<Counter>,
    pub adaptation_rounds: u64,
}

impl AcceptanceStats {
    fn new(dim: usize, groups: usize) -> Self {
        Self {
            theta: vec![Counter::default(); dim],
            latent: vec![Counter::default(); groups],
            window_theta: vec![Counter::default(); dim],
            window_latent: vec![Counter::default(); groups],
            adaptation_rounds: 0,
        }
    }

    fn record_theta(&mut self, j: usize, accepted: bool) {
        for c in [&mut self.theta[j], &mut self.window_theta[j]] {
            c.proposed += 1;
            c.accepted += accepted as u64;
        }
    }

    fn record_latent(&mut self, g: usize, accepted: bool) {
        for c in [&mut self.latent[g], &mut self.window_latent[g]] {
            c.proposed += 1;
            c.accepted += accepted as u64;
        }
    }

    /// Nudges each step size toward the target acceptance rate and resets the
    /// window. Shared by both samplers so their adaptation is identical.
    fn adapt(&mut self, steps: &mut StepSizes, target_rate: f64) {
        self.adaptation_rounds += 1;
        let gain = (10.0 / (self.adaptation_rounds as f64).sqrt()).min(1.0);
        for (s, c) in steps.theta.iter_mut().zip(&mut self.window_theta) {
            if c.proposed > 0 {
                *s *= ((c.rate() - target_rate) * gain).exp();
            }
            *c = Counter::default();
        }
        for (group, c) in steps.latent.iter_mut().zip(&mut self.window_latent) {
            if c.proposed > 0 {
                let f = ((c.rate() - target_rate) * gain).exp();
                group.iter_mut().for_each(|s| *s *= f);
            }
            *c = Counter::default();
        }
    }
}

/// Run settings common to both samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub multiset_size: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub steps: StepSizes,
    /// Adapt step sizes during burn-in; frozen afterwards.
    pub adapt: bool,
    pub target_acceptance: f64,
    pub adapt_interval: usize,
    pub seed: u64,
    pub update_theta: bool,
    pub update_latent: bool,
    /// Attempts per element when searching for a starting point.
    pub init_attempts: usize,
}

impl SamplerConfig {
    pub fn new(multiset_size: usize, iterations: usize, steps: StepSizes, seed: u64) -> Self {
        Self {
            multiset_size,
            iterations,
            burn_in: iterations * 3 / 10,
            thin: 10,
            steps,
            adapt: true,
            target_acceptance: 0.25,
            adapt_interval: 50,
            seed,
            update_theta: true,
            update_latent: true,
            init_attempts: 10_000,
        }
    }

    pub fn is_retained(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in) % self.thin.max(1) == 0
    }

    pub fn validate(&self, dim: usize, groups: usize) -> Result<()> {
        let mut p = Vec::new();
        if self.multiset_size == 0 {
            p.push("sampler.multiset_size: must be >= 1".to_string());
        }
        if self.thin == 0 {
            p.push("sampler.thin: must be >= 1".to_string());
        }
        if self.steps.theta.len() != dim {
            p.push(format!("sampler.steps.theta: expected {dim} entries, got {}", self.steps.theta.len()));
        }
        if self.steps.latent.len() < groups {
            p.push(format!("sampler.steps: expected {groups} latent groups, got {}", self.steps.latent.len()));
        }
        let all_steps = self.steps.theta.iter().chain(self.steps.latent.iter().flatten());
        if all_steps.clone().any(|s| !(s.is_finite() && *s >= 0.0)) {
            p.push("sampler.steps: step sizes must be finite and >= 0".to_string());
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            p.push("sampler.target_acceptance: must be in (0, 1)".to_string());
        }
        if self.adapt_interval == 0 {
            p.push("sampler.adapt_interval: must be >= 1".to_string());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

/// One retained iteration: every element with its density contribution and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub iteration: usize,
    /// Index of the element with the largest weight.
    pub leading: usize,
    pub latent: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub log_f: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    /// `Σ_m w_m h(θ_m)`, divided by `Σ_m w_m` so that `h ≡ 1` gives exactly 1.
    pub fn weighted<F: Fn(&[f64]) -> f64>(&self, h: F) -> f64 {
        let num: f64 = self.thetas.iter().zip(&self.weights).map(|(t, w)| w * h(t)).sum();
        num / self.weights.iter().sum::<f64>()
    }
}

/// `(1/B) Σ_b Σ_m w_m^(b) h(θ_m^(b))`.
pub fn estimate<F: Fn(&[f64]) -> f64>(h: F, samples: &[WeightedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no retained samples".into()));
    }
    let total: f64 = samples.iter().map(|s| s.weighted(&h)).sum();
    Ok(total / samples.len() as f64)
}

/// Weighted estimate with a batch-means Monte Carlo standard error.
pub fn estimate_with_error<F: Fn(&[f64]) -> f64>(h: F, samples: &[WeightedSample]) -> Result<(f64, f64)> {
    let per: Vec<f64> = samples.iter().map(|s| s.weighted(&h)).collect();
    if per.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 samples for a standard error".into()));
    }
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((mean, batch_means_se(&per)))
}

/// Batch-means standard error of the mean of a correlated series,
/// using `floor(sqrt(n))` batches.
pub fn batch_means_se(series: &[f64]) -> f64 {
    let n = series.len();
    let batches = ((n as f64).sqrt().floor() as usize).max(2);
    let size = n / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

fn accept(rng: &mut ChainRng, log_a: f64) -> bool {
    // the uniform is always drawn so that both samplers consume identical streams
    let u: f64 = rng.random();
    if log_a.is_nan() {
        return false;
    }
    log_a >= 0.0 || u.ln() < log_a
}

/// Normalized weights from log numerators.
pub(crate) fn normalized_weights(terms: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(terms);
    if !total.is_finite() {
        return Err(Error::Compute("cannot weight: every multiset term has zero density".into()));
    }
    let mut w: Vec<f64> = terms.iter().map(|t| (t - total).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}
