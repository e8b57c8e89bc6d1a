//! The hierarchical spectral model: noncentral chi-square data layer,
//! truncated-normal discrepancy layer and inverse-gamma priors.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::ParamBounds;
use crate::error::{Error, Result};
use crate::ode::{OdeSettings, ThetaVector, NUM_PARAMS};
use crate::sampler::{ChainRng, LatentBlock, StepSizes, Target};
use crate::special::{ln_gamma, log_normal_cdf};
use crate::spectral::{log_density_shat_given_s_unchecked, max_harmonics, model_spectrum, VarianceConvention};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N⁺(s | λ, τ²)`: a normal with mean `λ` and variance `τ²` truncated to `s > 0`.
pub fn log_truncnormal_plus(s: f64, lambda: f64, tau2: f64) -> f64 {
    if s <= 0.0 || tau2 <= 0.0 || s.is_nan() || lambda.is_nan() {
        return f64::NEG_INFINITY;
    }
    let d = s - lambda;
    -0.5 * (LN_2PI + tau2.ln()) - d * d / (2.0 * tau2) - log_normal_cdf(lambda / tau2.sqrt())
}

/// Inverse-gamma log-density, shape `a`, scale `b`.
pub fn log_ig(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x.is_nan() {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Prior on a positive scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PositivePrior {
    InverseGamma { shape: f64, scale: f64 },
    /// Improper flat density on `(0, ∞)`; the `a, b → 0` limit used for
    /// likelihood-only checks.
    Flat,
}

impl Default for PositivePrior {
    fn default() -> Self {
        PositivePrior::InverseGamma { shape: 0.001, scale: 0.001 }
    }
}

impl PositivePrior {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            PositivePrior::InverseGamma { shape, scale } => log_ig(x, shape, scale),
            PositivePrior::Flat => {
                if x > 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn problems(&self, path: &str) -> Vec<String> {
        match *self {
            PositivePrior::InverseGamma { shape, scale } if !(shape > 0.0 && scale > 0.0) => vec![format!(
                "{path}: inverse-gamma shape and scale must be positive, got ({shape}, {scale})"
            )],
            _ => Vec::new(),
        }
    }
}

pub type SpectrumFn = dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync;

/// Where model spectra `λ(θ)` come from.
#[derive(Clone)]
pub enum SpectrumSource {
    Ode { settings: OdeSettings, c: f64 },
    /// Any deterministic map from parameters to `K` powers; `None` is a failure.
    Custom(Arc<SpectrumFn>),
}

impl std::fmt::Debug for SpectrumSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectrumSource::Ode { settings, c } => f.debug_struct("Ode").field("settings", settings).field("c", c).finish(),
            SpectrumSource::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Thread-safe memo of `λ(θ)` keyed on the exact bits of `θ` and a settings salt.
#[derive(Debug)]
pub struct SpectrumCache {
    enabled: bool,
    salt: u64,
    capacity: usize,
    map: Mutex<HashMap<(u64, Vec<u64>), Option<Arc<Vec<f64>>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl SpectrumCache {
    pub fn new(enabled: bool, salt: u64, capacity: usize) -> Self {
        Self {
            enabled,
            salt,
            capacity: capacity.max(1),
            map: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn get_or_compute<F: FnOnce() -> Option<Vec<f64>>>(&self, theta: &[f64], f: F) -> Option<Arc<Vec<f64>>> {
        if !self.enabled {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return f().map(Arc::new);
        }
        let key = (self.salt, theta.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(v) = self.map.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return v.clone();
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = f().map(Arc::new);
        let mut map = self.map.lock().expect("cache lock");
        if map.len() >= self.capacity {
            map.clear();
        }
        map.insert(key, value.clone());
        value
    }
}

/// Shared latent block: spectra `s_ik`, discrepancy variance `τ²` and the
/// physical-error variance `σ²` (held fixed unless sampled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpectra {
    pub s: Vec<Vec<f64>>,
    pub tau2: f64,
    pub sigma2: f64,
}

/// The posterior of `(θ, S, τ²)` given estimated spectra `Ŝ`.
#[derive(Debug)]
pub struct HierarchicalModel {
    s_hat: Vec<Vec<f64>>,
    series_len: usize,
    sigma2: f64,
    convention: VarianceConvention,
    sample_sigma2: bool,
    prior_theta: PositivePrior,
    prior_tau2: PositivePrior,
    prior_sigma2: PositivePrior,
    tau2_init: f64,
    bounds: ParamBounds,
    source: SpectrumSource,
    cache: SpectrumCache,
}

const DEFAULT_CACHE_CAPACITY: usize = 500_000;

fn settings_salt(source: &SpectrumSource, k: usize) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    k.hash(&mut h);
    match source {
        SpectrumSource::Ode { settings, c } => {
            serde_json::to_string(settings).unwrap_or_default().hash(&mut h);
            c.to_bits().hash(&mut h);
        }
        SpectrumSource::Custom(f) => (Arc::as_ptr(f) as *const () as usize).hash(&mut h),
    }
    h.finish()
}

impl HierarchicalModel {
    /// `s_hat` is `n × K`; `sigma2` is the physical-error variance `σ_F²`.
    pub fn new(
        s_hat: Vec<Vec<f64>>,
        series_len: usize,
        sigma2: f64,
        bounds: ParamBounds,
        source: SpectrumSource,
    ) -> Result<Self> {
        let n = s_hat.len();
        if n == 0 || s_hat[0].is_empty() {
            return Err(Error::InvalidArgument("need at least one replicate and one frequency".into()));
        }
        let k = s_hat[0].len();
        if s_hat.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("every replicate needs the same number of frequencies".into()));
        }
        if s_hat.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("estimated spectra must be finite and non-negative".into()));
        }
        if k > max_harmonics(series_len) {
            return Err(Error::InvalidArgument(format!("K={k} too large for T={series_len}")));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")));
        }
        if let SpectrumSource::Ode { settings, c } = &source {
            if bounds.dim() != NUM_PARAMS {
                return Err(Error::InvalidArgument(format!("ODE model needs {NUM_PARAMS} bounds")));
            }
            if settings.n_points != series_len {
                return Err(Error::InvalidArgument(format!(
                    "ODE records {} points but data have T={series_len}",
                    settings.n_points
                )));
            }
            if !(*c > 0.0) {
                return Err(Error::InvalidArgument("c must be positive".into()));
            }
            settings.validate()?;
        }
        if bounds.lower().iter().any(|l| *l < 0.0) {
            return Err(Error::InvalidArgument("parameter bounds must lie in the positive half-line".into()));
        }
        let all: Vec<f64> = s_hat.iter().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
        let salt = settings_salt(&source, k);
        Ok(Self {
            s_hat,
            series_len,
            sigma2,
            convention: VarianceConvention::default(),
            sample_sigma2: false,
            prior_theta: PositivePrior::default(),
            prior_tau2: PositivePrior::default(),
            prior_sigma2: PositivePrior::default(),
            tau2_init: var.max(1e-8),
            bounds,
            source,
            cache: SpectrumCache::new(true, salt, DEFAULT_CACHE_CAPACITY),
        })
    }

    pub fn with_priors(mut self, theta: PositivePrior, tau2: PositivePrior) -> Self {
        self.prior_theta = theta;
        self.prior_tau2 = tau2;
        self
    }

    /// Samples `σ²` as an extra latent block with the given prior.
    pub fn with_sigma2_sampling(mut self, prior: PositivePrior) -> Self {
        self.sample_sigma2 = true;
        self.prior_sigma2 = prior;
        self
    }

    pub fn with_variance_convention(mut self, convention: VarianceConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_tau2_init(mut self, tau2: f64) -> Self {
        self.tau2_init = tau2;
        self
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache = SpectrumCache::new(enabled, self.cache.salt, self.cache.capacity);
        self
    }

    pub fn n(&self) -> usize {
        self.s_hat.len()
    }

    pub fn k(&self) -> usize {
        self.s_hat[0].len()
    }

    pub fn s_hat(&self) -> &[Vec<f64>] {
        &self.s_hat
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    pub fn cache(&self) -> &SpectrumCache {
        &self.cache
    }

    pub fn tau2_init(&self) -> f64 {
        self.tau2_init
    }

    pub fn samples_sigma2(&self) -> bool {
        self.sample_sigma2
    }

    pub fn v_of(&self, sigma2: f64) -> f64 {
        self.convention.v(sigma2, self.series_len)
    }

    /// `λ(θ)`, memoized; `None` when the model evaluation fails.
    pub fn spectrum(&self, theta: &[f64]) -> Option<Arc<Vec<f64>>> {
        self.cache.get_or_compute(theta, || self.compute_spectrum(theta))
    }

    fn compute_spectrum(&self, theta: &[f64]) -> Option<Vec<f64>> {
        match &self.source {
            SpectrumSource::Ode { settings, c } => {
                let th = ThetaVector::from_slice(theta, *c).ok()?;
                model_spectrum(&th, self.k(), settings).ok().map(|p| p.0)
            }
            SpectrumSource::Custom(f) => {
                let v = f(theta)?;
                (v.len() == self.k() && v.iter().all(|x| x.is_finite() && *x >= 0.0)).then_some(v)
            }
        }
    }

    pub fn log_prior_theta(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|&t| self.prior_theta.log_density(t)).sum()
    }

    /// `Σ_ik log f(ŝ_ik | s_ik)` under noise variance `sigma2`.
    pub fn log_data_layer(&self, s: &[Vec<f64>], sigma2: f64) -> f64 {
        let v = self.v_of(sigma2);
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for (hat_row, s_row) in self.s_hat.iter().zip(s) {
            for (&sh, &sv) in hat_row.iter().zip(s_row) {
                total += log_density_shat_given_s_unchecked(sh, sv, v);
            }
        }
        total
    }

    /// `Σ_ik log N⁺(s_ik | λ_k, τ²)`.
    pub fn log_discrepancy_layer(&self, s: &[Vec<f64>], lambda: &[f64], tau2: f64) -> f64 {
        let mut total = 0.0;
        for row in s {
            for (&sv, &l) in row.iter().zip(lambda) {
                total += log_truncnormal_plus(sv, l, tau2);
            }
        }
        total
    }

    /// Prospect-sweep score: the discrepancy layer with `s` held at `ŝ`
    /// (floored to stay in the truncated support) and `τ²` fixed.
    pub fn sweep_loglik(&self, theta: &[f64], tau2: f64) -> Option<f64> {
        let lambda = self.spectrum(theta)?;
        let floored: Vec<Vec<f64>> = self
            .s_hat
            .iter()
            .map(|r| r.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect())
            .collect();
        Some(self.log_discrepancy_layer(&floored, &lambda, tau2))
    }

    fn latent_groups(&self) -> usize {
        if self.sample_sigma2 {
            3
        } else {
            2
        }
    }

    /// Starting step sizes scaled to the data: a twentieth of each bound's
    /// width for `θ`, the sampling spread of `ŝ` for the spectra, and a
    /// fraction of the starting variances.
    pub fn default_steps(&self) -> StepSizes {
        let theta = self
            .bounds
            .lower()
            .iter()
            .zip(self.bounds.upper())
            .map(|(lo, hi)| 0.05 * (hi - lo))
            .collect();
        let v = self.v_of(self.sigma2);
        let k = self.k();
        let s_steps: Vec<f64> = (0..k)
            .map(|j| {
                let mean = self.s_hat.iter().map(|r| r[j]).sum::<f64>() / self.n() as f64;
                (0.5 * (v * (v + mean)).sqrt()).max(1e-12)
            })
            .collect();
        let mut latent = vec![s_steps, vec![0.2 * self.tau2_init]];
        if self.sample_sigma2 {
            latent.push(vec![0.1 * self.sigma2]);
        }
        StepSizes { theta, latent }
    }
}

impl Target for HierarchicalModel {
    type Eval = Arc<Vec<f64>>;
    type Latent = LatentSpectra;

    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        self.bounds.contains(theta)
    }

    fn evaluate(&self, theta: &[f64]) -> Option<Self::Eval> {
        self.spectrum(theta)
    }

    fn log_element(&self, theta: &[f64], eval: Option<&Self::Eval>, latent: &LatentSpectra) -> f64 {
        let Some(lambda) = eval else {
            return f64::NEG_INFINITY;
        };
        let prior = self.log_prior_theta(theta);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        prior + self.log_discrepancy_layer(&latent.s, lambda, latent.tau2)
    }

    fn log_shared(&self, latent: &LatentSpectra) -> f64 {
        let mut total = self.log_data_layer(&latent.s, latent.sigma2) + self.prior_tau2.log_density(latent.tau2);
        if self.sample_sigma2 {
            total += self.prior_sigma2.log_density(latent.sigma2);
        }
        total
    }

    /// One block per replicate (group 0), then `τ²` (group 1), then `σ²`
    /// (group 2) when it is sampled.
    fn latent_blocks(&self) -> Vec<LatentBlock> {
        let mut blocks = vec![LatentBlock { group: 0 }; self.n()];
        blocks.push(LatentBlock { group: 1 });
        if self.sample_sigma2 {
            blocks.push(LatentBlock { group: 2 });
        }
        blocks
    }

    fn propose_latent(
        &self,
        block: usize,
        latent: &LatentSpectra,
        steps: &[f64],
        rng: &mut ChainRng,
    ) -> Option<LatentSpectra> {
        let n = self.n();
        let mut next = latent.clone();
        if block < n {
            let mut ok = true;
            for (s, step) in next.s[block].iter_mut().zip(steps) {
                let z: f64 = rng.sample(StandardNormal);
                *s += step * z;
                ok &= *s > 0.0;
            }
            return ok.then_some(next);
        }
        let z: f64 = rng.sample(StandardNormal);
        if block == n {
            next.tau2 += steps[0] * z;
            (next.tau2 > 0.0).then_some(next)
        } else {
            next.sigma2 += steps[0] * z;
            (next.sigma2 > 0.0).then_some(next)
        }
    }

    fn initial_latent(&self) -> LatentSpectra {
        let floor = 1e-6 * self.s_hat.iter().flatten().fold(0.0f64, |a, b| a.max(*b)).max(1e-300);
        LatentSpectra {
            s: self.s_hat.iter().map(|r| r.iter().map(|v| v.max(floor)).collect()).collect(),
            tau2: self.tau2_init,
            sigma2: self.sigma2,
        }
    }

    fn sample_prior(&self, rng: &mut ChainRng) -> Vec<f64> {
        let u: Vec<f64> = (0..self.dim()).map(|_| 1.0 - rng.random::<f64>()).collect();
        self.bounds.to_natural(&u)
    }

    fn latent_columns(&self) -> Vec<String> {
        let mut cols = vec!["tau2".to_string(), "sigma2".to_string()];
        for i in 0..self.n() {
            for k in 0..self.k() {
                cols.push(format!("s_{}_{}", i + 1, k + 1));
            }
        }
        cols
    }

    fn latent_values(&self, latent: &LatentSpectra) -> Vec<f64> {
        let mut v = vec![latent.tau2, latent.sigma2];
        v.extend(latent.s.iter().flatten());
        v
    }
}

impl HierarchicalModel {
    /// Number of latent step-size groups this model uses.
    pub fn latent_group_count(&self) -> usize {
        self.latent_groups()
    }
}

/// Unnormalized `log π(θ, S, τ² | Ŝ)`; `-inf` when `λ(θ)` cannot be computed.
pub fn joint_log_posterior(theta: &[f64], latent: &LatentSpectra, model: &HierarchicalModel) -> f64 {
    let eval = model.evaluate(theta);
    let element = model.log_element(theta, eval.as_ref(), latent);
    if element == f64::NEG_INFINITY {
        return element;
    }
    let shared = model.log_shared(latent);
    if shared == f64::NEG_INFINITY {
        return shared;
    }
    shared + element
}
