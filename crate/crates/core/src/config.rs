//! Run configuration: one TOML file, validated in full before any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::ParamBounds;
use crate::error::{Error, Result};
use crate::intervention::{Baseline, Feature, PeriodSettings};
use crate::io::sha256_hex;
use crate::model::PositivePrior;
use crate::ode::{OdeSettings, NUM_PARAMS, REFERENCE_THETA};
use crate::prognostic::DesignKind;
use crate::spectral::{max_harmonics, VarianceConvention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Number of harmonics `K`.
    pub k: usize,
    /// Physical-error variance; estimated from the data when absent.
    pub sigma2: Option<f64>,
    /// Harmonics used for the residual-variance estimate; `floor((T-1)/2)` when absent.
    pub sigma2_fit_k: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data.csv"),
            k: 5,
            sigma2: None,
            sigma2_fit_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Fixed transcription rate.
    pub c: f64,
    /// `(lower, upper]` for each parameter, natural units.
    pub bounds: Vec<[f64; 2]>,
    pub prior_theta: PositivePrior,
    pub prior_tau2: PositivePrior,
    /// Variance scaling `ŝ` in the data layer.
    pub noise_scale: VarianceConvention,
    pub sample_sigma2: bool,
    pub prior_sigma2: PositivePrior,
    /// Starting `τ²`; the variance of the estimated spectra when absent.
    pub tau2_init: Option<f64>,
    pub cache: bool,
}

/// Default box: a factor of four either side of the reference parameters.
pub fn default_bounds() -> Vec<[f64; 2]> {
    REFERENCE_THETA.iter().map(|t| [t / 4.0, t * 4.0]).collect()
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            bounds: default_bounds(),
            prior_theta: PositivePrior::default(),
            prior_tau2: PositivePrior::default(),
            noise_scale: VarianceConvention::default(),
            sample_sigma2: false,
            prior_sigma2: PositivePrior::default(),
            tau2_init: None,
            cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_points: usize,
    pub batch_size: usize,
    pub design: DesignKind,
    pub q: usize,
    pub d0: usize,
    /// Absolute success threshold; overrides `l_min_top_fraction`.
    pub l_min: Option<f64>,
    /// Threshold leaving roughly this fraction of finite scores above it.
    pub l_min_top_fraction: f64,
    pub n_min: u64,
    pub rho0: f64,
    pub rho1: f64,
    /// `τ²` of the sweep score; the variance of the estimated spectra when absent.
    pub tau2: Option<f64>,
    pub volume_cap: u64,
    pub volume_mc_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_points: 100 * 19_683,
            batch_size: 19_683,
            design: DesignKind::Uniform,
            q: 3,
            d0: 4,
            l_min: None,
            l_min_top_fraction: 0.001,
            n_min: 0,
            rho0: 0.1,
            rho1: 1.0,
            tau2: None,
            volume_cap: 2_000_000,
            volume_mc_points: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gmss,
    Mh,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Gmss => "gmss",
            Algorithm::Mh => "mh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentalKind {
    /// The two-level density from `prognose`.
    Prospect,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub algorithm: Algorithm,
    pub multiset_size: usize,
    pub iterations: usize,
    /// Thirty percent of `iterations` when absent.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub instrumental: InstrumentalKind,
    /// Starting random-walk sd per parameter; a twentieth of each bound's width when absent.
    pub step_theta: Option<Vec<f64>>,
    pub step_s: Option<Vec<f64>>,
    pub step_tau2: Option<f64>,
    pub step_sigma2: Option<f64>,
    pub adapt: bool,
    pub target_acceptance: f64,
    pub adapt_interval: usize,
    pub checkpoint_every: usize,
    pub init_attempts: usize,
    pub histogram_bins: usize,
    pub histogram_snapshots: usize,
    pub stationarity_threshold: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Gmss,
            multiset_size: 20,
            iterations: 200_000,
            burn_in: None,
            thin: 10,
            instrumental: InstrumentalKind::Prospect,
            step_theta: None,
            step_s: None,
            step_tau2: None,
            step_sigma2: None,
            adapt: true,
            target_acceptance: 0.25,
            adapt_interval: 50,
            checkpoint_every: 1000,
            init_attempts: 10_000,
            histogram_bins: 30,
            histogram_snapshots: 10,
            stationarity_threshold: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Paired,
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterventionConfig {
    /// One-based parameter indices.
    pub targets: Vec<usize>,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub feature: Feature,
    pub baseline: BaselineKind,
    pub draw_cap: usize,
    /// One-based parameter pairs for the heatmaps.
    pub heatmap_pairs: Vec<[usize; 2]>,
    pub heatmap_feature: Feature,
    pub period: PeriodSettings,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            targets: (1..=NUM_PARAMS).collect(),
            alphas: vec![0.6, 0.8, 1.0, 1.2, 1.4],
            deltas: vec![0.1, 0.2, 0.3, 0.4],
            feature: Feature::Period,
            baseline: BaselineKind::Paired,
            draw_cap: 2000,
            heatmap_pairs: vec![[4, 5]],
            heatmap_feature: Feature::MainFrequency,
            period: PeriodSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub theta: Vec<f64>,
    pub replicates: usize,
    pub noise_sd: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            theta: REFERENCE_THETA.to_vec(),
            replicates: 3,
            noise_sd: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core. Not part of the config hash.
    pub workers: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub ode: OdeSettings,
    pub sweep: SweepConfig,
    pub sampler: SamplerSection,
    pub intervention: InterventionConfig,
    pub simulate: SimulateConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            workers: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            ode: OdeSettings::default(),
            sweep: SweepConfig::default(),
            sampler: SamplerSection::default(),
            intervention: InterventionConfig::default(),
            simulate: SimulateConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim().replace('\n', "\n  ")]))
    }

    /// Reads and validates a config; relative data/output paths are taken
    /// relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            if cfg.data.path.is_relative() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
            if cfg.output.dir.is_relative() {
                cfg.output.dir = dir.join(&cfg.output.dir);
            }
        }
        Ok(cfg)
    }

    /// Canonical TOML of every setting, defaults included.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form, excluding settings that cannot change
    /// results (worker count, file locations).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.output.dir = PathBuf::new();
        c.data.path = PathBuf::new();
        sha256_hex(c.to_canonical_toml().as_bytes())
    }

    pub fn bounds(&self) -> Result<ParamBounds> {
        ParamBounds::from_pairs(&self.model.bounds)
    }

    pub fn burn_in(&self) -> usize {
        self.sampler.burn_in.unwrap_or(self.sampler.iterations * 3 / 10)
    }

    /// Every problem, each prefixed by its config path.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let t = self.ode.n_points;
        if self.data.k == 0 || self.data.k > max_harmonics(t) {
            p.push(format!("data.k: must be in 1..={} for T={t}, got {}", max_harmonics(t), self.data.k));
        }
        if let Some(s) = self.data.sigma2 {
            if !positive(s) {
                p.push(format!("data.sigma2: must be positive, got {s}"));
            }
        }
        if let Some(k) = self.data.sigma2_fit_k {
            if k == 0 || 2 * k + 1 >= t {
                p.push(format!("data.sigma2_fit_k: needs 1 <= k and 2k+1 < T={t}, got {k}"));
            }
        }
        if !positive(self.model.c) {
            p.push(format!("model.c: must be positive, got {}", self.model.c));
        }
        if self.model.bounds.len() != NUM_PARAMS {
            p.push(format!("model.bounds: expected {NUM_PARAMS} pairs, got {}", self.model.bounds.len()));
        }
        for (j, [lo, hi]) in self.model.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi) {
                p.push(format!("model.bounds[{j}]: need 0 <= lower < upper, got [{lo}, {hi}]"));
            }
        }
        p.extend(self.model.prior_theta.problems("model.prior_theta"));
        p.extend(self.model.prior_tau2.problems("model.prior_tau2"));
        p.extend(self.model.prior_sigma2.problems("model.prior_sigma2"));
        if let Some(v) = self.model.tau2_init {
            if !positive(v) {
                p.push(format!("model.tau2_init: must be positive, got {v}"));
            }
        }
        p.extend(self.ode.problems().into_iter().map(|s| format!("ode.{s}")));

        let s = &self.sweep;
        if s.n_points == 0 {
            p.push("sweep.n_points: must be >= 1".into());
        }
        if s.batch_size == 0 {
            p.push("sweep.batch_size: must be >= 1".into());
        }
        if s.q < 2 {
            p.push(format!("sweep.q: must be >= 2, got {}", s.q));
        }
        if s.d0 == 0 || s.d0 > NUM_PARAMS {
            p.push(format!("sweep.d0: must be in 1..={NUM_PARAMS}, got {}", s.d0));
        }
        if !(s.l_min_top_fraction > 0.0 && s.l_min_top_fraction <= 1.0) {
            p.push(format!("sweep.l_min_top_fraction: must be in (0, 1], got {}", s.l_min_top_fraction));
        }
        if let Some(l) = s.l_min {
            if l.is_nan() {
                p.push("sweep.l_min: must be a number".into());
            }
        }
        if !(positive(s.rho0) && positive(s.rho1) && s.rho1 >= s.rho0) {
            p.push(format!("sweep.rho0/rho1: need rho1 >= rho0 > 0, got {} and {}", s.rho0, s.rho1));
        }
        if let Some(v) = s.tau2 {
            if !positive(v) {
                p.push(format!("sweep.tau2: must be positive, got {v}"));
            }
        }
        if s.design == DesignKind::Factorial && (s.q as f64).powi(NUM_PARAMS as i32) > 1e8 {
            p.push("sweep.design: factorial batches of q^9 points are too large for this q".into());
        }

        let m = &self.sampler;
        if m.multiset_size == 0 {
            p.push("sampler.multiset_size: must be >= 1".into());
        }
        if m.thin == 0 {
            p.push("sampler.thin: must be >= 1".into());
        }
        if let Some(b) = m.burn_in {
            if b > m.iterations {
                p.push(format!("sampler.burn_in: {b} exceeds iterations {}", m.iterations));
            }
        }
        if let Some(st) = &m.step_theta {
            if st.len() != NUM_PARAMS || st.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                p.push(format!("sampler.step_theta: need {NUM_PARAMS} finite non-negative values"));
            }
        }
        if let Some(st) = &m.step_s {
            if st.len() != self.data.k || st.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                p.push(format!("sampler.step_s: need K={} finite non-negative values", self.data.k));
            }
        }
        for (name, v) in [("step_tau2", m.step_tau2), ("step_sigma2", m.step_sigma2)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    p.push(format!("sampler.{name}: must be finite and >= 0"));
                }
            }
        }
        if !(m.target_acceptance > 0.0 && m.target_acceptance < 1.0) {
            p.push("sampler.target_acceptance: must be in (0, 1)".into());
        }
        if m.adapt_interval == 0 {
            p.push("sampler.adapt_interval: must be >= 1".into());
        }
        if m.histogram_bins == 0 || m.histogram_snapshots == 0 {
            p.push("sampler.histogram_bins/histogram_snapshots: must be >= 1".into());
        }

        let iv = &self.intervention;
        if iv.targets.is_empty() {
            p.push("intervention.targets: need at least one parameter".into());
        }
        for t in &iv.targets {
            if *t == 0 || *t > NUM_PARAMS {
                p.push(format!("intervention.targets: {t} is not in 1..={NUM_PARAMS}"));
            }
        }
        if iv.alphas.is_empty() || iv.alphas.iter().any(|a| !positive(*a)) {
            p.push("intervention.alphas: need positive scale factors".into());
        }
        if iv.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            p.push("intervention.deltas: must be finite and >= 0".into());
        }
        for [a, b] in &iv.heatmap_pairs {
            if a == b || *a == 0 || *b == 0 || *a > NUM_PARAMS || *b > NUM_PARAMS {
                p.push(format!("intervention.heatmap_pairs: [{a}, {b}] needs two different indices in 1..={NUM_PARAMS}"));
            }
        }
        let ps = &iv.period;
        if !(positive(ps.window_cycles) && positive(ps.nominal_period) && ps.amp_tol >= 0.0) {
            p.push("intervention.period: window_cycles and nominal_period must be positive, amp_tol >= 0".into());
        }

        let sim = &self.simulate;
        if sim.theta.len() != NUM_PARAMS || sim.theta.iter().any(|v| !positive(*v)) {
            p.push(format!("simulate.theta: need {NUM_PARAMS} positive values"));
        }
        if sim.replicates == 0 {
            p.push("simulate.replicates: must be >= 1".into());
        }
        if !(sim.noise_sd.is_finite() && sim.noise_sd >= 0.0) {
            p.push("simulate.noise_sd: must be finite and >= 0".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn baseline(&self, data_period: Option<f64>) -> Result<Baseline> {
        match self.intervention.baseline {
            BaselineKind::Paired => Ok(Baseline::Paired),
            BaselineKind::Data => data_period
                .map(|value| Baseline::Fixed { value })
                .ok_or_else(|| Error::Data("the data show no dominant cycle to anchor the baseline".into())),
        }
    }
}
