use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    accept, normalized_weights, AcceptanceStats, ChainRng, Instrumental, SampleSink, SamplerConfig,
    StepSizes, Target, WeightedSample,
};
use crate::error::{Error, Result};
use crate::prognostic::{cell_index, u_q};
use crate::special::log_sum_exp;

/// One multiset element with its cached evaluation and density terms.
#[derive(Debug, Clone)]
pub struct Element<E> {
    pub theta: Vec<f64>,
    pub eval: Option<E>,
    /// `log F(θ_m, L)` under the current latent block.
    pub log_f: f64,
    /// `log g(θ_m)`.
    pub log_g: f64,
}

/// In-memory chain state. Element caches are rebuilt from `θ` on resume.
#[derive(Debug, Clone)]
pub struct LiveState<T: Target> {
    pub elements: Vec<Element<T::Eval>>,
    pub latent: T::Latent,
    pub iteration: usize,
    pub rng: ChainRng,
    pub steps: StepSizes,
    pub stats: AcceptanceStats,
}

/// Serializable snapshot of a chain, sufficient to continue it exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(deserialize = "L: serde::de::DeserializeOwned"))]
pub struct Checkpoint<L> {
    pub thetas: Vec<Vec<f64>>,
    pub latent: L,
    pub iteration: usize,
    pub rng: ChainRng,
    pub steps: StepSizes,
    pub stats: AcceptanceStats,
}

impl<T: Target> LiveState<T> {
    pub fn checkpoint(&self) -> Checkpoint<T::Latent> {
        Checkpoint {
            thetas: self.elements.iter().map(|e| e.theta.clone()).collect(),
            latent: self.latent.clone(),
            iteration: self.iteration,
            rng: self.rng.clone(),
            steps: self.steps.clone(),
            stats: self.stats.clone(),
        }
    }

    pub fn from_checkpoint(cp: Checkpoint<T::Latent>, target: &T, g: &dyn Instrumental) -> Self {
        let elements = cp
            .thetas
            .into_iter()
            .map(|theta| make_element(target, g, theta, &cp.latent))
            .collect();
        Self {
            elements,
            latent: cp.latent,
            iteration: cp.iteration,
            rng: cp.rng,
            steps: cp.steps,
            stats: cp.stats,
        }
    }

    pub fn multiset_size(&self) -> usize {
        self.elements.len()
    }
}

fn make_element<T: Target>(target: &T, g: &dyn Instrumental, theta: Vec<f64>, latent: &T::Latent) -> Element<T::Eval> {
    let eval = target.evaluate(&theta);
    let log_f = target.log_element(&theta, eval.as_ref(), latent);
    let log_g = g.log_density(&theta);
    Element {
        theta,
        eval,
        log_f,
        log_g,
    }
}

/// Mixture terms `log F(θ_m, L) + Σ_{l≠m} log g(θ_l)`.
///
/// The exclusion sums are built from prefix and suffix sums, so with a single
/// element the term is exactly `log F`.
pub fn mixture_terms(log_f: &[f64], log_g: &[f64]) -> Vec<f64> {
    let m = log_f.len();
    let mut suffix = vec![0.0; m + 1];
    for i in (0..m).rev() {
        suffix[i] = suffix[i + 1] + log_g[i];
    }
    let mut prefix = 0.0;
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        out.push(log_f[i] + (prefix + suffix[i + 1]));
        prefix += log_g[i];
    }
    out
}

fn terms_of<E>(elements: &[Element<E>]) -> Vec<f64> {
    let f: Vec<f64> = elements.iter().map(|e| e.log_f).collect();
    let g: Vec<f64> = elements.iter().map(|e| e.log_g).collect();
    mixture_terms(&f, &g)
}

/// `log π(Θ, L) = log A(L) + log[(1/M) Σ_m F(θ_m, L) Π_{l≠m} g(θ_l)]`.
pub fn gmss_sampling_log_density<T: Target>(state: &LiveState<T>, target: &T) -> f64 {
    let m = state.elements.len() as f64;
    let mix = log_sum_exp(&terms_of(&state.elements));
    if mix == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    target.log_shared(&state.latent) + mix - m.ln()
}

/// Importance weights `w_m ∝ F(θ_m) Π_{l≠m} g(θ_l)`, summing to one.
pub fn compute_weights<T: Target>(state: &LiveState<T>) -> Result<Vec<f64>> {
    normalized_weights(&terms_of(&state.elements))
}

/// Draws starting points: distinct high-prospect cells when the instrumental
/// carries a prospect map, prior draws otherwise.
pub fn initialize<T: Target>(
    target: &T,
    g: &dyn Instrumental,
    cfg: &SamplerConfig,
) -> Result<LiveState<T>> {
    let mut rng = ChainRng::seed_from_u64(cfg.seed);
    let latent = target.initial_latent();
    let dim = target.dim();
    let mut elements = Vec::with_capacity(cfg.multiset_size);
    let mut used_cells = std::collections::HashSet::new();
    let attempts = cfg.init_attempts.max(1);

    for m in 0..cfg.multiset_size {
        let mut chosen = None;
        if let Some((map, bounds)) = g.prospect() {
            if map.high_volume() > 0.0 {
                for _ in 0..attempts {
                    let u: Vec<f64> = (0..dim).map(|_| 1.0 - rng.random::<f64>()).collect();
                    if !map.is_high_unchecked(&u) {
                        continue;
                    }
                    let levels: Vec<usize> = u.iter().map(|&x| u_q(x, map.q()).unwrap_or(1)).collect();
                    let cell = cell_index(&levels, map.q());
                    if used_cells.contains(&cell) {
                        continue;
                    }
                    let theta = bounds.to_natural(&u);
                    if !target.in_support(&theta) {
                        continue;
                    }
                    let el = make_element(target, g, theta, &latent);
                    if el.log_f.is_finite() && el.log_g.is_finite() {
                        used_cells.insert(cell);
                        chosen = Some(el);
                        break;
                    }
                }
            }
        }
        if chosen.is_none() {
            for _ in 0..attempts {
                let theta = target.sample_prior(&mut rng);
                if !target.in_support(&theta) {
                    continue;
                }
                let el = make_element(target, g, theta, &latent);
                if el.log_f.is_finite() && el.log_g.is_finite() {
                    chosen = Some(el);
                    break;
                }
            }
        }
        match chosen {
            Some(el) => elements.push(el),
            None => {
                return Err(Error::Compute(format!(
                    "initialization failed for element {m}: no draw inside the parameter bounds \
                     with finite density and finite instrumental density after {attempts} attempts"
                )))
            }
        }
    }

    let groups = target.latent_blocks().iter().map(|b| b.group + 1).max().unwrap_or(0);
    Ok(LiveState {
        elements,
        latent,
        iteration: 0,
        rng,
        steps: cfg.steps.clone(),
        stats: AcceptanceStats::new(dim, groups.max(cfg.steps.latent.len())),
    })
}

/// The generalized multiset sampler.
pub struct Gmss<'a, T: Target> {
    pub target: &'a T,
    pub instrumental: &'a dyn Instrumental,
    pub cfg: SamplerConfig,
}

impl<'a, T: Target> Gmss<'a, T> {
    pub fn new(target: &'a T, instrumental: &'a dyn Instrumental, cfg: SamplerConfig) -> Result<Self> {
        let groups = target.latent_blocks().iter().map(|b| b.group + 1).max().unwrap_or(0);
        cfg.validate(target.dim(), groups)?;
        Ok(Self {
            target,
            instrumental,
            cfg,
        })
    }

    pub fn initialize(&self) -> Result<LiveState<T>> {
        initialize(self.target, self.instrumental, &self.cfg)
    }

    /// Step 1: one coordinate of one element at a time, for every element.
    pub fn step_theta(&self, state: &mut LiveState<T>) {
        let dim = self.target.dim();
        let mut terms = terms_of(&state.elements);
        let mut current = log_sum_exp(&terms);
        for m in 0..state.elements.len() {
            for j in 0..dim {
                let z: f64 = state.rng.sample(StandardNormal);
                let mut theta = state.elements[m].theta.clone();
                theta[j] += state.steps.theta[j] * z;
                if !self.target.in_support(&theta) {
                    state.stats.record_theta(j, false);
                    continue;
                }
                let eval = self.target.evaluate(&theta);
                let log_f = self.target.log_element(&theta, eval.as_ref(), &state.latent);
                let log_g = self.instrumental.log_density(&theta);

                let mut f: Vec<f64> = state.elements.iter().map(|e| e.log_f).collect();
                let mut g: Vec<f64> = state.elements.iter().map(|e| e.log_g).collect();
                f[m] = log_f;
                g[m] = log_g;
                let proposed_terms = mixture_terms(&f, &g);
                let proposed = log_sum_exp(&proposed_terms);

                let ok = accept(&mut state.rng, proposed - current);
                state.stats.record_theta(j, ok);
                if ok {
                    state.elements[m] = Element {
                        theta,
                        eval,
                        log_f,
                        log_g,
                    };
                    terms = proposed_terms;
                    current = proposed;
                }
            }
        }
        debug_assert_eq!(terms.len(), state.elements.len());
    }

    /// Steps 2 and 3 (and the optional σ² step): one joint proposal per latent block.
    pub fn step_latent(&self, state: &mut LiveState<T>) {
        for (b, block) in self.target.latent_blocks().iter().enumerate() {
            self.step_latent_block(state, b, block.group);
        }
    }

    pub fn step_latent_block(&self, state: &mut LiveState<T>, block: usize, group: usize) {
        let steps = state.steps.latent[group].clone();
        let Some(proposal) = self.target.propose_latent(block, &state.latent, &steps, &mut state.rng) else {
            state.stats.record_latent(group, false);
            return;
        };
        let new_f: Vec<f64> = state
            .elements
            .iter()
            .map(|e| self.target.log_element(&e.theta, e.eval.as_ref(), &proposal))
            .collect();
        let g: Vec<f64> = state.elements.iter().map(|e| e.log_g).collect();
        let old_f: Vec<f64> = state.elements.iter().map(|e| e.log_f).collect();
        let proposed = self.target.log_shared(&proposal) + log_sum_exp(&mixture_terms(&new_f, &g));
        let current = self.target.log_shared(&state.latent) + log_sum_exp(&mixture_terms(&old_f, &g));
        let ok = accept(&mut state.rng, proposed - current);
        state.stats.record_latent(group, ok);
        if ok {
            state.latent = proposal;
            for (e, f) in state.elements.iter_mut().zip(new_f) {
                e.log_f = f;
            }
        }
    }

    /// One full sweep; returns the weighted sample when the iteration is retained.
    pub fn iterate(&self, state: &mut LiveState<T>) -> Result<Option<WeightedSample>> {
        if self.cfg.update_theta {
            self.step_theta(state);
        }
        if self.cfg.update_latent {
            self.step_latent(state);
        }
        state.iteration += 1;
        if self.cfg.adapt
            && state.iteration <= self.cfg.burn_in
            && state.iteration % self.cfg.adapt_interval == 0
        {
            state.stats.adapt(&mut state.steps, self.cfg.target_acceptance);
        }
        if !self.cfg.is_retained(state.iteration) {
            return Ok(None);
        }
        Ok(Some(self.snapshot(state)?))
    }

    pub fn snapshot(&self, state: &LiveState<T>) -> Result<WeightedSample> {
        let weights = compute_weights(state)?;
        Ok(make_sample(self.target, state, weights))
    }

    /// Iterates until `cfg.iterations`, streaming retained samples to `sink`.
    /// `on_checkpoint` is called every `checkpoint_every` iterations (0: never).
    pub fn run(
        &self,
        state: &mut LiveState<T>,
        sink: &mut dyn SampleSink,
        checkpoint_every: usize,
        on_checkpoint: &mut dyn FnMut(&LiveState<T>, &mut dyn SampleSink) -> Result<()>,
    ) -> Result<()> {
        while state.iteration < self.cfg.iterations {
            if let Some(s) = self.iterate(state)? {
                sink.push(s)?;
            }
            if checkpoint_every > 0 && state.iteration % checkpoint_every == 0 {
                on_checkpoint(state, sink)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn make_sample<T: Target>(target: &T, state: &LiveState<T>, weights: Vec<f64>) -> WeightedSample {
    let mut leading = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > weights[leading] {
            leading = i;
        }
    }
    WeightedSample {
        iteration: state.iteration,
        leading,
        latent: target.latent_values(&state.latent),
        thetas: state.elements.iter().map(|e| e.theta.clone()).collect(),
        log_f: state.elements.iter().map(|e| e.log_f).collect(),
        weights,
    }
}
