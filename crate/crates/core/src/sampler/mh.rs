use rand::Rng;
use rand_distr::StandardNormal;

use super::gmss::{initialize, make_sample, Element, LiveState};
use super::{accept, Instrumental, SampleSink, SamplerConfig, Target, WeightedSample};
use crate::error::{Error, Result};

/// Placeholder instrumental so that initialization follows the same path
/// (and draws) as the multiset sampler.
struct Unit;

impl Instrumental for Unit {
    fn log_density(&self, _theta: &[f64]) -> f64 {
        0.0
    }
}

/// Single-chain Metropolis-within-Gibbs: a scan over `θ_j`, then one joint
/// proposal per latent block.
pub struct StandardMh<'a, T: Target> {
    pub target: &'a T,
    pub cfg: SamplerConfig,
}

impl<'a, T: Target> StandardMh<'a, T> {
    pub fn new(target: &'a T, mut cfg: SamplerConfig) -> Result<Self> {
        if cfg.multiset_size != 1 {
            return Err(Error::Config(vec![format!(
                "sampler.multiset_size: the single-chain sampler needs 1, got {}",
                cfg.multiset_size
            )]));
        }
        cfg.multiset_size = 1;
        let groups = target.latent_blocks().iter().map(|b| b.group + 1).max().unwrap_or(0);
        cfg.validate(target.dim(), groups)?;
        Ok(Self { target, cfg })
    }

    pub fn initialize(&self) -> Result<LiveState<T>> {
        initialize(self.target, &Unit, &self.cfg)
    }

    fn current(state: &LiveState<T>) -> &Element<T::Eval> {
        &state.elements[0]
    }

    pub fn step_theta(&self, state: &mut LiveState<T>) {
        for j in 0..self.target.dim() {
            let z: f64 = state.rng.sample(StandardNormal);
            let mut theta = Self::current(state).theta.clone();
            theta[j] += state.steps.theta[j] * z;
            if !self.target.in_support(&theta) {
                state.stats.record_theta(j, false);
                continue;
            }
            let eval = self.target.evaluate(&theta);
            let log_f = self.target.log_element(&theta, eval.as_ref(), &state.latent);
            let log_a = log_f - Self::current(state).log_f;
            let ok = accept(&mut state.rng, log_a);
            state.stats.record_theta(j, ok);
            if ok {
                state.elements[0] = Element {
                    theta,
                    eval,
                    log_f,
                    log_g: 0.0,
                };
            }
        }
    }

    pub fn step_latent(&self, state: &mut LiveState<T>) {
        for (b, block) in self.target.latent_blocks().iter().enumerate() {
            let steps = state.steps.latent[block.group].clone();
            let Some(proposal) = self.target.propose_latent(b, &state.latent, &steps, &mut state.rng) else {
                state.stats.record_latent(block.group, false);
                continue;
            };
            let el = Self::current(state);
            let new_f = self.target.log_element(&el.theta, el.eval.as_ref(), &proposal);
            let proposed = self.target.log_shared(&proposal) + new_f;
            let current = self.target.log_shared(&state.latent) + el.log_f;
            let ok = accept(&mut state.rng, proposed - current);
            state.stats.record_latent(block.group, ok);
            if ok {
                state.latent = proposal;
                state.elements[0].log_f = new_f;
            }
        }
    }

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
        Ok(Some(make_sample(self.target, state, vec![1.0])))
    }

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
