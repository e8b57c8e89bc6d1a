mod common;

use std::sync::Arc;

use oscal_core::bounds::ParamBounds;
use oscal_core::data::simulate;
use oscal_core::model::{HierarchicalModel, LatentSpectra, PositivePrior, SpectrumSource};
use oscal_core::ode::REFERENCE_THETA;
use oscal_core::sampler::toy::{GaussianMixtureTarget, StartAt};
use oscal_core::sampler::{
    compute_weights, estimate, estimate_with_error, AcceptanceStats, ChainRng, Checkpoint, Element, Gmss,
    Instrumental, LiveState, SamplerConfig, StandardMh, StepSizes, Target, UniformInstrumental, WeightedSample,
};
use oscal_core::{OdeSettings, ThetaVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn quiet(mut cfg: SamplerConfig) -> SamplerConfig {
    cfg.burn_in = 0;
    cfg.thin = 1;
    cfg.adapt = false;
    cfg
}

fn run_gmss<T: Target>(target: &T, g: &dyn Instrumental, cfg: SamplerConfig) -> (Vec<WeightedSample>, LiveState<T>) {
    let s = Gmss::new(target, g, cfg).unwrap();
    let mut st = s.initialize().unwrap();
    let mut out = Vec::new();
    s.run(&mut st, &mut out, 0, &mut |_, _| Ok(())).unwrap();
    (out, st)
}

fn run_mh<T: Target>(target: &T, cfg: SamplerConfig) -> (Vec<WeightedSample>, LiveState<T>) {
    let s = StandardMh::new(target, cfg).unwrap();
    let mut st = s.initialize().unwrap();
    let mut out = Vec::new();
    s.run(&mut st, &mut out, 0, &mut |_, _| Ok(())).unwrap();
    (out, st)
}

fn assert_normalized(samples: &[WeightedSample]) {
    for s in samples {
        let total: f64 = s.weights.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12, "iteration {}: {total}", s.iteration);
        assert!(s.weights.iter().all(|w| *w >= 0.0));
    }
    if !samples.is_empty() {
        assert_eq!(estimate(|_| 1.0, samples).unwrap(), 1.0);
    }
}

/// Piecewise-constant densities on `(0, 5]`, one level per unit cell.
struct Steps {
    f: [f64; 5],
    bounds: ParamBounds,
}

fn cell(x: f64) -> usize {
    ((x.ceil() as usize).clamp(1, 5)) - 1
}

impl Steps {
    fn new(f: [f64; 5]) -> Self {
        Self { f, bounds: ParamBounds::cube(1, 0.0, 5.0).unwrap() }
    }
}

impl Target for Steps {
    type Eval = ();
    type Latent = ();
    fn dim(&self) -> usize {
        1
    }
    fn in_support(&self, theta: &[f64]) -> bool {
        self.bounds.contains(theta)
    }
    fn evaluate(&self, _theta: &[f64]) -> Option<()> {
        Some(())
    }
    fn log_element(&self, theta: &[f64], _eval: Option<&()>, _latent: &()) -> f64 {
        self.f[cell(theta[0])].ln()
    }
    fn log_shared(&self, _latent: &()) -> f64 {
        0.0
    }
    fn initial_latent(&self) {}
    fn sample_prior(&self, rng: &mut ChainRng) -> Vec<f64> {
        vec![5.0 * (1.0 - rng.random::<f64>())]
    }
}

struct StepG([f64; 5]);

impl Instrumental for StepG {
    fn log_density(&self, theta: &[f64]) -> f64 {
        if theta[0] > 0.0 && theta[0] <= 5.0 {
            self.0[cell(theta[0])].ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[test]
fn single_element_with_uniform_instrumental_is_standard_mh() {
    let target = GaussianMixtureTarget::two_modes(3, 2.0, 6.0).unwrap();
    let g = UniformInstrumental::new(target.bounds().clone());
    let steps = StepSizes { theta: vec![0.8; 3], latent: vec![] };
    let cfg = SamplerConfig::new(1, 3000, steps, 11);
    let (a, sa) = run_gmss(&target, &g, cfg.clone());
    let (b, sb) = run_mh(&target, cfg);
    assert_eq!(sa.stats, sb.stats);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.thetas, y.thetas);
        assert_eq!(x.log_f, y.log_f);
        assert_eq!(x.weights, vec![1.0]);
    }
}

#[test]
fn hierarchical_reduction_matches_bitwise() {
    let src = SpectrumSource::Custom(Arc::new(|t: &[f64]| Some(vec![t[0], t[1] * t[0]])));
    let model = HierarchicalModel::new(vec![vec![1.0, 0.4], vec![0.8, 0.5]], 12, 0.3, ParamBounds::cube(2, 0.0, 5.0).unwrap(), src)
        .unwrap()
        .with_tau2_init(0.5);
    let g = UniformInstrumental::new(ParamBounds::cube(2, 0.0, 5.0).unwrap());
    let cfg = SamplerConfig::new(1, 2000, model.default_steps(), 5);
    let (a, sa) = run_gmss(&model, &g, cfg.clone());
    let (b, sb) = run_mh(&model, cfg);
    assert_eq!(sa.stats, sb.stats);
    assert_eq!(a, b);
}

#[test]
fn step_one_matches_hand_arithmetic() {
    let f = [0.5, 2.0, 1.0, 0.25, 3.0];
    let gv = [1.0, 0.2, 0.6, 1.5, 0.7];
    let target = Steps::new(f);
    let g = StepG(gv);
    let mut checked = 0;
    for seed in 0..400u64 {
        let mut cfg = quiet(SamplerConfig::new(2, 1, StepSizes { theta: vec![1.7], latent: vec![] }, seed));
        cfg.update_latent = false;
        let s = Gmss::new(&target, &g, cfg).unwrap();
        let mut st = s.initialize().unwrap();
        let mut x = [st.elements[0].theta[0], st.elements[1].theta[0]];
        let mut rng = st.rng.clone();
        for m in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            let prop = x[m] + 1.7 * z;
            if !(prop > 0.0 && prop <= 5.0) {
                continue;
            }
            let u: f64 = rng.random();
            let (o, om) = (x[m], x[1 - m]);
            // (f(θ_m') g(θ_o) + f(θ_o) g(θ_m')) / (f(θ_m) g(θ_o) + f(θ_o) g(θ_m))
            let num = f[cell(prop)] * gv[cell(om)] + f[cell(om)] * gv[cell(prop)];
            let den = f[cell(o)] * gv[cell(om)] + f[cell(om)] * gv[cell(o)];
            if num / den >= 1.0 || u < num / den {
                x[m] = prop;
            }
            checked += 1;
        }
        s.step_theta(&mut st);
        assert_eq!([st.elements[0].theta[0], st.elements[1].theta[0]], x, "seed {seed}");
    }
    assert!(checked > 400);
}

#[test]
fn step_one_is_reversible_on_five_cells() {
    let f = [1.0, 3.0, 0.5, 2.0, 1.5];
    let target = Steps::new(f);
    let g = UniformInstrumental::new(ParamBounds::cube(1, 0.0, 5.0).unwrap());
    let mut cfg = quiet(SamplerConfig::new(1, 400_000, StepSizes { theta: vec![1.2], latent: vec![] }, 3));
    cfg.update_latent = false;
    let (samples, _) = run_gmss(&target, &g, cfg);
    let mut n = [[0u64; 5]; 5];
    for w in samples.windows(2) {
        n[cell(w[0].thetas[0][0])][cell(w[1].thetas[0][0])] += 1;
    }
    let (mut stat, mut df) = (0.0, 0.0);
    for i in 0..5 {
        for j in i + 1..5 {
            let (a, b) = (n[i][j] as f64, n[j][i] as f64);
            if a + b > 0.0 {
                stat += (a - b).powi(2) / (a + b);
                df += 1.0;
            }
        }
    }
    let p = common::chi2_sf(stat, df);
    assert!(p > 0.01, "flow asymmetry chi2 {stat} on {df} dof, p = {p}");
}

#[test]
fn two_element_multiset_has_the_mixture_stationary_law() {
    let f = [1.0, 3.0, 0.5, 2.0, 1.5];
    let gv = [2.0, 0.5, 1.0, 1.0, 0.5];
    let target = Steps::new(f);
    let g = StepG(gv);
    let mut cfg = quiet(SamplerConfig::new(2, 600_000, StepSizes { theta: vec![1.5], latent: vec![] }, 8));
    cfg.update_latent = false;
    cfg.thin = 6;
    let (samples, _) = run_gmss(&target, &g, cfg);
    let mut counts = [[0u64; 5]; 5];
    for s in &samples {
        counts[cell(s.thetas[0][0])][cell(s.thetas[1][0])] += 1;
    }
    let mut expected = [[0.0; 5]; 5];
    let mut z = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            expected[i][j] = f[i] * gv[j] + f[j] * gv[i];
            z += expected[i][j];
        }
    }
    let n = samples.len() as f64;
    let mut stat = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let e = n * expected[i][j] / z;
            stat += (counts[i][j] as f64 - e).powi(2) / e;
        }
    }
    let p = common::chi2_sf(stat, 24.0);
    assert!(p > 0.01, "chi2 {stat}, p = {p}");
    assert_normalized(&samples);
}

fn toy_model(cache: bool) -> HierarchicalModel {
    let ode = OdeSettings::default();
    let (data, _) = simulate(&ThetaVector::new(REFERENCE_THETA, 1.0).unwrap(), &ode, 2, 0.05, 4).unwrap();
    let src = SpectrumSource::Ode { settings: ode.clone(), c: 1.0 };
    let bounds = ParamBounds::from_pairs(&oscal_core::config::default_bounds()).unwrap();
    HierarchicalModel::new(data.spectra(5).unwrap(), ode.n_points, 0.0025, bounds, src).unwrap().with_cache(cache)
}

#[test]
fn disabling_the_cache_changes_no_decision() {
    let on = toy_model(true);
    let off = toy_model(false);
    let g = UniformInstrumental::new(on.bounds().clone());
    let cfg = quiet(SamplerConfig::new(3, 25, on.default_steps(), 2));
    let (a, sa) = run_gmss(&on, &g, cfg.clone());
    let (b, sb) = run_gmss(&off, &g, cfg);
    assert_eq!(sa.stats, sb.stats);
    assert_eq!(a, b);
    assert_eq!(on.cache().misses(), off.cache().misses());
    assert_eq!(off.cache().hits(), 0);
    assert_normalized(&a);
}

#[test]
fn estimator_error_shrinks_like_inverse_root_b() {
    let target = GaussianMixtureTarget::two_modes(1, 1.5, 8.0).unwrap();
    let g = UniformInstrumental::new(target.bounds().clone());
    let sizes = [1_000usize, 3_000, 10_000, 30_000, 100_000];
    let chains = 96;
    let mut sq = vec![0.0; sizes.len()];
    let mut bias = 0.0;
    for c in 0..chains {
        let mut cfg = SamplerConfig::new(4, 101_000, StepSizes { theta: vec![1.5], latent: vec![] }, 100 + c);
        cfg.burn_in = 1_000;
        cfg.thin = 1;
        let (samples, _) = run_gmss(&target, &g, cfg);
        assert_normalized(&samples);
        for (i, &b) in sizes.iter().enumerate() {
            let e = estimate(|t| t[0], &samples[..b]).unwrap();
            sq[i] += e * e;
            if i == sizes.len() - 1 {
                bias += e / chains as f64;
            }
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|b| (*b as f64).ln()).collect();
    let ys: Vec<f64> = sq.iter().map(|s| (s / chains as f64).sqrt().ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}, log rmse {ys:?}, mean {bias}");
}

#[test]
fn mixture_moments_within_three_standard_errors() {
    let target = GaussianMixtureTarget::two_modes(2, 2.0, 8.0).unwrap();
    let g = UniformInstrumental::new(target.bounds().clone());
    let mut cfg = SamplerConfig::new(4, 60_000, StepSizes { theta: vec![1.0; 2], latent: vec![] }, 21);
    cfg.thin = 5;
    let (samples, _) = run_gmss(&target, &g, cfg);
    assert_normalized(&samples);
    let mean = target.mean();
    let second = target.second_moment();
    for j in 0..2 {
        let (e, se) = estimate_with_error(|t| t[j], &samples).unwrap();
        assert!((e - mean[j]).abs() < 3.0 * se, "mean {j}: {e} vs {} (se {se})", mean[j]);
        let (e, se) = estimate_with_error(|t| t[j] * t[j], &samples).unwrap();
        assert!((e - second[j]).abs() < 3.0 * se, "second moment {j}: {e} vs {} (se {se})", second[j]);
    }
}

#[test]
fn different_seeds_agree_within_error() {
    let target = GaussianMixtureTarget::two_modes(2, 2.0, 8.0).unwrap();
    let g = UniformInstrumental::new(target.bounds().clone());
    let make = |seed| {
        let mut cfg = SamplerConfig::new(3, 40_000, StepSizes { theta: vec![1.0; 2], latent: vec![] }, seed);
        cfg.thin = 5;
        run_gmss(&target, &g, cfg).0
    };
    let a = make(1);
    let b = make(2);
    assert_ne!(a, b);
    let (ea, sa) = estimate_with_error(|t| t[0] * t[0], &a).unwrap();
    let (eb, sb) = estimate_with_error(|t| t[0] * t[0], &b).unwrap();
    assert!((ea - eb).abs() < 4.0 * (sa * sa + sb * sb).sqrt(), "{ea} vs {eb}");
}

#[test]
fn zero_iterations_give_an_empty_chain() {
    let target = GaussianMixtureTarget::two_modes(2, 2.0, 8.0).unwrap();
    let g = UniformInstrumental::new(target.bounds().clone());
    let (samples, st) = run_gmss(&target, &g, SamplerConfig::new(4, 0, StepSizes { theta: vec![1.0; 2], latent: vec![] }, 1));
    assert!(samples.is_empty());
    assert_eq!(st.iteration, 0);
    assert_eq!(st.elements.len(), 4);
    assert!(st.elements.iter().all(|e| e.log_f.is_finite()));
}

#[test]
fn leading_index_per_retained_iteration() {
    let target = GaussianMixtureTarget::two_modes(2, 2.0, 8.0).unwrap();
    let g = UniformInstrumental::new(target.bounds().clone());
    let mut cfg = SamplerConfig::new(20, 300, StepSizes { theta: vec![1.0; 2], latent: vec![] }, 1);
    cfg.thin = 3;
    let (samples, _) = run_gmss(&target, &g, cfg.clone());
    let retained = (1..=300).filter(|i| cfg.is_retained(*i)).count();
    assert_eq!(samples.len(), retained);
    for s in &samples {
        let best = s.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.weights[s.leading], best);
        assert!(s.leading < 20);
    }
}

#[test]
fn single_chain_recovers_a_gaussian_mean() {
    let bounds = ParamBounds::cube(2, -10.0, 10.0).unwrap();
    let target = GaussianMixtureTarget::new(vec![vec![1.0, -2.0]], vec![1.0], 1.0, bounds).unwrap();
    let mut cfg = SamplerConfig::new(1, 60_000, StepSizes { theta: vec![1.0; 2], latent: vec![] }, 9);
    cfg.thin = 5;
    let (samples, _) = run_mh(&target, cfg);
    for (j, want) in [1.0, -2.0].into_iter().enumerate() {
        let (e, se) = estimate_with_error(|t| t[j], &samples).unwrap();
        assert!((e - want).abs() < 3.0 * se, "{e} vs {want} (se {se})");
    }
}

#[test]
fn multiset_finds_both_separated_modes_where_mh_stays() {
    let target = common::diagonal_modes(2, 12.0, 10.0);
    let c = target.means()[0].clone();
    let steps = StepSizes { theta: vec![1.0; 2], latent: vec![] };

    let stuck = StartAt { inner: target.clone(), start: c };
    let (mh, _) = run_mh(&stuck, SamplerConfig::new(1, 30_000, steps.clone(), 4));
    assert!(common::upper_mass(&mh) < 0.01, "MH upper mass {}", common::upper_mass(&mh));

    let g = common::toy_prospect(&target, 20_000, 4, 2, 0.01, 6);
    let (gm, _) = run_gmss(&target, &g, SamplerConfig::new(5, 30_000, steps, 4));
    let up = common::upper_mass(&gm);
    assert!(up > 0.2 && up < 0.8, "GMSS upper mass {up}");
    assert_normalized(&gm);
}

#[test]
fn latent_spectrum_step_matches_rejection_sampler() {
    let (s_hat, lambda, tau2, sigma2, t) = (1.0, 0.8, 0.09, 0.5, 10usize);
    let v = 2.0 * sigma2 / t as f64;
    let src = SpectrumSource::Custom(Arc::new(|th: &[f64]| Some(vec![th[0]])));
    let model = HierarchicalModel::new(vec![vec![s_hat]], t, sigma2, ParamBounds::cube(1, 0.0, 10.0).unwrap(), src)
        .unwrap()
        .with_tau2_init(tau2);
    struct Fixed;
    impl Instrumental for Fixed {
        fn log_density(&self, _t: &[f64]) -> f64 {
            0.0
        }
    }
    let start = StartAt { inner: model, start: vec![lambda] };
    let mut cfg = SamplerConfig::new(1, 300_000, StepSizes { theta: vec![0.0], latent: vec![vec![0.3], vec![0.0]] }, 12);
    cfg.update_theta = false;
    cfg.adapt = false;
    cfg.burn_in = 2_000;
    cfg.thin = 25;
    let (samples, _) = run_gmss(&start, &Fixed, cfg);
    let mcmc: Vec<f64> = samples.iter().map(|s| s.latent[2]).collect();
    assert!(samples.iter().all(|s| s.latent[0] == tau2));

    // envelope: N⁺(λ, τ²) proposals, accept by f(ŝ | s) / max f
    let log_f = |s: f64| common::ncx2_series_200(s_hat, s, v);
    let fmax = (1..20_000).map(|i| log_f(i as f64 * 1e-3)).fold(f64::NEG_INFINITY, f64::max) + 0.01;
    let mut rng = ChainRng::seed_from_u64(77);
    let mut exact = Vec::new();
    while exact.len() < 20_000 {
        let s = lambda + tau2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if s <= 0.0 {
            continue;
        }
        if rng.random::<f64>().ln() < log_f(s) - fmax {
            exact.push(s);
        }
    }
    let d = common::ks_two_sample(&mcmc, &exact);
    let n_eff = (mcmc.len() * exact.len()) as f64 / (mcmc.len() + exact.len()) as f64;
    let p = common::ks_p_value(d, n_eff);
    assert!(p > 0.01, "D = {d}, p = {p}");
}

#[test]
fn tau2_step_matches_grid_posterior() {
    let s_hat = vec![1.0, 0.5, 2.0, 0.3, 1.1, 0.9, 1.6, 0.7];
    let lambda = vec![0.6, 0.9, 1.2, 0.5, 1.5, 0.4, 1.3, 1.0];
    let lam = lambda.clone();
    let src = SpectrumSource::Custom(Arc::new(move |_: &[f64]| Some(lam.clone())));
    let (a, b) = (2.0, 0.5);
    let model = HierarchicalModel::new(vec![s_hat.clone()], 40, 0.1, ParamBounds::cube(1, 0.0, 1.0).unwrap(), src)
        .unwrap()
        .with_priors(PositivePrior::Flat, PositivePrior::InverseGamma { shape: a, scale: b })
        .with_tau2_init(0.3);
    let mut cfg = SamplerConfig::new(1, 200_000, StepSizes { theta: vec![0.0], latent: vec![vec![0.0; 8], vec![0.15]] }, 31);
    cfg.update_theta = false;
    cfg.adapt = false;
    cfg.burn_in = 2_000;
    cfg.thin = 20;
    let g = UniformInstrumental::new(ParamBounds::cube(1, 0.0, 1.0).unwrap());
    let (samples, _) = run_gmss(&model, &g, cfg);
    let draws: Vec<f64> = samples.iter().map(|s| s.latent[0]).collect();

    use statrs::distribution::{ContinuousCDF, Normal};
    let std = Normal::new(0.0, 1.0).unwrap();
    let log_post = |t2: f64| {
        let tau = t2.sqrt();
        let lik: f64 = s_hat
            .iter()
            .zip(&lambda)
            .map(|(s, l)| -0.5 * t2.ln() - (s - l) * (s - l) / (2.0 * t2) - std.cdf(l / tau).ln())
            .sum();
        lik - (a + 1.0) * t2.ln() - b / t2
    };
    let h = 1e-4;
    let grid: Vec<f64> = (1..200_000).map(|i| i as f64 * h).collect();
    let peak = grid.iter().map(|x| log_post(*x)).fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = grid.iter().map(|x| (log_post(*x) - peak).exp()).collect();
    let mut cdf = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
    }
    let total = *cdf.last().unwrap();
    let cdf_at = |x: f64| {
        let i = ((x / h) as usize).saturating_sub(1).min(grid.len() - 2);
        let w = (x - grid[i]) / h;
        ((1.0 - w) * cdf[i] + w * cdf[i + 1]) / total
    };
    let d = common::ks_distance(&draws, cdf_at);
    let p = common::ks_p_value(d, draws.len() as f64);
    assert!(p > 0.01, "D = {d}, p = {p}");
}

#[test]
fn resumed_chain_continues_exactly() {
    let src = SpectrumSource::Custom(Arc::new(|t: &[f64]| Some(vec![t[0], t[1]])));
    let model = HierarchicalModel::new(vec![vec![1.0, 0.4]], 12, 0.3, ParamBounds::cube(2, 0.0, 5.0).unwrap(), src).unwrap();
    let g = UniformInstrumental::new(ParamBounds::cube(2, 0.0, 5.0).unwrap());
    let mut cfg = SamplerConfig::new(3, 400, model.default_steps(), 19);
    cfg.thin = 2;
    let (whole, _) = run_gmss(&model, &g, cfg.clone());

    let s = Gmss::new(&model, &g, cfg).unwrap();
    let mut st = s.initialize().unwrap();
    let mut first = Vec::new();
    let mut saved = None;
    s.run(&mut st, &mut first, 150, &mut |st, _| {
        if saved.is_none() {
            saved = Some(serde_json::to_string(&st.checkpoint()).unwrap());
        }
        Ok(())
    })
    .unwrap();
    let cp: Checkpoint<LatentSpectra> = serde_json::from_str(&saved.unwrap()).unwrap();
    assert_eq!(cp.iteration, 150);
    let mut resumed = LiveState::from_checkpoint(cp, &model, &g);
    let mut rest: Vec<WeightedSample> = whole.iter().filter(|w| w.iteration <= 150).cloned().collect();
    s.run(&mut resumed, &mut rest, 0, &mut |_, _| Ok(())).unwrap();
    for (a, b) in rest.iter().zip(&whole) {
        assert_eq!(a, b, "iteration {}", b.iteration);
    }
    assert_eq!(rest.len(), whole.len());
}

proptest! {
    #[test]
    fn weights_are_normalized(terms in prop::collection::vec((-700.0f64..10.0, -50.0f64..5.0), 1..25)) {
        let st: LiveState<GaussianMixtureTarget> = LiveState {
            elements: terms.iter().map(|(f, g)| Element { theta: vec![0.0], eval: Some(()), log_f: *f, log_g: *g }).collect(),
            latent: (),
            iteration: 0,
            rng: ChainRng::seed_from_u64(0),
            steps: StepSizes { theta: vec![0.0], latent: vec![] },
            stats: AcceptanceStats::default(),
        };
        let w = compute_weights(&st).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        let sample = WeightedSample {
            iteration: 1,
            leading: 0,
            latent: vec![],
            thetas: vec![vec![0.0]; w.len()],
            log_f: vec![0.0; w.len()],
            weights: w,
        };
        prop_assert_eq!(estimate(|_| 1.0, &[sample.clone(), sample]).unwrap(), 1.0);
    }
}
