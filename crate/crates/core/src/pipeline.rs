//! The five pipeline stages behind the command-line tool.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, InstrumentalKind, RunConfig};
use crate::data::{load_data, simulate, write_data, ReplicateSeries, Truth};
use crate::error::{Error, Result};
use crate::intervention::{
    cap_draws, dominant_period, flatten_samples, intervention_estimate, pairwise_heatmap, write_heatmap,
    write_sensitivity, FeatureDistribution, InterventionPlan, OdeFeature,
};
use crate::io::{read_header, read_lines, write_atomic, write_header_with, FileHeader};
use crate::model::{HierarchicalModel, LatentSpectra, SpectrumSource};
use crate::ode::ThetaVector;
use crate::prognostic::{
    classify_prospects, run_sweep, top_fraction_threshold, ProspectMap, ProspectSettings, SweepPlan,
};
use crate::sampler::{
    cumulative_histogram_diagnostic, read_chain, Chain, ChainHeader, ChainWriter, Checkpoint, Gmss,
    Instrumental, LiveState, ProspectInstrumental, SampleSink, SamplerConfig, StandardMh,
    UniformInstrumental, WeightedSample,
};

/// File locations inside the output directory.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub dir: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn sweep(&self) -> PathBuf {
        self.dir.join("sweep.csv")
    }
    pub fn prospect_map(&self) -> PathBuf {
        self.dir.join("prospect_map.txt")
    }
    pub fn chain(&self) -> PathBuf {
        self.dir.join("chain.csv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
    pub fn trace(&self) -> PathBuf {
        self.dir.join("trace.csv")
    }
    pub fn diagnostics(&self) -> PathBuf {
        self.dir.join("diagnostics.csv")
    }
    pub fn summary(&self) -> PathBuf {
        self.dir.join("posterior_summary.csv")
    }
    pub fn sensitivity(&self) -> PathBuf {
        self.dir.join("sensitivity.csv")
    }
    pub fn exceedance(&self) -> PathBuf {
        self.dir.join("exceedance.csv")
    }
    pub fn heatmap(&self) -> PathBuf {
        self.dir.join("heatmap.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.txt")
    }
}

fn paths(cfg: &RunConfig) -> Result<OutputPaths> {
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::io(&cfg.output.dir, e))?;
    Ok(OutputPaths::new(&cfg.output.dir))
}

fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingPrerequisite { path: path.to_path_buf(), producer })
    }
}

fn truth_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_os_string();
    s.push(".truth.toml");
    PathBuf::from(s)
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub data_path: PathBuf,
    pub truth_path: PathBuf,
    pub oscillating: bool,
}

/// Writes synthetic data at `simulate.theta` and a sidecar with the truth.
pub fn simulate_command(cfg: &RunConfig) -> Result<SimulateReport> {
    cfg.validate()?;
    let theta = ThetaVector::from_slice(&cfg.simulate.theta, cfg.model.c)?;
    let (data, oscillating) =
        simulate(&theta, &cfg.ode, cfg.simulate.replicates, cfg.simulate.noise_sd, cfg.seed)?;
    if let Some(dir) = cfg.data.path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let hash = cfg.hash();
    write_data(&cfg.data.path, &data, &hash)?;
    let truth = Truth {
        theta: cfg.simulate.theta.clone(),
        c: cfg.model.c,
        noise_sd: cfg.simulate.noise_sd,
        seed: cfg.seed,
        oscillating,
        config_hash: hash,
    };
    let tp = truth_path(&cfg.data.path);
    let text = toml::to_string(&truth).expect("truth serializes");
    std::fs::write(&tp, text).map_err(|e| Error::io(&tp, e))?;
    Ok(SimulateReport {
        data_path: cfg.data.path.clone(),
        truth_path: tp,
        oscillating,
    })
}

/// Observed data with its spectra and noise variance.
#[derive(Debug, Clone)]
pub struct Observations {
    pub data: ReplicateSeries,
    pub s_hat: Vec<Vec<f64>>,
    pub sigma2: f64,
}

pub fn load_observations(cfg: &RunConfig) -> Result<Observations> {
    require(&cfg.data.path, "simulate")?;
    let data = load_data(&cfg.data.path, cfg.data.k)?;
    if data.len() != cfg.ode.n_points {
        return Err(Error::Data(format!(
            "{} has T={} rows but ode.n_points is {}",
            cfg.data.path.display(),
            data.len(),
            cfg.ode.n_points
        )));
    }
    let s_hat = data.spectra(cfg.data.k)?;
    let sigma2 = match cfg.data.sigma2 {
        Some(s) => s,
        None => data.noise_variance(cfg.data.sigma2_fit_k)?,
    };
    if !(sigma2 > 0.0) {
        return Err(Error::Data("estimated noise variance is zero; set data.sigma2".into()));
    }
    Ok(Observations { data, s_hat, sigma2 })
}

pub fn build_model(cfg: &RunConfig, obs: &Observations) -> Result<HierarchicalModel> {
    let source = SpectrumSource::Ode {
        settings: cfg.ode.clone(),
        c: cfg.model.c,
    };
    let mut model = HierarchicalModel::new(obs.s_hat.clone(), obs.data.len(), obs.sigma2, cfg.bounds()?, source)?
        .with_priors(cfg.model.prior_theta, cfg.model.prior_tau2)
        .with_variance_convention(cfg.model.noise_scale)
        .with_cache(cfg.model.cache);
    if cfg.model.sample_sigma2 {
        model = model.with_sigma2_sampling(cfg.model.prior_sigma2);
    }
    if let Some(t) = cfg.model.tau2_init {
        model = model.with_tau2_init(t);
    }
    Ok(model)
}

pub fn prospect_settings(cfg: &RunConfig) -> ProspectSettings {
    ProspectSettings {
        q: cfg.sweep.q,
        d0: cfg.sweep.d0,
        n_min: cfg.sweep.n_min,
        rho0: cfg.sweep.rho0,
        rho1: cfg.sweep.rho1,
        volume_cap: cfg.sweep.volume_cap,
        volume_mc_points: cfg.sweep.volume_mc_points,
        volume_seed: cfg.seed ^ 0x5eed_0f_u64,
    }
}

#[derive(Debug, Clone)]
pub struct PrognoseReport {
    pub evaluations: usize,
    pub failures: usize,
    pub l_min: f64,
    pub successes: usize,
    pub map: ProspectMap,
}

/// Runs the likelihood sweep and writes the sweep file and the prospect map.
pub fn prognose_command(cfg: &RunConfig, resume: bool) -> Result<PrognoseReport> {
    cfg.validate()?;
    let obs = load_observations(cfg)?;
    let model = build_model(cfg, &obs)?.with_cache(false);
    let bounds = model.bounds().clone();
    let tau2 = cfg.sweep.tau2.unwrap_or(model.tau2_init());
    let out = paths(cfg)?;
    let plan = SweepPlan {
        n_points: cfg.sweep.n_points,
        batch_size: cfg.sweep.batch_size,
        p: bounds.dim(),
        q: cfg.sweep.q,
        design: cfg.sweep.design,
        seed: cfg.seed,
    };
    let score = |u: &[f64]| model.sweep_loglik(&bounds.to_natural(u), tau2);
    let hash = cfg.hash();
    let evals = run_sweep(&plan, &score, &out.sweep(), &hash, resume)?;
    let l_min = cfg
        .sweep
        .l_min
        .unwrap_or_else(|| top_fraction_threshold(&evals, cfg.sweep.l_min_top_fraction));
    let map = classify_prospects(&evals, bounds.dim(), l_min, &prospect_settings(cfg))?;
    map.write(&out.prospect_map(), &hash)?;
    Ok(PrognoseReport {
        evaluations: evals.len(),
        failures: evals.iter().filter(|e| e.loglik.is_none()).count(),
        successes: evals.iter().filter(|e| matches!(e.loglik, Some(v) if v > l_min)).count(),
        l_min,
        map,
    })
}

/// Everything needed to continue a chain exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub chain_position: u64,
    pub state: Checkpoint<LatentSpectra>,
}

pub fn sampler_config(cfg: &RunConfig, model: &HierarchicalModel) -> SamplerConfig {
    let s = &cfg.sampler;
    let mut steps = model.default_steps();
    if let Some(t) = &s.step_theta {
        steps.theta = t.clone();
    }
    if let Some(v) = &s.step_s {
        steps.latent[0] = v.clone();
    }
    if let Some(v) = s.step_tau2 {
        steps.latent[1] = vec![v];
    }
    if let (Some(v), true) = (s.step_sigma2, model.samples_sigma2()) {
        steps.latent[2] = vec![v];
    }
    let m = match s.algorithm {
        Algorithm::Gmss => s.multiset_size,
        Algorithm::Mh => 1,
    };
    let mut sc = SamplerConfig::new(m, s.iterations, steps, cfg.seed);
    sc.burn_in = cfg.burn_in();
    sc.thin = s.thin;
    sc.adapt = s.adapt;
    sc.target_acceptance = s.target_acceptance;
    sc.adapt_interval = s.adapt_interval;
    sc.init_attempts = s.init_attempts;
    sc
}

#[derive(Debug, Clone)]
pub struct CalibrateReport {
    pub retained: usize,
    pub stationary: bool,
    pub theta_acceptance: Vec<f64>,
    pub latent_acceptance: Vec<f64>,
    pub resumed_from: Option<usize>,
}

enum Sampler<'a> {
    Gmss(Gmss<'a, HierarchicalModel>),
    Mh(StandardMh<'a, HierarchicalModel>),
}

/// Runs the configured sampler, streaming the chain and checkpointing.
pub fn calibrate_command(cfg: &RunConfig, resume: bool) -> Result<CalibrateReport> {
    cfg.validate()?;
    let obs = load_observations(cfg)?;
    let model = build_model(cfg, &obs)?;
    let out = paths(cfg)?;
    let hash = cfg.hash();
    let bounds = model.bounds().clone();

    let instrumental: Box<dyn Instrumental> = match (cfg.sampler.algorithm, cfg.sampler.instrumental) {
        (Algorithm::Gmss, InstrumentalKind::Prospect) => {
            require(&out.prospect_map(), "prognose")?;
            let (_, map) = ProspectMap::read(&out.prospect_map())?;
            Box::new(ProspectInstrumental::new(map, bounds.clone())?)
        }
        _ => Box::new(UniformInstrumental::new(bounds.clone())),
    };
    let sc = sampler_config(cfg, &model);
    let sampler = match cfg.sampler.algorithm {
        Algorithm::Gmss => Sampler::Gmss(Gmss::new(&model, instrumental.as_ref(), sc.clone())?),
        Algorithm::Mh => Sampler::Mh(StandardMh::new(&model, sc.clone())?),
    };
    let header = ChainHeader {
        config_hash: hash.clone(),
        algorithm: cfg.sampler.algorithm.name().to_string(),
        multiset_size: sc.multiset_size,
        dim: bounds.dim(),
        latent_columns: crate::sampler::Target::latent_columns(&model),
    };

    let mut resumed_from = None;
    let (mut state, mut writer) = if resume && out.checkpoint().exists() {
        let text = std::fs::read_to_string(out.checkpoint()).map_err(|e| Error::io(out.checkpoint(), e))?;
        let cp: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| Error::format(out.checkpoint(), e.line(), e.to_string()))?;
        if cp.config_hash != hash || cp.algorithm != cfg.sampler.algorithm {
            return Err(Error::Data(format!(
                "{} belongs to a different configuration; rerun without --resume",
                out.checkpoint().display()
            )));
        }
        resumed_from = Some(cp.state.iteration);
        let writer = ChainWriter::resume(&out.chain(), header, cp.chain_position)?;
        (LiveState::from_checkpoint(cp.state, &model, instrumental.as_ref()), writer)
    } else {
        let state = match &sampler {
            Sampler::Gmss(s) => s.initialize()?,
            Sampler::Mh(s) => s.initialize()?,
        };
        (state, ChainWriter::create(&out.chain(), header)?)
    };

    let cp_path = out.checkpoint();
    let algorithm = cfg.sampler.algorithm;
    let mut save = |st: &LiveState<HierarchicalModel>, sink: &mut dyn SampleSink| -> Result<()> {
        sink.flush()?;
        let file = CheckpointFile {
            config_hash: hash.clone(),
            algorithm,
            chain_position: sink.position().unwrap_or(0),
            state: st.checkpoint(),
        };
        let text = serde_json::to_string(&file).expect("checkpoint serializes");
        write_atomic(&cp_path, text.as_bytes())
    };
    let every = cfg.sampler.checkpoint_every;
    match &sampler {
        Sampler::Gmss(s) => s.run(&mut state, &mut writer, every, &mut save)?,
        Sampler::Mh(s) => s.run(&mut state, &mut writer, every, &mut save)?,
    }
    save(&state, &mut writer)?;
    drop(writer);

    let chain = read_chain(&out.chain())?;
    let stationary = write_chain_products(cfg, &out, &chain, &hash)?;
    let theta_acceptance: Vec<f64> = state.stats.theta.iter().map(|c| c.rate()).collect();
    let latent_acceptance: Vec<f64> = state.stats.latent.iter().map(|c| c.rate()).collect();
    write_summary(&out.summary(), &hash, &chain.samples, &bounds, &theta_acceptance)?;
    Ok(CalibrateReport {
        retained: chain.samples.len(),
        stationary,
        theta_acceptance,
        latent_acceptance,
        resumed_from,
    })
}

fn write_chain_products(cfg: &RunConfig, out: &OutputPaths, chain: &Chain, hash: &str) -> Result<bool> {
    let mut trace = Vec::new();
    write_header_with(&mut trace, "trace", hash, &[]).expect("writing to memory");
    writeln!(trace, "iteration,leading,leading_weight").expect("writing to memory");
    for s in &chain.samples {
        writeln!(trace, "{},{},{}", s.iteration, s.leading + 1, s.weights[s.leading]).expect("writing to memory");
    }
    std::fs::write(out.trace(), trace).map_err(|e| Error::io(out.trace(), e))?;

    let n = chain.samples.len();
    let k = cfg.sampler.histogram_snapshots;
    let checkpoints: Vec<usize> = (1..=k).map(|i| (i * n).div_ceil(k)).collect();
    let ranges: Vec<(f64, f64)> = cfg.model.bounds.iter().map(|b| (b[0], b[1])).collect();
    let diag = cumulative_histogram_diagnostic(
        &chain.samples,
        &checkpoints,
        &ranges,
        cfg.sampler.histogram_bins,
        cfg.sampler.stationarity_threshold,
    );
    let mut buf = Vec::new();
    write_header_with(
        &mut buf,
        "diagnostics",
        hash,
        &[("stationary", diag.stationary.to_string()), ("threshold", diag.threshold.to_string())],
    )
    .expect("writing to memory");
    writeln!(buf, "parameter,snapshot,samples,bin,lower,upper,mass,tv_from_previous").expect("writing to memory");
    let bins = cfg.sampler.histogram_bins;
    for (j, snaps) in diag.snapshots.iter().enumerate() {
        let (lo, hi) = ranges[j];
        for (c, snap) in snaps.iter().enumerate() {
            let tv = if c == 0 { "NA".to_string() } else { diag.tv[j][c - 1].to_string() };
            for (b, mass) in snap.iter().enumerate() {
                let a = lo + (hi - lo) * b as f64 / bins as f64;
                let z = lo + (hi - lo) * (b + 1) as f64 / bins as f64;
                writeln!(buf, "{},{},{},{},{},{},{},{}", j + 1, c + 1, diag.checkpoints[c], b + 1, a, z, mass, tv)
                    .expect("writing to memory");
            }
        }
    }
    std::fs::write(out.diagnostics(), buf).map_err(|e| Error::io(out.diagnostics(), e))?;
    Ok(diag.stationary)
}

fn write_summary(
    path: &Path,
    hash: &str,
    samples: &[WeightedSample],
    bounds: &crate::bounds::ParamBounds,
    acceptance: &[f64],
) -> Result<()> {
    let draws = flatten_samples(samples);
    let mut buf = Vec::new();
    write_header_with(&mut buf, "posterior-summary", hash, &[]).expect("writing to memory");
    writeln!(buf, "parameter,lower,upper,mean,q05,q50,q95,acceptance").expect("writing to memory");
    for j in 0..bounds.dim() {
        let vals: Vec<(f64, f64)> = draws.iter().map(|d| (d.theta[j], d.weight)).collect();
        let total: f64 = vals.iter().map(|v| v.1).sum();
        let mean = (total > 0.0).then(|| vals.iter().map(|(x, w)| x * w).sum::<f64>() / total);
        let q = |p| crate::intervention::weighted_quantile(&vals, p);
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
        writeln!(
            buf,
            "{},{},{},{},{},{},{},{}",
            j + 1,
            bounds.lower()[j],
            bounds.upper()[j],
            f(mean),
            f(q(0.05)),
            f(q(0.5)),
            f(q(0.95)),
            acceptance.get(j).copied().unwrap_or(f64::NAN)
        )
        .expect("writing to memory");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub draws: usize,
    pub resample_seed: u64,
    pub rows: Vec<FeatureDistribution>,
}

/// Intervention summaries for every target and scale factor, plus heatmaps.
pub fn analyze_command(cfg: &RunConfig) -> Result<AnalyzeReport> {
    cfg.validate()?;
    let out = paths(cfg)?;
    require(&out.chain(), "calibrate")?;
    let chain = read_chain(&out.chain())?;
    if chain.samples.is_empty() {
        return Err(Error::Data(format!("{} has no retained samples", out.chain().display())));
    }
    let hash = cfg.hash();
    let bounds = cfg.bounds()?;
    let resample_seed = cfg.seed ^ 0xa11a_u64;
    let draws = cap_draws(flatten_samples(&chain.samples), cfg.intervention.draw_cap, resample_seed);
    let iv = &cfg.intervention;
    let feature = OdeFeature {
        feature: iv.feature,
        ode: cfg.ode.clone(),
        c: cfg.model.c,
        period: iv.period.clone(),
    };
    let data_period = if matches!(iv.baseline, crate::config::BaselineKind::Data) {
        let obs = load_observations(cfg)?;
        let p = dominant_period(&obs.data.mean_series(), cfg.ode.dt_out);
        p.map(|p| match iv.feature {
            crate::intervention::Feature::Period => p,
            crate::intervention::Feature::MainFrequency => 1.0 / p,
        })
    } else {
        None
    };
    let plan = InterventionPlan {
        targets: iv.targets.iter().map(|t| t - 1).collect(),
        alphas: iv.alphas.clone(),
        deltas: iv.deltas.clone(),
        baseline: cfg.baseline(data_period)?,
    };
    let f = |t: &[f64]| feature.eval(t);
    let rows = intervention_estimate(&draws, &plan, &bounds, &f)?;
    write_sensitivity(&out.sensitivity(), &hash, iv.feature, &iv.deltas, &rows)?;
    write_exceedance(&out.exceedance(), &hash, &iv.deltas, &rows, resample_seed, draws.len())?;

    let heat_feature = OdeFeature { feature: iv.heatmap_feature, ..feature.clone() };
    let hf = |t: &[f64]| heat_feature.eval(t);
    let mut cells = Vec::new();
    for [a, b] in &iv.heatmap_pairs {
        cells.extend(pairwise_heatmap(&draws, a - 1, b - 1, &iv.alphas, &iv.alphas, &bounds, &hf)?);
    }
    write_heatmap(&out.heatmap(), &hash, iv.heatmap_feature, &cells)?;
    Ok(AnalyzeReport {
        draws: draws.len(),
        resample_seed,
        rows,
    })
}

fn write_exceedance(
    path: &Path,
    hash: &str,
    deltas: &[f64],
    rows: &[FeatureDistribution],
    seed: u64,
    draws: usize,
) -> Result<()> {
    let mut buf = Vec::new();
    write_header_with(
        &mut buf,
        "exceedance",
        hash,
        &[("draws", draws.to_string()), ("resample_seed", seed.to_string())],
    )
    .expect("writing to memory");
    let mut cols = "parameter,alpha,failure_pct".to_string();
    for d in deltas {
        cols.push_str(&format!(",increase_{}_pct", (d * 100.0).round() as i64));
    }
    writeln!(buf, "{cols}").expect("writing to memory");
    for r in rows {
        let mut line = format!("{},{},{:.2}", r.targets[0] + 1, r.alphas[0], 100.0 * r.failure);
        for e in &r.exceed {
            line.push_str(&format!(",{:.2}", 100.0 * e));
        }
        writeln!(buf, "{line}").expect("writing to memory");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Bundles every output into one plain-text file, one section per source.
/// Inputs carrying different config hashes are refused unless `force`.
pub fn report_command(cfg: &RunConfig, force: bool) -> Result<PathBuf> {
    let out = OutputPaths::new(&cfg.output.dir);
    let sections: [(&str, PathBuf, &str, &'static str); 8] = [
        ("prospect_map", out.prospect_map(), "prospect-map", "prognose"),
        ("trace", out.trace(), "trace", "calibrate"),
        ("diagnostics", out.diagnostics(), "diagnostics", "calibrate"),
        ("posterior_summary", out.summary(), "posterior-summary", "calibrate"),
        ("sensitivity", out.sensitivity(), "sensitivity", "analyze"),
        ("heatmap", out.heatmap(), "heatmap", "analyze"),
        ("exceedance", out.exceedance(), "exceedance", "analyze"),
        ("chain_header", out.chain(), "chain", "calibrate"),
    ];
    let mut hashes: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut bodies = Vec::new();
    for (name, path, kind, producer) in &sections {
        require(path, producer)?;
        let lines = read_lines(path)?;
        let (h, start): (FileHeader, usize) = read_header(&lines, path, kind)?;
        hashes.entry(h.config_hash.clone()).or_default().push(name);
        let body: Vec<String> = if *name == "chain_header" {
            lines[start..=start.min(lines.len() - 1)].to_vec()
        } else {
            lines[start..].to_vec()
        };
        bodies.push((*name, h, body));
    }
    if hashes.len() > 1 && !force {
        let detail: Vec<String> = hashes.iter().map(|(h, names)| format!("{h}: {}", names.join(", "))).collect();
        return Err(Error::Data(format!(
            "outputs come from different configurations (use --force to bundle anyway):\n  {}",
            detail.join("\n  ")
        )));
    }
    let hash = if hashes.len() == 1 {
        hashes.keys().next().cloned().unwrap_or_default()
    } else {
        "mixed".to_string()
    };
    let mut buf = Vec::new();
    write_header_with(&mut buf, "report", &hash, &[]).expect("writing to memory");
    for (name, h, body) in bodies {
        writeln!(buf, "[{name}]").expect("writing to memory");
        for (k, v) in &h.fields {
            writeln!(buf, "# {k}={v}").expect("writing to memory");
        }
        for l in body {
            writeln!(buf, "{l}").expect("writing to memory");
        }
        writeln!(buf).expect("writing to memory");
    }
    let path = out.report();
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
