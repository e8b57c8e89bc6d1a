//! Intervention posteriors: rescale one or two parameters across posterior
//! draws and summarize how a system feature responds.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::ParamBounds;
use crate::error::{Error, Result};
use crate::io::write_header_with;
use crate::ode::{detect_oscillation, integrate, OdeSettings, ThetaVector};
use crate::sampler::WeightedSample;

/// `θ` with one coordinate rescaled, plus whether it stays in the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervened {
    pub theta: Vec<f64>,
    pub in_space: bool,
}

/// `ν_{j,α}(θ)`: `θ_j ← α θ_j` (zero-based `j`), every other coordinate untouched.
pub fn intervene(theta: &[f64], j: usize, alpha: f64, bounds: Option<&ParamBounds>) -> Result<Intervened> {
    if j >= theta.len() {
        return Err(Error::InvalidArgument(format!("parameter index {j} out of range for p={}", theta.len())));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale factor must be positive, got {alpha}")));
    }
    let mut out = theta.to_vec();
    out[j] *= alpha;
    let in_space = bounds.is_none_or(|b| b.contains(&out));
    Ok(Intervened { theta: out, in_space })
}

/// Squared magnitude of the discrete-time Fourier transform of the centred
/// series at `cycles` cycles per window.
fn periodogram_at(centred: &[f64], cycles: f64) -> f64 {
    let n = centred.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, y) in centred.iter().enumerate() {
        let ph = 2.0 * PI * cycles * t as f64 / n;
        re += y * ph.cos();
        im -= y * ph.sin();
    }
    re * re + im * im
}

/// Length of the dominant cycle in `series` (spacing `dt`), from the
/// largest harmonic, refined by parabolic interpolation of the log power
/// and then a golden-section search within one bin.
pub fn dominant_period(series: &[f64], dt: f64) -> Option<f64> {
    let n = series.len();
    if n < 4 || !(dt > 0.0) {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|y| y - mean).collect();
    let kmax = (n - 1) / 2;
    let power: Vec<f64> = (0..=kmax + 1).map(|k| periodogram_at(&centred, k as f64)).collect();
    let mut best = 1;
    for k in 1..=kmax {
        if power[k] > power[best] {
            best = k;
        }
    }
    if !(power[best] > 0.0) {
        return None;
    }
    let k0 = best as f64;
    let (l, c, r) = (power[best - 1].max(1e-300).ln(), power[best].ln(), power[best + 1].max(1e-300).ln());
    let denom = l - 2.0 * c + r;
    let mut peak = if denom < 0.0 { k0 + 0.5 * (l - r) / denom } else { k0 };
    peak = peak.clamp(k0 - 1.0, k0 + 1.0);

    let (mut a, mut b) = ((k0 - 1.0).max(0.5), k0 + 1.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| -periodogram_at(&centred, x);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        if b - a < 1e-10 {
            break;
        }
    }
    let refined = 0.5 * (a + b);
    if f(refined) <= f(peak) {
        peak = refined;
    }
    Some(n as f64 * dt / peak)
}

/// Settings of the period feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeriodSettings {
    /// Window length in nominal cycles.
    pub window_cycles: f64,
    /// Nominal cycle length used to size the window, hours.
    pub nominal_period: f64,
    /// Peak-to-trough range below which the system counts as not oscillating.
    pub amp_tol: f64,
}

impl Default for PeriodSettings {
    fn default() -> Self {
        Self {
            window_cycles: 10.0,
            nominal_period: 22.0,
            amp_tol: 1e-3,
        }
    }
}

/// Cycle length of the model at `theta`, or `None` when the integration
/// fails or the output does not oscillate.
pub fn period_of(theta: &ThetaVector, ode: &OdeSettings, ps: &PeriodSettings) -> Option<f64> {
    let mut settings = ode.clone();
    settings.n_points = (ps.window_cycles * ps.nominal_period / ode.dt_out).ceil() as usize;
    let traj = integrate(theta, &settings).ok()?;
    if !detect_oscillation(&traj, ps.amp_tol).oscillating {
        return None;
    }
    dominant_period(&traj.values, traj.dt_out)
}

/// Which feature `h(θ)` to summarize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Period,
    MainFrequency,
}

impl Feature {
    pub fn name(&self) -> &'static str {
        match self {
            Feature::Period => "period",
            Feature::MainFrequency => "main_frequency",
        }
    }
}

/// The ODE feature map used by the analysis.
#[derive(Debug, Clone)]
pub struct OdeFeature {
    pub feature: Feature,
    pub ode: OdeSettings,
    pub c: f64,
    pub period: PeriodSettings,
}

impl OdeFeature {
    pub fn eval(&self, theta: &[f64]) -> Option<f64> {
        let th = ThetaVector::from_slice(theta, self.c).ok()?;
        let p = period_of(&th, &self.ode, &self.period)?;
        Some(match self.feature {
            Feature::Period => p,
            Feature::MainFrequency => 1.0 / p,
        })
    }
}

/// One posterior draw with its estimator weight `w_m / B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub theta: Vec<f64>,
    pub weight: f64,
}

/// Every `(b, m)` element with weight `w_m^(b) / B`.
pub fn flatten_samples(samples: &[WeightedSample]) -> Vec<Draw> {
    let b = samples.len() as f64;
    samples
        .iter()
        .flat_map(|s| {
            s.thetas.iter().zip(&s.weights).map(move |(t, w)| Draw {
                theta: t.clone(),
                weight: w / b,
            })
        })
        .filter(|d| d.weight > 0.0)
        .collect()
}

/// At most `cap` draws: all of them when they fit, otherwise a weighted
/// resample with replacement carrying equal weights.
pub fn cap_draws(draws: Vec<Draw>, cap: usize, seed: u64) -> Vec<Draw> {
    if cap == 0 || draws.len() <= cap {
        return draws;
    }
    let total: f64 = draws.iter().map(|d| d.weight).sum();
    let mut cum = Vec::with_capacity(draws.len());
    let mut acc = 0.0;
    for d in &draws {
        acc += d.weight / total;
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cap)
        .map(|_| {
            let u: f64 = rng.random();
            let i = cum.partition_point(|c| *c < u).min(draws.len() - 1);
            Draw {
                theta: draws[i].theta.clone(),
                weight: 1.0 / cap as f64,
            }
        })
        .collect()
}

/// Baseline for the exceedance proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    /// The same draw at `α = 1`.
    Paired,
    /// A fixed value, such as the period of the observed data.
    Fixed { value: f64 },
}

/// Weighted summary of feature values; `None` entries are failures.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistribution {
    /// Zero-based parameter indices that were rescaled.
    pub targets: Vec<usize>,
    pub alphas: Vec<f64>,
    pub mean: Option<f64>,
    pub q10: Option<f64>,
    pub q90: Option<f64>,
    pub failure: f64,
    pub finite: f64,
    /// `P(h > baseline (1 + δ))` for each `δ`.
    pub exceed: Vec<f64>,
}

/// Weighted `p`-quantile: the smallest value whose cumulative weight reaches `p`.
pub fn weighted_quantile(values: &[(f64, f64)], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|x| x.1).sum();
    let mut acc = 0.0;
    for (x, w) in &v {
        acc += w / total;
        if acc >= p - 1e-12 {
            return Some(*x);
        }
    }
    v.last().map(|x| x.0)
}

/// Summarizes `values[i]` of draw `i`, with `baselines[i]` for the exceedances.
pub fn summarize(
    targets: Vec<usize>,
    alphas: Vec<f64>,
    draws: &[Draw],
    values: &[Option<f64>],
    baselines: &[Option<f64>],
    deltas: &[f64],
) -> FeatureDistribution {
    let total = draws.iter().fold(0.0, |a, d| a + d.weight);
    let mut finite_mass = 0.0;
    let mut failed_mass = 0.0;
    let mut weighted_sum = 0.0;
    let mut finite = Vec::new();
    for (d, v) in draws.iter().zip(values) {
        if let Some(x) = v {
            finite_mass += d.weight;
            weighted_sum += d.weight * x;
            finite.push((*x, d.weight));
        } else {
            failed_mass += d.weight;
        }
    }
    let finite_frac = finite_mass / total;
    let exceed = deltas
        .iter()
        .map(|delta| {
            let mass: f64 = draws
                .iter()
                .zip(values.iter().zip(baselines))
                .filter(|(_, (v, b))| matches!((v, b), (Some(x), Some(b)) if *x > b * (1.0 + delta)))
                .fold(0.0, |a, (d, _)| a + d.weight);
            mass / total
        })
        .collect();
    FeatureDistribution {
        targets,
        alphas,
        mean: (finite_mass > 0.0).then(|| weighted_sum / finite_mass),
        q10: weighted_quantile(&finite, 0.1),
        q90: weighted_quantile(&finite, 0.9),
        failure: failed_mass / total,
        finite: finite_frac,
        exceed,
    }
}

/// Grid of single-parameter interventions.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPlan {
    pub targets: Vec<usize>,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub baseline: Baseline,
}

/// The feature at `ν_{j,α}(θ)`, failing for points outside the parameter space.
fn feature_at<F>(theta: &[f64], scales: &[(usize, f64)], bounds: &ParamBounds, feature: &F) -> Option<f64>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let mut t = theta.to_vec();
    let mut in_space = true;
    for &(j, a) in scales {
        let iv = intervene(&t, j, a, Some(bounds)).ok()?;
        in_space &= iv.in_space;
        t = iv.theta;
    }
    if !in_space {
        return None;
    }
    feature(&t)
}

/// Plain-posterior values of the feature at every draw.
pub fn baseline_values<F>(draws: &[Draw], bounds: &ParamBounds, feature: &F) -> Vec<Option<f64>>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    draws.par_iter().map(|d| feature_at(&d.theta, &[], bounds, feature)).collect()
}

/// One summary per `(target, α)`, in plan order.
pub fn intervention_estimate<F>(
    draws: &[Draw],
    plan: &InterventionPlan,
    bounds: &ParamBounds,
    feature: &F,
) -> Result<Vec<FeatureDistribution>>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no posterior draws to intervene on".into()));
    }
    for &j in &plan.targets {
        if j >= bounds.dim() {
            return Err(Error::InvalidArgument(format!("target parameter {} out of range", j + 1)));
        }
    }
    let base = baseline_values(draws, bounds, feature);
    let baselines: Vec<Option<f64>> = match plan.baseline {
        Baseline::Paired => base.clone(),
        Baseline::Fixed { value } => vec![Some(value); draws.len()],
    };
    let mut out = Vec::new();
    for &j in &plan.targets {
        for &a in &plan.alphas {
            let values: Vec<Option<f64>> = if a == 1.0 {
                base.clone()
            } else {
                draws.par_iter().map(|d| feature_at(&d.theta, &[(j, a)], bounds, feature)).collect()
            };
            out.push(summarize(vec![j], vec![a], draws, &values, &baselines, &plan.deltas));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatCell {
    pub j: usize,
    pub j2: usize,
    pub alpha: f64,
    pub alpha2: f64,
    /// Weighted mean of `(h(α, α′) - h(1, 1)) / h(1, 1)` over draws where both are finite.
    pub relative_change: Option<f64>,
}

/// Relative feature change on the `α × α′` grid for the pair `(j, j′)`.
pub fn pairwise_heatmap<F>(
    draws: &[Draw],
    j: usize,
    j2: usize,
    alphas: &[f64],
    alphas2: &[f64],
    bounds: &ParamBounds,
    feature: &F,
) -> Result<Vec<HeatCell>>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    if j == j2 {
        return Err(Error::InvalidArgument("heatmap needs two different parameters".into()));
    }
    if j >= bounds.dim() || j2 >= bounds.dim() {
        return Err(Error::InvalidArgument("heatmap parameter out of range".into()));
    }
    let base = baseline_values(draws, bounds, feature);
    let mut cells = Vec::new();
    for &a in alphas {
        for &b in alphas2 {
            let values: Vec<Option<f64>> = if a == 1.0 && b == 1.0 {
                base.clone()
            } else {
                draws
                    .par_iter()
                    .map(|d| feature_at(&d.theta, &[(j, a), (j2, b)], bounds, feature))
                    .collect()
            };
            let (mut num, mut den) = (0.0, 0.0);
            for ((d, v), b0) in draws.iter().zip(&values).zip(&base) {
                if let (Some(x), Some(x0)) = (v, b0) {
                    if *x0 != 0.0 {
                        num += d.weight * ((x - x0) / x0);
                        den += d.weight;
                    }
                }
            }
            cells.push(HeatCell {
                j,
                j2,
                alpha: a,
                alpha2: b,
                relative_change: (den > 0.0).then(|| num / den),
            });
        }
    }
    Ok(cells)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

/// Writes the sensitivity grid; proportions are reported as percentages.
pub fn write_sensitivity(
    path: &Path,
    config_hash: &str,
    feature: Feature,
    deltas: &[f64],
    rows: &[FeatureDistribution],
) -> Result<()> {
    let mut buf = Vec::new();
    write_header_with(&mut buf, "sensitivity", config_hash, &[("feature", feature.name().to_string())])
        .expect("writing to memory");
    let mut cols = "parameter,alpha,mean,q10,q90,failure_pct".to_string();
    for d in deltas {
        cols.push_str(&format!(",exceed_{}", (d * 100.0).round() as i64));
    }
    writeln!(buf, "{cols}").expect("writing to memory");
    for r in rows {
        let mut line = format!(
            "{},{},{},{},{},{}",
            r.targets[0] + 1,
            r.alphas[0],
            opt(r.mean),
            opt(r.q10),
            opt(r.q90),
            100.0 * r.failure
        );
        for e in &r.exceed {
            line.push_str(&format!(",{}", 100.0 * e));
        }
        writeln!(buf, "{line}").expect("writing to memory");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_heatmap(path: &Path, config_hash: &str, feature: Feature, cells: &[HeatCell]) -> Result<()> {
    let mut buf = Vec::new();
    write_header_with(&mut buf, "heatmap", config_hash, &[("feature", feature.name().to_string())])
        .expect("writing to memory");
    writeln!(buf, "j,j2,alpha,alpha2,relative_change").expect("writing to memory");
    for c in cells {
        writeln!(buf, "{},{},{},{},{}", c.j + 1, c.j2 + 1, c.alpha, c.alpha2, opt(c.relative_change))
            .expect("writing to memory");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws2() -> Vec<Draw> {
        vec![
            Draw { theta: vec![1.0, 2.0], weight: 0.5 },
            Draw { theta: vec![3.0, 4.0], weight: 0.5 },
        ]
    }

    #[test]
    fn intervene_basics() {
        let th = [0.3, 0.5, 0.7, 1.0];
        assert_eq!(intervene(&th, 1, 1.0, None).unwrap().theta, th.to_vec());
        let r = intervene(&th, 3, 0.6, None).unwrap();
        assert_eq!(r.theta, vec![0.3, 0.5, 0.7, 0.6]);
        assert!(intervene(&th, 4, 1.0, None).is_err());
        assert!(intervene(&th, 0, 0.0, None).is_err());
        let b = ParamBounds::cube(4, 0.0, 0.8).unwrap();
        assert!(!intervene(&[0.5; 4], 0, 2.0, Some(&b)).unwrap().in_space);
    }

    #[test]
    fn injected_cosine_period() {
        let y: Vec<f64> = (0..220).map(|t| (2.0 * PI * t as f64 / 22.0).cos()).collect();
        let p = dominant_period(&y, 1.0).unwrap();
        assert!((p - 22.0).abs() < 0.1, "{p}");
        let y: Vec<f64> = (0..230).map(|t| (2.0 * PI * t as f64 / 21.3).sin()).collect();
        assert!((dominant_period(&y, 1.0).unwrap() - 21.3).abs() < 0.1);
        assert!(dominant_period(&[1.0; 50], 1.0).is_none());
    }

    #[test]
    fn constant_feature() {
        let d = draws2();
        let vals = vec![Some(7.0); 2];
        let s = summarize(vec![0], vec![1.0], &d, &vals, &vals, &[0.1]);
        assert_eq!((s.mean, s.q10, s.q90, s.failure), (Some(7.0), Some(7.0), Some(7.0), 0.0));
        assert_eq!(s.exceed, vec![0.0]);
    }

    #[test]
    fn hand_weighted_mean_and_failures() {
        let d = vec![
            Draw { theta: vec![1.0], weight: 0.25 },
            Draw { theta: vec![2.0], weight: 0.75 },
        ];
        let s = summarize(vec![0], vec![1.0], &d, &[Some(10.0), Some(20.0)], &[Some(10.0), Some(10.0)], &[0.5]);
        assert_eq!(s.mean, Some(17.5));
        assert_eq!(s.exceed, vec![0.75]);
        let s = summarize(vec![0], vec![1.0], &d, &[None, None], &[None, None], &[0.1]);
        assert_eq!((s.mean, s.q10, s.failure), (None, None, 1.0));
        let s = summarize(vec![0], vec![1.0], &d, &[None, Some(3.0)], &[None, None], &[]);
        assert!((s.failure + s.finite - 1.0).abs() < 1e-12);
        assert_eq!(s.failure, 0.25);
    }

    #[test]
    fn weighted_quantiles() {
        let v = [(1.0, 0.1), (2.0, 0.1), (3.0, 0.8)];
        assert_eq!(weighted_quantile(&v, 0.1), Some(1.0));
        assert_eq!(weighted_quantile(&v, 0.15), Some(2.0));
        assert_eq!(weighted_quantile(&v, 0.9), Some(3.0));
    }

    #[test]
    fn heatmap_identity_and_symmetry() {
        let b = ParamBounds::cube(2, 0.0, 100.0).unwrap();
        let f = |t: &[f64]| Some(t[0] * t[0] + 3.0 * t[1]);
        let grid = [0.8, 1.0, 1.2];
        let h = pairwise_heatmap(&draws2(), 0, 1, &grid, &grid, &b, &f).unwrap();
        let h2 = pairwise_heatmap(&draws2(), 1, 0, &grid, &grid, &b, &f).unwrap();
        assert_eq!(h[4].relative_change, Some(0.0));
        for (ia, a) in grid.iter().enumerate() {
            for (ib, bb) in grid.iter().enumerate() {
                let x = &h[ia * 3 + ib];
                let y = &h2[ib * 3 + ia];
                assert_eq!((x.alpha, x.alpha2), (*a, *bb));
                assert_eq!(x.relative_change, y.relative_change);
            }
        }
        let inert = |_: &[f64]| Some(5.0);
        assert!(pairwise_heatmap(&draws2(), 0, 1, &grid, &grid, &b, &inert)
            .unwrap()
            .iter()
            .all(|c| c.relative_change == Some(0.0)));
        assert!(pairwise_heatmap(&draws2(), 0, 0, &grid, &grid, &b, &f).is_err());
    }

    #[test]
    fn capping_keeps_small_sets() {
        let d = draws2();
        assert_eq!(cap_draws(d.clone(), 10, 0), d);
        let many: Vec<Draw> = (0..100).map(|i| Draw { theta: vec![i as f64], weight: 0.01 }).collect();
        let c = cap_draws(many, 10, 3);
        assert_eq!(c.len(), 10);
        assert!((c.iter().map(|d| d.weight).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
