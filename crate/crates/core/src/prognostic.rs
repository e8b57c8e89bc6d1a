//! Prognostic sweeps over the unit cube and the two-level prospect density.

use std::collections::BTreeSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_header, write_header, FileHeader};

/// `⌈x q⌉`, the level of `x ∈ (0, 1]` among `q` equal bins.
pub fn u_q(x: f64, q: usize) -> Result<usize> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidArgument(format!("scaled value {x} outside (0, 1]")));
    }
    if q == 0 {
        return Err(Error::InvalidArgument("q must be >= 1".into()));
    }
    Ok(level_unchecked(x, q))
}

#[inline]
fn level_unchecked(x: f64, q: usize) -> usize {
    ((x * q as f64).ceil() as usize).clamp(1, q)
}

/// Base-`q` code of one-based levels, first entry most significant.
pub fn cell_index(levels: &[usize], q: usize) -> u64 {
    levels.iter().fold(0u64, |acc, &l| acc * q as u64 + (l as u64 - 1))
}

/// All `d0`-element subsets of `0..p`, in lexicographic order.
pub fn subsets(p: usize, d0: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=p - left {
            cur.push(i);
            rec(i + 1, p, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if d0 <= p {
        rec(0, p, d0, &mut Vec::with_capacity(d0), &mut out);
    }
    out
}

fn subset_mask(s: &[usize]) -> u64 {
    s.iter().fold(0u64, |m, &j| m | (1 << j))
}

/// How design points are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Independent uniform draws.
    Uniform,
    /// Every batch visits each cell of the full `q^p` factorial once, in a
    /// random order, at a uniformly jittered position inside the cell.
    Factorial,
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// `size` uniform points in `(0, 1]^p` for batch `batch`; any batch can be
/// regenerated on its own.
pub fn uniform_batch(batch: u64, size: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = batch_rng(seed, batch);
    (0..size)
        .map(|_| (0..p).map(|_| 1.0 - rng.random::<f64>()).collect())
        .collect()
}

/// One randomized pass over the full factorial with within-cell jitter.
pub fn factorial_batch(batch: u64, p: usize, q: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = batch_rng(seed, batch);
    let total = q.pow(p as u32);
    let mut order: Vec<usize> = (0..total).collect();
    for i in (1..total).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
        .into_iter()
        .map(|mut code| {
            let mut levels = vec![0usize; p];
            for l in levels.iter_mut().rev() {
                *l = code % q;
                code /= q;
            }
            levels
                .into_iter()
                .map(|l| (l as f64 + (1.0 - rng.random::<f64>())) / q as f64)
                .map(|u| u.min(1.0))
                .collect()
        })
        .collect()
}

/// `n` independent uniform points, generated in batches of `batch_size`.
pub fn generate_design(n: usize, p: usize, seed: u64, batch_size: usize) -> Vec<Vec<f64>> {
    let bs = batch_size.max(1);
    let mut out = Vec::with_capacity(n);
    let mut b = 0u64;
    while out.len() < n {
        let size = bs.min(n - out.len());
        out.extend(uniform_batch(b, size, p, seed));
        b += 1;
    }
    out
}

/// An evaluated design point; `loglik` is `None` when the model failed.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignEval {
    pub index: u64,
    pub u: Vec<f64>,
    pub loglik: Option<f64>,
}

impl DesignEval {
    fn success(&self, l_min: f64) -> bool {
        matches!(self.loglik, Some(v) if v > l_min)
    }
}

/// Threshold exceeded by roughly the top `fraction` of finite scores, or
/// `+inf` when there are none.
pub fn top_fraction_threshold(evals: &[DesignEval], fraction: f64) -> f64 {
    let mut finite: Vec<f64> = evals.iter().filter_map(|e| e.loglik).filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return f64::INFINITY;
    }
    finite.sort_by(|a, b| a.total_cmp(b));
    let n = finite.len();
    let keep = ((fraction * n as f64).round() as usize).clamp(1, n);
    if keep == n {
        f64::NEG_INFINITY
    } else {
        finite[n - keep - 1]
    }
}

/// Success counts per projected cell; mergeable across shards.
#[derive(Debug, Clone, PartialEq)]
pub struct ProspectCounts {
    p: usize,
    q: usize,
    d0: usize,
    subsets: Vec<Vec<usize>>,
    counts: Vec<Vec<u64>>,
}

impl ProspectCounts {
    pub fn new(p: usize, q: usize, d0: usize) -> Result<Self> {
        if d0 == 0 || d0 > p {
            return Err(Error::InvalidArgument(format!("d0={d0} must be in 1..={p}")));
        }
        if q < 2 {
            return Err(Error::InvalidArgument(format!("q={q} must be >= 2")));
        }
        let cells = q.checked_pow(d0 as u32).ok_or_else(|| Error::InvalidArgument("q^d0 overflows".into()))?;
        let subsets = subsets(p, d0);
        let counts = vec![vec![0; cells]; subsets.len()];
        Ok(Self { p, q, d0, subsets, counts })
    }

    pub fn add(&mut self, u: &[f64]) -> Result<()> {
        if u.len() != self.p {
            return Err(Error::InvalidArgument(format!("point has {} coordinates, expected {}", u.len(), self.p)));
        }
        let levels: Vec<usize> = u.iter().map(|&x| u_q(x, self.q)).collect::<Result<_>>()?;
        for (s, c) in self.subsets.iter().zip(self.counts.iter_mut()) {
            let idx = s.iter().fold(0usize, |a, &j| a * self.q + levels[j] - 1);
            c[idx] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ProspectCounts) -> Result<()> {
        if (self.p, self.q, self.d0) != (other.p, other.q, other.d0) {
            return Err(Error::InvalidArgument("cannot merge counts with different (p, q, d0)".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    fn marked(&self, n_min: u64) -> Vec<Vec<bool>> {
        self.counts.iter().map(|c| c.iter().map(|&v| v > n_min).collect()).collect()
    }
}

/// Settings of the two-level density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProspectSettings {
    pub q: usize,
    pub d0: usize,
    pub n_min: u64,
    pub rho0: f64,
    pub rho1: f64,
    /// Largest `q^p` for which the high-prospect volume is counted exactly.
    pub volume_cap: u64,
    pub volume_mc_points: usize,
    pub volume_seed: u64,
}

impl Default for ProspectSettings {
    fn default() -> Self {
        Self {
            q: 3,
            d0: 4,
            n_min: 0,
            rho0: 0.1,
            rho1: 1.0,
            volume_cap: 2_000_000,
            volume_mc_points: 1_000_000,
            volume_seed: 0,
        }
    }
}

/// How the high-prospect volume was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeMethod {
    Exact,
    MonteCarlo,
}

/// High/low classification of `(0, 1]^p` and its step density.
#[derive(Debug, Clone, PartialEq)]
pub struct ProspectMap {
    p: usize,
    q: usize,
    d0: usize,
    rho0: f64,
    rho1: f64,
    subsets: Vec<Vec<usize>>,
    marked: Vec<Vec<bool>>,
    volhigh: f64,
    volhigh_se: f64,
    method: VolumeMethod,
    log_z: f64,
}

/// Marks `(S_b, h)` when more than `n_min` points in it score above `l_min`.
pub fn classify_prospects(
    evals: &[DesignEval],
    p: usize,
    l_min: f64,
    settings: &ProspectSettings,
) -> Result<ProspectMap> {
    if evals.is_empty() {
        return Err(Error::InvalidArgument("no design evaluations to classify".into()));
    }
    let mut counts = ProspectCounts::new(p, settings.q, settings.d0)?;
    for e in evals.iter().filter(|e| e.success(l_min)) {
        counts.add(&e.u)?;
    }
    ProspectMap::from_counts(&counts, settings)
}

impl ProspectMap {
    pub fn from_counts(counts: &ProspectCounts, settings: &ProspectSettings) -> Result<Self> {
        if !(settings.rho0 > 0.0 && settings.rho1 >= settings.rho0 && settings.rho1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need rho1 >= rho0 > 0, got rho0={}, rho1={}",
                settings.rho0, settings.rho1
            )));
        }
        if (counts.q, counts.d0) != (settings.q, settings.d0) {
            return Err(Error::InvalidArgument("counts and settings disagree on (q, d0)".into()));
        }
        let mut map = Self {
            p: counts.p,
            q: counts.q,
            d0: counts.d0,
            rho0: settings.rho0,
            rho1: settings.rho1,
            subsets: counts.subsets.clone(),
            marked: counts.marked(settings.n_min),
            volhigh: 0.0,
            volhigh_se: 0.0,
            method: VolumeMethod::Exact,
            log_z: 0.0,
        };
        map.compute_volume(settings);
        Ok(map)
    }

    fn compute_volume(&mut self, settings: &ProspectSettings) {
        let any = self.marked.iter().any(|m| m.iter().any(|&b| b));
        let total = (self.q as u64).checked_pow(self.p as u32);
        if !any {
            self.volhigh = 0.0;
            self.volhigh_se = 0.0;
            self.method = VolumeMethod::Exact;
        } else if let Some(total) = total.filter(|t| *t <= settings.volume_cap) {
            let high = (0..total)
                .into_par_iter()
                .filter(|&code| {
                    let mut c = code;
                    let mut levels = vec![0usize; self.p];
                    for l in levels.iter_mut().rev() {
                        *l = (c % self.q as u64) as usize + 1;
                        c /= self.q as u64;
                    }
                    self.is_high_levels(&levels)
                })
                .count();
            self.volhigh = high as f64 / total as f64;
            self.volhigh_se = 0.0;
            self.method = VolumeMethod::Exact;
        } else {
            let n = settings.volume_mc_points.max(1);
            let pts = uniform_batch(0, n, self.p, settings.volume_seed);
            let high = pts.par_iter().filter(|u| self.is_high_unchecked(u)).count();
            let v = high as f64 / n as f64;
            self.volhigh = v;
            self.volhigh_se = (v * (1.0 - v) / n as f64).sqrt();
            self.method = VolumeMethod::MonteCarlo;
        }
        self.log_z = (self.rho1 * self.volhigh + self.rho0 * (1.0 - self.volhigh)).ln();
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn high_volume(&self) -> f64 {
        self.volhigh
    }

    pub fn high_volume_se(&self) -> f64 {
        self.volhigh_se
    }

    pub fn volume_method(&self) -> VolumeMethod {
        self.method
    }

    /// Number of marked `(S_b, h)` pairs.
    pub fn marked_count(&self) -> usize {
        self.marked.iter().map(|m| m.iter().filter(|&&b| b).count()).sum()
    }

    /// Sorted `(subset bitmask, cell code)` pairs.
    pub fn marked_cells(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = self
            .subsets
            .iter()
            .zip(&self.marked)
            .flat_map(|(s, m)| {
                let mask = subset_mask(s);
                m.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (mask, i as u64))
            })
            .collect();
        out.sort_unstable();
        out
    }

    fn is_high_levels(&self, levels: &[usize]) -> bool {
        self.subsets.iter().zip(&self.marked).any(|(s, m)| {
            let idx = s.iter().fold(0usize, |a, &j| a * self.q + levels[j] - 1);
            m[idx]
        })
    }

    pub fn is_high(&self, u: &[f64]) -> Result<bool> {
        self.check_point(u)?;
        Ok(self.is_high_unchecked(u))
    }

    pub(crate) fn is_high_unchecked(&self, u: &[f64]) -> bool {
        let levels: Vec<usize> = u.iter().map(|&x| level_unchecked(x, self.q)).collect();
        self.is_high_levels(&levels)
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.p {
            return Err(Error::InvalidArgument(format!("point has {} coordinates, expected {}", u.len(), self.p)));
        }
        if let Some(x) = u.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
            return Err(Error::InvalidArgument(format!("coordinate {x} outside (0, 1]")));
        }
        Ok(())
    }

    /// `log ρ1 - log Z` on high-prospect points, `log ρ0 - log Z` elsewhere.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        Ok(self.log_density_unchecked(u))
    }

    pub(crate) fn log_density_unchecked(&self, u: &[f64]) -> f64 {
        let rho = if self.is_high_unchecked(u) { self.rho1 } else { self.rho0 };
        rho.ln() - self.log_z
    }

    pub fn write(&self, path: &Path, config_hash: &str) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let method = match self.method {
            VolumeMethod::Exact => "exact",
            VolumeMethod::MonteCarlo => "monte_carlo",
        };
        let res: std::io::Result<()> = (|| {
            write_header(&mut w, "prospect-map", config_hash)?;
            writeln!(w, "q={}", self.q)?;
            writeln!(w, "d0={}", self.d0)?;
            writeln!(w, "p={}", self.p)?;
            writeln!(w, "rho0={}", self.rho0)?;
            writeln!(w, "rho1={}", self.rho1)?;
            writeln!(w, "log_z={}", self.log_z)?;
            writeln!(w, "volhigh={}", self.volhigh)?;
            writeln!(w, "volhigh_se={}", self.volhigh_se)?;
            writeln!(w, "volhigh_method={method}")?;
            writeln!(w, "subset_mask,cell")?;
            for (m, c) in self.marked_cells() {
                writeln!(w, "{m},{c}")?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<(FileHeader, Self)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<String> = std::io::BufReader::new(file)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        let (header, start) = read_header(&lines, path, "prospect-map")?;
        let mut kv = std::collections::BTreeMap::new();
        let mut i = start;
        while i < lines.len() && lines[i] != "subset_mask,cell" {
            let (k, v) = lines[i]
                .split_once('=')
                .ok_or_else(|| Error::format(path, i + 1, "expected key=value"))?;
            kv.insert(k.to_string(), (v.to_string(), i + 1));
            i += 1;
        }
        if i == lines.len() {
            return Err(Error::format(path, i, "missing `subset_mask,cell` table"));
        }
        let get = |k: &str| -> Result<(String, usize)> {
            kv.get(k).cloned().ok_or_else(|| Error::format(path, start + 1, format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            let (v, line) = get(k)?;
            v.parse().map_err(|_| Error::format(path, line, format!("`{k}` is not a number")))
        };
        let int = |k: &str| -> Result<usize> {
            let (v, line) = get(k)?;
            v.parse().map_err(|_| Error::format(path, line, format!("`{k}` is not an integer")))
        };
        let (p, q, d0) = (int("p")?, int("q")?, int("d0")?);
        let subs = subsets(p, d0);
        if subs.is_empty() || q < 2 {
            return Err(Error::format(path, start + 1, "invalid (p, q, d0)"));
        }
        let cells = q.pow(d0 as u32);
        let mut marked = vec![vec![false; cells]; subs.len()];
        let masks: Vec<u64> = subs.iter().map(|s| subset_mask(s)).collect();
        for (ln, line) in lines.iter().enumerate().skip(i + 1) {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::format(path, ln + 1, "expected `mask,cell`");
            let (m, c) = line.split_once(',').ok_or_else(bad)?;
            let m: u64 = m.parse().map_err(|_| bad())?;
            let c: usize = c.parse().map_err(|_| bad())?;
            let si = masks.iter().position(|&x| x == m).ok_or_else(|| Error::format(path, ln + 1, "unknown subset mask"))?;
            if c >= cells {
                return Err(Error::format(path, ln + 1, "cell code out of range"));
            }
            marked[si][c] = true;
        }
        let method = match get("volhigh_method")?.0.as_str() {
            "exact" => VolumeMethod::Exact,
            _ => VolumeMethod::MonteCarlo,
        };
        let map = Self {
            p,
            q,
            d0,
            rho0: num("rho0")?,
            rho1: num("rho1")?,
            subsets: subs,
            marked,
            volhigh: num("volhigh")?,
            volhigh_se: num("volhigh_se")?,
            method,
            log_z: num("log_z")?,
        };
        Ok((header, map))
    }
}

/// Sweep layout and budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub n_points: usize,
    pub batch_size: usize,
    pub p: usize,
    pub q: usize,
    pub design: DesignKind,
    pub seed: u64,
}

impl SweepPlan {
    pub fn effective_batch_size(&self) -> usize {
        match self.design {
            DesignKind::Uniform => self.batch_size.max(1),
            DesignKind::Factorial => self.q.pow(self.p as u32),
        }
    }

    pub fn n_batches(&self) -> usize {
        self.n_points.div_ceil(self.effective_batch_size())
    }

    pub fn batch_points(&self, batch: usize) -> Vec<Vec<f64>> {
        let bs = self.effective_batch_size();
        let size = bs.min(self.n_points - batch * bs);
        match self.design {
            DesignKind::Uniform => uniform_batch(batch as u64, size, self.p, self.seed),
            DesignKind::Factorial => {
                let mut pts = factorial_batch(batch as u64, self.p, self.q, self.seed);
                pts.truncate(size);
                pts
            }
        }
    }
}

/// Scores one batch in parallel; results keep the design order.
pub fn evaluate_batch<F>(plan: &SweepPlan, batch: usize, score: &F) -> Vec<DesignEval>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let first = (batch * plan.effective_batch_size()) as u64;
    plan.batch_points(batch)
        .into_par_iter()
        .enumerate()
        .map(|(i, u)| {
            let loglik = score(&u);
            DesignEval {
                index: first + i as u64,
                u,
                loglik,
            }
        })
        .collect()
}

fn sweep_columns(p: usize) -> String {
    let mut s = String::from("index");
    for j in 1..=p {
        s.push_str(&format!(",u{j}"));
    }
    s.push_str(",status,loglik");
    s
}

fn format_row(e: &DesignEval) -> String {
    let mut s = e.index.to_string();
    for x in &e.u {
        s.push(',');
        s.push_str(&x.to_string());
    }
    match e.loglik {
        Some(v) => s.push_str(&format!(",ok,{v}")),
        None => s.push_str(",fail,-inf"),
    }
    s
}

/// Reads a sweep results file.
pub fn read_sweep(path: &Path) -> Result<(FileHeader, Vec<DesignEval>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = std::io::BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let (header, start) = read_header(&lines, path, "sweep")?;
    let cols = lines.get(start).ok_or_else(|| Error::format(path, start + 1, "missing column line"))?;
    let ncol = cols.split(',').count();
    if ncol < 4 {
        return Err(Error::format(path, start + 1, "too few columns"));
    }
    let p = ncol - 3;
    let mut out = Vec::new();
    for (ln, line) in lines.iter().enumerate().skip(start + 1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != ncol {
            return Err(Error::format(path, ln + 1, format!("expected {ncol} fields, got {}", f.len())));
        }
        let bad = |what: &str| Error::format(path, ln + 1, format!("cannot parse {what}"));
        let index: u64 = f[0].parse().map_err(|_| bad("index"))?;
        let u: Vec<f64> = f[1..=p].iter().map(|v| v.parse().map_err(|_| bad("coordinate"))).collect::<Result<_>>()?;
        let loglik = match f[p + 1] {
            "ok" => Some(f[p + 2].parse().map_err(|_| bad("loglik"))?),
            "fail" => None,
            _ => return Err(bad("status")),
        };
        out.push(DesignEval { index, u, loglik });
    }
    Ok((header, out))
}

/// Runs (or resumes) a sweep, appending each finished batch to `path`.
/// A partially written trailing batch is discarded and recomputed.
pub fn run_sweep<F>(
    plan: &SweepPlan,
    score: &F,
    path: &Path,
    config_hash: &str,
    resume: bool,
) -> Result<Vec<DesignEval>>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let bs = plan.effective_batch_size();
    let mut done: Vec<DesignEval> = Vec::new();
    if resume && path.exists() {
        let (header, rows) = read_sweep(path)?;
        if header.config_hash != config_hash {
            return Err(Error::Data(format!(
                "{} was produced by a different configuration (hash {})",
                path.display(),
                header.config_hash
            )));
        }
        let full = (rows.len() / bs) * bs;
        done = rows.into_iter().take(full).collect();
    }
    let start_batch = done.len() / bs;
    {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            write_header(&mut w, "sweep", config_hash)?;
            writeln!(w, "{}", sweep_columns(plan.p))?;
            for e in &done {
                writeln!(w, "{}", format_row(e))?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(path, e))?;
    }
    let file = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for b in start_batch..plan.n_batches() {
        let rows = evaluate_batch(plan, b, score);
        let res: std::io::Result<()> = (|| {
            for e in &rows {
                writeln!(w, "{}", format_row(e))?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(path, e))?;
        done.extend(rows);
    }
    Ok(done)
}

/// Distinct high-prospect full-factorial cells among `points`.
pub fn distinct_high_cells(map: &ProspectMap, points: &[Vec<f64>]) -> BTreeSet<u64> {
    points
        .iter()
        .filter(|u| map.is_high_unchecked(u))
        .map(|u| {
            let l: Vec<usize> = u.iter().map(|&x| level_unchecked(x, map.q)).collect();
            cell_index(&l, map.q)
        })
        .collect()
}
