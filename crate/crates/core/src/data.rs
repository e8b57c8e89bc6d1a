//! Replicate time series: loading, spectral summaries and synthetic data.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_header_with;
use crate::ode::{detect_oscillation, integrate, OdeSettings, ThetaVector};
use crate::spectral::{estimate_noise_variance, harmonic_coefficients, max_harmonics, power_spectrum};

/// `n` equally long series on an hourly grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSeries {
    pub times: Vec<f64>,
    /// `series[i][t]`: replicate `i` at time index `t`.
    pub series: Vec<Vec<f64>>,
}

impl ReplicateSeries {
    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `ŝ_ik`, one row per replicate.
    pub fn spectra(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        self.series
            .iter()
            .map(|s| harmonic_coefficients(s, k).map(|c| power_spectrum(&c).0))
            .collect()
    }

    /// Pooled residual variance of the harmonic fit; `fit_k` defaults to `floor((T-1)/2)`.
    pub fn noise_variance(&self, fit_k: Option<usize>) -> Result<f64> {
        let k = fit_k.unwrap_or_else(|| max_harmonics(self.len()));
        estimate_noise_variance(&self.series, k)
    }

    /// Average of the replicates at each time.
    pub fn mean_series(&self) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.series.iter().map(|s| s[t]).sum::<f64>() / self.n() as f64)
            .collect()
    }
}

/// Reads `t,rep1..repn` delimited text. Lines starting with `#` are skipped.
/// `k` is the number of harmonics the data must support (`T >= 2K + 1`).
pub fn load_data(path: &Path, k: usize) -> Result<ReplicateSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let data_err = |line: usize, msg: String| Error::Data(format!("{}: line {line}: {msg}", path.display()));
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (hline, header) = rows.next().ok_or_else(|| Error::Data(format!("{}: no header row", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(data_err(hline + 1, "header must be `t,rep1,...,repn`".into()));
    }
    let n = cols.len() - 1;
    let mut times = Vec::new();
    let mut series = vec![Vec::new(); n];
    for (ln, line) in rows {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(data_err(ln + 1, format!("expected {} cells, found {}", cols.len(), cells.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(data_err(ln + 1, format!("missing value in column `{}`", cols[c])));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| data_err(ln + 1, format!("column `{}`: `{cell}` is not a number", cols[c])))?;
            if !v.is_finite() {
                return Err(data_err(ln + 1, format!("column `{}`: non-finite value", cols[c])));
            }
            if c == 0 {
                times.push(v);
            } else {
                series[c - 1].push(v);
            }
        }
    }
    let t = times.len();
    if t < 2 * k + 1 {
        return Err(Error::Data(format!(
            "{}: T={t} rows cannot support K={k} harmonics (need T >= {})",
            path.display(),
            2 * k + 1
        )));
    }
    for w in times.windows(2) {
        if (w[1] - w[0] - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("{}: times must be on an hourly grid", path.display())));
        }
    }
    Ok(ReplicateSeries { times, series })
}

pub fn write_data(path: &Path, data: &ReplicateSeries, config_hash: &str) -> Result<()> {
    let mut buf = Vec::new();
    write_header_with(&mut buf, "data", config_hash, &[]).expect("writing to memory");
    let mut head = "t".to_string();
    for i in 1..=data.n() {
        head.push_str(&format!(",rep{i}"));
    }
    writeln!(buf, "{head}").expect("writing to memory");
    for (ti, t) in data.times.iter().enumerate() {
        let mut line = t.to_string();
        for s in &data.series {
            line.push(',');
            line.push_str(&s[ti].to_string());
        }
        writeln!(buf, "{line}").expect("writing to memory");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Ground truth stored next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub theta: Vec<f64>,
    pub c: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub oscillating: bool,
    pub config_hash: String,
}

/// Model output at `theta` plus i.i.d. Gaussian noise, one series per
/// replicate. Also reports whether the noiseless output oscillates.
pub fn simulate(
    theta: &ThetaVector,
    ode: &OdeSettings,
    replicates: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(ReplicateSeries, bool)> {
    let traj = integrate(theta, ode).map_err(|f| Error::Compute(format!("simulation failed: {f}")))?;
    let oscillating = detect_oscillation(&traj, 1e-3).oscillating;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let series = (0..replicates)
        .map(|_| {
            traj.values
                .iter()
                .map(|y| if noise_sd == 0.0 { *y } else { y + normal.sample(&mut rng) })
                .collect()
        })
        .collect();
    let times = (0..traj.len()).map(|i| i as f64 * ode.dt_out).collect();
    Ok((ReplicateSeries { times, series }, oscillating))
}
