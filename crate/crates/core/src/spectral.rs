//! Harmonic decomposition, power spectra and the spectral data layer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, IntegrationFailure, OdeSettings, ThetaVector};
use crate::special::{log_bessel_i0, LOG_TWO};

/// Least-squares harmonic coefficients `a_k, b_k` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Length `T` of the decomposed series.
    pub series_len: usize,
}

impl HarmonicCoefficients {
    pub fn k(&self) -> usize {
        self.a.len()
    }
}

/// Per-frequency power `a_k² + b_k²`, `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum(pub Vec<f64>);

impl PowerSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One-based frequency index of the largest entry.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.0.iter().enumerate() {
            if *v > self.0[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// Physical-error variance and the matching chi-square scale `V = T σ² / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub sigma2_f: f64,
    pub v: f64,
}

impl NoiseScale {
    /// `V = T σ² / 2`, the variance of the unnormalized sums `Σ y cos`.
    pub fn new(sigma2_f: f64, series_len: usize) -> Result<Self> {
        Self::with_convention(sigma2_f, series_len, VarianceConvention::Sum)
    }

    pub fn with_convention(sigma2_f: f64, series_len: usize, convention: VarianceConvention) -> Result<Self> {
        if !(sigma2_f.is_finite() && sigma2_f > 0.0) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {sigma2_f}")));
        }
        Ok(Self {
            sigma2_f,
            v: convention.v(sigma2_f, series_len),
        })
    }
}

/// Which variance scales `ŝ` in the noncentral χ² layer.
///
/// `Coefficient` is the variance of `â_k` itself, `2σ²/T`, which makes
/// `ŝ/V` exactly noncentral χ²₂ for the `(2/T)`-normalized coefficients.
/// `Sum` is `Tσ²/2`, the variance of `Σ y cos` before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    #[default]
    Coefficient,
    Sum,
}

impl VarianceConvention {
    pub fn v(self, sigma2: f64, series_len: usize) -> f64 {
        let t = series_len as f64;
        match self {
            VarianceConvention::Coefficient => 2.0 * sigma2 / t,
            VarianceConvention::Sum => t * sigma2 / 2.0,
        }
    }
}

/// Largest admissible truncation for a series of length `t`.
pub fn max_harmonics(t: usize) -> usize {
    t.saturating_sub(1) / 2
}

/// `(cos, sin)` of `2π k t / T`, with `k t` reduced modulo `T` first.
fn basis(k: usize, t: usize, len: usize) -> (f64, f64) {
    let phase = 2.0 * PI * ((k * t) % len) as f64 / len as f64;
    (phase.cos(), phase.sin())
}

/// `â_k = (2/T) Σ y_t cos(2πkt/T)` and `b̂_k = (2/T) Σ y_t sin(2πkt/T)`.
pub fn harmonic_coefficients(series: &[f64], k: usize) -> Result<HarmonicCoefficients> {
    let len = series.len();
    if k == 0 || k > max_harmonics(len) {
        return Err(Error::InvalidArgument(format!(
            "K={k} outside 1..={} for a series of length {len}",
            max_harmonics(len)
        )));
    }
    let scale = 2.0 / len as f64;
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    for freq in 1..=k {
        let (mut ca, mut cb) = (0.0, 0.0);
        for (t, y) in series.iter().enumerate() {
            let (c, s) = basis(freq, t, len);
            ca += y * c;
            cb += y * s;
        }
        a.push(scale * ca);
        b.push(scale * cb);
    }
    Ok(HarmonicCoefficients {
        a,
        b,
        series_len: len,
    })
}

pub fn power_spectrum(coef: &HarmonicCoefficients) -> PowerSpectrum {
    PowerSpectrum(coef.a.iter().zip(&coef.b).map(|(a, b)| a * a + b * b).collect())
}

/// `Σ_k [a_k cos(2πkt/T) + b_k sin(2πkt/T)]` for `t = 0..T-1`.
pub fn reconstruct(coef: &HarmonicCoefficients) -> Vec<f64> {
    let len = coef.series_len;
    (0..len)
        .map(|t| {
            (0..coef.k())
                .map(|i| {
                    let (c, s) = basis(i + 1, t, len);
                    coef.a[i] * c + coef.b[i] * s
                })
                .sum()
        })
        .collect()
}

/// Spectrum `λ_k(θ)` of the model output: integrate, then decompose.
pub fn model_spectrum(
    theta: &ThetaVector,
    k: usize,
    settings: &OdeSettings,
) -> std::result::Result<PowerSpectrum, IntegrationFailure> {
    let traj = ode::integrate(theta, settings)?;
    let coef = harmonic_coefficients(&traj.values, k)
        .expect("K is validated against n_points before any model evaluation");
    Ok(power_spectrum(&coef))
}

/// Log-density of `ŝ` given latent power `s`, where `ŝ/V` is noncentral
/// chi-square with two degrees of freedom and noncentrality `s/V`:
///
/// `log f = -log(2V) - (ŝ + s)/(2V) + log I0(√(ŝ s)/V)`.
pub fn log_density_shat_given_s(s_hat: f64, s: f64, v: f64) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidArgument(format!("V must be positive, got {v}")));
    }
    Ok(log_density_shat_given_s_unchecked(s_hat, s, v))
}

#[inline]
pub(crate) fn log_density_shat_given_s_unchecked(s_hat: f64, s: f64, v: f64) -> f64 {
    if s_hat < 0.0 || s < 0.0 {
        return f64::NEG_INFINITY;
    }
    -(LOG_TWO + v.ln()) - (s_hat + s) / (2.0 * v) + log_bessel_i0((s_hat * s).sqrt() / v)
}

/// Pooled residual variance of the harmonic fits with `fit_k` harmonics plus
/// the mean, over all replicates. Requires `T - 1 - 2 fit_k > 0`.
pub fn estimate_noise_variance(replicates: &[Vec<f64>], fit_k: usize) -> Result<f64> {
    let mut rss = 0.0;
    let mut dof = 0usize;
    for series in replicates {
        let len = series.len();
        let used = 1 + 2 * fit_k;
        if used >= len {
            return Err(Error::InvalidArgument(format!(
                "no residual degrees of freedom: T={len}, {fit_k} harmonics"
            )));
        }
        let mean = series.iter().sum::<f64>() / len as f64;
        let coef = harmonic_coefficients(series, fit_k)?;
        let fit = reconstruct(&coef);
        rss += series
            .iter()
            .zip(&fit)
            .map(|(y, f)| (y - mean - f).powi(2))
            .sum::<f64>();
        dof += len - used;
    }
    if dof == 0 {
        return Err(Error::InvalidArgument("no replicates".to_string()));
    }
    Ok(rss / dof as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone_lands_in_one_bin() {
        let t = 66;
        let y: Vec<f64> = (0..t).map(|i| (2.0 * PI * 3.0 * i as f64 / t as f64).cos()).collect();
        let c = harmonic_coefficients(&y, 5).unwrap();
        for k in 0..5 {
            let expected_a = if k == 2 { 1.0 } else { 0.0 };
            assert!((c.a[k] - expected_a).abs() < 1e-12, "a{} = {}", k + 1, c.a[k]);
            assert!(c.b[k].abs() < 1e-12);
        }
    }

    #[test]
    fn constants_have_no_power() {
        let c = harmonic_coefficients(&[4.2; 66], 5).unwrap();
        assert!(c.a.iter().chain(&c.b).all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn k_out_of_range() {
        assert!(harmonic_coefficients(&[1.0; 66], 0).is_err());
        assert!(harmonic_coefficients(&[1.0; 66], 33).is_err());
        assert!(harmonic_coefficients(&[1.0; 66], 32).is_ok());
        assert!(harmonic_coefficients(&[1.0; 2], 1).is_err());
    }

    #[test]
    fn power_examples() {
        let mk = |a: Vec<f64>, b: Vec<f64>| HarmonicCoefficients { a, b, series_len: 10 };
        assert_eq!(power_spectrum(&mk(vec![1.0, 0.0], vec![0.0, 1.0])).0, vec![1.0, 1.0]);
        assert_eq!(power_spectrum(&mk(vec![0.0, 0.0], vec![0.0, 0.0])).0, vec![0.0, 0.0]);
        assert_eq!(power_spectrum(&mk(vec![3.0, 0.0], vec![4.0, 0.0])).0, vec![25.0, 0.0]);
    }

    #[test]
    fn central_case_is_exponential() {
        let v = log_density_shat_given_s(2.0, 0.0, 1.0).unwrap();
        assert!((v - (-1.0 - LOG_TWO)).abs() < 1e-15);
        assert!(log_density_shat_given_s(1.0, 1.0, 0.0).is_err());
        assert!(log_density_shat_given_s(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn continuous_as_s_vanishes() {
        for &(sh, v) in &[(0.5, 1.0), (3.0, 0.2), (10.0, 7.0)] {
            let central = log_density_shat_given_s(sh, 0.0, v).unwrap();
            let near = log_density_shat_given_s(sh, 1e-12, v).unwrap();
            assert!((central - near).abs() < 1e-8);
        }
    }

    #[test]
    fn change_of_variables_scale() {
        for &(sh, s, v) in &[(0.3, 1.7, 0.5), (5.0, 2.0, 1.0), (40.0, 45.0, 0.02)] {
            let base = log_density_shat_given_s(sh, s, v).unwrap();
            let doubled = log_density_shat_given_s(2.0 * sh, 2.0 * s, 2.0 * v).unwrap();
            assert!((doubled - (base - LOG_TWO)).abs() < 1e-9 * base.abs().max(1.0));
        }
    }

    #[test]
    fn noise_scale_formula() {
        let n = NoiseScale::new(0.25, 66).unwrap();
        assert_eq!(n.v, 66.0 * 0.25 / 2.0);
        assert!(NoiseScale::new(0.0, 66).is_err());
        let c = NoiseScale::with_convention(0.25, 66, VarianceConvention::Coefficient).unwrap();
        assert_eq!(c.v, 2.0 * 0.25 / 66.0);
    }

    #[test]
    fn noise_estimate_recovers_nyquist_residual() {
        // T even: a pure Nyquist component is the only residual at K = (T-1)/2
        let t = 20;
        let y: Vec<f64> = (0..t).map(|i| 5.0 + if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let s2 = estimate_noise_variance(&[y], max_harmonics(t)).unwrap();
        assert!((s2 - 0.25 * t as f64).abs() < 1e-10);
        let odd: Vec<f64> = (0..21).map(|i| i as f64).collect();
        assert!(estimate_noise_variance(&[odd], 10).is_err());
    }

    #[test]
    fn argmax_is_one_based() {
        assert_eq!(PowerSpectrum(vec![0.1, 0.2, 3.0, 0.5]).argmax(), 3);
    }
}
