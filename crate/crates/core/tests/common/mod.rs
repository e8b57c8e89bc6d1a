//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// Least-squares fit of `y_t = μ + Σ_k a_k cos(2πkt/T) + b_k sin(2πkt/T)`
/// through the normal equations and Gaussian elimination.
pub fn dense_harmonic_fit(y: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let t = y.len();
    let cols = 1 + 2 * k;
    let row = |ti: usize| -> Vec<f64> {
        let mut r = vec![1.0];
        for kk in 1..=k {
            let ph = 2.0 * PI * kk as f64 * ti as f64 / t as f64;
            r.push(ph.cos());
            r.push(ph.sin());
        }
        r
    };
    let mut a = vec![vec![0.0; cols + 1]; cols];
    for (ti, yt) in y.iter().enumerate() {
        let r = row(ti);
        for i in 0..cols {
            for j in 0..cols {
                a[i][j] += r[i] * r[j];
            }
            a[i][cols] += r[i] * yt;
        }
    }
    let x = solve(a);
    let av = (0..k).map(|i| x[1 + 2 * i]).collect();
    let bv = (0..k).map(|i| x[2 + 2 * i]).collect();
    (av, bv)
}

/// Solves an augmented system `[A | b]` with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for j in c..=n {
                a[r][j] -= f * a[c][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r][j] * x[j]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    x
}

/// Log of one Poisson-mixture term of the noncentral χ²₂ density of `x`
/// with noncentrality `mu`: `Pois(j; mu/2) · χ²_{2+2j}(x)`.
fn ncx2_term(x: f64, mu: f64, j: usize) -> f64 {
    let jf = j as f64;
    let pois = if mu == 0.0 {
        if j == 0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        -mu / 2.0 + jf * (mu / 2.0).ln() - ln_gamma(jf + 1.0)
    };
    let m = jf + 1.0;
    let chi = (m - 1.0) * x.ln() - x / 2.0 - m * 2f64.ln() - ln_gamma(m);
    pois + chi
}

/// Index of the largest mixture term, found by scanning the log terms.
pub fn ncx2_mode_term(x: f64, mu: f64) -> usize {
    if mu == 0.0 {
        return 0;
    }
    let guess = ((mu * x).sqrt() / 2.0) as usize;
    let lo = guess.saturating_sub(50);
    (lo..guess + 50).max_by(|&a, &b| ncx2_term(x, mu, a).total_cmp(&ncx2_term(x, mu, b))).unwrap()
}

/// `terms`-term series for `log p(ŝ | s)` where `ŝ/V ~ χ²₂(s/V)`, summed
/// from term `start`.
pub fn ncx2_series(s_hat: f64, s: f64, v: f64, start: usize, terms: usize) -> f64 {
    let x = s_hat / v;
    let mu = s / v;
    let logs: Vec<f64> = (start..start + terms).map(|j| ncx2_term(x, mu, j)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln() - v.ln()
}

/// 200-term series centred on its dominant term.
pub fn ncx2_series_200(s_hat: f64, s: f64, v: f64) -> f64 {
    let j = ncx2_mode_term(s_hat / v, s / v);
    ncx2_series(s_hat, s, v, j.saturating_sub(100), 200)
}

/// Tanh-sinh quadrature on `[a, b]`, refined until successive levels agree.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    let eval = |h: f64, odd_only: bool| -> f64 {
        let mut sum = 0.0;
        let mut k: i64 = if odd_only { 1 } else { 0 };
        let step = if odd_only { 2 } else { 1 };
        loop {
            let t = k as f64 * h;
            let u = 0.5 * PI * t.sinh();
            let w = 0.5 * PI * t.cosh() / u.cosh().powi(2);
            if w < 1e-300 || t > 6.0 {
                break;
            }
            let r = u.tanh();
            // 1 - tanh(u) computed without cancellation
            let one_minus = 2.0 / (1.0 + (2.0 * u).exp());
            let xr = b - d * one_minus;
            let xl = a + d * one_minus;
            let mut term = 0.0;
            if k == 0 {
                term += f(c + d * r);
            } else {
                if xr < b {
                    term += f(xr);
                }
                if xl > a {
                    term += f(xl);
                }
            }
            sum += w * term;
            k += step;
        }
        sum
    };
    let mut h = 0.5;
    let mut s = eval(h, false);
    let mut est = d * h * s;
    for _ in 0..12 {
        h /= 2.0;
        s += eval(h, true);
        let next = d * h * s;
        if (next - est).abs() < 1e-14 * next.abs().max(1.0) {
            return next;
        }
        est = next;
    }
    est
}

/// `∫_a^∞ f` through `x = a + t/(1-t)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    tanh_sinh(
        |t| {
            let one = 1.0 - t;
            f(a + t / one) / (one * one)
        },
        0.0,
        1.0,
    )
}

/// Asymptotic Kolmogorov p-value for a KS distance `d` with effective size `n`.
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let sq = n.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// One-sample KS distance against a CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Survival function of χ² with `k` degrees of freedom.
pub fn chi2_sf(x: f64, k: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    1.0 - ChiSquared::new(k).unwrap().cdf(x)
}

/// Exhaustive prospect classification written from the definition: every
/// `d0`-subset bitmask, every level combination, then every full cell of
/// the `q^p` grid. Returns sorted `(mask, code)` marks and per-cell flags.
pub fn brute_prospects(points: &[(Vec<f64>, bool)], p: usize, q: usize, d0: usize, n_min: u64) -> (Vec<(u64, u64)>, Vec<bool>) {
    let level = |x: f64| ((x * q as f64).ceil() as usize).clamp(1, q);
    let digits = |mut code: u64, len: usize| -> Vec<usize> {
        let mut d = vec![0; len];
        for slot in d.iter_mut().rev() {
            *slot = (code % q as u64) as usize + 1;
            code /= q as u64;
        }
        d
    };
    let mut marks = Vec::new();
    for mask in 0u64..(1 << p) {
        if mask.count_ones() as usize != d0 {
            continue;
        }
        let coords: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        for code in 0..(q as u64).pow(d0 as u32) {
            let h = digits(code, d0);
            let hits = points
                .iter()
                .filter(|(u, ok)| *ok && coords.iter().zip(&h).all(|(&j, &l)| level(u[j]) == l))
                .count() as u64;
            if hits > n_min {
                marks.push((mask, code));
            }
        }
    }
    marks.sort_unstable();
    let cells = (0..(q as u64).pow(p as u32))
        .map(|full| {
            let levels = digits(full, p);
            marks.iter().any(|&(mask, code)| {
                let coords: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
                coords.iter().zip(digits(code, d0)).all(|(&j, l)| levels[j] == l)
            })
        })
        .collect();
    (marks, cells)
}

/// Centre of full-grid cell `code` in `(0, 1]^p`.
pub fn cell_centre(mut code: u64, p: usize, q: usize) -> Vec<f64> {
    let mut u = vec![0.0; p];
    for slot in u.iter_mut().rev() {
        *slot = ((code % q as u64) as f64 + 0.5) / q as f64;
        code /= q as u64;
    }
    u
}

/// A randomized synthetic-likelihood instance with `p ≤ 4`, `q ≤ 3`, `d0 ≤ 2`.
pub struct ProspectInstance {
    pub evals: Vec<oscal_core::prognostic::DesignEval>,
    pub p: usize,
    pub q: usize,
    pub d0: usize,
    pub n_min: u64,
    pub l_min: f64,
}

pub fn prospect_instance(seed: u64) -> ProspectInstance {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(2..=4);
    let q = rng.random_range(2..=3);
    let d0 = rng.random_range(1..=2usize.min(p));
    let n_min = rng.random_range(0..=2);
    let centre: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
    let width = rng.random_range(0.05..0.5);
    let n = rng.random_range(50..400);
    let evals: Vec<_> = (0..n)
        .map(|i| {
            let u: Vec<f64> = (0..p).map(|_| 1.0 - rng.random_range(0.0..1.0)).collect();
            let d2: f64 = u.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum();
            let loglik = if rng.random_range(0.0..1.0) < 0.05 { None } else { Some(-d2 / width) };
            oscal_core::prognostic::DesignEval { index: i as u64, u, loglik }
        })
        .collect();
    let l_min = -rng.random_range(0.1..2.0);
    ProspectInstance { evals, p, q, d0, n_min, l_min }
}

/// Prospect instrumental for a closed-form toy: a uniform sweep of `n`
/// points scored by the toy log-density, thresholded at its top `top` fraction.
pub fn toy_prospect(
    target: &oscal_core::sampler::toy::GaussianMixtureTarget,
    n: usize,
    q: usize,
    d0: usize,
    top: f64,
    seed: u64,
) -> oscal_core::sampler::ProspectInstrumental {
    use oscal_core::prognostic::{classify_prospects, generate_design, top_fraction_threshold, DesignEval, ProspectSettings};
    let bounds = target.bounds().clone();
    let p = bounds.dim();
    let evals: Vec<DesignEval> = generate_design(n, p, seed, n)
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            let l = target.log_density(&bounds.to_natural(&u));
            DesignEval { index: i as u64, u, loglik: Some(l) }
        })
        .collect();
    let l_min = top_fraction_threshold(&evals, top);
    let settings = ProspectSettings { q, d0, ..ProspectSettings::default() };
    let map = classify_prospects(&evals, p, l_min, &settings).unwrap();
    oscal_core::sampler::ProspectInstrumental::new(map, bounds).unwrap()
}

/// Two equal unit-variance components at `±c·(1, …, 1)`, `separation`
/// standard deviations apart, inside `[-half_width, half_width]^dim`.
pub fn diagonal_modes(dim: usize, separation: f64, half_width: f64) -> oscal_core::sampler::toy::GaussianMixtureTarget {
    let c = separation / 2.0 / (dim as f64).sqrt();
    oscal_core::sampler::toy::GaussianMixtureTarget::new(
        vec![vec![-c; dim], vec![c; dim]],
        vec![1.0, 1.0],
        1.0,
        oscal_core::ParamBounds::cube(dim, -half_width, half_width).unwrap(),
    )
    .unwrap()
}

/// Weighted mass on the side of the `+c` component.
pub fn upper_mass(samples: &[oscal_core::WeightedSample]) -> f64 {
    oscal_core::sampler::estimate(|t| if t.iter().sum::<f64>() > 0.0 { 1.0 } else { 0.0 }, samples).unwrap()
}
