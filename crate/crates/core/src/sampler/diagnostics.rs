use super::WeightedSample;

/// Cumulative weighted histograms of each parameter at several checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDiagnostic {
    /// Number of retained samples included at each snapshot.
    pub checkpoints: Vec<usize>,
    /// `snapshots[j][c][bin]`: mass of parameter `j` in `bin` at checkpoint `c`.
    pub snapshots: Vec<Vec<Vec<f64>>>,
    /// Total-variation distance between successive snapshots, per parameter.
    pub tv: Vec<Vec<f64>>,
    pub ranges: Vec<(f64, f64)>,
    pub threshold: f64,
    /// True when the last pair of snapshots differs by less than the
    /// threshold for every parameter.
    pub stationary: bool,
}

/// Weighted histograms of every `θ_j` using all samples up to each
/// checkpoint; values outside `ranges[j]` are clamped into the end bins.
pub fn cumulative_histogram_diagnostic(
    samples: &[WeightedSample],
    checkpoints: &[usize],
    ranges: &[(f64, f64)],
    bins: usize,
    threshold: f64,
) -> HistogramDiagnostic {
    let bins = bins.max(1);
    let dim = ranges.len();
    let mut cps: Vec<usize> = checkpoints.iter().map(|&c| c.min(samples.len())).filter(|&c| c > 0).collect();
    cps.dedup();
    let mut snapshots = vec![Vec::with_capacity(cps.len()); dim];
    let mut mass = vec![vec![0.0; bins]; dim];
    let mut total = 0.0;
    let mut next = 0;
    for (b, s) in samples.iter().enumerate() {
        if next >= cps.len() {
            break;
        }
        for (theta, w) in s.thetas.iter().zip(&s.weights) {
            for (j, &(lo, hi)) in ranges.iter().enumerate() {
                let x = (theta[j] - lo) / (hi - lo);
                let bin = ((x * bins as f64).floor().max(0.0) as usize).min(bins - 1);
                mass[j][bin] += w;
            }
        }
        total += s.weights.iter().sum::<f64>();
        if b + 1 == cps[next] {
            for j in 0..dim {
                snapshots[j].push(mass[j].iter().map(|m| m / total).collect::<Vec<f64>>());
            }
            next += 1;
        }
    }
    let tv: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|snaps| {
            snaps
                .windows(2)
                .map(|p| 0.5 * p[0].iter().zip(&p[1]).map(|(a, b)| (a - b).abs()).sum::<f64>())
                .collect()
        })
        .collect();
    let stationary = tv.iter().all(|t| t.last().is_none_or(|v| *v < threshold));
    HistogramDiagnostic {
        checkpoints: cps,
        snapshots,
        tv,
        ranges: ranges.to_vec(),
        threshold,
        stationary,
    }
}
