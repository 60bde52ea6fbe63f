use serde::Serialize;

use super::ensemble::EnsembleResult;
use crate::error::{Error, Result};

/// Histogram bin-width rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BinRule {
    /// `2 IQR n^(-1/3)`, falling back to Scott when the IQR vanishes.
    FreedmanDiaconis,
    /// `3.49 sd n^(-1/3)`.
    Scott,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Binning {
    pub rule: BinRule,
    /// Also fit a Gaussian kernel density and take the mode from it.
    pub kde: bool,
}

impl Default for Binning {
    fn default() -> Self {
        Binning { rule: BinRule::FreedmanDiaconis, kde: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdeSummary {
    /// Silverman's rule `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
    pub bandwidth: f64,
    pub mode: f64,
    pub mode_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub n_samples: usize,
    /// `counts.len() + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `count / (n * width)` per bin.
    pub density: Vec<f64>,
    /// Center of the fullest bin.
    pub histogram_mode: f64,
    /// KDE mode when a kernel estimate was made, histogram mode otherwise.
    pub mode: f64,
    pub mode_density: f64,
    pub kde: Option<KdeSummary>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Histogram and mode of the ensemble's energy samples.
pub fn hamiltonian_density(result: &EnsembleResult, binning: &Binning) -> Result<DensityEstimate> {
    let energies =
        result.column("energy").ok_or_else(|| Error::InsufficientData("ensemble did not record energy".into()))?;
    density_estimate(&energies, binning)
}

/// Histogram, and optionally a Gaussian KDE, of arbitrary samples.
pub fn density_estimate(samples: &[f64], binning: &Binning) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to estimate a density from".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("samples contain non-finite values".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let nf = n as f64;
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let mean = sorted.iter().sum::<f64>() / nf;
    let sd = if n > 1 { (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt() } else { 0.0 };
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);

    let range = hi - lo;
    let n_bins = if range == 0.0 {
        1
    } else {
        let scott = 3.49 * sd * nf.powf(-1.0 / 3.0);
        let width = match binning.rule {
            BinRule::FreedmanDiaconis if iqr > 0.0 => 2.0 * iqr * nf.powf(-1.0 / 3.0),
            BinRule::FreedmanDiaconis | BinRule::Scott => scott,
            BinRule::Fixed(k) => range / k.max(1) as f64,
        };
        if width > 0.0 {
            ((range / width).ceil() as usize).clamp(1, 100_000)
        } else {
            1
        }
    };
    let edges: Vec<f64> = if range == 0.0 {
        let half = 0.5 * (lo.abs() * 1e-9).max(1e-12);
        vec![lo - half, lo + half]
    } else {
        (0..=n_bins).map(|i| if i == n_bins { hi } else { lo + range * i as f64 / n_bins as f64 }).collect()
    };
    let mut counts = vec![0u64; n_bins];
    for &v in &sorted {
        let b = if range == 0.0 { 0 } else { (((v - lo) / range * n_bins as f64) as usize).min(n_bins - 1) };
        counts[b] += 1;
    }
    let density: Vec<f64> =
        counts.iter().zip(edges.windows(2)).map(|(&c, e)| c as f64 / (nf * (e[1] - e[0]))).collect();
    let best = (0..n_bins).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    let histogram_mode = 0.5 * (edges[best] + edges[best + 1]);

    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let kde = if binning.kde && spread > 0.0 {
        let bandwidth = 0.9 * spread * nf.powf(-0.2);
        Some(kde_mode(&sorted, bandwidth))
    } else {
        None
    };
    let (mode, mode_density) = match &kde {
        Some(k) => (k.mode, k.mode_density),
        None => (histogram_mode, density[best]),
    };
    Ok(DensityEstimate { n_samples: n, edges, counts, density, histogram_mode, mode, mode_density, kde })
}

fn exact_kde(sorted: &[f64], bw: f64, x: f64) -> f64 {
    let lo = sorted.partition_point(|&v| v < x - 8.0 * bw);
    let hi = sorted.partition_point(|&v| v <= x + 8.0 * bw);
    let s: f64 = sorted[lo..hi].iter().map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp()).sum();
    s / (sorted.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt())
}

/// Mode of the Gaussian KDE: linear binning onto a grid, direct convolution
/// to locate the peak, then refinement with the exact estimator.
fn kde_mode(sorted: &[f64], bw: f64) -> KdeSummary {
    const GRID: usize = 2048;
    let n = sorted.len();
    let a = sorted[0] - 3.0 * bw;
    let b = sorted[n - 1] + 3.0 * bw;
    let h = (b - a) / (GRID - 1) as f64;
    let mut mass = vec![0.0; GRID];
    for &v in sorted {
        let pos = (v - a) / h;
        let i = (pos.floor() as usize).min(GRID - 2);
        let f = pos - i as f64;
        mass[i] += 1.0 - f;
        mass[i + 1] += f;
    }
    let reach = ((4.0 * bw / h).ceil() as usize).min(GRID);
    let kernel: Vec<f64> = (0..=reach).map(|j| (-0.5 * (j as f64 * h / bw).powi(2)).exp()).collect();
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..GRID {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(GRID - 1);
        let s: f64 = (lo..=hi).map(|j| mass[j] * kernel[i.abs_diff(j)]).sum();
        if s > best.1 {
            best = (i, s);
        }
    }
    // golden-section search on the exact estimator around the coarse peak
    let center = a + best.0 as f64 * h;
    let (mut l, mut r) = (center - 2.0 * h, center + 2.0 * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = r - g * (r - l);
    let mut x2 = l + g * (r - l);
    let (mut f1, mut f2) = (exact_kde(sorted, bw, x1), exact_kde(sorted, bw, x2));
    for _ in 0..60 {
        if f1 < f2 {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + g * (r - l);
            f2 = exact_kde(sorted, bw, x2);
        } else {
            r = x2;
            x2 = x1;
            f2 = f1;
            x1 = r - g * (r - l);
            f1 = exact_kde(sorted, bw, x1);
        }
    }
    let mode = 0.5 * (l + r);
    KdeSummary { bandwidth: bw, mode, mode_density: exact_kde(sorted, bw, mode) }
}
