//! The fixed 23-value feature vector computed from one window.
//!
//! Order: for each axis x, y, z: mean, std, min, max, median, energy; then
//! Pearson correlations xy, yz, xz; then magnitude mean and std.

use crate::model::Sample;

pub const N_FEATURES: usize = 23;
pub const FEATURE_SPEC_VERSION: u32 = 1;

pub type FeatureVector = [f64; N_FEATURES];

/// Names in vector order, e.g. `x_mean`, `corr_xy`, `mag_std`.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(N_FEATURES);
    for axis in ["x", "y", "z"] {
        for stat in ["mean", "std", "min", "max", "median", "energy"] {
            names.push(format!("{axis}_{stat}"));
        }
    }
    names.extend(["corr_xy", "corr_yz", "corr_xz", "mag_mean", "mag_std"].map(String::from));
    names
}

struct Moments {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn moments(v: &[f64]) -> Moments {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        // a constant series: avoid rounding noise from the sums
        return Moments { mean: min, std: 0.0, min, max };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Moments { mean, std: var.sqrt(), min, max }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn correlation(a: &[f64], ma: &Moments, b: &[f64], mb: &Moments) -> f64 {
    if ma.std == 0.0 || mb.std == 0.0 {
        return 0.0;
    }
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma.mean) * (y - mb.mean)).sum();
    let va: f64 = a.iter().map(|x| (x - ma.mean) * (x - ma.mean)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb.mean) * (y - mb.mean)).sum();
    (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
}

/// Features of one window. An empty window yields all zeros.
pub fn extract_features(data: &[Sample]) -> FeatureVector {
    let mut out = [0.0; N_FEATURES];
    if data.is_empty() {
        return out;
    }
    let axes: [Vec<f64>; 3] = std::array::from_fn(|a| data.iter().map(|s| s[a]).collect());
    let m: [Moments; 3] = std::array::from_fn(|a| moments(&axes[a]));
    let n = data.len() as f64;
    for a in 0..3 {
        let base = a * 6;
        out[base] = m[a].mean;
        out[base + 1] = m[a].std;
        out[base + 2] = m[a].min;
        out[base + 3] = m[a].max;
        out[base + 4] = median(&axes[a]);
        out[base + 5] = axes[a].iter().map(|x| x * x).sum::<f64>() / n;
    }
    out[18] = correlation(&axes[0], &m[0], &axes[1], &m[1]);
    out[19] = correlation(&axes[1], &m[1], &axes[2], &m[2]);
    out[20] = correlation(&axes[0], &m[0], &axes[2], &m[2]);
    let mag: Vec<f64> = data.iter().map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()).collect();
    let mm = moments(&mag);
    out[21] = mm.mean;
    out[22] = mm.std;
    out
}
