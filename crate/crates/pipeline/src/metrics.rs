//! Scalar comparisons between density fields and the summary statistics
//! used in reports.

use serde::{Deserialize, Serialize};
use voxfem::DensityField;

use crate::PipelineError;

/// Cosine of the angle between two flattened fields, 0 when either is zero.
pub fn cosine_similarity(a: &DensityField, b: &DensityField) -> Result<f64, PipelineError> {
    if a.dims() != b.dims() {
        return Err(PipelineError::ShapeMismatch(format!("{} vs {}", a.dims(), b.dims())));
    }
    Ok(cosine(a.values(), b.values()))
}

/// Slice form of [`cosine_similarity`]; the caller guarantees equal length.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// Fraction of voxels at or above `threshold`.
pub fn volume_fraction(d: &DensityField, threshold: f64) -> f64 {
    occupied_fraction(d.values(), threshold)
}

pub fn occupied_fraction<T: Copy + Into<f64>>(values: &[T], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v.into() >= threshold).count() as f64 / values.len() as f64
}

/// Median of the values, `None` when empty. NaNs sort last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

/// Counts per bin over consecutive `edges`. Bins are half open except the
/// last, which also takes its upper edge; values outside are dropped.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = edges
        .windows(2)
        .map(|w| HistogramBin {
            bin_low: w[0],
            bin_high: w[1],
            count: 0,
        })
        .collect();
    let last = bins.len().saturating_sub(1);
    for &v in values {
        if let Some(i) = bins
            .iter()
            .position(|b| b.bin_low <= v && (v < b.bin_high || (v == b.bin_high && b.bin_high == edges[last + 1])))
        {
            bins[i].count += 1;
        }
    }
    bins
}

pub fn linear_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

/// Geometric edges, for quantities spanning orders of magnitude.
pub fn log_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let mut edges: Vec<f64> = (0..=bins).map(|i| 10f64.powf(a + (b - a) * i as f64 / bins as f64)).collect();
    // keep the extremes exact so they land inside the first and last bins
    edges[0] = lo;
    edges[bins] = hi;
    edges
}
