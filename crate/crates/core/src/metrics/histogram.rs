use serde::{Deserialize, Serialize};

use crate::raster::{MultispectralImage, PlotDataset, BAND_COUNT};
use crate::{Error, Result};

pub const DEFAULT_HISTOGRAM_BINS: usize = 256;
const CHI_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramScores {
    pub chi_square: f64,
    pub intersection: f64,
    pub bhattacharyya: f64,
}

/// Per-band pixel histograms over [0, 1], each normalized to sum 1.
pub fn band_histograms(images: &[MultispectralImage], bins: usize) -> Vec<Vec<f64>> {
    let mut hist = vec![vec![0.0f64; bins]; BAND_COUNT];
    for im in images {
        for (b, h) in hist.iter_mut().enumerate() {
            for &v in im.band(b) {
                let bin = ((f64::from(v) * bins as f64) as usize).min(bins - 1);
                h[bin] += 1.0;
            }
        }
    }
    for h in &mut hist {
        let total: f64 = h.iter().sum();
        if total > 0.0 {
            h.iter_mut().for_each(|v| *v /= total);
        }
    }
    hist
}

/// Compare normalized per-band histograms. Chi-square is summed over bands with
/// the real histogram as the expected frequencies; intersection and
/// Bhattacharyya coefficient are averaged over bands so they lie in [0, 1].
pub fn compare_histograms(real: &[Vec<f64>], synth: &[Vec<f64>]) -> HistogramScores {
    let bands = real.len() as f64;
    let mut chi = 0.0;
    let mut ic = 0.0;
    let mut bc = 0.0;
    for (r, s) in real.iter().zip(synth) {
        for (&e, &o) in r.iter().zip(s) {
            chi += (o - e).powi(2) / (e + CHI_EPS);
            ic += e.min(o);
            bc += (e * o).sqrt();
        }
    }
    HistogramScores {
        chi_square: chi,
        intersection: (ic / bands).clamp(0.0, 1.0),
        bhattacharyya: (bc / bands).clamp(0.0, 1.0),
    }
}

pub fn histogram_metrics(real: &PlotDataset, synth: &PlotDataset, bins: usize) -> Result<HistogramScores> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::validation("dataset", "histogram metrics need non-empty datasets"));
    }
    if bins == 0 {
        return Err(Error::validation("bins", "must be at least 1"));
    }
    Ok(compare_histograms(&band_histograms(&real.images, bins), &band_histograms(&synth.images, bins)))
}
