use serde::{Deserialize, Serialize};

use crate::raster::{inner_rectangle, MultispectralImage, BAND_COUNT};
use crate::{Error, Result};

/// Per-band mean and standard deviation of reflectance over a set of images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub mean: [f64; BAND_COUNT],
    pub std: [f64; BAND_COUNT],
    pub source_count: usize,
}

/// Mean/std per band over every inner-rectangle pixel of every image.
pub fn spectral_profile(images: &[MultispectralImage], margin_fraction: f64) -> Result<SpectralProfile> {
    if images.is_empty() {
        return Err(Error::validation("images", "spectral profile of an empty image set"));
    }
    let mut sum = [0.0f64; BAND_COUNT];
    let mut sum_sq = [0.0f64; BAND_COUNT];
    let mut count = 0usize;
    for image in images {
        let crop = inner_rectangle(image, margin_fraction)?;
        for b in 0..BAND_COUNT {
            for &v in crop.band(b) {
                let v = f64::from(v);
                sum[b] += v;
                sum_sq[b] += v * v;
            }
        }
        count += crop.width() * crop.height();
    }
    let n = count as f64;
    let mut mean = [0.0; BAND_COUNT];
    let mut std = [0.0; BAND_COUNT];
    for b in 0..BAND_COUNT {
        mean[b] = sum[b] / n;
        std[b] = (sum_sq[b] / n - mean[b] * mean[b]).max(0.0).sqrt();
    }
    Ok(SpectralProfile { mean, std, source_count: images.len() })
}

/// Value returned by [`profile_r2`] when the real profile is flat but the
/// synthetic one is not.
pub const R2_DEGENERATE: f64 = -1e9;

/// Coefficient of determination of the synthetic band means against the real ones.
pub fn profile_r2(real: &SpectralProfile, synth: &SpectralProfile) -> f64 {
    let real_mean = real.mean.iter().sum::<f64>() / BAND_COUNT as f64;
    let ss_tot: f64 = real.mean.iter().map(|r| (r - real_mean).powi(2)).sum();
    let ss_res: f64 = real.mean.iter().zip(&synth.mean).map(|(r, s)| (r - s).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { R2_DEGENERATE };
    }
    1.0 - ss_res / ss_tot
}

const SID_EPS: f64 = 1e-12;

/// Spectral information divergence between two mean spectra (natural log).
pub fn sid(a: &SpectralProfile, b: &SpectralProfile) -> Result<f64> {
    sid_vectors(&a.mean, &b.mean)
}

pub fn sid_vectors(a: &[f64; BAND_COUNT], b: &[f64; BAND_COUNT]) -> Result<f64> {
    let normalize = |v: &[f64; BAND_COUNT]| -> Result<[f64; BAND_COUNT]> {
        if v.iter().all(|&x| x == 0.0) || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::validation("profile", "SID needs a non-negative, non-zero spectrum"));
        }
        let shifted = v.map(|x| x + SID_EPS);
        let total: f64 = shifted.iter().sum();
        Ok(shifted.map(|x| x / total))
    };
    let p = normalize(a)?;
    let q = normalize(b)?;
    let kl = |p: &[f64; BAND_COUNT], q: &[f64; BAND_COUNT]| -> f64 {
        p.iter().zip(q).map(|(pi, qi)| pi * (pi / qi).ln()).sum()
    };
    Ok((kl(&p, &q) + kl(&q, &p)).max(0.0))
}
