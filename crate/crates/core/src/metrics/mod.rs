//! Fidelity metrics between a real and a synthetic dataset.

mod embedder;
mod fid;
mod histogram;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use embedder::{FeatureEmbedder, EMBEDDER_CHANNELS, EMBEDDER_SEED, EMBEDDING_DIM};
pub use fid::{fid, fid_multispectral, FidScores, COV_SHRINKAGE};
pub use histogram::{band_histograms, compare_histograms, histogram_metrics, HistogramScores, DEFAULT_HISTOGRAM_BINS};

use crate::physics::{profile_r2, sid, spectral_profile};
use crate::raster::PlotDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub real: usize,
    pub synthetic: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fid_mean: f64,
    pub fid_bands_123: f64,
    pub fid_bands_345: f64,
    pub chi_square: f64,
    pub intersection: f64,
    pub bhattacharyya: f64,
    pub sid: f64,
    pub profile_r2: f64,
    pub sample_counts: SampleCounts,
}

impl MetricsReport {
    pub fn named_values(&self) -> [(&'static str, f64); 8] {
        [
            ("fid_mean", self.fid_mean),
            ("fid_bands_123", self.fid_bands_123),
            ("fid_bands_345", self.fid_bands_345),
            ("chi_square", self.chi_square),
            ("intersection", self.intersection),
            ("bhattacharyya", self.bhattacharyya),
            ("sid", self.sid),
            ("profile_r2", self.profile_r2),
        ]
    }
}

/// Every metric for `synth` against `real`. Spectral profiles (for SID and R²)
/// use the inner rectangle given by `margin_fraction`.
pub fn full_report(
    real: &PlotDataset,
    synth: &PlotDataset,
    embedder: &FeatureEmbedder,
    margin_fraction: f64,
    bins: usize,
) -> Result<MetricsReport> {
    real.validate()?;
    synth.validate()?;
    let f = fid_multispectral(real, synth, embedder)?;
    let h = histogram_metrics(real, synth, bins)?;
    let rp = spectral_profile(&real.images, margin_fraction)?;
    let sp = spectral_profile(&synth.images, margin_fraction)?;
    let report = MetricsReport {
        fid_mean: f.fid_mean,
        fid_bands_123: f.fid_bands_123,
        fid_bands_345: f.fid_bands_345,
        chi_square: h.chi_square,
        intersection: h.intersection,
        bhattacharyya: h.bhattacharyya,
        sid: sid(&rp, &sp)?,
        profile_r2: profile_r2(&rp, &sp),
        sample_counts: SampleCounts { real: real.len(), synthetic: synth.len() },
    };
    if let Some(bad) = report.named_values().iter().map(|(_, v)| *v).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("metrics report ({bad})")));
    }
    Ok(report)
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Health, MultispectralImage, Origin, PlotLabel, BAND_COUNT};
    use crate::rng::seeded;
    use rand::Rng;

    fn noise_dataset(n: usize, seed: u64, origin: Origin) -> PlotDataset {
        let mut rng = seeded(seed);
        let images = (0..n)
            .map(|_| {
                MultispectralImage::new(16, 16, (0..16 * 16 * BAND_COUNT).map(|_| rng.random::<f32>()).collect()).unwrap()
            })
            .collect();
        let labels = vec![PlotLabel { health: Health::Healthy, date_index: 0, origin }; n];
        PlotDataset::new(images, labels, vec!["date_0".into()], seed).unwrap()
    }

    fn structured_dataset(n: usize, seed: u64) -> PlotDataset {
        let mut rng = seeded(seed);
        let images = (0..n)
            .map(|_| {
                let base: [f64; BAND_COUNT] = [0.05, 0.09, 0.07, 0.3, 0.45];
                let data = (0..BAND_COUNT)
                    .flat_map(|b| {
                        let shift = rng.random_range(-0.02..0.02);
                        (0..256)
                            .map(|p| (base[b] + shift + 0.03 * ((p % 16) as f64 * 0.7).sin()) as f32)
                            .collect::<Vec<_>>()
                    })
                    .collect();
                MultispectralImage::new(16, 16, data).unwrap()
            })
            .collect();
        let labels = vec![PlotLabel { health: Health::Healthy, date_index: 0, origin: Origin::Real }; n];
        PlotDataset::new(images, labels, vec!["date_0".into()], seed).unwrap()
    }

    #[test]
    fn identical_datasets_score_perfectly() {
        let real = structured_dataset(20, 1);
        let r = full_report(&real, &real, &FeatureEmbedder::new(), 0.1, 256).unwrap();
        assert!(r.fid_mean.abs() < 1e-6);
        assert!(r.chi_square.abs() < 1e-12);
        assert!((r.intersection - 1.0).abs() < 1e-12);
        assert!((r.bhattacharyya - 1.0).abs() < 1e-12);
        assert!(r.sid.abs() < 1e-12);
        assert_eq!(r.profile_r2, 1.0);
    }

    #[test]
    fn noise_report_is_finite_and_round_trips() {
        let real = structured_dataset(20, 1);
        let synth = noise_dataset(20, 2, Origin::Synthetic);
        let r = full_report(&real, &synth, &FeatureEmbedder::new(), 0.1, 256).unwrap();
        assert!(r.fid_mean > 0.0);
        assert!(r.intersection < 0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_report(&r, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), r);
    }

    #[test]
    fn band_slices_are_isolated() {
        let real = structured_dataset(20, 3);
        let noise = noise_dataset(20, 4, Origin::Real);
        let mut synth = real.clone();
        for (im, n) in synth.images.iter_mut().zip(&noise.images) {
            *im = im.with_band(4, n.band(4)).unwrap();
        }
        let e = FeatureEmbedder::new();
        let same = fid_multispectral(&real, &real, &e).unwrap();
        let f = fid_multispectral(&real, &synth, &e).unwrap();
        assert!((f.fid_bands_123 - same.fid_bands_123).abs() <= 1e-6);
        assert!(f.fid_bands_345 > 0.0);
        assert_eq!(f.fid_mean, (f.fid_bands_123 + f.fid_bands_345) / 2.0);
    }

    #[test]
    fn disjoint_supports() {
        let a = PlotDataset::new(
            vec![MultispectralImage::constant(8, 8, [0.1; BAND_COUNT]).unwrap()],
            vec![PlotLabel { health: Health::Healthy, date_index: 0, origin: Origin::Real }],
            vec!["d".into()],
            0,
        )
        .unwrap();
        let mut b = a.clone();
        b.images[0] = MultispectralImage::constant(8, 8, [0.9; BAND_COUNT]).unwrap();
        let h = histogram_metrics(&a, &b, 256).unwrap();
        assert_eq!(h.intersection, 0.0);
        assert_eq!(h.bhattacharyya, 0.0);
    }
}
