use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::raster::PlotDataset;
use crate::{Error, Result};

use super::embedder::FeatureEmbedder;

/// Diagonal loading applied to both covariances before the matrix square root.
pub const COV_SHRINKAGE: f64 = 1e-6;

fn moments(features: &[Vec<f64>], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = features.len();
    let x = DMatrix::from_fn(n, dim, |i, j| features[i][j]);
    let mean = DVector::from_fn(dim, |j, _| x.column(j).sum() / n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mean[j]);
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    for j in 0..dim {
        cov[(j, j)] += COV_SHRINKAGE;
    }
    (mean, cov)
}

/// Symmetric positive semi-definite square root via eigendecomposition,
/// clipping negative eigenvalues to zero.
fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets:
/// `‖μr − μs‖² + Tr(Σr + Σs − 2(Σr Σs)^½)`, clamped at 0.
///
/// `Tr (Σr Σs)^½` is evaluated as `Tr (Σr^½ Σs Σr^½)^½`, which has the same
/// eigenvalues but is symmetric, so both square roots are real eigendecompositions.
pub fn fid(real: &[Vec<f64>], synth: &[Vec<f64>]) -> Result<f64> {
    if real.len() < 2 || synth.len() < 2 {
        return Err(Error::Insufficient(format!(
            "FID needs at least 2 samples per side, got {} and {}",
            real.len(),
            synth.len()
        )));
    }
    let dim = real[0].len();
    if dim == 0 || real.iter().chain(synth).any(|f| f.len() != dim) {
        return Err(Error::Shape("feature vectors differ in length".into()));
    }
    let (mr, cr) = moments(real, dim);
    let (ms, cs) = moments(synth, dim);
    let root_r = sqrtm_psd(&cr);
    let cross = sqrtm_psd(&(&root_r * &cs * &root_r));
    let value = (mr - ms).norm_squared() + cr.trace() + cs.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidScores {
    pub fid_mean: f64,
    pub fid_bands_123: f64,
    pub fid_bands_345: f64,
}

/// FID on bands 1–3 and on bands 3–5 (1-indexed, inclusive; band 3 is in both).
pub fn fid_multispectral(real: &PlotDataset, synth: &PlotDataset, embedder: &FeatureEmbedder) -> Result<FidScores> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::validation("dataset", "FID needs non-empty datasets"));
    }
    if real.image_size() != synth.image_size() {
        return Err(Error::Shape(format!(
            "image sizes differ: {:?} vs {:?}",
            real.image_size(),
            synth.image_size()
        )));
    }
    let slice = |first: usize| -> Result<f64> {
        fid(&embedder.embed_bands(&real.images, first)?, &embedder.embed_bands(&synth.images, first)?)
    };
    let fid_bands_123 = slice(0)?;
    let fid_bands_345 = slice(2)?;
    Ok(FidScores { fid_mean: (fid_bands_123 + fid_bands_345) / 2.0, fid_bands_123, fid_bands_345 })
}
