use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;

use crate::nn::layers::conv2d_forward;
use crate::nn::Tensor;
use crate::par;
use crate::raster::MultispectralImage;
use crate::{Error, Result};

pub const EMBEDDER_SEED: u64 = 1337;
pub const EMBEDDING_DIM: usize = 64;
pub const EMBEDDER_CHANNELS: usize = 3;
const WIDTHS: [usize; 4] = [EMBEDDER_CHANNELS, 16, 32, EMBEDDING_DIM];

/// Fixed random convolutional feature extractor standing in for a pretrained
/// network: three 3×3 stride-2 convolutions with ReLU, then global average
/// pooling to 64 features. Weights are `N(0, 2/fan_in)` drawn from a 64-bit
/// PCG stream seeded with [`EMBEDDER_SEED`]; biases are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEmbedder {
    weights: Vec<Tensor<f64>>,
    biases: Vec<Tensor<f64>>,
}

impl Default for FeatureEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureEmbedder {
    pub fn new() -> Self {
        let mut rng = Pcg64::seed_from_u64(EMBEDDER_SEED);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in WIDTHS.windows(2) {
            let (inp, out) = (pair[0], pair[1]);
            let fan_in = inp * 9;
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let data = (0..out * fan_in).map(|_| normal.sample(&mut rng)).collect();
            weights.push(Tensor::from_vec(&[out, inp, 3, 3], data).expect("embedder shape"));
            biases.push(Tensor::zeros(&[out]));
        }
        Self { weights, biases }
    }

    /// Embed one 3-channel image given as planar `[3, h, w]` values.
    pub fn embed_planes(&self, planes: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
        if planes.len() != EMBEDDER_CHANNELS * height * width {
            return Err(Error::Shape(format!("embedder expects {EMBEDDER_CHANNELS} planes of {width}x{height}")));
        }
        let mut x = Tensor::from_vec(&[1, EMBEDDER_CHANNELS, height, width], planes.to_vec())?;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            x = conv2d_forward(&x, w, b, 2, 1).map(|v| v.max(0.0));
        }
        let spatial = x.shape()[2] * x.shape()[3];
        Ok(x.data().chunks_exact(spatial).map(|c| c.iter().sum::<f64>() / spatial as f64).collect())
    }

    /// Embed the three consecutive bands starting at `first_band` of every image.
    pub fn embed_bands(&self, images: &[MultispectralImage], first_band: usize) -> Result<Vec<Vec<f64>>> {
        par::map(images, |im| {
            let planes: Vec<f64> = (first_band..first_band + EMBEDDER_CHANNELS)
                .flat_map(|b| im.band(b).iter().map(|&v| f64::from(v)))
                .collect();
            self.embed_planes(&planes, im.height(), im.width())
        })
        .into_iter()
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_instances_agree() {
        let a = FeatureEmbedder::new();
        let b = FeatureEmbedder::new();
        assert_eq!(a, b);
        let planes: Vec<f64> = (0..3 * 16 * 16).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
        let fa = a.embed_planes(&planes, 16, 16).unwrap();
        assert_eq!(fa.len(), EMBEDDING_DIM);
        assert_eq!(fa, b.embed_planes(&planes, 16, 16).unwrap());
        assert!(fa.iter().any(|v| *v > 0.0));
    }

    #[test]
    fn weight_scale_follows_fan_in() {
        let e = FeatureEmbedder::new();
        let last = e.weights.last().unwrap().data();
        let var = last.iter().map(|v| v * v).sum::<f64>() / last.len() as f64;
        let expected = 2.0 / (32.0 * 9.0);
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }
}
