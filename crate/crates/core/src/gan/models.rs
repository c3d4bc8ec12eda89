//! Generator, image discriminator (D1) and spectral discriminator (D2).

use crate::nn::{Layer, NetworkParams, Real, Tensor};
use crate::par;
use crate::physics::{profile_len, radial_profile_backward, radial_profile_planes, DEFAULT_RADIAL_BINS};
use crate::raster::{MultispectralImage, BAND_COUNT};
use crate::{Error, Result};

use super::config::TrainConfig;

/// Length of the D2 feature vector: radial profile plus per-band mean and std.
pub const D2_FEATURES: usize = BAND_COUNT * DEFAULT_RADIAL_BINS + 3 * BAND_COUNT;

fn conv(name: &str, inp: usize, out: usize, kernel: usize, stride: usize, pad: usize) -> Layer {
    Layer::Conv { name: name.into(), in_channels: inp, out_channels: out, kernel, stride, pad }
}

fn tconv(name: &str, inp: usize, out: usize) -> Layer {
    Layer::ConvTranspose { name: name.into(), in_channels: inp, out_channels: out, kernel: 4, stride: 2, pad: 1 }
}

fn bn(name: &str, channels: usize) -> Layer {
    Layer::BatchNorm { name: name.into(), channels }
}

fn linear(name: &str, inputs: usize, outputs: usize) -> Layer {
    Layer::Linear { name: name.into(), inputs, outputs }
}

/// Bias of the generator's final convolution (one entry per band).
pub const OUTPUT_BIAS: &str = "g.out.bias";

/// latent → seed grid → three stride-2 upsamplings → 5-band sigmoid image.
pub fn generator_topology(cfg: &TrainConfig) -> Vec<Layer> {
    let b = cfg.base_channels;
    let s = cfg.seed_side();
    vec![
        linear("g.project", cfg.latent_dim, 8 * b * s * s),
        Layer::Reshape { shape: vec![8 * b, s, s] },
        bn("g.bn0", 8 * b),
        Layer::LeakyRelu,
        tconv("g.up1", 8 * b, 4 * b),
        bn("g.bn1", 4 * b),
        Layer::LeakyRelu,
        tconv("g.up2", 4 * b, 2 * b),
        bn("g.bn2", 2 * b),
        Layer::LeakyRelu,
        tconv("g.up3", 2 * b, b),
        bn("g.bn3", b),
        Layer::LeakyRelu,
        conv("g.out", b, BAND_COUNT, 3, 1, 1),
        Layer::Sigmoid,
    ]
}

/// Three stride-2 convolutions and a linear head producing one logit.
pub fn d1_topology(cfg: &TrainConfig) -> Vec<Layer> {
    let b = cfg.base_channels;
    let s = cfg.seed_side();
    vec![
        conv("d1.conv1", BAND_COUNT, 2 * b, 4, 2, 1),
        Layer::LeakyRelu,
        conv("d1.conv2", 2 * b, 4 * b, 4, 2, 1),
        bn("d1.bn2", 4 * b),
        Layer::LeakyRelu,
        conv("d1.conv3", 4 * b, 8 * b, 4, 2, 1),
        bn("d1.bn3", 8 * b),
        Layer::LeakyRelu,
        Layer::Reshape { shape: vec![8 * b * s * s] },
        linear("d1.head", 8 * b * s * s, 1),
    ]
}

/// Fully connected head over the fixed spectral features, producing one logit.
pub fn d2_topology() -> Vec<Layer> {
    vec![
        linear("d2.fc1", D2_FEATURES, 64),
        Layer::LeakyRelu,
        linear("d2.fc2", 64, 32),
        Layer::LeakyRelu,
        linear("d2.fc3", 32, 1),
    ]
}

/// Batch of images as a `[n, 5, h, w]` tensor.
pub fn images_to_tensor<T: Real>(images: &[MultispectralImage]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::validation("images", "empty batch"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * BAND_COUNT * w * h);
    for im in images {
        if im.width() != w || im.height() != h {
            return Err(Error::Shape("images in a batch differ in size".into()));
        }
        data.extend(im.data().iter().map(|&v| T::lit(f64::from(v))));
    }
    Tensor::from_vec(&[images.len(), BAND_COUNT, h, w], data)
}

pub fn tensor_to_images<T: Real>(t: &Tensor<T>) -> Result<Vec<MultispectralImage>> {
    let s = t.shape();
    if s.len() != 4 || s[1] != BAND_COUNT {
        return Err(Error::Shape(format!("expected [n, {BAND_COUNT}, h, w], got {s:?}")));
    }
    (0..s[0])
        .map(|i| {
            let data = t.sample(i).iter().map(|v| v.f64().clamp(0.0, 1.0) as f32).collect();
            MultispectralImage::new(s[3], s[2], data)
        })
        .collect()
}

fn image_dims<T: Real>(images: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let s = images.shape();
    if s.len() != 4 || s[1] != BAND_COUNT {
        return Err(Error::Shape(format!("expected [n, {BAND_COUNT}, h, w], got {s:?}")));
    }
    Ok((s[0], s[2], s[3]))
}

/// Reflectance moments are multiplied by this before entering D2 so they sit on
/// the same O(1) scale as the log-power bins; unscaled, a blue-band mean of
/// 0.05 barely moves the head's logit.
pub const MOMENT_SCALE: f64 = 10.0;

/// Scale of the batch-diversity features; the spread of plot-mean NIR across
/// real plots is a few hundredths.
pub const DIVERSITY_SCALE: f64 = 30.0;

/// D2 features for a batch, one row per image: 5×16 radial log-power bins,
/// the 5 band means, the 5 band standard deviations (population), then the
/// 5 standard deviations of the band means across the whole batch, identical
/// on every row. Moments are scaled by [`MOMENT_SCALE`], the batch spread by
/// [`DIVERSITY_SCALE`].
///
/// The batch spread is a minibatch-discrimination signal: every other feature
/// is per image, so without it a generator that emits the same plausible plot
/// over and over looks perfectly real to D2.
pub fn d2_features<T: Real>(images: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w) = image_dims(images)?;
    let rows = par::map_range(n, |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let planes: Vec<f64> = images.sample(i).iter().map(|v| v.f64()).collect();
        let mut f = radial_profile_planes(&planes, h, w, DEFAULT_RADIAL_BINS)?;
        let (means, stds) = band_moments(&planes, h * w);
        f.extend(means.iter().chain(&stds).map(|v| v * MOMENT_SCALE));
        Ok((f, means))
    });
    let rows: Vec<(Vec<f64>, Vec<f64>)> = rows.into_iter().collect::<Result<_>>()?;
    let means: Vec<&[f64]> = rows.iter().map(|(_, m)| m.as_slice()).collect();
    let (_, spread) = batch_spread(&means);
    let mut data = Vec::with_capacity(n * D2_FEATURES);
    for (f, _) in rows {
        data.extend(f.into_iter().chain(spread.iter().map(|s| s * DIVERSITY_SCALE)).map(T::lit));
    }
    Tensor::from_vec(&[n, D2_FEATURES], data)
}

fn band_moments(planes: &[f64], plane_len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::with_capacity(BAND_COUNT);
    let mut stds = Vec::with_capacity(BAND_COUNT);
    for plane in planes.chunks_exact(plane_len) {
        let m = plane.iter().sum::<f64>() / plane_len as f64;
        let var = plane.iter().map(|v| (v - m).powi(2)).sum::<f64>() / plane_len as f64;
        means.push(m);
        stds.push(var.sqrt());
    }
    (means, stds)
}

/// Mean and population standard deviation, per band, of per-image band means.
fn batch_spread(means: &[&[f64]]) -> ([f64; BAND_COUNT], [f64; BAND_COUNT]) {
    let n = means.len() as f64;
    let mut centre = [0.0; BAND_COUNT];
    let mut spread = [0.0; BAND_COUNT];
    for b in 0..BAND_COUNT {
        centre[b] = means.iter().map(|m| m[b]).sum::<f64>() / n;
        spread[b] = (means.iter().map(|m| (m[b] - centre[b]).powi(2)).sum::<f64>() / n).sqrt();
    }
    (centre, spread)
}

const STD_FLOOR: f64 = 1e-12;

/// Gradient of `Σ grad_features ⊙ d2_features(images)` with respect to the images.
pub fn d2_features_backward<T: Real>(images: &Tensor<T>, grad_features: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w) = image_dims(images)?;
    if grad_features.shape() != [n, D2_FEATURES] {
        return Err(Error::Shape(format!("feature gradient has shape {:?}", grad_features.shape())));
    }
    let plane_len = h * w;
    let radial = profile_len(DEFAULT_RADIAL_BINS);
    let spread_at = radial + 2 * BAND_COUNT;
    let moments = par::map_range(n, |i| {
        let planes: Vec<f64> = images.sample(i).iter().map(|v| v.f64()).collect();
        band_moments(&planes, plane_len)
    });
    let means: Vec<&[f64]> = moments.iter().map(|(m, _)| m.as_slice()).collect();
    let (centre, spread) = batch_spread(&means);
    // Every row carries the same spread feature, so its upstream gradient is the column sum.
    let mut spread_grad = [0.0; BAND_COUNT];
    for i in 0..n {
        let g = grad_features.sample(i);
        for b in 0..BAND_COUNT {
            spread_grad[b] += g[spread_at + b].f64();
        }
    }
    let rows = par::map_range(n, |i| -> Result<Vec<T>> {
        let planes: Vec<f64> = images.sample(i).iter().map(|v| v.f64()).collect();
        let g: Vec<f64> = grad_features.sample(i).iter().map(|v| v.f64()).collect();
        let mut grad = radial_profile_backward(&planes, h, w, DEFAULT_RADIAL_BINS, &g[..radial])?;
        let (means, stds) = &moments[i];
        for b in 0..BAND_COUNT {
            let mut gm = MOMENT_SCALE * g[radial + b] / plane_len as f64;
            if spread[b] > STD_FLOOR {
                gm += DIVERSITY_SCALE * spread_grad[b] * (means[b] - centre[b])
                    / (n as f64 * spread[b] * plane_len as f64);
            }
            let gs = if stds[b] > STD_FLOOR {
                MOMENT_SCALE * g[radial + BAND_COUNT + b] / (plane_len as f64 * stds[b])
            } else {
                0.0
            };
            let range = b * plane_len..(b + 1) * plane_len;
            for (gv, x) in grad[range.clone()].iter_mut().zip(&planes[range]) {
                *gv += gm + gs * (x - means[b]);
            }
        }
        Ok(grad.into_iter().map(T::lit).collect())
    });
    let rows: Vec<Vec<T>> = rows.into_iter().collect::<Result<_>>()?;
    Tensor::from_vec(images.shape(), rows.concat())
}

fn probabilities<T: Real>(logits: Tensor<T>) -> Vec<f64> {
    logits.data().iter().map(|l| crate::nn::layers::sigmoid_scalar(l.f64())).collect()
}

/// Inference-mode generator: `[n, latent_dim]` latents to `[n, 5, s, s]` images in [0, 1].
pub fn generator_forward<T: Real>(params: &NetworkParams<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
    params.forward(z)
}

/// Probability that each image is real, according to D1 (inference mode).
pub fn d1_forward<T: Real>(params: &NetworkParams<T>, images: &Tensor<T>) -> Result<Vec<f64>> {
    Ok(probabilities(params.forward(images)?))
}

/// Probability that each image is real, according to D2.
pub fn d2_forward<T: Real>(params: &NetworkParams<T>, images: &Tensor<T>) -> Result<Vec<f64>> {
    Ok(probabilities(params.forward(&d2_features(images)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check::{numeric_grad, probe_indices, relative_error, FD_STEP};
    use crate::rng::seeded;
    use rand::Rng;

    fn random_images<T: Real>(n: usize, side: usize, seed: u64) -> Tensor<T> {
        let mut rng = seeded(seed);
        let data = (0..n * BAND_COUNT * side * side).map(|_| T::lit(rng.random_range(0.05..0.95))).collect();
        Tensor::from_vec(&[n, BAND_COUNT, side, side], data).unwrap()
    }

    #[test]
    fn default_generator_shape_and_range() {
        let cfg = TrainConfig::default();
        let g = NetworkParams::<f32>::init(generator_topology(&cfg), &mut seeded(1));
        let mut rng = seeded(2);
        let z = Tensor::from_vec(&[4, 100], (0..400).map(|_| rng.random_range(-2.0f32..2.0)).collect()).unwrap();
        let out = generator_forward(&g, &z).unwrap();
        assert_eq!(out.shape(), &[4, 5, 32, 32]);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out, generator_forward(&g, &z).unwrap());
    }

    #[test]
    fn generator_supports_64_pixel_output() {
        let cfg = TrainConfig { image_size: 64, ..TrainConfig::default() };
        cfg.validate().unwrap();
        let g = NetworkParams::<f32>::init(generator_topology(&cfg), &mut seeded(1));
        let out = generator_forward(&g, &Tensor::zeros(&[2, 100])).unwrap();
        assert_eq!(out.shape(), &[2, 5, 64, 64]);
    }

    #[test]
    fn zero_weights_give_one_half() {
        let cfg = TrainConfig::default();
        let g = NetworkParams::<f32>::init(generator_topology(&cfg), &mut seeded(1)).zeroed();
        let out = generator_forward(&g, &Tensor::filled(&[2, 100], 0.7)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));

        let images = random_images::<f32>(3, 32, 4);
        let d1 = NetworkParams::<f32>::init(d1_topology(&cfg), &mut seeded(1)).zeroed();
        assert_eq!(d1_forward(&d1, &images).unwrap(), vec![0.5; 3]);
        let d2 = NetworkParams::<f32>::init(d2_topology(), &mut seeded(1)).zeroed();
        assert_eq!(d2_forward(&d2, &images).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn inference_scores_duplicates_equally() {
        let cfg = TrainConfig::default();
        let d1 = NetworkParams::<f32>::init(d1_topology(&cfg), &mut seeded(5));
        let d2 = NetworkParams::<f32>::init(d2_topology(), &mut seeded(6));
        let imgs = random_images::<f32>(2, 32, 7);
        let first = Tensor::from_vec(&[1, 5, 32, 32], imgs.sample(0).to_vec()).unwrap();
        let dup = Tensor::stack_batches(&[imgs.clone(), first.clone()]).unwrap();
        for p in [d1_forward(&d1, &dup).unwrap(), d2_forward(&d2, &dup).unwrap()] {
            assert_eq!(p.len(), 3);
            assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
            assert_eq!(p[0], p[2]);
        }
        // D1 is strictly per sample; D2 also sees the batch spread.
        assert_eq!(d1_forward(&d1, &first).unwrap()[0], d1_forward(&d1, &dup).unwrap()[0]);
        assert_ne!(d2_forward(&d2, &first).unwrap()[0], d2_forward(&d2, &dup).unwrap()[0]);
    }

    #[test]
    fn d2_ignores_circular_shifts() {
        let d2 = NetworkParams::<f64>::init(d2_topology(), &mut seeded(6));
        let imgs = random_images::<f64>(1, 32, 8);
        let mut shifted = imgs.clone();
        for b in 0..BAND_COUNT {
            for y in 0..32 {
                for x in 0..32 {
                    shifted.data_mut()[(b * 32 + (y + 5) % 32) * 32 + (x + 11) % 32] = imgs.data()[(b * 32 + y) * 32 + x];
                }
            }
        }
        let a = d2_forward(&d2, &imgs).unwrap()[0];
        let b = d2_forward(&d2, &shifted).unwrap()[0];
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn feature_gradient_matches_finite_differences() {
        let mut rng = seeded(9);
        let images = random_images::<f64>(2, 8, 10);
        let r: Vec<f64> = (0..2 * D2_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gf = Tensor::from_vec(&[2, D2_FEATURES], r.clone()).unwrap();
        let analytic = d2_features_backward(&images, &gf).unwrap();
        let idx = probe_indices(images.len(), 60, &mut rng);
        let mut x = images.data().to_vec();
        let numeric = numeric_grad(&mut x, &idx, FD_STEP, |xs| {
            let t = Tensor::from_vec(images.shape(), xs.to_vec())?;
            Ok(d2_features(&t)?.data().iter().zip(&r).map(|(a, b)| a * b).sum())
        })
        .unwrap();
        let a: Vec<f64> = idx.iter().map(|&i| analytic.data()[i]).collect();
        assert!(relative_error(&a, &numeric) < 1e-6);
    }
}
