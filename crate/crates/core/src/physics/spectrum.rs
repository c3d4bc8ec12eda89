//! Azimuthally averaged log-power spectra and the spectral regularizer.
//!
//! Per band: subtract the band mean, take the unnormalized 2-D DFT, square the
//! magnitude, average over equal-width annuli up to the Nyquist radius and
//! compress with `ln(1 + p)`. The analytic gradient of that map is
//! `2 Re(IDFT(w * F))` where `w` holds the upstream gradient spread over each
//! annulus, which lets the generator train against it.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::par;
use crate::raster::{MultispectralImage, BAND_COUNT, MIN_SIDE};
use crate::{Error, Result};

pub const DEFAULT_RADIAL_BINS: usize = 16;
pub const MIN_RADIAL_BINS: usize = 4;

/// Log-power per band and annulus, band-major (`power[band * bins + r]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPowerProfile {
    pub radial_bins: usize,
    pub power: Vec<f64>,
}

impl RadialPowerProfile {
    pub fn band(&self, band: usize) -> &[f64] {
        &self.power[band * self.radial_bins..(band + 1) * self.radial_bins]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

/// In-place unnormalized 2-D DFT of a row-major `height x width` grid.
fn fft2(buf: &mut [Complex<f64>], height: usize, width: usize, inverse: bool) {
    let (fw, iw) = plans(width);
    let row_plan = if inverse { iw } else { fw };
    for row in buf.chunks_exact_mut(width) {
        row_plan.process(row);
    }
    let (fh, ih) = plans(height);
    let col_plan = if inverse { ih } else { fh };
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_plan.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
}

/// Assignment of DFT coefficients to annuli.
#[derive(Debug, Clone)]
struct Annuli {
    bin_of: Vec<Option<usize>>,
    counts: Vec<usize>,
}

impl Annuli {
    fn new(height: usize, width: usize, bins: usize) -> Self {
        let signed = |k: usize, n: usize| if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
        let mut bin_of = Vec::with_capacity(height * width);
        let mut counts = vec![0; bins];
        for ky in 0..height {
            let fy = signed(ky, height) / height as f64;
            for kx in 0..width {
                let fx = signed(kx, width) / width as f64;
                // radius in units of annulus width; Nyquist (0.5 cycles/px) maps to `bins`
                let r = (fx * fx + fy * fy).sqrt() * 2.0 * bins as f64;
                let bin = (r + 1e-9).floor() as usize;
                let bin = if bin == bins && r <= bins as f64 + 1e-9 { bins - 1 } else { bin };
                if bin < bins {
                    counts[bin] += 1;
                    bin_of.push(Some(bin));
                } else {
                    bin_of.push(None);
                }
            }
        }
        Self { bin_of, counts }
    }
}

struct BandSpectrum {
    coeffs: Vec<Complex<f64>>,
    mean_power: Vec<f64>,
}

fn band_spectrum(plane: &[f64], height: usize, width: usize, annuli: &Annuli) -> BandSpectrum {
    let mean = plane.iter().sum::<f64>() / plane.len() as f64;
    let mut coeffs: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    fft2(&mut coeffs, height, width, false);
    let mut mean_power = vec![0.0; annuli.counts.len()];
    for (c, bin) in coeffs.iter().zip(&annuli.bin_of) {
        if let Some(b) = bin {
            mean_power[*b] += c.norm_sqr();
        }
    }
    for (p, &n) in mean_power.iter_mut().zip(&annuli.counts) {
        if n > 0 {
            *p /= n as f64;
        }
    }
    BandSpectrum { coeffs, mean_power }
}

fn check_dims(height: usize, width: usize, bins: usize) -> Result<()> {
    if bins < MIN_RADIAL_BINS {
        return Err(Error::validation("radial_bins", format!("{bins} < {MIN_RADIAL_BINS}")));
    }
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::validation("image", format!("{width}x{height} is too small for a power spectrum")));
    }
    Ok(())
}

/// Radial log-power profile of a band-planar `f64` raster (`BAND_COUNT x height x width`).
pub fn radial_profile_planes(planes: &[f64], height: usize, width: usize, bins: usize) -> Result<Vec<f64>> {
    check_dims(height, width, bins)?;
    let annuli = Annuli::new(height, width, bins);
    Ok(planes
        .chunks_exact(height * width)
        .flat_map(|plane| band_spectrum(plane, height, width, &annuli).mean_power.into_iter().map(f64::ln_1p))
        .collect())
}

/// Gradient of `sum(grad_out * profile)` with respect to the input planes.
pub fn radial_profile_backward(
    planes: &[f64],
    height: usize,
    width: usize,
    bins: usize,
    grad_out: &[f64],
) -> Result<Vec<f64>> {
    check_dims(height, width, bins)?;
    let plane_len = height * width;
    if grad_out.len() != bins * planes.len() / plane_len {
        return Err(Error::Shape(format!("profile gradient has {} entries", grad_out.len())));
    }
    let annuli = Annuli::new(height, width, bins);
    let mut grad = Vec::with_capacity(planes.len());
    for (plane, g) in planes.chunks_exact(plane_len).zip(grad_out.chunks_exact(bins)) {
        let BandSpectrum { mut coeffs, mean_power } = band_spectrum(plane, height, width, &annuli);
        let weight: Vec<f64> = (0..bins)
            .map(|b| if annuli.counts[b] == 0 { 0.0 } else { g[b] / (1.0 + mean_power[b]) / annuli.counts[b] as f64 })
            .collect();
        for (c, bin) in coeffs.iter_mut().zip(&annuli.bin_of) {
            *c = match bin {
                Some(b) => *c * weight[*b],
                None => Complex::new(0.0, 0.0),
            };
        }
        fft2(&mut coeffs, height, width, true);
        let real: Vec<f64> = coeffs.iter().map(|c| 2.0 * c.re).collect();
        let mean = real.iter().sum::<f64>() / real.len() as f64;
        grad.extend(real.into_iter().map(|v| v - mean));
    }
    Ok(grad)
}

pub(crate) fn image_planes(image: &MultispectralImage) -> Vec<f64> {
    image.data().iter().map(|&v| f64::from(v)).collect()
}

pub fn radial_power_profile(image: &MultispectralImage, radial_bins: usize) -> Result<RadialPowerProfile> {
    let power = radial_profile_planes(&image_planes(image), image.height(), image.width(), radial_bins)?;
    Ok(RadialPowerProfile { radial_bins, power })
}

/// Element-wise mean of radial profiles, summed in input order.
pub(crate) fn mean_profile(profiles: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; profiles[0].len()];
    for p in profiles {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let n = profiles.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Mean squared difference between the batch-mean radial profiles.
pub fn spectral_reg_loss(real: &[MultispectralImage], fake: &[MultispectralImage], radial_bins: usize) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::validation("batch", "spectral regularizer needs non-empty batches"));
    }
    let (w, h) = (real[0].width(), real[0].height());
    if real.iter().chain(fake).any(|im| im.width() != w || im.height() != h) {
        return Err(Error::Shape("spectral regularizer batches differ in image size".into()));
    }
    let profile = |im: &MultispectralImage| radial_profile_planes(&image_planes(im), h, w, radial_bins);
    let real_p: Vec<Vec<f64>> = par::map(real, profile).into_iter().collect::<Result<_>>()?;
    let fake_p: Vec<Vec<f64>> = par::map(fake, profile).into_iter().collect::<Result<_>>()?;
    Ok(profile_mse(&mean_profile(&real_p), &mean_profile(&fake_p)))
}

pub(crate) fn profile_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Loss and per-image gradient of the regularizer with respect to the fake batch.
///
/// `real_mean` is the (constant) batch-mean profile of the real batch.
pub(crate) fn spectral_reg_loss_grad(
    real_mean: &[f64],
    fake_planes: &[Vec<f64>],
    height: usize,
    width: usize,
    bins: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let fake_p: Vec<Vec<f64>> = par::map(fake_planes, |p| radial_profile_planes(p, height, width, bins))
        .into_iter()
        .collect::<Result<_>>()?;
    let fake_mean = mean_profile(&fake_p);
    let loss = profile_mse(real_mean, &fake_mean);
    let scale = 2.0 / (real_mean.len() as f64 * fake_planes.len() as f64);
    let upstream: Vec<f64> = fake_mean.iter().zip(real_mean).map(|(f, r)| scale * (f - r)).collect();
    let grads = par::map(fake_planes, |p| radial_profile_backward(p, height, width, bins, &upstream))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok((loss, grads))
}

/// Number of entries in a profile vector for the given bin count.
pub fn profile_len(bins: usize) -> usize {
    BAND_COUNT * bins
}
