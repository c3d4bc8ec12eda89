use crate::{Error, Result};

use super::BAND_COUNT;

/// Smallest side accepted for a stored image.
pub const MIN_SIDE: usize = 8;
/// Smallest side an inner-rectangle crop may have.
pub const MIN_CROP_SIDE: usize = 4;

/// A 5-band reflectance raster stored band-planar: `data[(band * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl MultispectralImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_min_side(width, height, data, MIN_SIDE)
    }

    fn with_min_side(width: usize, height: usize, data: Vec<f32>, min_side: usize) -> Result<Self> {
        if width < min_side || height < min_side {
            return Err(Error::validation(
                "image",
                format!("{width}x{height} is smaller than {min_side}x{min_side}"),
            ));
        }
        if data.len() != width * height * BAND_COUNT {
            return Err(Error::validation(
                "image",
                format!("expected {} values, got {}", width * height * BAND_COUNT, data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::validation(
                "image",
                format!("pixel value {} at index {i} is outside [0, 1]", data[i]),
            ));
        }
        Ok(Self { width, height, data })
    }

    /// Constant image with one value per band.
    pub fn constant(width: usize, height: usize, values: [f32; BAND_COUNT]) -> Result<Self> {
        let plane = width * height;
        let mut data = vec![0.0; plane * BAND_COUNT];
        for (b, v) in values.iter().enumerate() {
            data[b * plane..(b + 1) * plane].fill(*v);
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let plane = self.width * self.height;
        &self.data[band * plane..(band + 1) * plane]
    }

    pub fn get(&self, band: usize, y: usize, x: usize) -> f32 {
        self.data[(band * self.height + y) * self.width + x]
    }

    /// Per-band mean, accumulated in f64.
    pub fn band_means(&self) -> [f64; BAND_COUNT] {
        let mut out = [0.0; BAND_COUNT];
        let n = (self.width * self.height) as f64;
        for (b, m) in out.iter_mut().enumerate() {
            *m = self.band(b).iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        }
        out
    }

    /// Replace one band's plane. Values must stay inside [0, 1].
    pub fn with_band(&self, band: usize, plane: &[f32]) -> Result<Self> {
        let mut data = self.data.clone();
        let n = self.width * self.height;
        data[band * n..(band + 1) * n].copy_from_slice(plane);
        Self::with_min_side(self.width, self.height, data, MIN_CROP_SIDE)
    }
}

/// Centered crop keeping `floor((1 - 2 * margin) * side)` pixels per side.
pub fn inner_rectangle(image: &MultispectralImage, margin_fraction: f64) -> Result<MultispectralImage> {
    if !(0.0..=0.4).contains(&margin_fraction) {
        return Err(Error::validation("margin_fraction", format!("{margin_fraction} is outside [0, 0.4]")));
    }
    if margin_fraction == 0.0 {
        return Ok(image.clone());
    }
    let keep = |side: usize| ((1.0 - 2.0 * margin_fraction) * side as f64 + 1e-9).floor() as usize;
    let (w, h) = (keep(image.width), keep(image.height));
    if w < MIN_CROP_SIDE || h < MIN_CROP_SIDE {
        return Err(Error::validation(
            "margin_fraction",
            format!(
                "margin {margin_fraction} leaves {w}x{h} of a {}x{} image",
                image.width, image.height
            ),
        ));
    }
    let x0 = (image.width - w) / 2;
    let y0 = (image.height - h) / 2;
    let mut data = Vec::with_capacity(w * h * BAND_COUNT);
    for b in 0..BAND_COUNT {
        for y in y0..y0 + h {
            let row = (b * image.height + y) * image.width;
            data.extend_from_slice(&image.data[row + x0..row + x0 + w]);
        }
    }
    MultispectralImage::with_min_side(w, h, data, MIN_CROP_SIDE)
}
