//! Core raster and label types plus the on-disk dataset container.

mod dataset;
mod image;
mod msb;

pub use dataset::{read_dataset, write_dataset, Manifest, ManifestEntry, PlotDataset, FORMAT_VERSION};
pub use image::{inner_rectangle, MultispectralImage, MIN_CROP_SIDE, MIN_SIDE};
pub use msb::{decode_msb, encode_msb, MSB_HEADER_LEN, MSB_MAGIC};

use serde::{Deserialize, Serialize};

/// Number of spectral bands carried by every image.
pub const BAND_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Blue,
    Green,
    Red,
    RedEdge,
    Nir,
}

impl Band {
    /// The fixed band order used for pixel storage.
    pub const ALL: [Band; BAND_COUNT] = [Band::Blue, Band::Green, Band::Red, Band::RedEdge, Band::Nir];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Band::Blue => "B",
            Band::Green => "G",
            Band::Red => "R",
            Band::RedEdge => "RE",
            Band::Nir => "N",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: Band,
    pub center_wavelength_nm: f64,
}

/// Typical 5-band UAV sensor centers, in nanometres.
pub fn default_band_specs() -> [BandSpec; BAND_COUNT] {
    let nm = [450.0, 560.0, 650.0, 730.0, 840.0];
    let mut out = [BandSpec { name: Band::Blue, center_wavelength_nm: 0.0 }; BAND_COUNT];
    for (i, band) in Band::ALL.iter().enumerate() {
        out[i] = BandSpec { name: *band, center_wavelength_nm: nm[i] };
    }
    out
}

pub fn validate_band_specs(specs: &[BandSpec]) -> crate::Result<()> {
    if specs.len() != BAND_COUNT {
        return Err(crate::Error::validation(
            "band_specs",
            format!("expected {BAND_COUNT} bands, got {}", specs.len()),
        ));
    }
    for (i, spec) in specs.iter().enumerate() {
        if spec.name != Band::ALL[i] {
            return Err(crate::Error::validation(
                "band_specs",
                format!("band {i} is {:?}, expected {:?}", spec.name, Band::ALL[i]),
            ));
        }
        if !(spec.center_wavelength_nm > 0.0) || !spec.center_wavelength_nm.is_finite() {
            return Err(crate::Error::validation("band_specs", format!("band {i} has a non-positive wavelength")));
        }
        if i > 0 && spec.center_wavelength_nm <= specs[i - 1].center_wavelength_nm {
            return Err(crate::Error::validation("band_specs", "wavelengths must be strictly increasing"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Health {
    Healthy,
    Mild,
    Unhealthy,
}

impl Health {
    pub const ALL: [Health; 3] = [Health::Healthy, Health::Mild, Health::Unhealthy];

    pub fn as_str(self) -> &'static str {
        match self {
            Health::Healthy => "healthy",
            Health::Mild => "mild",
            Health::Unhealthy => "unhealthy",
        }
    }
}

impl std::str::FromStr for Health {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "healthy" => Ok(Health::Healthy),
            "mild" => Ok(Health::Mild),
            "unhealthy" => Ok(Health::Unhealthy),
            other => Err(crate::Error::validation("health", format!("unknown class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Synthetic,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for Origin {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "real" => Ok(Origin::Real),
            "synthetic" => Ok(Origin::Synthetic),
            other => Err(crate::Error::validation("origin", format!("unknown origin `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotLabel {
    pub health: Health,
    pub date_index: u32,
    pub origin: Origin,
}
