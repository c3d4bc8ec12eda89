use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{
    decode_msb, default_band_specs, encode_msb, validate_band_specs, BandSpec, Health, MultispectralImage, Origin,
    PlotLabel, BAND_COUNT,
};

pub const FORMAT_VERSION: &str = "MSB1";
const MANIFEST: &str = "manifest.json";

/// A labeled, dated collection of same-sized images.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotDataset {
    pub images: Vec<MultispectralImage>,
    pub labels: Vec<PlotLabel>,
    pub band_specs: [BandSpec; BAND_COUNT],
    pub dates: Vec<String>,
    pub seed: u64,
}

impl PlotDataset {
    /// Build and validate a dataset with the default band specs.
    pub fn new(images: Vec<MultispectralImage>, labels: Vec<PlotLabel>, dates: Vec<String>, seed: u64) -> Result<Self> {
        let ds = Self { images, labels, band_specs: default_band_specs(), dates, seed };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::validation(
                "labels",
                format!("{} images but {} labels", self.images.len(), self.labels.len()),
            ));
        }
        validate_band_specs(&self.band_specs)?;
        if let Some(first) = self.images.first() {
            let (w, h) = (first.width(), first.height());
            if let Some(i) = self.images.iter().position(|im| im.width() != w || im.height() != h) {
                return Err(Error::validation(
                    "images",
                    format!("image {i} is {}x{}, expected {w}x{h}", self.images[i].width(), self.images[i].height()),
                ));
            }
        }
        if let Some(i) = self.labels.iter().position(|l| l.date_index as usize >= self.dates.len()) {
            return Err(Error::validation(
                "date_index",
                format!("label {i} references date {} of {}", self.labels[i].date_index, self.dates.len()),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Image side lengths, or `None` for an empty dataset.
    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.images.first().map(|im| (im.width(), im.height()))
    }

    /// New dataset with the entries at `indices`, keeping metadata.
    pub fn subset(&self, indices: &[usize]) -> PlotDataset {
        PlotDataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            band_specs: self.band_specs,
            dates: self.dates.clone(),
            seed: self.seed,
        }
    }

    /// Entries matching a predicate on the label.
    pub fn filter(&self, mut keep: impl FnMut(&PlotLabel) -> bool) -> PlotDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.labels[i])).collect();
        self.subset(&idx)
    }

    pub fn without_mild(&self) -> PlotDataset {
        self.filter(|l| l.health != Health::Mild)
    }

    pub fn count(&self, health: Health) -> usize {
        self.labels.iter().filter(|l| l.health == health).count()
    }

    /// Concatenate two datasets with identical metadata layout.
    pub fn concat(&self, other: &PlotDataset) -> Result<PlotDataset> {
        let mut out = self.clone();
        if other.dates.len() > out.dates.len() {
            out.dates = other.dates.clone();
        }
        out.images.extend(other.images.iter().cloned());
        out.labels.extend(other.labels.iter().copied());
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub health: Health,
    pub date_index: u32,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub band_specs: Vec<BandSpec>,
    pub dates: Vec<String>,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

fn file_name(i: usize) -> String {
    format!("img_{i:05}.msb")
}

/// Write `manifest.json` plus one `.msb` file per image into `path`.
pub fn write_dataset(dataset: &PlotDataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, (image, label)) in dataset.images.iter().zip(&dataset.labels).enumerate() {
        let file = file_name(i);
        let target = path.join(&file);
        fs::write(&target, encode_msb(image)).map_err(|e| Error::io(&target, e))?;
        entries.push(ManifestEntry { file, health: label.health, date_index: label.date_index, origin: label.origin });
    }
    let manifest = Manifest {
        version: FORMAT_VERSION.to_string(),
        band_specs: dataset.band_specs.to_vec(),
        dates: dataset.dates.clone(),
        seed: dataset.seed,
        entries,
    };
    let target = path.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&target, e))?;
    fs::write(&target, text).map_err(|e| Error::io(&target, e))
}

pub fn read_dataset(path: &Path) -> Result<PlotDataset> {
    let manifest_path = path.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::Load {
        file: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Format {
            path: manifest_path,
            reason: format!("unknown format version `{}`", manifest.version),
        });
    }
    validate_band_specs(&manifest.band_specs)?;
    let mut images = Vec::with_capacity(manifest.entries.len());
    let mut labels = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let file = path.join(&entry.file);
        let bytes = fs::read(&file).map_err(|e| Error::Load { file: file.clone(), reason: e.to_string() })?;
        images.push(decode_msb(&bytes, &file)?);
        labels.push(PlotLabel { health: entry.health, date_index: entry.date_index, origin: entry.origin });
    }
    let dataset = PlotDataset {
        images,
        labels,
        band_specs: manifest.band_specs.try_into().expect("validated length"),
        dates: manifest.dates,
        seed: manifest.seed,
    };
    dataset.validate()?;
    Ok(dataset)
}
