//! Procedural multispectral field-plot simulator.
//!
//! Every image is a class signature (shifted by its growth-stage drift and a
//! per-plot vigor/severity factor), plus Gaussian-blurred white noise, a
//! raised-cosine crop-row pattern blended with bare soil, and a red-edge band
//! computed from NIR through a known exponential-plus-linear curve.
//!
//! The class signatures are plausibility-driven defaults, not measured wheat
//! reflectances; only their ordering (healthy NIR above diseased NIR, raised
//! red/green under disease) is relied on downstream.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::raster::{
    default_band_specs, Band, Health, MultispectralImage, Origin, PlotDataset, PlotLabel, BAND_COUNT,
};
use crate::{par, rng, Error, Result};

/// Mean spectrum, texture noise and growth-stage drift of one health class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub mean: [f64; BAND_COUNT],
    pub std: [f64; BAND_COUNT],
    /// Additive mean shift at each date.
    pub date_drift: Vec<[f64; BAND_COUNT]>,
}

impl ClassSignature {
    pub fn mean_at(&self, date: usize) -> [f64; BAND_COUNT] {
        let mut m = self.mean;
        if let Some(d) = self.date_drift.get(date) {
            for b in 0..BAND_COUNT {
                m[b] += d[b];
            }
        }
        m
    }
}

/// Red-edge curve used when rendering: `RE = g * exp(-h * NIR) + k * NIR + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedEdgeModel {
    pub g: f64,
    pub h: f64,
    pub k: f64,
    pub noise_std: f64,
}

impl Default for RedEdgeModel {
    fn default() -> Self {
        Self { g: 0.2, h: 3.0, k: 0.6, noise_std: 0.005 }
    }
}

impl RedEdgeModel {
    pub fn eval(&self, nir: f64) -> f64 {
        self.g * (-self.h * nir).exp() + self.k * nir
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub image_size: usize,
    /// Images per class and date; every vector has one entry per date.
    pub counts: BTreeMap<Health, Vec<usize>>,
    pub row_count: usize,
    /// Raised-cosine depth of the crop-row pattern, 0 disables soil stripes.
    pub row_amplitude: f64,
    pub noise_correlation_length: f64,
    pub seed: u64,
    pub class_signatures: BTreeMap<Health, ClassSignature>,
    pub soil: [f64; BAND_COUNT],
    /// Std of the per-plot additive offset on each band.
    pub plot_variation: [f64; BAND_COUNT],
    /// Per-plot drift multiplier is uniform in `[1 - spread, 1 + spread]`.
    pub severity_spread: f64,
    pub red_edge: RedEdgeModel,
}

pub const DEFAULT_DATES: usize = 5;

impl Default for SimConfig {
    fn default() -> Self {
        let counts = BTreeMap::from([
            (Health::Healthy, vec![150; DEFAULT_DATES]),
            (Health::Mild, vec![20; DEFAULT_DATES]),
            (Health::Unhealthy, vec![90; DEFAULT_DATES]),
        ]);
        Self {
            image_size: 64,
            counts,
            row_count: 7,
            row_amplitude: 0.35,
            noise_correlation_length: 2.0,
            seed: 42,
            class_signatures: default_signatures(),
            soil: [0.10, 0.13, 0.16, 0.19, 0.22],
            plot_variation: [0.004, 0.006, 0.008, 0.0, 0.035],
            severity_spread: 0.7,
            red_edge: RedEdgeModel::default(),
        }
    }
}

impl SimConfig {
    pub fn date_count(&self) -> usize {
        self.counts.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(Error::validation("image_size", format!("{} < 16", self.image_size)));
        }
        if self.row_count < 1 {
            return Err(Error::validation("row_count", "must be at least 1"));
        }
        let dates = self.date_count();
        if dates == 0 {
            return Err(Error::validation("counts", "no dates configured"));
        }
        for (class, counts) in &self.counts {
            if counts.len() != dates {
                return Err(Error::validation(
                    "counts",
                    format!("{} has {} dates, expected {dates}", class.as_str(), counts.len()),
                ));
            }
            if counts.iter().any(|&c| c > 0) && !self.class_signatures.contains_key(class) {
                return Err(Error::validation("class_signatures", format!("missing signature for {}", class.as_str())));
            }
        }
        for (class, sig) in &self.class_signatures {
            let ok = sig.mean.iter().chain(&self.soil).all(|v| (0.0..=1.0).contains(v))
                && sig.std.iter().all(|s| *s >= 0.0 && s.is_finite());
            if !ok {
                return Err(Error::validation("class_signatures", format!("{} has values out of range", class.as_str())));
            }
        }
        if !(0.0..=1.0).contains(&self.row_amplitude) {
            return Err(Error::validation("row_amplitude", "must be in [0, 1]"));
        }
        if !(self.noise_correlation_length >= 0.0) {
            return Err(Error::validation("noise_correlation_length", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.severity_spread) {
            return Err(Error::validation("severity_spread", "must be in [0, 1]"));
        }
        if self.plot_variation.iter().any(|v| !(*v >= 0.0)) || !(self.red_edge.noise_std >= 0.0) {
            return Err(Error::validation("plot_variation", "standard deviations must be non-negative"));
        }
        Ok(())
    }
}

/// Built-in healthy/mild/unhealthy signatures over five growth stages.
///
/// Healthy plots gain NIR as the canopy closes; diseased plots lose NIR and
/// gain red/green (yellowing) at a rate that grows with the stage. Mild sits
/// halfway between the two at every date.
pub fn default_signatures() -> BTreeMap<Health, ClassSignature> {
    let red_edge = RedEdgeModel::default();
    let with_re = |mut m: [f64; BAND_COUNT]| {
        m[Band::RedEdge.index()] = red_edge.eval(m[Band::Nir.index()]);
        m
    };
    let healthy_mean = with_re([0.05, 0.09, 0.06, 0.0, 0.50]);
    let unhealthy_mean = with_re([0.052, 0.093, 0.066, 0.0, 0.48]);
    let std = [0.006, 0.008, 0.008, 0.0, 0.025];
    let healthy_step = [-0.001, 0.0, -0.004, 0.0, 0.02];
    let unhealthy_step = [0.004, 0.010, 0.018, 0.0, -0.03];
    let drift = |step: [f64; BAND_COUNT], accel: bool, base: [f64; BAND_COUNT]| -> Vec<[f64; BAND_COUNT]> {
        (0..DEFAULT_DATES)
            .map(|d| {
                let t = d as f64;
                let factor = if accel { t * (1.0 + 0.25 * t) } else { t };
                let mut shift = step.map(|s| s * factor);
                let shifted_nir = base[Band::Nir.index()] + shift[Band::Nir.index()];
                shift[Band::RedEdge.index()] = red_edge.eval(shifted_nir) - base[Band::RedEdge.index()];
                shift
            })
            .collect()
    };
    let healthy = ClassSignature { mean: healthy_mean, std, date_drift: drift(healthy_step, false, healthy_mean) };
    let unhealthy =
        ClassSignature { mean: unhealthy_mean, std, date_drift: drift(unhealthy_step, true, unhealthy_mean) };
    let mid = |a: &[f64; BAND_COUNT], b: &[f64; BAND_COUNT]| -> [f64; BAND_COUNT] {
        std::array::from_fn(|i| 0.5 * (a[i] + b[i]))
    };
    let mild = ClassSignature {
        mean: mid(&healthy.mean, &unhealthy.mean),
        std,
        date_drift: healthy.date_drift.iter().zip(&unhealthy.date_drift).map(|(a, b)| mid(a, b)).collect(),
    };
    BTreeMap::from([(Health::Healthy, healthy), (Health::Mild, mild), (Health::Unhealthy, unhealthy)])
}

/// Unit-variance, spatially correlated noise: white noise blurred by a
/// separable, wrap-around Gaussian of the given standard deviation.
fn correlated_noise<R: Rng>(rng: &mut R, size: usize, corr_len: f64) -> Vec<f64> {
    let white: Vec<f64> = (0..size * size).map(|_| rng.sample(StandardNormal)).collect();
    if corr_len <= 0.0 {
        return white;
    }
    let radius = (3.0 * corr_len).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|i| (-0.5 * (i as f64 / corr_len).powi(2)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let energy: f64 = kernel.iter().map(|k| k * k).sum();
    let n = size as isize;
    let wrap = |i: isize| i.rem_euclid(n) as usize;
    let mut tmp = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * white[y * size + wrap(x as isize + j as isize - radius)])
                .sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * tmp[wrap(y as isize + j as isize - radius) * size + x])
                .sum::<f64>()
                / energy;
        }
    }
    out
}

/// Vegetation fraction across the plot's columns: 1 on row centers, down to
/// `1 - amplitude` between rows.
fn row_profile(size: usize, rows: usize, amplitude: f64) -> Vec<f64> {
    (0..size)
        .map(|x| {
            let phase = 2.0 * std::f64::consts::PI * rows as f64 * (x as f64 + 0.5) / size as f64;
            1.0 - amplitude * (1.0 - 0.5 * (1.0 + phase.cos()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Job {
    health: Health,
    date: usize,
}

fn render(config: &SimConfig, job: Job, seed: u64, rows: &[f64]) -> Result<MultispectralImage> {
    let mut rng = rng::seeded(seed);
    let size = config.image_size;
    let plane = size * size;
    let sig = &config.class_signatures[&job.health];
    let severity = 1.0 + config.severity_spread * (2.0 * rng.random::<f64>() - 1.0);
    let mut mean = sig.mean;
    if let Some(drift) = sig.date_drift.get(job.date) {
        for b in 0..BAND_COUNT {
            mean[b] += severity * drift[b];
        }
    }
    for b in 0..BAND_COUNT {
        let offset: f64 = rng.sample(StandardNormal);
        mean[b] += config.plot_variation[b] * offset;
    }
    let re = Band::RedEdge.index();
    let nir = Band::Nir.index();
    let mut planes = vec![0.0f64; plane * BAND_COUNT];
    for b in 0..BAND_COUNT {
        if b == re {
            continue;
        }
        let noise = correlated_noise(&mut rng, size, config.noise_correlation_length);
        let lo = (mean[b] - 3.0 * sig.std[b]).max(0.0);
        let hi = (mean[b] + 3.0 * sig.std[b]).min(1.0);
        for y in 0..size {
            for x in 0..size {
                let veg = (mean[b] + sig.std[b] * noise[y * size + x]).clamp(lo, hi);
                let frac = rows[x];
                planes[b * plane + y * size + x] = (frac * veg + (1.0 - frac) * config.soil[b]).clamp(0.0, 1.0);
            }
        }
    }
    for p in 0..plane {
        let noise: f64 = if config.red_edge.noise_std > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        let v = config.red_edge.eval(planes[nir * plane + p]) + config.red_edge.noise_std * noise;
        planes[re * plane + p] = v.clamp(0.0, 1.0);
    }
    MultispectralImage::new(size, size, planes.into_iter().map(|v| v as f32).collect())
}

/// Render the configured dataset. Images are ordered by date, then class
/// (healthy, mild, unhealthy), then replicate; image `i` draws from the
/// stream seeded by `fnv1a64(seed, i)`.
pub fn simulate_dataset(config: &SimConfig) -> Result<PlotDataset> {
    config.validate()?;
    let dates = config.date_count();
    let mut jobs = Vec::new();
    for date in 0..dates {
        for health in Health::ALL {
            let count = config.counts.get(&health).map_or(0, |c| c[date]);
            jobs.extend(std::iter::repeat_n(Job { health, date }, count));
        }
    }
    let rows = row_profile(config.image_size, config.row_count, config.row_amplitude);
    let images: Vec<MultispectralImage> =
        par::map_range(jobs.len(), |i| render(config, jobs[i], rng::derive_seed(config.seed, i as u64), &rows))
            .into_iter()
            .collect::<Result<_>>()?;
    let labels = jobs
        .iter()
        .map(|j| PlotLabel { health: j.health, date_index: j.date as u32, origin: Origin::Real })
        .collect();
    let dataset = PlotDataset {
        images,
        labels,
        band_specs: default_band_specs(),
        dates: (0..dates).map(|d| format!("date_{d}")).collect(),
        seed: config.seed,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Sizes of the split drawn from the final observed date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_healthy: usize,
    pub train_unhealthy: usize,
    /// Fraction of each class's leftover final-date samples placed in the test set.
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_healthy: 106, train_unhealthy: 56, test_fraction: 1.0 }
    }
}

/// Train/test index sets over `labels`, both drawn from the last date.
///
/// Mild and synthetic entries are never selected. The test set takes the same
/// fraction of every class's leftovers, so it is stratified.
pub fn split_indices(labels: &[PlotLabel], seed: u64, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let last = labels.iter().map(|l| l.date_index).max().unwrap_or(0);
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (health, wanted) in [(Health::Healthy, spec.train_healthy), (Health::Unhealthy, spec.train_unhealthy)] {
        let mut pool: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i].health == health && labels[i].date_index == last && labels[i].origin == Origin::Real)
            .collect();
        if pool.len() < wanted {
            return Err(Error::Insufficient(format!(
                "{} {} samples at the final date, {wanted} needed for training",
                pool.len(),
                health.as_str()
            )));
        }
        pool.shuffle(&mut rng);
        let leftover = pool.len() - wanted;
        let n_test = (leftover as f64 * spec.test_fraction.clamp(0.0, 1.0)).round() as usize;
        train.extend_from_slice(&pool[..wanted]);
        test.extend_from_slice(&pool[wanted..wanted + n_test]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// 106 healthy / 56 unhealthy training plots plus a stratified test set, all
/// from the final date.
pub fn imbalanced_split(dataset: &PlotDataset, seed: u64) -> Result<(PlotDataset, PlotDataset)> {
    split_dataset(dataset, seed, &SplitSpec::default())
}

pub fn split_dataset(dataset: &PlotDataset, seed: u64, spec: &SplitSpec) -> Result<(PlotDataset, PlotDataset)> {
    let (train, test) = split_indices(&dataset.labels, seed, spec)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

fn ndvi(m: &[f64; BAND_COUNT]) -> f64 {
    let (n, r) = (m[Band::Nir.index()], m[Band::Red.index()]);
    (n - r) / (n + r)
}

    fn small_config() -> SimConfig {
        SimConfig {
            image_size: 16,
            counts: BTreeMap::from([
                (Health::Healthy, vec![3, 3, 3, 3, 3]),
                (Health::Mild, vec![1, 1, 1, 1, 1]),
                (Health::Unhealthy, vec![2, 2, 2, 2, 2]),
            ]),
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate_dataset(&small_config()).unwrap();
        let b = simulate_dataset(&small_config()).unwrap();
        assert_eq!(a, b);
        let other = simulate_dataset(&SimConfig { seed: 7, ..small_config() }).unwrap();
        assert_ne!(a.images, other.images);
    }

    #[test]
    fn labels_follow_date_then_class_order() {
        let ds = simulate_dataset(&small_config()).unwrap();
        assert_eq!(ds.len(), 30);
        assert_eq!(ds.labels[0].health, Health::Healthy);
        assert_eq!(ds.labels[3].health, Health::Mild);
        assert_eq!(ds.labels[5].health, Health::Unhealthy);
        assert_eq!(ds.labels[6].date_index, 1);
        assert_eq!(ds.dates.len(), 5);
    }

    #[test]
    fn noiseless_images_depend_only_on_row_pattern() {
        let mut cfg = small_config();
        for sig in cfg.class_signatures.values_mut() {
            sig.std = [0.0; BAND_COUNT];
            sig.date_drift = vec![[0.0; BAND_COUNT]; DEFAULT_DATES];
        }
        cfg.plot_variation = [0.0; BAND_COUNT];
        cfg.red_edge.noise_std = 0.0;
        let ds = simulate_dataset(&cfg).unwrap();
        let rows = row_profile(16, cfg.row_count, cfg.row_amplitude);
        let healthy = &cfg.class_signatures[&Health::Healthy];
        let first = &ds.images[0];
        for (img, label) in ds.images.iter().zip(&ds.labels) {
            if label.health == Health::Healthy {
                assert_eq!(img, first);
            }
        }
        for b in [0, 1, 2, 4] {
            for y in 0..16 {
                for x in 0..16 {
                    let expected = rows[x] * healthy.mean[b] + (1.0 - rows[x]) * cfg.soil[b];
                    assert!((f64::from(first.get(b, y, x)) - expected).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn default_signature_properties() {
        let sigs = default_signatures();
        let (h, m, u) = (&sigs[&Health::Healthy], &sigs[&Health::Mild], &sigs[&Health::Unhealthy]);
        for d in 0..DEFAULT_DATES {
            let (hm, mm, um) = (h.mean_at(d), m.mean_at(d), u.mean_at(d));
            assert!(hm[4] > um[4], "date {d}");
            assert!(ndvi(&hm) > ndvi(&um), "date {d}");
            for b in 0..BAND_COUNT {
                assert!((hm[b].min(um[b])..=hm[b].max(um[b])).contains(&mm[b]));
                for v in [hm[b], mm[b], um[b]] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn unhealthy_drift_grows_with_date() {
        let sigs = default_signatures();
        let u = &sigs[&Health::Unhealthy];
        let mag = |d: &[f64; BAND_COUNT]| d.iter().map(|v| v.abs()).sum::<f64>();
        assert!(u.date_drift.windows(2).all(|w| mag(&w[1]) > mag(&w[0])));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(simulate_dataset(&SimConfig { image_size: 8, ..small_config() }).is_err());
        assert!(simulate_dataset(&SimConfig { row_count: 0, ..small_config() }).is_err());
        let mut cfg = small_config();
        cfg.counts.insert(Health::Mild, vec![1, 1]);
        assert!(matches!(simulate_dataset(&cfg), Err(Error::Validation { .. })));
    }

    #[test]
    fn noise_field_has_unit_variance() {
        let mut rng = rng::seeded(1);
        let field = correlated_noise(&mut rng, 128, 2.0);
        let var = field.iter().map(|v| v * v).sum::<f64>() / field.len() as f64;
        assert!((var - 1.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn split_shapes_and_disjointness() {
        let labels: Vec<PlotLabel> = (0..500)
            .map(|i| PlotLabel {
                health: if i % 5 < 3 { Health::Healthy } else if i % 5 == 3 { Health::Unhealthy } else { Health::Mild },
                date_index: 0,
                origin: Origin::Real,
            })
            .collect();
        let labels: Vec<PlotLabel> = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| if i % 5 == 4 && i % 2 == 0 { PlotLabel { health: Health::Unhealthy, ..l } } else { l })
            .collect();
        let (train, test) = split_indices(&labels, 3, &SplitSpec::default()).unwrap();
        let count = |idx: &[usize], h| idx.iter().filter(|&&i| labels[i].health == h).count();
        assert_eq!(count(&train, Health::Healthy), 106);
        assert_eq!(count(&train, Health::Unhealthy), 56);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_eq!(count(&test, Health::Mild), 0);
        assert_eq!(split_indices(&labels, 3, &SplitSpec::default()).unwrap(), (train, test));
        let too_few = &labels[..100];
        assert!(split_indices(too_few, 3, &SplitSpec::default()).is_err());
    }
}
