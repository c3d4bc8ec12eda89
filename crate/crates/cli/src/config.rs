use std::collections::BTreeMap;
use std::path::Path;

use ppgan::gan::TrainConfig;
use ppgan::physics::FIT_MARGIN;
use ppgan::predict::ClassifierSpec;
use ppgan::raster::Health;
use ppgan::sim::{SimConfig, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub margin_fraction: f64,
    pub histogram_bins: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { margin_fraction: FIT_MARGIN, histogram_bins: ppgan::metrics::DEFAULT_HISTOGRAM_BINS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-10 }
    }
}

/// Everything one pipeline run needs. Each section can be given alone in a
/// config file for the subcommand it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for the train/test split and for sampling synthetic images.
    pub seed: u64,
    pub sim: SimConfig,
    pub split: SplitSpec,
    pub fit: FitOptions,
    pub train: TrainConfig,
    pub generate_count: usize,
    pub metrics: MetricOptions,
    pub classifier: ClassifierSpec,
    /// Synthetic samples added per class in the augmentation experiment.
    pub augment: BTreeMap<Health, usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 42,
            sim: SimConfig { image_size: train.image_size, ..SimConfig::default() },
            split: SplitSpec::default(),
            fit: FitOptions::default(),
            train,
            generate_count: 60,
            metrics: MetricOptions::default(),
            classifier: ClassifierSpec::default(),
            augment: BTreeMap::from([(Health::Healthy, 10), (Health::Unhealthy, 50)]),
        }
    }
}

const SECTIONS: [&str; 9] =
    ["seed", "sim", "split", "fit", "train", "generate_count", "metrics", "classifier", "augment"];

impl RunConfig {
    /// Parse a config file. A file whose keys are not run-config sections is
    /// taken to be the `section` of the running subcommand.
    pub fn from_json(text: &str, section: Option<&str>) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let is_run_config = value.as_object().is_some_and(|o| o.keys().any(|k| SECTIONS.contains(&k.as_str())));
        let value = match (is_run_config, section) {
            (false, Some(name)) => serde_json::json!({ name: value }),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| e.to_string())
    }

    pub fn load(path: Option<&Path>, section: Option<&str>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, section)
            .map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, epochs: Option<usize>, ablation: bool) {
        if let Some(s) = seed {
            self.seed = s;
            self.sim.seed = s;
            self.train.seed = s;
            self.classifier.seed = s;
        }
        if let Some(e) = epochs {
            self.train.epochs = e;
        }
        if ablation {
            self.train.ablation_baseline = true;
        }
    }

    pub fn seeds(&self) -> BTreeMap<&'static str, u64> {
        BTreeMap::from([
            ("run", self.seed),
            ("sim", self.sim.seed),
            ("train", self.train.seed),
            ("classifier", self.classifier.seed),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_section_is_accepted() {
        let c = RunConfig::from_json(r#"{"image_size": 48, "seed": 3}"#, Some("sim"));
        // `seed` is also a top-level key, so this parses as a run config and fails on image_size.
        assert!(c.is_err());
        let c = RunConfig::from_json(r#"{"image_size": 48, "row_count": 5}"#, Some("sim")).unwrap();
        assert_eq!((c.sim.image_size, c.sim.row_count), (48, 5));
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn run_config_sections_and_overrides() {
        let mut c = RunConfig::from_json(r#"{"train": {"epochs": 3}, "seed": 9}"#, Some("sim")).unwrap();
        assert_eq!((c.train.epochs, c.seed), (3, 9));
        c.apply_overrides(Some(5), Some(7), true);
        assert_eq!((c.sim.seed, c.train.seed, c.classifier.seed, c.train.epochs), (5, 5, 5, 7));
        assert!(c.train.ablation_baseline);
        assert!(RunConfig::from_json(r#"{"bogus": 1, "seed": 1}"#, None).is_err());
    }

    #[test]
    fn defaults_agree_on_image_size() {
        let c = RunConfig::default();
        assert_eq!(c.sim.image_size, c.train.image_size);
    }
}
