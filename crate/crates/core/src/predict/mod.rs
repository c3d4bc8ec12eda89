//! Healthy-vs-unhealthy classification on vegetation-index features, and the
//! real-vs-augmented training experiments built on it.

mod experiment;
pub mod forest;
pub mod logistic;
mod scores;

use serde::{Deserialize, Serialize};

pub use experiment::{
    augmentation_experiment, per_date_analysis, read_experiment, write_comparison_csv, write_experiment,
    write_timeseries_csv, AugmentationResult, DatePoint,
};
pub use forest::RandomForest;
pub use logistic::LogisticModel;
pub use scores::{ClassScores, Confusion, EvalScores};

use crate::raster::Health;
use crate::vegindex::FeatureTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    RandomForest,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(feature count))`, at least 1.
    pub features_per_split: Option<usize>,
    /// Train each tree on a bootstrap resample rather than the full set.
    pub bootstrap: bool,
    pub seed: u64,
    pub l2: f64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::RandomForest,
            trees: 100,
            max_depth: 8,
            min_leaf: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
            l2: 1e-2,
        }
    }
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trees < 1 {
            return Err(Error::validation("trees", "must be at least 1"));
        }
        if self.max_depth < 1 {
            return Err(Error::validation("max_depth", "must be at least 1"));
        }
        if self.min_leaf < 1 {
            return Err(Error::validation("min_leaf", "must be at least 1"));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::validation("features_per_split", "must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::validation("l2", "must be a non-negative number"));
        }
        Ok(())
    }

    pub fn features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    RandomForest(RandomForest),
    Logistic(LogisticModel),
}

impl Classifier {
    /// True for unhealthy.
    pub fn predict(&self, x: &[f64]) -> bool {
        match self {
            Classifier::RandomForest(f) => f.predict(x),
            Classifier::Logistic(m) => m.predict(x),
        }
    }
}

/// Feature rows and unhealthy flags of a table, mild rows dropped.
pub fn labeled_rows(table: &FeatureTable) -> (Vec<Vec<f64>>, Vec<bool>) {
    table
        .rows
        .iter()
        .filter(|r| r.health != Health::Mild)
        .map(|r| (r.values.clone(), r.health == Health::Unhealthy))
        .unzip()
}

fn check_matrix(x: &[Vec<f64>], n_labels: usize, what: &str) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Insufficient(format!("{what} set is empty")));
    }
    if x.len() != n_labels {
        return Err(Error::Shape(format!("{} {what} rows but {n_labels} labels", x.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(format!("{what} rows must share a non-zero feature count")));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} features")));
    }
    Ok(d)
}

/// Fit a classifier; `y[i]` is true for unhealthy.
pub fn train_classifier(x: &[Vec<f64>], y: &[bool], spec: &ClassifierSpec) -> Result<Classifier> {
    spec.validate()?;
    let d = check_matrix(x, y.len(), "training")?;
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::validation("labels", "training set contains a single class"));
    }
    Ok(match spec.kind {
        ClassifierKind::RandomForest => {
            let params = forest::TreeParams {
                max_depth: spec.max_depth,
                min_leaf: spec.min_leaf,
                features_per_split: spec.features_per_split(d),
            };
            Classifier::RandomForest(RandomForest::fit(x, y, spec.trees, spec.bootstrap, &params, spec.seed))
        }
        ClassifierKind::Logistic => Classifier::Logistic(LogisticModel::fit(x, y, spec.l2)),
    })
}

pub fn evaluate(model: &Classifier, x: &[Vec<f64>], y: &[bool]) -> Result<EvalScores> {
    check_matrix(x, y.len(), "test")?;
    let predicted: Vec<bool> = x.iter().map(|r| model.predict(r)).collect();
    Ok(EvalScores::from_confusion(&Confusion::from_predictions(y, &predicted)))
}
