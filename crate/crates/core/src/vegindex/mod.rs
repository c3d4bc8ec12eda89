//! Vegetation-index registry and plot-level feature extraction.

mod expr;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use expr::{Expr, Guarded};

use crate::par;
use crate::raster::{inner_rectangle, Health, Origin, PlotDataset};
use crate::{Error, Result};

pub const DEFAULT_GUARD: f64 = 1e-9;

/// A named formula over the band means `B G R RE N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexSpec", into = "IndexSpec")]
pub struct IndexDefinition {
    pub name: String,
    pub formula: String,
    pub description: String,
    pub denominator_guard: f64,
    expr: Expr,
}

#[derive(Serialize, Deserialize)]
struct IndexSpec {
    name: String,
    formula: String,
    #[serde(default)]
    description: String,
    #[serde(default = "default_guard")]
    denominator_guard: f64,
}

fn default_guard() -> f64 {
    DEFAULT_GUARD
}

impl TryFrom<IndexSpec> for IndexDefinition {
    type Error = Error;

    fn try_from(s: IndexSpec) -> Result<Self> {
        let mut def = IndexDefinition::new(&s.name, &s.formula, &s.description)?;
        def.denominator_guard = s.denominator_guard;
        Ok(def)
    }
}

impl From<IndexDefinition> for IndexSpec {
    fn from(d: IndexDefinition) -> Self {
        IndexSpec { name: d.name, formula: d.formula, description: d.description, denominator_guard: d.denominator_guard }
    }
}

impl IndexDefinition {
    pub fn new(name: &str, formula: &str, description: &str) -> Result<Self> {
        if name.is_empty() {
            return Err(Error::validation("name", "index name is empty"));
        }
        Ok(Self {
            name: name.into(),
            formula: formula.into(),
            description: description.into(),
            denominator_guard: DEFAULT_GUARD,
            expr: Expr::parse(formula)?,
        })
    }

    pub fn eval(&self, band_means: &[f64; 5]) -> Guarded {
        self.expr.eval(band_means, self.denominator_guard).filter(|v| v.is_finite())
    }
}

const BUILTIN: &[(&str, &str, &str)] = &[
    ("NDVI", "(N - R) / (N + R)", "Normalized difference vegetation index"),
    ("GCI", "N / G - 1", "Green chlorophyll index"),
    ("MCARI", "((RE - R) - 0.2 * (RE - G)) * (RE / R)", "Modified chlorophyll absorption ratio index"),
    ("GNDVI", "(N - G) / (N + G)", "Green normalized difference vegetation index"),
    ("NDRE", "(N - RE) / (N + RE)", "Normalized difference red-edge index"),
    ("SAVI", "1.5 * (N - R) / (N + R + 0.5)", "Soil-adjusted vegetation index (L = 0.5)"),
    ("EVI", "2.5 * (N - R) / (N + 6 * R - 7.5 * B + 1)", "Enhanced vegetation index"),
    ("SR", "N / R", "Simple ratio"),
    ("CIRE", "N / RE - 1", "Red-edge chlorophyll index"),
    ("GRVI", "(G - R) / (G + R)", "Green-red vegetation index"),
    ("VARI", "(G - R) / (G + R - B)", "Visible atmospherically resistant index"),
    ("OSAVI", "(N - R) / (N + R + 0.16)", "Optimized soil-adjusted vegetation index"),
    ("EVI2", "2.5 * (N - R) / (N + 2.4 * R + 1)", "Two-band enhanced vegetation index"),
    (
        "MSAVI",
        "(2 * N + 1 - sqrt((2 * N + 1) * (2 * N + 1) - 8 * (N - R))) / 2",
        "Modified soil-adjusted vegetation index",
    ),
    ("RDVI", "(N - R) / sqrt(N + R)", "Renormalized difference vegetation index"),
    ("SIPI", "(N - B) / (N - R)", "Structure-insensitive pigment index"),
    ("TVI", "0.5 * (120 * (N - G) - 200 * (R - G))", "Triangular vegetation index"),
];

/// The built-in indices, in a fixed order.
pub fn builtin_registry() -> Vec<IndexDefinition> {
    BUILTIN
        .iter()
        .map(|(name, formula, description)| IndexDefinition::new(name, formula, description).expect("built-in formula"))
        .collect()
}

/// Reject registries with duplicate names.
pub fn validate_registry(registry: &[IndexDefinition]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for d in registry {
        if !seen.insert(d.name.as_str()) {
            return Err(Error::validation("registry", format!("duplicate index `{}`", d.name)));
        }
    }
    Ok(())
}

/// Index values for one plot.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexVector {
    pub plot_id: usize,
    pub date_index: u32,
    pub health: Health,
    pub origin: Origin,
    pub values: Vec<f64>,
    /// True where the guard replaced the value with 0.
    pub guarded: Vec<bool>,
}

pub fn evaluate_registry(registry: &[IndexDefinition], band_means: &[f64; 5]) -> (Vec<f64>, Vec<bool>) {
    registry
        .iter()
        .map(|d| match d.eval(band_means) {
            Some(v) => (v, false),
            None => (0.0, true),
        })
        .unzip()
}

/// Evaluate every index on the inner-rectangle band means of every image, in dataset order.
pub fn extract_indices(
    dataset: &PlotDataset,
    registry: &[IndexDefinition],
    margin_fraction: f64,
) -> Result<Vec<IndexVector>> {
    if dataset.is_empty() {
        return Err(Error::validation("dataset", "no images to extract indices from"));
    }
    validate_registry(registry)?;
    par::map_range(dataset.len(), |i| {
        let means = inner_rectangle(&dataset.images[i], margin_fraction)?.band_means();
        let (values, guarded) = evaluate_registry(registry, &means);
        let label = dataset.labels[i];
        Ok(IndexVector {
            plot_id: i,
            date_index: label.date_index,
            health: label.health,
            origin: label.origin,
            values,
            guarded,
        })
    })
    .into_iter()
    .collect()
}

const META_COLUMNS: [&str; 4] = ["plot_id", "date_index", "health", "origin"];

/// Feature rows with their column names, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<IndexVector>,
}

impl FeatureTable {
    pub fn new(registry: &[IndexDefinition], rows: Vec<IndexVector>) -> Self {
        Self { names: registry.iter().map(|d| d.name.clone()).collect(), rows }
    }

    pub fn filter(&self, mut keep: impl FnMut(&IndexVector) -> bool) -> FeatureTable {
        FeatureTable { names: self.names.clone(), rows: self.rows.iter().filter(|r| keep(r)).cloned().collect() }
    }
}

/// `{:.8e}` keeps 9 significant digits.
fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_feature_table(table: &FeatureTable, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<&str> = META_COLUMNS.iter().copied().chain(table.names.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(csv_err)?;
    for r in &table.rows {
        if r.values.len() != table.names.len() {
            return Err(Error::Shape(format!("row {} has {} values for {} columns", r.plot_id, r.values.len(), table.names.len())));
        }
        let mut rec = vec![r.plot_id.to_string(), r.date_index.to_string(), r.health.as_str().into(), r.origin.as_str().into()];
        rec.extend(r.values.iter().map(|v| format_value(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let bad = |reason: String| Error::Format { path: path.into(), reason };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < META_COLUMNS.len() || header.iter().take(4).ne(META_COLUMNS) {
        return Err(bad(format!("header must start with {}", META_COLUMNS.join(","))));
    }
    let names: Vec<String> = header.iter().skip(4).map(String::from).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("row {} is short", line + 1)));
        let parse_err = |what: &str| bad(format!("row {}: bad {what}", line + 1));
        let values = (4..rec.len())
            .map(|i| field(i)?.parse::<f64>().map_err(|_| parse_err("value")))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != names.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("value count or non-finite value"));
        }
        rows.push(IndexVector {
            plot_id: field(0)?.parse().map_err(|_| parse_err("plot_id"))?,
            date_index: field(1)?.parse().map_err(|_| parse_err("date_index"))?,
            health: field(2)?.parse().map_err(|_| parse_err("health"))?,
            origin: field(3)?.parse().map_err(|_| parse_err("origin"))?,
            guarded: vec![false; values.len()],
            values,
        });
    }
    Ok(FeatureTable { names, rows })
}
