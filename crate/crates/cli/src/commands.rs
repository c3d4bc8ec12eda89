use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ppgan::gan::{generate as sample, load_bundle, save_bundle, train_with_observer};
use ppgan::metrics::{full_report, read_report, write_report, FeatureEmbedder, MetricsReport};
use ppgan::physics::{fit_with_margin, spectral_profile, CoefficientSet, SpectralProfile};
use ppgan::plot::{emit_plots, PlotInputs};
use ppgan::predict::{
    augmentation_experiment, per_date_analysis, read_experiment, write_comparison_csv, write_experiment,
    write_timeseries_csv, AugmentationResult, DatePoint,
};
use ppgan::raster::{read_dataset, write_dataset, Health, Origin, PlotDataset, PlotLabel};
use ppgan::sim::{simulate_dataset, split_dataset, split_indices};
use ppgan::vegindex::{
    builtin_registry, extract_indices, read_feature_table, write_feature_table, FeatureTable, IndexDefinition,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Stage};
use crate::meta::{prepare_out, write_run_meta};
use crate::Common;

pub const COEFFS_FILE: &str = "coeffs.json";
pub const FIT_DIAGNOSTICS_FILE: &str = "fit_diagnostics.json";
pub const REPORT_FILE: &str = "report.json";
pub const PROFILES_FILE: &str = "profiles.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const TIMESERIES_JSON: &str = "timeseries.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Effective config plus the output directory, created write-once.
fn setup(common: &Common, section: Option<&str>) -> Result<(RunConfig, PathBuf), CliError> {
    let mut config = RunConfig::load(common.config.as_deref(), section)?;
    config.apply_overrides(common.seed, common.epochs, common.ablation);
    let out = common.out.clone().ok_or_else(|| CliError::validation("arguments", "--out is required"))?;
    prepare_out(&out)?;
    Ok((config, out))
}

fn require_exists(stage: &'static str, path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::validation(stage, format!("{} does not exist", path.display())))
    }
}

fn read_json<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, CliError> {
    require_exists(stage, path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(stage, format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(stage: &'static str, value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(stage, e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::runtime(stage, format!("{}: {e}", path.display())))
}

fn load_dataset(stage: &'static str, path: &Path) -> Result<PlotDataset, CliError> {
    require_exists(stage, path)?;
    read_dataset(path).stage(stage)
}

fn load_features(stage: &'static str, path: &Path) -> Result<FeatureTable, CliError> {
    require_exists(stage, path)?;
    read_feature_table(path).stage(stage)
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    const STAGE: &str = "simulate";
    let (config, out) = setup(common, Some("sim"))?;
    config.sim.validate().stage(STAGE)?;
    let dataset = simulate_dataset(&config.sim).stage(STAGE)?;
    write_dataset(&dataset, &out).stage(STAGE)?;
    write_run_meta(&out, STAGE, &config, &[])
}

pub fn fit_coeff(common: &Common, dataset: &Path) -> Result<(), CliError> {
    const STAGE: &str = "fit-coeff";
    let (config, out) = setup(common, Some("fit"))?;
    let ds = load_dataset(STAGE, dataset)?;
    let (train, _) = split_dataset(&ds, config.seed, &config.split).stage(STAGE)?;
    let fit = fit_with_margin(&train, config.fit.max_iters, config.fit.tol, config.metrics.margin_fraction).stage(STAGE)?;
    write_json(STAGE, &fit.coeffs, &out.join(COEFFS_FILE))?;
    write_json(STAGE, &fit.diagnostics, &out.join(FIT_DIAGNOSTICS_FILE))?;
    write_run_meta(&out, STAGE, &config, &[dataset])
}

pub fn train(common: &Common, dataset: &Path, coeffs: Option<&Path>, class: Option<Health>) -> Result<(), CliError> {
    const STAGE: &str = "train";
    let (config, out) = setup(common, Some("train"))?;
    let ds = load_dataset(STAGE, dataset)?;
    let coeff_set = match coeffs {
        Some(p) => read_json::<CoefficientSet>(STAGE, p)?,
        None => CoefficientSet::neutral(),
    };
    let (mut pool, _) = split_dataset(&ds, config.seed, &config.split).stage(STAGE)?;
    if let Some(c) = class {
        pool = pool.filter(|l| l.health == c);
    }
    let bundle = train_with_observer(&pool, &coeff_set, &config.train, |r| {
        eprintln!("step {:>5}  d1 {:.4}  d2 {:.4}  g {:.4}  sr {:.4}", r.step, r.d1_loss, r.d2_loss, r.g_loss, r.sr_loss)
    })
    .stage(STAGE)?;
    save_bundle(&bundle, &out).stage(STAGE)?;
    let mut inputs = vec![dataset];
    inputs.extend(coeffs);
    write_run_meta(&out, STAGE, &config, &inputs)
}

pub fn generate(common: &Common, bundle: &Path, count: Option<usize>, class: Option<Health>) -> Result<(), CliError> {
    const STAGE: &str = "generate";
    let (config, out) = setup(common, None)?;
    require_exists(STAGE, bundle)?;
    let model = load_bundle(bundle).stage(STAGE)?;
    let dataset = sample(&model, count.unwrap_or(config.generate_count), class, config.seed).stage(STAGE)?;
    write_dataset(&dataset, &out).stage(STAGE)?;
    write_run_meta(&out, STAGE, &config, &[bundle])
}

#[derive(Debug, Serialize, Deserialize)]
struct Profiles {
    real: SpectralProfile,
    synthetic: SpectralProfile,
}

pub fn eval(common: &Common, real: &Path, synthetic: &Path, use_split: bool, label: &str) -> Result<(), CliError> {
    const STAGE: &str = "eval";
    let (config, out) = setup(common, Some("metrics"))?;
    let real_ds = load_dataset(STAGE, real)?;
    let synth = load_dataset(STAGE, synthetic)?;
    let reference = if use_split { split_dataset(&real_ds, config.seed, &config.split).stage(STAGE)?.1 } else { real_ds };
    // Compare like with like: only the classes the synthetic set contains.
    let classes: BTreeSet<Health> = synth.labels.iter().map(|l| l.health).collect();
    let reference = reference.filter(|l| classes.contains(&l.health));
    if reference.is_empty() {
        return Err(CliError::validation(STAGE, "no real images of the synthetic classes to compare against"));
    }
    let (margin, bins) = (config.metrics.margin_fraction, config.metrics.histogram_bins);
    let report = full_report(&reference, &synth, &FeatureEmbedder::new(), margin, bins).stage(STAGE)?;
    let profiles = Profiles {
        real: spectral_profile(&reference.images, margin).stage(STAGE)?,
        synthetic: spectral_profile(&synth.images, margin).stage(STAGE)?,
    };
    write_report(&report, &out.join(REPORT_FILE)).stage(STAGE)?;
    write_json(STAGE, &profiles, &out.join(PROFILES_FILE))?;
    let reports = [(label.to_string(), report)];
    let inputs = PlotInputs { reports: &reports, profiles: Some((&profiles.real, &profiles.synthetic)), timeseries: None };
    emit_plots(&inputs, &out).stage(STAGE)?;
    write_run_meta(&out, STAGE, &config, &[real, synthetic])
}

#[derive(Deserialize)]
struct IndexEntry {
    name: String,
    formula: String,
    #[serde(default)]
    description: String,
}

fn load_registry(path: Option<&Path>) -> Result<Vec<IndexDefinition>, CliError> {
    const STAGE: &str = "indices";
    let Some(path) = path else { return Ok(builtin_registry()) };
    let entries: Vec<IndexEntry> = read_json(STAGE, path)?;
    entries.iter().map(|e| IndexDefinition::new(&e.name, &e.formula, &e.description).stage(STAGE)).collect()
}

pub fn indices(common: &Common, dataset: Option<&Path>, registry: Option<&Path>, list: bool) -> Result<(), CliError> {
    const STAGE: &str = "indices";
    let defs = load_registry(registry)?;
    if list {
        for d in &defs {
            println!("{:<6} {:<45} {}", d.name, d.formula, d.description);
        }
        return Ok(());
    }
    let (config, out) = setup(common, Some("metrics"))?;
    let dataset = dataset.ok_or_else(|| CliError::validation(STAGE, "--dataset is required"))?;
    let ds = load_dataset(STAGE, dataset)?;
    let rows = extract_indices(&ds, &defs, config.metrics.margin_fraction).stage(STAGE)?;
    write_feature_table(&FeatureTable::new(&defs, rows), &out.join(FEATURES_FILE)).stage(STAGE)?;
    let mut inputs = vec![dataset];
    inputs.extend(registry);
    write_run_meta(&out, STAGE, &config, &inputs)
}

/// Train and test rows of a real feature table, split exactly as the dataset
/// it was extracted from.
fn split_features(stage: &'static str, table: &FeatureTable, config: &RunConfig) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    if table.rows.iter().enumerate().any(|(i, r)| r.plot_id != i || r.origin != Origin::Real) {
        return Err(CliError::validation(stage, "features must be the full, real-only extraction of one dataset"));
    }
    let labels: Vec<PlotLabel> =
        table.rows.iter().map(|r| PlotLabel { health: r.health, date_index: r.date_index, origin: r.origin }).collect();
    split_indices(&labels, config.seed, &config.split).stage(stage)
}

fn select(table: &FeatureTable, indices: &[usize]) -> FeatureTable {
    FeatureTable { names: table.names.clone(), rows: indices.iter().map(|&i| table.rows[i].clone()).collect() }
}

/// Synthetic rows of several feature files, renumbered so plot ids stay unique.
fn load_synthetic(stage: &'static str, paths: &[PathBuf]) -> Result<Option<FeatureTable>, CliError> {
    let mut merged: Option<FeatureTable> = None;
    for p in paths {
        let table = load_features(stage, p)?.filter(|r| r.origin == Origin::Synthetic);
        match &mut merged {
            None => merged = Some(table),
            Some(m) => {
                if m.names != table.names {
                    return Err(CliError::validation(stage, format!("{} has different index columns", p.display())));
                }
                let offset = m.rows.len();
                m.rows.extend(table.rows.into_iter().map(|mut r| {
                    r.plot_id += offset;
                    r
                }));
            }
        }
    }
    Ok(merged)
}

pub fn predict(common: &Common, features: &Path, synthetic_features: &[PathBuf]) -> Result<(), CliError> {
    const STAGE: &str = "predict";
    let (config, out) = setup(common, Some("classifier"))?;
    let real = load_features(STAGE, features)?;
    let synth = load_synthetic(STAGE, synthetic_features)?
        .ok_or_else(|| CliError::validation(STAGE, "at least one --synthetic-features file is required"))?;
    let (train_idx, test_idx) = split_features(STAGE, &real, &config)?;
    let result =
        augmentation_experiment(&select(&real, &train_idx), &synth, &select(&real, &test_idx), &config.classifier, &config.augment)
            .stage(STAGE)?;
    write_experiment(&result, &out.join(EXPERIMENT_FILE)).stage(STAGE)?;
    write_comparison_csv(&result, &out.join(COMPARISON_FILE)).stage(STAGE)?;
    let mut inputs = vec![features];
    inputs.extend(synthetic_features.iter().map(PathBuf::as_path));
    write_run_meta(&out, STAGE, &config, &inputs)
}

pub fn timeseries(common: &Common, features: &Path, synthetic_features: &[PathBuf]) -> Result<(), CliError> {
    const STAGE: &str = "timeseries";
    let (config, out) = setup(common, Some("classifier"))?;
    let real = load_features(STAGE, features)?;
    let (_, test_idx) = split_features(STAGE, &real, &config)?;
    let test_set: BTreeSet<usize> = test_idx.iter().copied().collect();
    let dates = real.rows.iter().map(|r| r.date_index).max().map_or(0, |d| d as usize + 1);
    let by_date = |table: &FeatureTable, keep: &dyn Fn(usize) -> bool| -> Vec<FeatureTable> {
        (0..dates)
            .map(|d| table.filter(|r| r.date_index as usize == d && keep(r.plot_id)))
            .collect()
    };
    let real_by_date = by_date(&real, &|i| !test_set.contains(&i));
    let synth_by_date = match load_synthetic(STAGE, synthetic_features)? {
        Some(t) => by_date(&t, &|_| true),
        None => Vec::new(),
    };
    let points =
        per_date_analysis(&real_by_date, &synth_by_date, &select(&real, &test_idx), &config.classifier).stage(STAGE)?;
    write_timeseries_csv(&points, &out.join(TIMESERIES_CSV)).stage(STAGE)?;
    write_json(STAGE, &points, &out.join(TIMESERIES_JSON))?;
    emit_plots(&PlotInputs { timeseries: Some(&points), ..PlotInputs::default() }, &out).stage(STAGE)?;
    let mut inputs = vec![features];
    inputs.extend(synthetic_features.iter().map(PathBuf::as_path));
    write_run_meta(&out, STAGE, &config, &inputs)
}

#[derive(Serialize)]
struct Summary {
    metrics: BTreeMap<String, MetricsReport>,
    augmentation: Option<AugmentationResult>,
    timeseries: Option<Vec<DatePoint>>,
}

pub fn report(common: &Common, evals: &[String], predict: Option<&Path>, timeseries: Option<&Path>) -> Result<(), CliError> {
    const STAGE: &str = "report";
    let (config, out) = setup(common, None)?;
    let mut reports = Vec::new();
    let mut profiles: Option<Profiles> = None;
    let mut inputs: Vec<PathBuf> = Vec::new();
    for spec in evals {
        let (label, dir) = spec
            .split_once('=')
            .ok_or_else(|| CliError::validation(STAGE, format!("--eval `{spec}` is not LABEL=DIR")))?;
        let dir = Path::new(dir);
        require_exists(STAGE, dir)?;
        if reports.iter().any(|(l, _)| l == label) {
            return Err(CliError::validation(STAGE, format!("duplicate eval label `{label}`")));
        }
        reports.push((label.to_string(), read_report(&dir.join(REPORT_FILE)).stage(STAGE)?));
        if profiles.is_none() {
            profiles = Some(read_json(STAGE, &dir.join(PROFILES_FILE))?);
        }
        inputs.push(dir.to_path_buf());
    }
    let augmentation = match predict {
        Some(dir) => {
            inputs.push(dir.to_path_buf());
            Some(read_experiment(&dir.join(EXPERIMENT_FILE)).stage(STAGE)?)
        }
        None => None,
    };
    let points: Option<Vec<DatePoint>> = match timeseries {
        Some(dir) => {
            inputs.push(dir.to_path_buf());
            Some(read_json(STAGE, &dir.join(TIMESERIES_JSON))?)
        }
        None => None,
    };
    let plot_inputs = PlotInputs {
        reports: &reports,
        profiles: profiles.as_ref().map(|p| (&p.real, &p.synthetic)),
        // The F1 chart is always drawn; without inputs it shows empty axes.
        timeseries: Some(points.as_deref().unwrap_or(&[])),
    };
    emit_plots(&plot_inputs, &out).stage(STAGE)?;
    let summary = Summary { metrics: reports.into_iter().collect(), augmentation, timeseries: points };
    write_json(STAGE, &summary, &out.join(SUMMARY_FILE))?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_run_meta(&out, STAGE, &config, &inputs)
}
