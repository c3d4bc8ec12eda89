use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate, labeled_rows, train_classifier, ClassifierSpec, EvalScores};
use crate::raster::{Health, Origin};
use crate::vegindex::{FeatureTable, IndexVector};
use crate::{Error, Result};

/// Paired scores from training on real data alone and on real plus synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationResult {
    pub spec: ClassifierSpec,
    pub augment_counts: BTreeMap<Health, usize>,
    pub train_counts_real: BTreeMap<Health, usize>,
    pub train_counts_mixed: BTreeMap<Health, usize>,
    pub test_size: usize,
    pub scores_real: EvalScores,
    pub scores_mixed: EvalScores,
}

fn class_counts(rows: &[IndexVector]) -> BTreeMap<Health, usize> {
    let mut counts = BTreeMap::new();
    for r in rows.iter().filter(|r| r.health != Health::Mild) {
        *counts.entry(r.health).or_insert(0) += 1;
    }
    counts
}

fn check_columns(a: &FeatureTable, b: &FeatureTable, what: &str) -> Result<()> {
    if a.names != b.names {
        return Err(Error::Shape(format!("{what} table has different index columns")));
    }
    Ok(())
}

fn check_real_test(test: &FeatureTable) -> Result<()> {
    if let Some(r) = test.rows.iter().find(|r| r.origin != Origin::Real) {
        return Err(Error::validation("test", format!("plot {} is synthetic; the test set must be real only", r.plot_id)));
    }
    Ok(())
}

fn fit_and_score(train: &FeatureTable, test: &FeatureTable, spec: &ClassifierSpec) -> Result<EvalScores> {
    let (x, y) = labeled_rows(train);
    let (tx, ty) = labeled_rows(test);
    evaluate(&train_classifier(&x, &y, spec)?, &tx, &ty)
}

/// The first `augment_counts[class]` pool rows of each class, in pool order.
fn take_synthetic(pool: &FeatureTable, augment_counts: &BTreeMap<Health, usize>) -> Result<Vec<IndexVector>> {
    let mut picked = Vec::new();
    for (&health, &wanted) in augment_counts {
        let available: Vec<&IndexVector> = pool.rows.iter().filter(|r| r.health == health).collect();
        if available.len() < wanted {
            return Err(Error::Insufficient(format!(
                "{} synthetic {} samples requested, {} available",
                wanted,
                health.as_str(),
                available.len()
            )));
        }
        picked.extend(available[..wanted].iter().map(|r| (*r).clone()));
    }
    Ok(picked)
}

/// Train once on `real_train` and once with synthetic rows added, using the
/// same classifier seed, and score both on the same real-only test set.
pub fn augmentation_experiment(
    real_train: &FeatureTable,
    synth_pool: &FeatureTable,
    test: &FeatureTable,
    spec: &ClassifierSpec,
    augment_counts: &BTreeMap<Health, usize>,
) -> Result<AugmentationResult> {
    check_columns(real_train, synth_pool, "synthetic")?;
    check_columns(real_train, test, "test")?;
    check_real_test(test)?;
    let mut mixed = real_train.clone();
    mixed.rows.extend(take_synthetic(synth_pool, augment_counts)?);
    let scores_real = fit_and_score(real_train, test, spec)?;
    let scores_mixed = fit_and_score(&mixed, test, spec)?;
    Ok(AugmentationResult {
        spec: spec.clone(),
        augment_counts: augment_counts.clone(),
        train_counts_real: class_counts(&real_train.rows),
        train_counts_mixed: class_counts(&mixed.rows),
        test_size: scores_real.test_size,
        scores_real,
        scores_mixed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatePoint {
    pub date_index: usize,
    pub train_real: usize,
    pub train_mixed: usize,
    pub f1_real: f64,
    pub f1_mixed: f64,
}

/// Union of the rows, dropping repeats of the same `(origin, date, plot)`.
fn union_into(acc: &mut Vec<IndexVector>, seen: &mut BTreeSet<(Origin, u32, usize)>, rows: &[IndexVector]) {
    for r in rows.iter().filter(|r| r.health != Health::Mild) {
        if seen.insert((r.origin, r.date_index, r.plot_id)) {
            acc.push(r.clone());
        }
    }
}

/// Cumulative-date training: at date `d` both classifiers see every training
/// row from dates `0..=d`, the mixed one also every synthetic row from those
/// dates. Both are scored on the same real-only test set.
pub fn per_date_analysis(
    real_by_date: &[FeatureTable],
    synth_by_date: &[FeatureTable],
    test: &FeatureTable,
    spec: &ClassifierSpec,
) -> Result<Vec<DatePoint>> {
    if real_by_date.len() < 2 {
        return Err(Error::validation("dates", format!("{} dates given, at least 2 required", real_by_date.len())));
    }
    if synth_by_date.len() > real_by_date.len() {
        return Err(Error::validation("synthetic", "more synthetic dates than real dates"));
    }
    check_real_test(test)?;
    let names = &real_by_date[0].names;
    for t in real_by_date.iter().chain(synth_by_date).chain([test]) {
        if &t.names != names {
            return Err(Error::Shape("per-date tables have different index columns".into()));
        }
    }
    let (mut real, mut real_seen) = (Vec::new(), BTreeSet::new());
    let (mut synth, mut synth_seen) = (Vec::new(), BTreeSet::new());
    let mut points = Vec::with_capacity(real_by_date.len());
    for (d, table) in real_by_date.iter().enumerate() {
        if table.rows.iter().all(|r| r.health == Health::Mild) {
            return Err(Error::Insufficient(format!("date {d} has no training data")));
        }
        union_into(&mut real, &mut real_seen, &table.rows);
        if let Some(s) = synth_by_date.get(d) {
            union_into(&mut synth, &mut synth_seen, &s.rows);
        }
        let real_table = FeatureTable { names: names.clone(), rows: real.clone() };
        let mut mixed_table = real_table.clone();
        mixed_table.rows.extend(synth.iter().cloned());
        points.push(DatePoint {
            date_index: d,
            train_real: real_table.rows.len(),
            train_mixed: mixed_table.rows.len(),
            f1_real: fit_and_score(&real_table, test, spec)?.unhealthy.f1,
            f1_mixed: fit_and_score(&mixed_table, test, spec)?.unhealthy.f1,
        });
    }
    Ok(points)
}

pub fn write_experiment(result: &AugmentationResult, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(result).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_experiment(path: &Path) -> Result<AugmentationResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// `metric,real,mixed` rows for every score in the pair.
pub fn write_comparison_csv(result: &AugmentationResult, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["metric", "real", "mixed"]).map_err(csv_err)?;
    let (a, b) = (&result.scores_real, &result.scores_mixed);
    let mut rows = vec![("accuracy".to_string(), a.accuracy, b.accuracy)];
    for (name, ca, cb) in [("healthy", &a.healthy, &b.healthy), ("unhealthy", &a.unhealthy, &b.unhealthy)] {
        rows.push((format!("{name}_accuracy"), ca.accuracy, cb.accuracy));
        rows.push((format!("{name}_precision"), ca.precision, cb.precision));
        rows.push((format!("{name}_recall"), ca.recall, cb.recall));
        rows.push((format!("{name}_f1"), ca.f1, cb.f1));
    }
    for (metric, real, mixed) in rows {
        w.write_record([metric, format!("{real:.6}"), format!("{mixed:.6}")]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_timeseries_csv(points: &[DatePoint], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["date", "f1_real", "f1_mixed"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.date_index.to_string(), format!("{:.6}", p.f1_real), format!("{:.6}", p.f1_mixed)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
