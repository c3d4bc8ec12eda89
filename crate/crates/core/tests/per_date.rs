//! Early-detection curve on drifting simulator data.

use ppgan::predict::{per_date_analysis, ClassifierSpec};
use ppgan::sim::{simulate_dataset, split_indices, SimConfig, SplitSpec};
use ppgan::vegindex::{builtin_registry, extract_indices, FeatureTable};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Classes drift apart over the season, so the last date should be the
/// easiest one to classify.
#[test]
fn real_only_f1_improves_from_first_to_final_date() {
    let registry = builtin_registry();
    let (mut first, mut last) = (Vec::new(), Vec::new());
    for seed in 1..=5 {
        let ds = simulate_dataset(&SimConfig { image_size: 32, seed, ..SimConfig::default() }).unwrap();
        let (_, test) = split_indices(&ds.labels, seed, &SplitSpec::default()).unwrap();
        let table = FeatureTable::new(&registry, extract_indices(&ds, &registry, 0.1).unwrap());
        let in_test = |id: usize| test.binary_search(&id).is_ok();
        let by_date: Vec<FeatureTable> = (0..ds.dates.len() as u32)
            .map(|d| table.filter(|r| r.date_index == d && !in_test(r.plot_id)))
            .collect();
        let spec = ClassifierSpec { trees: 50, seed, ..ClassifierSpec::default() };
        let points = per_date_analysis(&by_date, &[], &table.filter(|r| in_test(r.plot_id)), &spec).unwrap();
        assert!(points.iter().all(|p| p.f1_real == p.f1_mixed));
        first.push(points[0].f1_real);
        last.push(points.last().unwrap().f1_real);
    }
    assert!(median(last.clone()) >= median(first.clone()), "first {first:?} last {last:?}");
}
