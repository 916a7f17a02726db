use std::fs;

use flarebench::experiments::{
    extract_dataset, load_feature_dir, report, run_experiments, save_feature_dir, write_run, RunConfig,
    PLOT_FILE, RESULTS_FILE, SUMMARY_FILE,
};
use flarebench::harness::{ExperimentId, Remedy};
use flarebench::ingest::{read_dataset, read_trials, write_dataset, MANIFEST_FILE};
use flarebench::sampling::Strategy;
use flarebench::synthgen::{self, GenConfig};
use flarebench::types::{ClassCounts, Dataset};
use flarebench::FeatureSet;

fn small_gen() -> GenConfig {
    GenConfig {
        n_partitions: 3,
        events_per_class: ClassCounts::new(2, 4, 6, 6, 8),
        n_params: 4,
        steps_per_slice: 24,
        slices_per_event: 4,
        ..GenConfig::default()
    }
}

fn quick_run(experiments: Vec<ExperimentId>) -> RunConfig<f64> {
    RunConfig {
        experiments,
        repeats: 2,
        folds: 4,
        jobs: 1,
        ..RunConfig::default()
    }
}

#[test]
fn dataset_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds: Dataset<f64> = synthgen::generate(&small_gen()).unwrap();
    let masked = synthgen::inject_missing(&mut ds, 0.01, 4).unwrap();
    assert!(masked > 0);
    write_dataset(dir.path(), &ds).unwrap();
    let back: Dataset<f64> = read_dataset(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn features_and_results_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds: Dataset<f64> = synthgen::generate(&small_gen()).unwrap();
    let feats = extract_dataset(&ds, &FeatureSet::all()).unwrap();
    let columns = feats[&1][0].feature_names.to_vec();
    assert_eq!(columns.len(), 4 * 6);
    save_feature_dir(dir.path(), &feats, &columns).unwrap();
    let loaded = load_feature_dir::<f64>(dir.path()).unwrap();
    assert_eq!(loaded, feats);

    let cfg = quick_run(vec![ExperimentId::Z, ExperimentId::C, ExperimentId::D]);
    let outcome = run_experiments(&cfg, loaded).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    // Z and C: 6 ordered pairs each; D: 6 multifold + 3 x 4 folds
    assert_eq!(outcome.results.len(), 6 + 6 + 6 + 12);

    let out = dir.path().join("run");
    let aggs = write_run(&out, &outcome).unwrap();
    let records = read_trials::<f64>(&out.join(RESULTS_FILE)).unwrap();
    assert_eq!(records, outcome.records());

    let summary = fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    fs::remove_file(out.join(SUMMARY_FILE)).unwrap();
    fs::remove_file(out.join(PLOT_FILE)).unwrap();
    let rebuilt = report::<f64>(&out).unwrap();
    assert_eq!(rebuilt, aggs);
    assert_eq!(fs::read_to_string(out.join(SUMMARY_FILE)).unwrap(), summary);
}

#[test]
fn single_precision_pipeline_runs() {
    let ds: Dataset<f32> = synthgen::generate(&small_gen()).unwrap();
    let feats = extract_dataset(&ds, &FeatureSet::last()).unwrap();
    let cfg = RunConfig::<f32> {
        experiments: vec![ExperimentId::A],
        repeats: 2,
        jobs: 1,
        ..RunConfig::default()
    };
    let outcome = run_experiments(&cfg, feats).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    assert_eq!(outcome.results.len(), 12);
    for r in &outcome.results {
        assert_eq!(r.record.spec.remedy, Remedy::Sampling(Strategy::Us2));
        let tss = r.record.scores.tss.unwrap();
        assert!((-1.0..=1.0).contains(&tss));
    }
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let ds: Dataset<f64> = synthgen::generate(&small_gen()).unwrap();
    let feats = extract_dataset(&ds, &FeatureSet::last()).unwrap();
    let cfg = quick_run(vec![ExperimentId::A, ExperimentId::D]);
    let a = run_experiments(&cfg, feats.clone()).unwrap().records();
    let b = run_experiments(&RunConfig { jobs: 3, ..cfg.clone() }, feats.clone()).unwrap().records();
    assert_eq!(a, b);
    let c = run_experiments(&RunConfig { seed: 9, ..cfg }, feats).unwrap().records();
    assert_ne!(a, c);
}
