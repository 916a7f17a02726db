//! The experiment matrix Z, A..G: which trials each experiment runs, a
//! parallel runner with ordered collection, and the summary/plot tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureSet};
use crate::harness::{
    aggregate, multifold_matrix, run_trial, Aggregate, ExperimentId, Normalization, Remedy,
    TrialData, TrialRecord, TrialResult, TrialSpec,
};
use crate::ingest::{fmt_real, read_features, read_trials, save_features, save_trials};
use crate::sampling::{Strategy, WeightMode};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::svm::SvmConfig;
use crate::types::{Dataset, FeatureRecord};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_FILE: &str = "plot_data.csv";

/// Repeats for arms whose remedy is random.
pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone)]
pub struct RunConfig<F> {
    pub seed: u64,
    pub experiments: Vec<ExperimentId>,
    /// Repeats of stochastic arms; deterministic arms always run once.
    pub repeats: usize,
    /// Overrides apply to every arm that does not vary the same knob.
    pub remedy: Option<Remedy>,
    pub normalization: Option<Normalization>,
    pub features: Option<FeatureSet>,
    pub svm: SvmConfig<F>,
    pub folds: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl<F: Scalar> Default for RunConfig<F> {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            experiments: ExperimentId::ALL.to_vec(),
            repeats: DEFAULT_REPEATS,
            remedy: None,
            normalization: None,
            features: None,
            svm: SvmConfig::default(),
            folds: DEFAULT_FOLDS,
            jobs: 0,
        }
    }
}

/// One configuration compared within an experiment.
#[derive(Debug, Clone)]
struct Arm {
    remedy: Remedy,
    normalization: Normalization,
    features: FeatureSet,
    unifold: bool,
}

fn arms<F>(exp: ExperimentId, cfg: &RunConfig<F>) -> Vec<Arm> {
    use ExperimentId::*;
    let ratio = Remedy::Weights(WeightMode::Ratio);
    let base = |remedy| Arm {
        remedy,
        normalization: Normalization::Global,
        features: FeatureSet::last(),
        unifold: false,
    };
    let mut arms = match exp {
        Z => vec![base(Remedy::None)],
        A => vec![base(Remedy::Sampling(Strategy::Us2))],
        B => vec![base(Remedy::Sampling(Strategy::Os3))],
        C => vec![base(ratio)],
        D => vec![Arm { unifold: true, ..base(ratio) }, base(ratio)],
        E => vec![
            base(Remedy::None),
            Arm {
                normalization: Normalization::Local,
                ..base(Remedy::None)
            },
        ],
        F => vec![
            base(Remedy::Sampling(Strategy::Os1)),
            base(Remedy::Sampling(Strategy::Os3)),
        ],
        G => [FeatureSet::last(), FeatureSet::std(), FeatureSet::four()]
            .into_iter()
            .map(|features| Arm {
                features,
                ..base(Remedy::Sampling(Strategy::Us2))
            })
            .collect(),
    };
    for arm in &mut arms {
        if let (Some(r), false) = (cfg.remedy, exp == F) {
            arm.remedy = r;
        }
        if let (Some(n), false) = (cfg.normalization, exp == E) {
            arm.normalization = n;
        }
        if let (Some(f), false) = (&cfg.features, exp == G) {
            arm.features = f.clone();
        }
    }
    arms
}

/// Every trial of the selected experiments, in a canonical order. Seeds
/// depend only on (master seed, experiment, arm, pair, repeat).
pub fn plan_trials<F>(cfg: &RunConfig<F>, partitions: &[u32]) -> Result<Vec<TrialSpec>> {
    let pairs = multifold_matrix(partitions)?;
    let mut specs = Vec::new();
    for &exp in &cfg.experiments {
        for (a, arm) in arms(exp, cfg).into_iter().enumerate() {
            let seed_of = |train: u32, test: u32, repeat: usize| {
                derive_seed(
                    cfg.seed,
                    &[exp.index(), a as u64, u64::from(train), u64::from(test), repeat as u64],
                )
            };
            let spec = |train, test, repeat, seed| TrialSpec {
                experiment: exp,
                train_partition: train,
                test_partition: test,
                repeat,
                remedy: arm.remedy,
                normalization: arm.normalization,
                feature_set: arm.features.clone(),
                seed,
            };
            if arm.unifold {
                for &p in partitions {
                    // folds of one partition share a seed so they come from
                    // the same shuffle
                    let seed = seed_of(p, p, 0);
                    specs.extend((0..cfg.folds).map(|fold| spec(p, p, fold, seed)));
                }
            } else {
                let repeats = if arm.remedy.is_stochastic() { cfg.repeats.max(1) } else { 1 };
                for &(train, test) in &pairs {
                    for r in 0..repeats {
                        specs.push(spec(train, test, r, seed_of(train, test, r)));
                    }
                }
            }
        }
    }
    Ok(specs)
}

#[derive(Debug)]
pub struct RunOutcome<F> {
    /// Successful trials in plan order.
    pub results: Vec<TrialResult<F>>,
    pub failures: Vec<(TrialSpec, Error)>,
}

impl<F: Clone> RunOutcome<F> {
    pub fn records(&self) -> Vec<TrialRecord<F>> {
        self.results.iter().map(|r| r.record.clone()).collect()
    }
}

/// Runs `specs` on a pool of `jobs` workers; results keep the input order.
pub fn run_trials<F: Scalar>(specs: &[TrialSpec], data: &TrialData<F>, jobs: usize) -> Result<RunOutcome<F>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<TrialResult<F>>> =
        pool.install(|| specs.par_iter().map(|s| run_trial(s, data)).collect());
    let mut out = RunOutcome {
        results: Vec::new(),
        failures: Vec::new(),
    };
    for (spec, o) in specs.iter().zip(outcomes) {
        match o {
            Ok(r) => out.results.push(r),
            Err(e) => out.failures.push((spec.clone(), e)),
        }
    }
    Ok(out)
}

/// Plans and runs the configured experiments.
pub fn run_experiments<F: Scalar>(
    cfg: &RunConfig<F>,
    partitions: BTreeMap<u32, Vec<FeatureRecord<F>>>,
) -> Result<RunOutcome<F>> {
    cfg.svm.validate()?;
    let ids: Vec<u32> = partitions.keys().copied().collect();
    let specs = plan_trials(cfg, &ids)?;
    let data = TrialData {
        partitions,
        svm: cfg.svm.clone(),
        folds: cfg.folds,
    };
    run_trials(&specs, &data, cfg.jobs)
}

/// Extracts `feature_set` from every partition of an in-memory dataset.
pub fn extract_dataset<F: Scalar>(
    dataset: &Dataset<F>,
    feature_set: &FeatureSet,
) -> Result<BTreeMap<u32, Vec<FeatureRecord<F>>>> {
    dataset
        .partitions
        .iter()
        .map(|(p, slices)| Ok((*p, extract_features(slices, &dataset.param_names, feature_set, None)?)))
        .collect()
}

pub fn feature_file_name(partition: u32) -> String {
    format!("features_{partition}.csv")
}

/// Writes one feature file per partition.
pub fn save_feature_dir<F: Scalar>(
    dir: &Path,
    partitions: &BTreeMap<u32, Vec<FeatureRecord<F>>>,
    columns: &[String],
) -> Result<()> {
    for (p, records) in partitions {
        save_features(&dir.join(feature_file_name(*p)), records, columns)?;
    }
    Ok(())
}

/// Loads every `features_<id>.csv` in `dir`, keyed by partition id.
pub fn load_feature_dir<F: Scalar>(dir: &Path) -> Result<BTreeMap<u32, Vec<FeatureRecord<F>>>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(id) = name
            .to_str()
            .and_then(|n| n.strip_prefix("features_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<u32>().ok())
        else {
            continue;
        };
        let (_, records) = read_features(&entry.path())?;
        out.insert(id, records);
    }
    if out.is_empty() {
        return Err(Error::Empty(format!(
            "no features_<id>.csv files in {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn x_label<F>(a: &Aggregate<F>) -> String {
    if a.train_partition == a.test_partition {
        format!("{}", a.train_partition)
    } else {
        format!("{}-{}", a.train_partition, a.test_partition)
    }
}

pub fn write_summary<F: Scalar, W: Write>(aggs: &[Aggregate<F>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "experiment",
        "series",
        "train_partition",
        "test_partition",
        "n",
        "mean_tss",
        "var_tss",
        "std_tss",
    ])?;
    for a in aggs {
        out.write_record([
            a.experiment.to_string(),
            a.series.clone(),
            a.train_partition.to_string(),
            a.test_partition.to_string(),
            a.n.to_string(),
            fmt_real(a.mean_tss),
            fmt_real(a.var_tss),
            fmt_real(a.std_tss()),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<summary writer>", e))?;
    Ok(())
}

/// Grouped bar-chart data: one row per (series, pair).
pub fn write_plot_data<F: Scalar, W: Write>(aggs: &[Aggregate<F>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["experiment", "series", "x", "mean", "std"])?;
    for a in aggs {
        out.write_record([
            a.experiment.to_string(),
            a.series.clone(),
            x_label(a),
            fmt_real(a.mean_tss),
            fmt_real(a.std_tss()),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<plot writer>", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Writes summary and plot tables for `records` into `out_dir`.
pub fn write_report<F: Scalar>(out_dir: &Path, records: &[TrialRecord<F>]) -> Result<Vec<Aggregate<F>>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let aggs = aggregate(records)?;
    write_summary(&aggs, std::io::BufWriter::new(create(&out_dir.join(SUMMARY_FILE))?))?;
    write_plot_data(&aggs, std::io::BufWriter::new(create(&out_dir.join(PLOT_FILE))?))?;
    Ok(aggs)
}

/// Writes results, summary and plot files for a finished run.
pub fn write_run<F: Scalar>(out_dir: &Path, outcome: &RunOutcome<F>) -> Result<Vec<Aggregate<F>>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records = outcome.records();
    save_trials(&out_dir.join(RESULTS_FILE), &records)?;
    write_report(out_dir, &records)
}

/// Rebuilds summary and plot files from `dir/results.csv`. A missing
/// results file yields empty tables.
pub fn report<F: Scalar>(dir: &Path) -> Result<Vec<Aggregate<F>>> {
    let path = dir.join(RESULTS_FILE);
    let records = if path.exists() { read_trials(&path)? } else { Vec::new() };
    write_report(dir, &records)
}
