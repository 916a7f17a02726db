//! Partition-aware evaluation: cross-partition ("multifold") trials,
//! within-partition k-fold ("unifold") trials and aggregation of repeats.
//!
//! Every trial runs the same pipeline: fit normalization, apply it, resample
//! the training split only, derive class weights if requested, train, then
//! score the untouched test split.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::{select_features, FeatureSet};
use crate::metrics::{mean_and_variance, ConfusionMatrix, Scores};
use crate::normalize::{apply, fit_extrema_iter, Scope};
use crate::sampling::{compute_weights, execute_plan, make_plan, ClassWeights, Strategy, WeightMode};
use crate::scalar::Scalar;
use crate::seed::rng_for;
use crate::svm::{train_records, SvmConfig};
use crate::types::{count_classes, FeatureRecord, FlareClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    Z,
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::Z,
        ExperimentId::A,
        ExperimentId::B,
        ExperimentId::C,
        ExperimentId::D,
        ExperimentId::E,
        ExperimentId::F,
        ExperimentId::G,
    ];

    pub fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?} (expected one of Z A B C D E F G)")))
    }
}

/// Class-imbalance remedy applied to the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Remedy {
    None,
    Sampling(Strategy),
    Weights(WeightMode),
}

impl Remedy {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Remedy::Sampling(s) if s != Strategy::None)
    }
}

impl fmt::Display for Remedy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Remedy::None => f.write_str("none"),
            Remedy::Sampling(s) => write!(f, "{s}"),
            Remedy::Weights(m) => write!(f, "weights-{}", m.name()),
        }
    }
}

impl FromStr for Remedy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "none" {
            return Ok(Remedy::None);
        }
        if lower == "weights" {
            return Ok(Remedy::Weights(WeightMode::Ratio));
        }
        if let Some(mode) = lower.strip_prefix("weights-") {
            return Ok(Remedy::Weights(mode.parse()?));
        }
        Ok(Remedy::Sampling(s.parse()?))
    }
}

/// Where normalization extrema come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    /// Union of the trial's training and test partitions.
    Global,
    /// Union of every partition in the dataset.
    GlobalAll,
    /// Training split and test split each fitted on themselves.
    Local,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Global => "global",
            Normalization::GlobalAll => "global-all",
            Normalization::Local => "local",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Normalization::Global),
            "global-all" => Ok(Normalization::GlobalAll),
            "local" => Ok(Normalization::Local),
            _ => Err(Error::Config(format!("unknown normalization {s:?}"))),
        }
    }
}

/// One trial. `train_partition == test_partition` marks a unifold trial whose
/// `repeat` is the index of the held-out fold.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrialSpec {
    pub experiment: ExperimentId,
    pub train_partition: u32,
    pub test_partition: u32,
    pub repeat: usize,
    pub remedy: Remedy,
    pub normalization: Normalization,
    pub feature_set: FeatureSet,
    pub seed: u64,
}

impl TrialSpec {
    pub fn is_unifold(&self) -> bool {
        self.train_partition == self.test_partition
    }

    pub fn label(&self) -> String {
        format!(
            "{}[{}->{} #{} {} {} {}]",
            self.experiment,
            self.train_partition,
            self.test_partition,
            self.repeat,
            self.remedy,
            self.normalization,
            self.feature_set
        )
    }
}

/// Row of the results file: the spec, the matrix and its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord<F> {
    pub spec: TrialSpec,
    pub confusion: ConfusionMatrix,
    pub scores: Scores<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult<F> {
    pub record: TrialRecord<F>,
    pub n_train: usize,
    pub n_support: usize,
    pub solver_converged: bool,
    pub wall_time: Duration,
}

/// All ordered `(train, test)` pairs with `train != test`.
pub fn multifold_matrix(partitions: &[u32]) -> Result<Vec<(u32, u32)>> {
    if partitions.len() < 2 {
        return Err(Error::Config(format!(
            "multifold evaluation needs at least 2 partitions, got {}",
            partitions.len()
        )));
    }
    Ok(partitions
        .iter()
        .flat_map(|&a| partitions.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .collect())
}

/// Splits record indices into `k` disjoint folds, stratified by flare class.
///
/// Each class is shuffled and dealt round-robin, continuing where the
/// previous class stopped, so per-class and total fold sizes differ by at
/// most one.
pub fn unifold_folds<T: crate::types::Labeled, R: rand::Rng + ?Sized>(
    records: &[T],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: [Vec<usize>; 5] = Default::default();
    for (i, r) in records.iter().enumerate() {
        by_class[r.flare_class().index()].push(i);
    }
    for class in FlareClass::ALL {
        let n = by_class[class.index()].len();
        if n > 0 && n < k {
            return Err(Error::Config(format!(
                "class {class} has {n} records, fewer than {k} folds; use fewer folds"
            )));
        }
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in by_class.iter_mut() {
        members.shuffle(rng);
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Role of a split in a trial. Test splits refuse resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct DataSplit<F> {
    pub role: SplitRole,
    pub records: Vec<FeatureRecord<F>>,
}

impl<F: Scalar> DataSplit<F> {
    pub fn train(records: Vec<FeatureRecord<F>>) -> Self {
        DataSplit {
            role: SplitRole::Train,
            records,
        }
    }

    pub fn test(records: Vec<FeatureRecord<F>>) -> Self {
        DataSplit {
            role: SplitRole::Test,
            records,
        }
    }

    /// Resamples a training split; any attempt on a test split is rejected.
    pub fn resample<R: rand::Rng + ?Sized>(&mut self, strategy: Strategy, rng: &mut R) -> Result<()> {
        if self.role == SplitRole::Test {
            return Err(Error::Leakage(format!(
                "refusing to apply {strategy} to a test split"
            )));
        }
        let plan = make_plan(&count_classes(&self.records), strategy)?;
        self.records = execute_plan(&self.records, &plan, rng)?;
        Ok(())
    }

    pub fn reweight(&self, mode: WeightMode) -> Result<ClassWeights<F>> {
        if self.role == SplitRole::Test {
            return Err(Error::Leakage("refusing to derive weights from a test split".into()));
        }
        compute_weights(&count_classes(&self.records), mode)
    }
}

/// Errors when any slice identity occurs in both splits.
pub fn check_disjoint<F>(train: &[FeatureRecord<F>], test: &[FeatureRecord<F>]) -> Result<()> {
    let ids: HashSet<&str> = train.iter().map(|r| r.slice_uid.as_str()).collect();
    let shared: Vec<&str> = test
        .iter()
        .map(|r| r.slice_uid.as_str())
        .filter(|u| ids.contains(u))
        .take(3)
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage(format!(
            "train and test share slices (e.g. {})",
            shared.join(", ")
        )))
    }
}

/// Feature records of every partition, as extracted (not normalized).
#[derive(Debug, Clone)]
pub struct TrialData<F> {
    pub partitions: BTreeMap<u32, Vec<FeatureRecord<F>>>,
    pub svm: SvmConfig<F>,
    pub folds: usize,
}

fn stage<T>(spec: &TrialSpec, name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Trial {
        trial: spec.label(),
        stage: name,
        source: Box::new(e),
    })
}

/// Runs one trial end to end.
pub fn run_trial<F: Scalar>(spec: &TrialSpec, data: &TrialData<F>) -> Result<TrialResult<F>> {
    let started = Instant::now();
    let part = |p: u32| {
        data.partitions
            .get(&p)
            .ok_or_else(|| Error::Empty(format!("partition {p} has no feature data")))
    };
    let (train, test, all_for_global) = stage(spec, "split", (|| {
        let train_all = select_features(part(spec.train_partition)?, &spec.feature_set)?;
        if spec.is_unifold() {
            let mut rng = rng_for(spec.seed, &[0]);
            let folds = unifold_folds(&train_all, data.folds, &mut rng)?;
            let held = folds.get(spec.repeat).ok_or_else(|| {
                Error::Config(format!("fold {} of {}", spec.repeat, data.folds))
            })?;
            let held: HashSet<usize> = held.iter().copied().collect();
            let (test, train): (Vec<_>, Vec<_>) = train_all
                .into_iter()
                .enumerate()
                .partition(|(i, _)| held.contains(i));
            let strip = |v: Vec<(usize, FeatureRecord<F>)>| v.into_iter().map(|(_, r)| r).collect();
            Ok((strip(train), strip(test), None))
        } else {
            let test = select_features(part(spec.test_partition)?, &spec.feature_set)?;
            let all = if spec.normalization == Normalization::GlobalAll {
                let mut all = Vec::new();
                for recs in data.partitions.values() {
                    all.extend(select_features(recs, &spec.feature_set)?);
                }
                Some(all)
            } else {
                None
            };
            Ok((train_all, test, all))
        }
    })())?;
    run_split_trial(spec, DataSplit::train(train), DataSplit::test(test), all_for_global, data, started)
}

/// Runs the pipeline on explicit splits. Overlapping splits, or a
/// `train` argument that is not a training split, abort the trial.
pub fn run_split_trial<F: Scalar>(
    spec: &TrialSpec,
    mut train: DataSplit<F>,
    test: DataSplit<F>,
    global_pool: Option<Vec<FeatureRecord<F>>>,
    data: &TrialData<F>,
    started: Instant,
) -> Result<TrialResult<F>> {
    stage(spec, "leakage", (|| {
        if train.role != SplitRole::Train || test.role != SplitRole::Test {
            return Err(Error::Leakage("splits passed in the wrong roles".into()));
        }
        check_disjoint(&train.records, &test.records)
    })())?;
    let n_test = test.records.len();

    let (train_n, test_n) = stage(spec, "normalize", (|| match spec.normalization {
        Normalization::Global | Normalization::GlobalAll => {
            let stats = match &global_pool {
                Some(pool) => fit_extrema_iter(pool.iter(), Scope::Global)?,
                None => fit_extrema_iter(train.records.iter().chain(&test.records), Scope::Global)?,
            };
            Ok((apply(&train.records, &stats)?, apply(&test.records, &stats)?))
        }
        Normalization::Local => {
            let train_stats = fit_extrema_iter(train.records.iter(), Scope::Global)?;
            let test_stats = fit_extrema_iter(test.records.iter(), Scope::Global)?;
            Ok((apply(&train.records, &train_stats)?, apply(&test.records, &test_stats)?))
        }
    })())?;
    train.records = train_n;
    let test = DataSplit::test(test_n);

    let mut rng = rng_for(spec.seed, &[1, spec.repeat as u64]);
    let mut config = data.svm.clone();
    stage(spec, "resample", (|| {
        match spec.remedy {
            Remedy::Sampling(s) => train.resample(s, &mut rng)?,
            Remedy::Weights(mode) => config.class_weights = train.reweight(mode)?,
            Remedy::None => {}
        }
        Ok(())
    })())?;

    let model = stage(spec, "train", (|| {
        let model = train_records(&train.records, &config)?;
        model.check_invariants()?;
        Ok(model)
    })())?;

    let cm = stage(spec, "evaluate", (|| {
        let mut cm = ConfusionMatrix::default();
        for r in &test.records {
            let positive = model.decision_value(&r.features)? >= F::zero();
            cm.record(positive, r.superclass.is_positive());
        }
        if cm.total() as usize != n_test {
            return Err(Error::Leakage("test set size changed during the trial".into()));
        }
        Ok(cm)
    })())?;

    Ok(TrialResult {
        record: TrialRecord {
            spec: spec.clone(),
            confusion: cm,
            scores: Scores::from_matrix(&cm),
        },
        n_train: train.records.len(),
        n_support: model.n_support(),
        solver_converged: model.converged,
        wall_time: started.elapsed(),
    })
}

/// Mean and sample variance of TSS over the repeats of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate<F> {
    pub experiment: ExperimentId,
    pub series: String,
    pub train_partition: u32,
    pub test_partition: u32,
    pub n: usize,
    pub mean_tss: F,
    pub var_tss: F,
}

impl<F: Scalar> Aggregate<F> {
    pub fn std_tss(&self) -> F {
        self.var_tss.sqrt()
    }
}

/// Name of the plotted series a record belongs to: the knob the
/// experiment varies.
pub fn series_name(spec: &TrialSpec) -> String {
    match spec.experiment {
        ExperimentId::D => {
            if spec.is_unifold() {
                "unifold".into()
            } else {
                "multifold".into()
            }
        }
        ExperimentId::E => spec.normalization.to_string(),
        ExperimentId::G => spec.feature_set.to_string(),
        _ => spec.remedy.to_string(),
    }
}

/// Groups records by (experiment, series, train, test) and reduces TSS.
/// Records with undefined TSS are skipped. Output is sorted by key.
pub fn aggregate<F: Scalar>(records: &[TrialRecord<F>]) -> Result<Vec<Aggregate<F>>> {
    let mut groups: BTreeMap<(ExperimentId, String, u32, u32), Vec<F>> = BTreeMap::new();
    for r in records {
        if let Some(t) = r.scores.tss {
            groups
                .entry((
                    r.spec.experiment,
                    series_name(&r.spec),
                    r.spec.train_partition,
                    r.spec.test_partition,
                ))
                .or_default()
                .push(t);
        }
    }
    groups
        .into_iter()
        .map(|((experiment, series, train, test), values)| {
            let (mean, var) = mean_and_variance(&values)?;
            Ok(Aggregate {
                experiment,
                series,
                train_partition: train,
                test_partition: test,
                n: values.len(),
                mean_tss: mean,
                var_tss: var,
            })
        })
        .collect()
}
