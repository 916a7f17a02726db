//! Feature extraction: gap repair and per-series summary statistics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{FeatureRecord, MvtsSlice};

/// Summary statistic of one time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatKind {
    Mean,
    /// Exposed as the sample standard deviation.
    StdDev,
    Skewness,
    Kurtosis,
    Median,
    LastValue,
}

impl StatKind {
    /// Canonical order; feature columns follow it within each parameter.
    pub const ALL: [StatKind; 6] = [
        StatKind::Mean,
        StatKind::StdDev,
        StatKind::Skewness,
        StatKind::Kurtosis,
        StatKind::Median,
        StatKind::LastValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatKind::Mean => "mean",
            StatKind::StdDev => "stddev",
            StatKind::Skewness => "skewness",
            StatKind::Kurtosis => "kurtosis",
            StatKind::Median => "median",
            StatKind::LastValue => "last",
        }
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StatKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown statistic {s:?}")))
    }
}

/// Named, non-empty set of statistics.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    name: String,
    stats: Vec<StatKind>,
}

impl FeatureSet {
    pub fn new(name: impl Into<String>, stats: &[StatKind]) -> Result<Self> {
        let mut stats = stats.to_vec();
        stats.sort();
        stats.dedup();
        if stats.is_empty() {
            return Err(Error::Config("feature set must not be empty".into()));
        }
        Ok(FeatureSet {
            name: name.into(),
            stats,
        })
    }

    pub fn last() -> Self {
        Self::new("LAST", &[StatKind::LastValue]).unwrap()
    }

    pub fn std() -> Self {
        Self::new("STD", &[StatKind::StdDev]).unwrap()
    }

    /// Median, standard deviation, skewness and kurtosis.
    pub fn four() -> Self {
        Self::new(
            "FOUR",
            &[
                StatKind::Median,
                StatKind::StdDev,
                StatKind::Skewness,
                StatKind::Kurtosis,
            ],
        )
        .unwrap()
    }

    pub fn all() -> Self {
        Self::new("ALL", &StatKind::ALL).unwrap()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stats(&self) -> &[StatKind] {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Column names for the given parameters, params-major.
    pub fn column_names<S: AsRef<str>>(&self, params: &[S]) -> Vec<String> {
        params
            .iter()
            .flat_map(|p| {
                self.stats
                    .iter()
                    .map(move |k| feature_name(p.as_ref(), *k))
            })
            .collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Accepts a preset name (`LAST`, `STD`, `FOUR`, `ALL`, any case) or a
/// `+`-separated list of statistic names such as `mean+median`.
impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LAST" => return Ok(Self::last()),
            "STD" => return Ok(Self::std()),
            "FOUR" => return Ok(Self::four()),
            "ALL" => return Ok(Self::all()),
            _ => {}
        }
        let stats = s
            .split('+')
            .map(str::parse)
            .collect::<Result<Vec<StatKind>>>()?;
        Self::new(s, &stats)
    }
}

pub fn feature_name(param: &str, stat: StatKind) -> String {
    format!("{param}_{}", stat.name())
}

/// Fills gaps in `series`: interior runs linearly between the nearest valid
/// neighbours, leading and trailing runs with the nearest valid value.
pub fn interpolate_missing<F: Scalar>(series: &[F], missing: &[bool]) -> Result<Vec<F>> {
    if series.len() != missing.len() {
        return Err(Error::LengthMismatch {
            left: series.len(),
            right: missing.len(),
        });
    }
    let valid: Vec<usize> = (0..series.len()).filter(|&i| !missing[i]).collect();
    let (Some(&first), Some(&last)) = (valid.first(), valid.last()) else {
        return Err(Error::Empty("series has no valid values".into()));
    };

    let mut out = series.to_vec();
    out[..first].fill(series[first]);
    out[last + 1..].fill(series[last]);
    for pair in valid.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi - lo < 2 {
            continue;
        }
        let span = F::count(hi - lo);
        let (a, b) = (series[lo], series[hi]);
        for (i, v) in out.iter_mut().enumerate().take(hi).skip(lo + 1) {
            let t = F::count(i - lo) / span;
            *v = a + (b - a) * t;
        }
    }
    Ok(out)
}

/// Computes one statistic of a gap-free series.
///
/// Standard deviation uses the `n - 1` denominator (0 for a single value).
/// Skewness `m3 / m2^1.5` and excess kurtosis `m4 / m2^2 - 3` use population
/// central moments and are 0 when `m2 == 0`.
pub fn compute_stat<F: Scalar>(series: &[F], kind: StatKind) -> Result<F> {
    let n = series.len();
    if n == 0 {
        return Err(Error::Empty(format!("cannot compute {} of empty series", kind.name())));
    }
    let value = match kind {
        StatKind::Mean => mean(series),
        StatKind::Median => median(series),
        StatKind::LastValue => series[n - 1],
        StatKind::StdDev => {
            if n == 1 {
                F::zero()
            } else {
                let m = mean(series);
                let ss: F = series.iter().map(|&x| (x - m) * (x - m)).sum();
                (ss / F::count(n - 1)).sqrt()
            }
        }
        StatKind::Skewness => {
            let [m2, m3, _] = central_moments(series);
            if m2 == F::zero() {
                F::zero()
            } else {
                m3 / (m2 * m2.sqrt())
            }
        }
        StatKind::Kurtosis => {
            let [m2, _, m4] = central_moments(series);
            if m2 == F::zero() {
                F::zero()
            } else {
                m4 / (m2 * m2) - F::lit(3.0)
            }
        }
    };
    Ok(value)
}

// Shifted by the first element, so a constant series returns itself exactly.
fn mean<F: Scalar>(series: &[F]) -> F {
    let x0 = series[0];
    let shift: F = series.iter().map(|&x| x - x0).sum();
    x0 + shift / F::count(series.len())
}

fn median<F: Scalar>(series: &[F]) -> F {
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        a + (b - a) / F::lit(2.0)
    }
}

/// Population central moments `[m2, m3, m4]`.
fn central_moments<F: Scalar>(series: &[F]) -> [F; 3] {
    let m = mean(series);
    let n = F::count(series.len());
    let (mut s2, mut s3, mut s4) = (F::zero(), F::zero(), F::zero());
    for &x in series {
        let d = x - m;
        let d2 = d * d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    [s2 / n, s3 / n, s4 / n]
}

/// Turns each slice into one feature record.
///
/// `params` selects parameter columns by index (all of them when `None`).
/// Missing cells are repaired per slice and parameter before any statistic
/// is computed. Columns are ordered params-major, stats-minor.
pub fn extract_features<F: Scalar>(
    slices: &[MvtsSlice<F>],
    param_names: &[String],
    feature_set: &FeatureSet,
    params: Option<&[usize]>,
) -> Result<Vec<FeatureRecord<F>>> {
    let Some(first) = slices.first() else {
        return Ok(Vec::new());
    };
    let (steps, n_params) = (first.steps, first.n_params);
    if param_names.len() != n_params {
        return Err(Error::Shape(format!(
            "{} parameter names for {n_params} parameters",
            param_names.len()
        )));
    }
    let selected: Vec<usize> = match params {
        Some(p) => p.to_vec(),
        None => (0..n_params).collect(),
    };
    if let Some(&bad) = selected.iter().find(|&&p| p >= n_params) {
        return Err(Error::Dimension {
            expected: n_params,
            got: bad + 1,
        });
    }
    let selected_names: Vec<&str> = selected.iter().map(|&p| param_names[p].as_str()).collect();
    let names = Arc::new(feature_set.column_names(&selected_names));

    slices
        .par_iter()
        .map(|slice| {
            if slice.steps != steps || slice.n_params != n_params {
                return Err(Error::Shape(format!(
                    "slice {} is {}x{}, dataset is {steps}x{n_params}",
                    slice.uid(),
                    slice.steps,
                    slice.n_params
                )));
            }
            let mut features = Vec::with_capacity(names.len());
            for &p in &selected {
                let (raw, mask) = slice.series(p);
                let series = interpolate_missing(&raw, &mask).map_err(|_| Error::AllMissing {
                    slice_uid: slice.uid(),
                    param: param_names[p].clone(),
                })?;
                for &kind in feature_set.stats() {
                    features.push(compute_stat(&series, kind)?);
                }
            }
            FeatureRecord::new(
                slice.event_id.clone(),
                slice.partition_id,
                slice.slice_index,
                slice.label,
                features,
                Arc::clone(&names),
            )
        })
        .collect()
}

/// Projects records onto the columns `<param>_<stat>` for every parameter
/// present in the records and every statistic of `feature_set`.
pub fn select_features<F: Scalar>(
    records: &[FeatureRecord<F>],
    feature_set: &FeatureSet,
) -> Result<Vec<FeatureRecord<F>>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let source = &first.feature_names;
    let mut params: Vec<&str> = Vec::new();
    for name in source.iter() {
        if let Some((param, _)) = name.rsplit_once('_') {
            if !params.contains(&param) {
                params.push(param);
            }
        }
    }
    let wanted = feature_set.column_names(&params);
    let columns = wanted
        .iter()
        .map(|w| {
            source
                .iter()
                .position(|s| s == w)
                .ok_or_else(|| Error::Shape(format!("feature column {w} not present")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let names = Arc::new(wanted);
    records
        .iter()
        .map(|r| {
            if !Arc::ptr_eq(&r.feature_names, source) && r.feature_names != *source {
                return Err(Error::Shape(format!(
                    "record {} has a different feature layout",
                    r.slice_uid
                )));
            }
            Ok(FeatureRecord {
                features: columns.iter().map(|&c| r.features[c]).collect(),
                feature_names: Arc::clone(&names),
                ..r.clone()
            })
        })
        .collect()
}
