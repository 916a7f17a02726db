//! Domain vocabulary: flare classes, slices, feature records, class counts.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// GOES flare class of an event. `N` stands for flare-quiet (or A-class).
///
/// Ordering follows flare strength: `X > M > C > B > N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlareClass {
    N,
    B,
    C,
    M,
    X,
}

impl FlareClass {
    /// Canonical listing order, strongest first. Used for file layouts,
    /// rounding tie-breaks and record ordering.
    pub const ALL: [FlareClass; 5] = [
        FlareClass::X,
        FlareClass::M,
        FlareClass::C,
        FlareClass::B,
        FlareClass::N,
    ];

    /// Position in [`FlareClass::ALL`].
    pub fn index(self) -> usize {
        match self {
            FlareClass::X => 0,
            FlareClass::M => 1,
            FlareClass::C => 2,
            FlareClass::B => 3,
            FlareClass::N => 4,
        }
    }

    pub fn superclass(self) -> SuperClass {
        to_superclass(self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlareClass::X => "X",
            FlareClass::M => "M",
            FlareClass::C => "C",
            FlareClass::B => "B",
            FlareClass::N => "N",
        }
    }
}

impl fmt::Display for FlareClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlareClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" => Ok(FlareClass::X),
            "M" => Ok(FlareClass::M),
            "C" => Ok(FlareClass::C),
            "B" => Ok(FlareClass::B),
            "N" => Ok(FlareClass::N),
            other => Err(Error::Config(format!("unknown flare class {other:?}"))),
        }
    }
}

/// Binary grouping: strong flares (`XM`, the positive class) against
/// weak and quiet ones (`CBN`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SuperClass {
    XM,
    CBN,
}

impl SuperClass {
    pub const ALL: [SuperClass; 2] = [SuperClass::XM, SuperClass::CBN];

    pub fn is_positive(self) -> bool {
        self == SuperClass::XM
    }

    /// `+1` for XM, `-1` for CBN.
    pub fn sign(self) -> i8 {
        if self.is_positive() {
            1
        } else {
            -1
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SuperClass::XM => "XM",
            SuperClass::CBN => "CBN",
        }
    }
}

impl fmt::Display for SuperClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuperClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "XM" => Ok(SuperClass::XM),
            "CBN" => Ok(SuperClass::CBN),
            other => Err(Error::Config(format!("unknown superclass {other:?}"))),
        }
    }
}

pub fn to_superclass(c: FlareClass) -> SuperClass {
    match c {
        FlareClass::X | FlareClass::M => SuperClass::XM,
        FlareClass::C | FlareClass::B | FlareClass::N => SuperClass::CBN,
    }
}

/// Deterministic identity of one slice: `<partition>:<event>:<slice_index>`.
pub fn slice_uid(partition_id: u32, event_id: &str, slice_index: usize) -> String {
    format!("{partition_id}:{event_id}:{slice_index}")
}

/// One sliding-window sample of an event: `steps x n_params` values in
/// row-major order (one row per timestep), with a parallel missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MvtsSlice<F> {
    pub event_id: String,
    pub partition_id: u32,
    pub slice_index: usize,
    pub label: FlareClass,
    pub steps: usize,
    pub n_params: usize,
    pub values: Vec<F>,
    pub missing: Vec<bool>,
}

impl<F: Scalar> MvtsSlice<F> {
    pub fn new(
        event_id: impl Into<String>,
        partition_id: u32,
        slice_index: usize,
        label: FlareClass,
        steps: usize,
        n_params: usize,
        values: Vec<F>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let cells = steps * n_params;
        if values.len() != cells || missing.len() != cells {
            return Err(Error::Shape(format!(
                "slice expects {steps}x{n_params} = {cells} cells, got {} values and {} mask entries",
                values.len(),
                missing.len()
            )));
        }
        Ok(MvtsSlice {
            event_id: event_id.into(),
            partition_id,
            slice_index,
            label,
            steps,
            n_params,
            values,
            missing,
        })
    }

    pub fn uid(&self) -> String {
        slice_uid(self.partition_id, &self.event_id, self.slice_index)
    }

    pub fn value(&self, step: usize, param: usize) -> F {
        self.values[step * self.n_params + param]
    }

    pub fn is_missing(&self, step: usize, param: usize) -> bool {
        self.missing[step * self.n_params + param]
    }

    /// Column `param` as a time series, with its missing mask.
    pub fn series(&self, param: usize) -> (Vec<F>, Vec<bool>) {
        (0..self.steps)
            .map(|t| (self.value(t, param), self.is_missing(t, param)))
            .unzip()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }
}

/// Raw slices of every partition plus the parameter layout they share.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub param_names: Vec<String>,
    pub steps_per_slice: usize,
    /// `(partition_id, slices)` in ascending partition order; slices are
    /// grouped by event and ordered by slice index.
    pub partitions: Vec<(u32, Vec<MvtsSlice<F>>)>,
}

impl<F: Scalar> Dataset<F> {
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn partition(&self, id: u32) -> Option<&[MvtsSlice<F>]> {
        self.partitions
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, s)| s.as_slice())
    }

    pub fn partition_ids(&self) -> Vec<u32> {
        self.partitions.iter().map(|(p, _)| *p).collect()
    }

    pub fn n_slices(&self) -> usize {
        self.partitions.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn slices(&self) -> impl Iterator<Item = &MvtsSlice<F>> {
        self.partitions.iter().flat_map(|(_, s)| s.iter())
    }

    /// Checks the shared-shape, contiguous-slice-index and
    /// one-partition-per-event invariants.
    pub fn validate(&self) -> Result<()> {
        let mut event_partition: std::collections::HashMap<&str, u32> = Default::default();
        for (pid, slices) in &self.partitions {
            let mut prev: Option<(&str, usize)> = None;
            for s in slices {
                if s.steps != self.steps_per_slice || s.n_params != self.n_params() {
                    return Err(Error::Shape(format!(
                        "slice {} is {}x{}, dataset is {}x{}",
                        s.uid(),
                        s.steps,
                        s.n_params,
                        self.steps_per_slice,
                        self.n_params()
                    )));
                }
                if s.partition_id != *pid {
                    return Err(Error::Shape(format!("slice {} filed under partition {pid}", s.uid())));
                }
                if let Some(&other) = event_partition.get(s.event_id.as_str()) {
                    if other != *pid {
                        return Err(Error::Shape(format!(
                            "event {} appears in partitions {other} and {pid}",
                            s.event_id
                        )));
                    }
                }
                let expected = match prev {
                    Some((e, i)) if e == s.event_id => i + 1,
                    _ => {
                        if event_partition.insert(&s.event_id, *pid).is_some() {
                            return Err(Error::Shape(format!("event {} is not contiguous", s.event_id)));
                        }
                        0
                    }
                };
                if s.slice_index != expected {
                    return Err(Error::Shape(format!(
                        "event {} slice index {} where {expected} was expected",
                        s.event_id, s.slice_index
                    )));
                }
                prev = Some((&s.event_id, s.slice_index));
            }
        }
        Ok(())
    }
}

/// Fixed-length feature vector of one slice plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord<F> {
    pub slice_uid: String,
    pub event_id: String,
    pub partition_id: u32,
    pub slice_index: usize,
    pub label: FlareClass,
    pub superclass: SuperClass,
    pub features: Vec<F>,
    pub feature_names: Arc<Vec<String>>,
}

impl<F: Scalar> FeatureRecord<F> {
    pub fn new(
        event_id: impl Into<String>,
        partition_id: u32,
        slice_index: usize,
        label: FlareClass,
        features: Vec<F>,
        feature_names: Arc<Vec<String>>,
    ) -> Result<Self> {
        if features.len() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} features but {} names",
                features.len(),
                feature_names.len()
            )));
        }
        let event_id = event_id.into();
        Ok(FeatureRecord {
            slice_uid: slice_uid(partition_id, &event_id, slice_index),
            event_id,
            partition_id,
            slice_index,
            label,
            superclass: label.superclass(),
            features,
            feature_names,
        })
    }

    /// `+1` for XM, `-1` for CBN.
    pub fn target(&self) -> i8 {
        self.superclass.sign()
    }
}

/// Anything carrying a flare-class label.
pub trait Labeled {
    fn flare_class(&self) -> FlareClass;
}

impl Labeled for FlareClass {
    fn flare_class(&self) -> FlareClass {
        *self
    }
}

impl<F> Labeled for MvtsSlice<F> {
    fn flare_class(&self) -> FlareClass {
        self.label
    }
}

impl<F> Labeled for FeatureRecord<F> {
    fn flare_class(&self) -> FlareClass {
        self.label
    }
}

impl<T: Labeled> Labeled for &T {
    fn flare_class(&self) -> FlareClass {
        (**self).flare_class()
    }
}

/// Number of items per flare class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassCounts {
    counts: [usize; 5],
}

impl ClassCounts {
    pub fn new(x: usize, m: usize, c: usize, b: usize, n: usize) -> Self {
        ClassCounts {
            counts: [x, m, c, b, n],
        }
    }

    pub fn get(&self, class: FlareClass) -> usize {
        self.counts[class.index()]
    }

    pub fn set(&mut self, class: FlareClass, count: usize) {
        self.counts[class.index()] = count;
    }

    pub fn superclass(&self, sc: SuperClass) -> usize {
        FlareClass::ALL
            .iter()
            .filter(|c| c.superclass() == sc)
            .map(|&c| self.get(c))
            .sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FlareClass, usize)> + '_ {
        FlareClass::ALL.iter().map(move |&c| (c, self.get(c)))
    }
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(c, n)| format!("{c}={n}")).collect();
        f.write_str(&parts.join(" "))
    }
}

pub fn count_classes<I>(items: I) -> ClassCounts
where
    I: IntoIterator,
    I::Item: Labeled,
{
    let mut counts = ClassCounts::default();
    for item in items {
        counts.counts[item.flare_class().index()] += 1;
    }
    counts
}
