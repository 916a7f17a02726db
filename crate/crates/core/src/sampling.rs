//! Resampling strategies over the five flare classes and SVM class weights.
//!
//! Every strategy except OS4 balances the two superclasses exactly
//! (`|XM| = |CBN|`); OS4 sets all five classes to `|N|`, a 2:3 split.
//! Where a superclass total has to be split evenly across sub-classes and
//! does not divide, the extra units go to C, then B, then N (or X, then M on
//! the XM side). Proportional scaling uses largest-remainder rounding with
//! the same class order breaking ties.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{ClassCounts, FlareClass, Labeled, SuperClass};

use FlareClass::{B, C, M, N, X};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Leave the data as is.
    None,
    /// Undersample C, B, N keeping their proportions.
    Us1,
    /// X unchanged; undersample M to |X| and C, B, N to equal shares.
    Us2,
    /// M unchanged; oversample X to |M|, undersample C, B, N to equal shares.
    Us3,
    /// Oversample X and M keeping their ratio.
    Os1,
    /// Shrink N to `3|C| - (|C| + |B|)`, then oversample X and M keeping their ratio.
    Os2,
    /// C unchanged; B and N to |C|; X and M oversampled to equal shares.
    Os3,
    /// Every class brought to |N|.
    Os4,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Us1,
        Strategy::Us2,
        Strategy::Us3,
        Strategy::Os1,
        Strategy::Os2,
        Strategy::Os3,
        Strategy::Os4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "NONE",
            Strategy::Us1 => "US1",
            Strategy::Us2 => "US2",
            Strategy::Us3 => "US3",
            Strategy::Os1 => "OS1",
            Strategy::Os2 => "OS2",
            Strategy::Os3 => "OS3",
            Strategy::Os4 => "OS4",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase();
        std::iter::once(Strategy::None)
            .chain(Strategy::ALL)
            .find(|st| st.name() == up)
            .ok_or_else(|| Error::Config(format!("unknown sampling strategy {s:?}")))
    }
}

/// What happens to one class when a plan is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Keep,
    /// Draw without replacement.
    Under,
    /// Keep every original and replicate with replacement.
    Over,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPlan {
    pub strategy: Strategy,
    pub targets: ClassCounts,
    pub actions: [Action; 5],
    /// Class whose count anchors the plan, if the strategy has one.
    pub base: Option<FlareClass>,
}

impl SamplingPlan {
    pub fn action(&self, class: FlareClass) -> Action {
        self.actions[class.index()]
    }

    /// Identity plan for `counts`.
    pub fn identity(counts: ClassCounts) -> Self {
        SamplingPlan {
            strategy: Strategy::None,
            targets: counts,
            actions: [Action::Keep; 5],
            base: None,
        }
    }
}

impl fmt::Display for SamplingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.strategy, self.targets)
    }
}

/// Splits `total` into `parts.len()` equal shares, handing the remainder
/// out one unit at a time in the listed class order.
fn even_split(total: usize, parts: &[FlareClass], out: &mut ClassCounts) {
    let k = parts.len();
    for (i, &c) in parts.iter().enumerate() {
        out.set(c, total / k + usize::from(i < total % k));
    }
}

/// Scales `parts` proportionally so they sum to exactly `total`
/// (largest remainder, ties in listed order).
fn proportional_split(
    counts: &ClassCounts,
    total: usize,
    parts: &[FlareClass],
    out: &mut ClassCounts,
) -> Result<()> {
    let source: u128 = parts.iter().map(|&c| counts.get(c) as u128).sum();
    if source == 0 {
        return Err(Error::Sampling(format!(
            "cannot scale empty classes {parts:?}"
        )));
    }
    let mut remainders = Vec::with_capacity(parts.len());
    let mut assigned = 0usize;
    for (i, &c) in parts.iter().enumerate() {
        let scaled = counts.get(c) as u128 * total as u128;
        let floor = (scaled / source) as usize;
        out.set(c, floor);
        assigned += floor;
        remainders.push((scaled % source, i));
    }
    // largest remainder first; equal remainders keep class order
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(total - assigned) {
        let c = parts[i];
        out.set(c, out.get(c) + 1);
    }
    Ok(())
}

fn require_nonzero(counts: &ClassCounts, class: FlareClass, strategy: Strategy) -> Result<()> {
    if counts.get(class) == 0 {
        Err(Error::Sampling(format!(
            "{strategy}: base class {class} is empty"
        )))
    } else {
        Ok(())
    }
}

/// Per-class target counts of `strategy` applied to `counts`.
pub fn make_plan(counts: &ClassCounts, strategy: Strategy) -> Result<SamplingPlan> {
    let mut t = *counts;
    let xm = counts.superclass(SuperClass::XM);
    let cbn = counts.superclass(SuperClass::CBN);
    let base = match strategy {
        Strategy::None => return Ok(SamplingPlan::identity(*counts)),
        Strategy::Us1 => {
            if xm == 0 {
                return Err(Error::Sampling("US1: XM superclass is empty".into()));
            }
            proportional_split(counts, xm, &[C, B, N], &mut t)?;
            None
        }
        Strategy::Us2 => {
            require_nonzero(counts, X, strategy)?;
            let x = counts.get(X);
            t.set(M, x);
            even_split(2 * x, &[C, B, N], &mut t);
            Some(X)
        }
        Strategy::Us3 => {
            require_nonzero(counts, M, strategy)?;
            let m = counts.get(M);
            t.set(X, m);
            even_split(2 * m, &[C, B, N], &mut t);
            Some(M)
        }
        Strategy::Os1 => {
            if cbn == 0 {
                return Err(Error::Sampling("OS1: CBN superclass is empty".into()));
            }
            proportional_split(counts, cbn, &[X, M], &mut t)?;
            None
        }
        Strategy::Os2 => {
            require_nonzero(counts, C, strategy)?;
            let (c, b) = (counts.get(C), counts.get(B));
            if 3 * c < c + b {
                return Err(Error::Sampling(format!(
                    "OS2 infeasible: 3|C| - (|C| + |B|) = {} - {} < 0",
                    3 * c,
                    c + b
                )));
            }
            t.set(N, 3 * c - (c + b));
            proportional_split(counts, 3 * c, &[X, M], &mut t)?;
            Some(C)
        }
        Strategy::Os3 => {
            require_nonzero(counts, C, strategy)?;
            let c = counts.get(C);
            t.set(B, c);
            t.set(N, c);
            even_split(3 * c, &[X, M], &mut t);
            Some(C)
        }
        Strategy::Os4 => {
            require_nonzero(counts, N, strategy)?;
            let n = counts.get(N);
            for class in FlareClass::ALL {
                t.set(class, n);
            }
            Some(N)
        }
    };

    let mut actions = [Action::Keep; 5];
    for class in FlareClass::ALL {
        let (have, want) = (counts.get(class), t.get(class));
        actions[class.index()] = match want.cmp(&have) {
            std::cmp::Ordering::Equal => Action::Keep,
            std::cmp::Ordering::Less => Action::Under,
            std::cmp::Ordering::Greater if have == 0 => {
                return Err(Error::Sampling(format!(
                    "{strategy}: class {class} is empty and cannot be oversampled to {want}"
                )))
            }
            std::cmp::Ordering::Greater => Action::Over,
        };
    }
    Ok(SamplingPlan {
        strategy,
        targets: t,
        actions,
        base,
    })
}

/// Applies `plan` to `records`, returning the resampled collection.
///
/// Output is grouped by class in canonical order. Within a class the kept
/// originals come first in their input order, followed by replicas.
pub fn execute_plan<T: Labeled + Clone, R: Rng + ?Sized>(
    records: &[T],
    plan: &SamplingPlan,
    rng: &mut R,
) -> Result<Vec<T>> {
    let mut by_class: [Vec<usize>; 5] = Default::default();
    for (i, r) in records.iter().enumerate() {
        by_class[r.flare_class().index()].push(i);
    }
    let mut out = Vec::with_capacity(plan.targets.total());
    for class in FlareClass::ALL {
        let members = &by_class[class.index()];
        let (have, want) = (members.len(), plan.targets.get(class));
        match plan.action(class) {
            Action::Keep => {
                if have != want {
                    return Err(Error::Sampling(format!(
                        "class {class}: plan keeps {want} but {have} records are present"
                    )));
                }
                out.extend(members.iter().map(|&i| records[i].clone()));
            }
            Action::Under => {
                if want > have {
                    return Err(Error::Sampling(format!(
                        "class {class}: cannot undersample {have} records to {want}"
                    )));
                }
                let mut picked = index::sample(rng, have, want).into_vec();
                picked.sort_unstable();
                out.extend(picked.into_iter().map(|k| records[members[k]].clone()));
            }
            Action::Over => {
                if want < have {
                    return Err(Error::Sampling(format!(
                        "class {class}: cannot oversample {have} records to {want}"
                    )));
                }
                if have == 0 {
                    return Err(Error::Sampling(format!(
                        "class {class}: no records to replicate"
                    )));
                }
                out.extend(members.iter().map(|&i| records[i].clone()));
                for _ in have..want {
                    let k = rng.random_range(0..have);
                    out.push(records[members[k]].clone());
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightMode {
    /// `w_j = n / (k * n_j)` with `k = 2` superclasses.
    Balanced,
    /// `w_XM = |CBN| / |XM|`, `w_CBN = 1`.
    Ratio,
}

impl WeightMode {
    pub fn name(self) -> &'static str {
        match self {
            WeightMode::Balanced => "balanced",
            WeightMode::Ratio => "ratio",
        }
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "balanced" => Ok(WeightMode::Balanced),
            "ratio" => Ok(WeightMode::Ratio),
            _ => Err(Error::Config(format!("unknown weight mode {s:?}"))),
        }
    }
}

/// Misclassification weight per superclass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights<F> {
    pub xm: F,
    pub cbn: F,
    pub mode: Option<WeightMode>,
}

impl<F: Scalar> ClassWeights<F> {
    pub fn unit() -> Self {
        ClassWeights {
            xm: F::one(),
            cbn: F::one(),
            mode: None,
        }
    }

    pub fn get(&self, sc: SuperClass) -> F {
        match sc {
            SuperClass::XM => self.xm,
            SuperClass::CBN => self.cbn,
        }
    }

    /// Weight for a `+1` / `-1` target.
    pub fn for_sign(&self, y: i8) -> F {
        if y > 0 {
            self.xm
        } else {
            self.cbn
        }
    }
}

pub fn compute_weights<F: Scalar>(counts: &ClassCounts, mode: WeightMode) -> Result<ClassWeights<F>> {
    let xm = counts.superclass(SuperClass::XM);
    let cbn = counts.superclass(SuperClass::CBN);
    if xm == 0 || cbn == 0 {
        return Err(Error::Sampling(format!(
            "class weights need both superclasses (|XM| = {xm}, |CBN| = {cbn})"
        )));
    }
    let (w_xm, w_cbn) = match mode {
        WeightMode::Balanced => {
            let n = F::count(xm + cbn);
            let k = F::lit(2.0);
            (n / (k * F::count(xm)), n / (k * F::count(cbn)))
        }
        WeightMode::Ratio => (F::count(cbn) / F::count(xm), F::one()),
    };
    Ok(ClassWeights {
        xm: w_xm,
        cbn: w_cbn,
        mode: Some(mode),
    })
}
