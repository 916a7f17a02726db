//! Zero-one normalization of feature columns.
//!
//! Extrema are fitted either over every provided record (global scope) or
//! over the records of a single partition (local scope). Application never
//! clamps, so values beyond the fitted extrema land outside `[0, 1]`.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::FeatureRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Global,
    Local(u32),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Global => f.write_str("global"),
            Scope::Local(p) => write!(f, "local({p})"),
        }
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "global" {
            return Ok(Scope::Global);
        }
        s.strip_prefix("local(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|p| p.parse().ok())
            .map(Scope::Local)
            .ok_or_else(|| Error::Config(format!("unknown normalization scope {s:?}")))
    }
}

/// Per-column extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats<F> {
    pub scope: Scope,
    /// Partitions the extrema were fitted on, ascending.
    pub fitted_on: Vec<u32>,
    pub columns: Vec<String>,
    pub min: Vec<F>,
    pub max: Vec<F>,
}

pub fn fit_extrema<F: Scalar>(
    records: &[FeatureRecord<F>],
    scope: Scope,
) -> Result<NormalizationStats<F>> {
    fit_extrema_iter(records.iter(), scope)
}

/// [`fit_extrema`] over borrowed records, e.g. the union of two partitions
/// without copying either.
pub fn fit_extrema_iter<'a, F, I>(records: I, scope: Scope) -> Result<NormalizationStats<F>>
where
    F: Scalar,
    I: IntoIterator<Item = &'a FeatureRecord<F>>,
{
    let mut iter = records.into_iter().filter(|r| match scope {
        Scope::Global => true,
        Scope::Local(p) => r.partition_id == p,
    });
    let first = iter
        .next()
        .ok_or_else(|| Error::Empty(format!("no records to fit {scope} extrema on")))?;
    let width = first.features.len();
    let mut min = first.features.clone();
    let mut max = first.features.clone();
    let mut fitted_on = vec![first.partition_id];
    for r in iter {
        if r.features.len() != width {
            return Err(Error::Dimension {
                expected: width,
                got: r.features.len(),
            });
        }
        for (j, &v) in r.features.iter().enumerate() {
            if v < min[j] {
                min[j] = v;
            }
            if v > max[j] {
                max[j] = v;
            }
        }
        if !fitted_on.contains(&r.partition_id) {
            fitted_on.push(r.partition_id);
        }
    }
    fitted_on.sort_unstable();
    Ok(NormalizationStats {
        scope,
        fitted_on,
        columns: first.feature_names.to_vec(),
        min,
        max,
    })
}

impl<F: Scalar> NormalizationStats<F> {
    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)`, or 0 for a constant column.
    pub fn transform_value(&self, column: usize, x: F) -> F {
        let (lo, hi) = (self.min[column], self.max[column]);
        if hi == lo {
            F::zero()
        } else {
            (x - lo) / (hi - lo)
        }
    }

    pub fn transform(&self, features: &mut [F]) -> Result<()> {
        if features.len() != self.width() {
            return Err(Error::Dimension {
                expected: self.width(),
                got: features.len(),
            });
        }
        for (j, v) in features.iter_mut().enumerate() {
            *v = self.transform_value(j, *v);
        }
        Ok(())
    }

    /// Writes the sidecar file: a `# scope=...` comment line, then
    /// `column,min,max` rows.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let fitted: Vec<String> = self.fitted_on.iter().map(u32::to_string).collect();
        let io = |e| Error::io("normalization stats", e);
        writeln!(w, "# scope={} fitted_on={}", self.scope, fitted.join(";")).map_err(io)?;
        writeln!(w, "column,min,max").map_err(io)?;
        for ((c, lo), hi) in self.columns.iter().zip(&self.min).zip(&self.max) {
            writeln!(w, "{c},{lo:.16e},{hi:.16e}").map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let mut next = |n: u64| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::parse(path, n, "unexpected end of file"))?
                .map_err(|e| Error::io(path, e))
        };
        let head = next(1)?;
        let meta = head
            .strip_prefix("# ")
            .ok_or_else(|| Error::parse(path, 1, "missing scope line"))?;
        let mut scope = None;
        let mut fitted_on = Vec::new();
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("scope", v)) => scope = Some(v.parse()?),
                Some(("fitted_on", v)) => {
                    fitted_on = v
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| Error::parse(path, 1, "bad partition id")))
                        .collect::<Result<_>>()?
                }
                _ => return Err(Error::parse(path, 1, format!("unexpected field {kv:?}"))),
            }
        }
        if next(2)? != "column,min,max" {
            return Err(Error::parse(path, 2, "bad header"));
        }
        let mut stats = NormalizationStats {
            scope: scope.ok_or_else(|| Error::parse(path, 1, "scope missing"))?,
            fitted_on,
            columns: Vec::new(),
            min: Vec::new(),
            max: Vec::new(),
        };
        let mut n = 2;
        for line in lines {
            n += 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split(',');
            let (Some(c), Some(lo), Some(hi), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::parse(path, n, "expected column,min,max"));
            };
            let num = |s: &str| s.parse::<F>().map_err(|_| Error::parse(path, n, format!("bad number {s:?}")));
            stats.columns.push(c.to_string());
            stats.min.push(num(lo)?);
            stats.max.push(num(hi)?);
        }
        Ok(stats)
    }
}

/// Returns normalized copies of `records`.
pub fn apply<F: Scalar>(
    records: &[FeatureRecord<F>],
    stats: &NormalizationStats<F>,
) -> Result<Vec<FeatureRecord<F>>> {
    records
        .iter()
        .map(|r| {
            if *r.feature_names != stats.columns {
                return Err(Error::Shape(format!(
                    "record {} columns do not match the fitted columns",
                    r.slice_uid
                )));
            }
            let mut out = r.clone();
            stats.transform(&mut out.features)?;
            Ok(out)
        })
        .collect()
}
