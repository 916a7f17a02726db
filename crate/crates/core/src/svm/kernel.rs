use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel<F> {
    /// `exp(-gamma * |x - y|^2)`
    Rbf { gamma: F },
    /// `<x, y>`
    Linear,
}

impl<F: Scalar> Kernel<F> {
    pub fn rbf(gamma: F) -> Self {
        Kernel::Rbf { gamma }
    }

    /// Evaluates without checking dimensions; callers guarantee `x.len() == y.len()`.
    #[inline]
    pub fn eval_unchecked(&self, x: &[F], y: &[F]) -> F {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: F = x
                    .iter()
                    .zip(y)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(&a, &b)| a * b).sum(),
        }
    }

    pub fn eval(&self, x: &[F], y: &[F]) -> Result<F> {
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Rbf { .. } => "rbf",
            Kernel::Linear => "linear",
        }
    }
}

impl<F: Scalar> fmt::Display for Kernel<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Rbf { gamma } => write!(f, "rbf:{gamma:.16e}"),
            Kernel::Linear => f.write_str("linear"),
        }
    }
}

/// Parses `linear`, `rbf` (gamma 0.01) or `rbf:<gamma>`.
impl<F: Scalar> FromStr for Kernel<F> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(Kernel::Linear),
            None if s == "rbf" => Ok(Kernel::Rbf { gamma: F::lit(0.01) }),
            Some(("rbf", g)) => g
                .parse::<F>()
                .map(|gamma| Kernel::Rbf { gamma })
                .map_err(|_| Error::Config(format!("bad rbf gamma {g:?}"))),
            _ => Err(Error::Config(format!("unknown kernel {s:?}"))),
        }
    }
}
