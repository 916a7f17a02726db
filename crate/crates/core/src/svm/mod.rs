//! Class-weighted soft-margin SVM.
//!
//! Each training instance `i` gets the box `0 <= a_i <= C * w(y_i)` where
//! `w` is the misclassification weight of its superclass. Exact duplicate
//! instances (same label and feature bits, as produced by replication-based
//! oversampling) are merged before solving: `m` copies become one variable
//! with bound `m * C * w`, which leaves the primal problem unchanged.

mod kernel;
pub mod smo;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub use kernel::Kernel;
pub use smo::{DualSolution, SolverOptions};

use crate::error::{Error, Result};
use crate::sampling::ClassWeights;
use crate::scalar::Scalar;
use crate::types::FeatureRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig<F> {
    pub c: F,
    pub kernel: Kernel<F>,
    pub kkt_tolerance: F,
    /// Cap on pair updates; the solver's size-based default when `None`.
    pub max_passes: Option<usize>,
    pub class_weights: ClassWeights<F>,
    pub cache_rows: usize,
}

impl<F: Scalar> Default for SvmConfig<F> {
    fn default() -> Self {
        SvmConfig {
            c: F::lit(1000.0),
            kernel: Kernel::rbf(F::lit(0.01)),
            kkt_tolerance: F::lit(1e-3),
            max_passes: None,
            class_weights: ClassWeights::unit(),
            cache_rows: smo::DEFAULT_CACHE_ROWS,
        }
    }
}

impl<F: Scalar> SvmConfig<F> {
    pub fn with_weights(mut self, w: ClassWeights<F>) -> Self {
        self.class_weights = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: F| v > F::zero() && v.is_finite();
        if !positive(self.c) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !positive(self.kkt_tolerance) {
            return Err(Error::Config("kkt_tolerance must be positive".into()));
        }
        if let Kernel::Rbf { gamma } = self.kernel {
            if !positive(gamma) {
                return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
            }
        }
        if !positive(self.class_weights.xm) || !positive(self.class_weights.cbn) {
            return Err(Error::Config("class weights must be positive".into()));
        }
        Ok(())
    }

    /// Box bound of one instance with target `y`.
    pub fn bound(&self, y: i8) -> F {
        self.c * self.class_weights.for_sign(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel<F> {
    pub support_vectors: Vec<Vec<F>>,
    pub labels: Vec<i8>,
    /// Dual variable of each support vector (summed over merged copies).
    pub alpha: Vec<F>,
    /// Number of identical training instances behind each support vector.
    pub multiplicity: Vec<usize>,
    pub bias: F,
    pub config: SvmConfig<F>,
    pub iterations: usize,
    pub kkt_violation: F,
    pub converged: bool,
    pub dual_objective: F,
    /// `sum_i a_i y_i` over the returned variables.
    pub equality_residual: F,
    pub n_train: usize,
}

impl<F: Scalar> SvmModel<F> {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    /// `f(x) = sum_i a_i y_i K(x_i, x) + b`.
    pub fn decision_value(&self, x: &[F]) -> Result<F> {
        if !self.support_vectors.is_empty() && x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let k = self.config.kernel;
        let s: F = self
            .support_vectors
            .iter()
            .zip(&self.alpha)
            .zip(&self.labels)
            .map(|((sv, &a), &y)| {
                let ay = if y > 0 { a } else { -a };
                ay * k.eval_unchecked(sv, x)
            })
            .sum();
        Ok(s + self.bias)
    }

    /// Sign of the decision value; `f(x) = 0` counts as `+1`.
    pub fn predict(&self, x: &[F]) -> Result<i8> {
        Ok(if self.decision_value(x)? >= F::zero() { 1 } else { -1 })
    }

    /// Verifies box and equality constraints of the stored dual solution.
    pub fn check_invariants(&self) -> Result<()> {
        let mut sum_alpha = F::zero();
        for (idx, ((&a, &y), &m)) in self
            .alpha
            .iter()
            .zip(&self.labels)
            .zip(&self.multiplicity)
            .enumerate()
        {
            // same expression the solver clamps against
            if !(a > F::zero()) || a > self.config.bound(y) * F::count(m) {
                return Err(Error::Training(format!(
                    "support vector {idx}: alpha {a} (x{m}) outside (0, {}]",
                    self.config.bound(y)
                )));
            }
            sum_alpha += a;
        }
        // 1e-8 relative, unless the scalar's rounding over the sum is coarser
        let rounding = F::epsilon() * F::count(self.alpha.len());
        let tol = F::lit(1e-8).max(rounding) * sum_alpha.max(F::one());
        let residual = self.equality_residual.abs();
        if residual > tol {
            return Err(Error::Training(format!(
                "equality constraint residual {residual} too large"
            )));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("svm model", e);
        let cfg = &self.config;
        writeln!(w, "flarebench-svm 1").map_err(io)?;
        writeln!(w, "kernel {}", cfg.kernel).map_err(io)?;
        writeln!(w, "c {:.16e}", cfg.c).map_err(io)?;
        writeln!(w, "weights {:.16e} {:.16e}", cfg.class_weights.xm, cfg.class_weights.cbn)
            .map_err(io)?;
        writeln!(w, "tolerance {:.16e}", cfg.kkt_tolerance).map_err(io)?;
        writeln!(w, "bias {:.16e}", self.bias).map_err(io)?;
        writeln!(
            w,
            "solver {} {:.16e} {} {:.16e} {:.16e} {}",
            self.iterations,
            self.kkt_violation,
            self.converged,
            self.dual_objective,
            self.equality_residual,
            self.n_train
        )
        .map_err(io)?;
        writeln!(w, "support {} {}", self.n_support(), self.dim()).map_err(io)?;
        for (((sv, &y), &a), &m) in self
            .support_vectors
            .iter()
            .zip(&self.labels)
            .zip(&self.alpha)
            .zip(&self.multiplicity)
        {
            write!(w, "{y},{a:.16e},{m}").map_err(io)?;
            for v in sv {
                write!(w, ",{v:.16e}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<String> = BufReader::new(f)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        let bad = |n: usize, m: &str| Error::parse(path, n as u64 + 1, m.to_string());
        let field = |n: usize, key: &str| -> Result<Vec<&str>> {
            let line = lines.get(n).ok_or_else(|| bad(n, "unexpected end of file"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(n, &format!("expected `{key}`")));
            }
            Ok(parts.collect())
        };
        let num = |n: usize, s: &str| s.parse::<F>().map_err(|_| bad(n, &format!("bad number {s:?}")));
        let int = |n: usize, s: &str| s.parse::<usize>().map_err(|_| bad(n, &format!("bad integer {s:?}")));

        if field(0, "flarebench-svm")? != ["1"] {
            return Err(bad(0, "unsupported model version"));
        }
        let kernel: Kernel<F> = field(1, "kernel")?
            .first()
            .ok_or_else(|| bad(1, "kernel missing"))?
            .parse()?;
        let c = num(2, field(2, "c")?.first().copied().unwrap_or(""))?;
        let w = field(3, "weights")?;
        if w.len() != 2 {
            return Err(bad(3, "expected two weights"));
        }
        let tol = num(4, field(4, "tolerance")?.first().copied().unwrap_or(""))?;
        let bias = num(5, field(5, "bias")?.first().copied().unwrap_or(""))?;
        let s = field(6, "solver")?;
        if s.len() != 6 {
            return Err(bad(6, "expected six solver fields"));
        }
        let sup = field(7, "support")?;
        if sup.len() != 2 {
            return Err(bad(7, "expected count and dimension"));
        }
        let (count, dim) = (int(7, sup[0])?, int(7, sup[1])?);
        if lines.len() != 8 + count {
            return Err(bad(lines.len(), "support vector count mismatch"));
        }
        let mut model = SvmModel {
            support_vectors: Vec::with_capacity(count),
            labels: Vec::with_capacity(count),
            alpha: Vec::with_capacity(count),
            multiplicity: Vec::with_capacity(count),
            bias,
            config: SvmConfig {
                c,
                kernel,
                kkt_tolerance: tol,
                max_passes: None,
                class_weights: ClassWeights {
                    xm: num(3, w[0])?,
                    cbn: num(3, w[1])?,
                    mode: None,
                },
                cache_rows: smo::DEFAULT_CACHE_ROWS,
            },
            iterations: int(6, s[0])?,
            kkt_violation: num(6, s[1])?,
            converged: s[2] == "true",
            dual_objective: num(6, s[3])?,
            equality_residual: num(6, s[4])?,
            n_train: int(6, s[5])?,
        };
        for (n, line) in lines.iter().enumerate().skip(8) {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 + dim {
                return Err(bad(n, "wrong number of columns"));
            }
            model.labels.push(match parts[0] {
                "1" => 1,
                "-1" => -1,
                _ => return Err(bad(n, "label must be 1 or -1")),
            });
            model.alpha.push(num(n, parts[1])?);
            model.multiplicity.push(int(n, parts[2])?);
            model.support_vectors.push(
                parts[3..]
                    .iter()
                    .map(|p| num(n, p))
                    .collect::<Result<_>>()?,
            );
        }
        Ok(model)
    }
}

/// Groups identical `(label, features)` rows; returns unique row indices
/// and the multiplicity of each.
fn merge_duplicates<F: Scalar>(x: &[Vec<F>], y: &[i8]) -> (Vec<usize>, Vec<usize>) {
    let mut seen: HashMap<(i8, Vec<u64>), usize> = HashMap::with_capacity(x.len());
    let mut unique = Vec::new();
    let mut mult = Vec::new();
    for (i, (xi, &yi)) in x.iter().zip(y).enumerate() {
        let key = (yi, xi.iter().map(|v| v.to_f64_lossy().to_bits()).collect());
        match seen.get(&key) {
            Some(&g) => mult[g] += 1,
            None => {
                seen.insert(key, unique.len());
                unique.push(i);
                mult.push(1);
            }
        }
    }
    (unique, mult)
}

/// Trains on rows `x` with targets `y` in `{-1, +1}`.
pub fn train<F: Scalar>(x: &[Vec<F>], y: &[i8], config: &SvmConfig<F>) -> Result<SvmModel<F>> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let Some(dim) = x.first().map(Vec::len) else {
        return Err(Error::Training("no training instances".into()));
    };
    for (i, xi) in x.iter().enumerate() {
        if xi.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: xi.len(),
            });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training(format!("instance {i} has a non-finite feature")));
        }
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::Training(
            "training data must contain both classes".into(),
        ));
    }

    let (unique, mult) = merge_duplicates(x, y);
    let ux: Vec<Vec<F>> = unique.iter().map(|&i| x[i].clone()).collect();
    let uy: Vec<i8> = unique.iter().map(|&i| y[i]).collect();
    let upper: Vec<F> = uy
        .iter()
        .zip(&mult)
        .map(|(&t, &m)| config.bound(t) * F::count(m))
        .collect();

    let mut opts = SolverOptions::for_size(ux.len(), config.kkt_tolerance);
    opts.cache_rows = config.cache_rows;
    if let Some(cap) = config.max_passes {
        opts.max_iter = cap;
    }
    let sol = smo::solve(&ux, &uy, &upper, config.kernel, &opts)?;

    let objective = sol.objective();
    let mut residual = F::zero();
    let mut model = SvmModel {
        support_vectors: Vec::new(),
        labels: Vec::new(),
        alpha: Vec::new(),
        multiplicity: Vec::new(),
        bias: sol.bias,
        config: config.clone(),
        iterations: sol.iterations,
        kkt_violation: sol.violation,
        converged: sol.converged,
        dual_objective: objective,
        equality_residual: F::zero(),
        n_train: x.len(),
    };
    for (k, &a) in sol.alpha.iter().enumerate() {
        if a > F::zero() {
            residual += if uy[k] > 0 { a } else { -a };
            model.support_vectors.push(ux[k].clone());
            model.labels.push(uy[k]);
            model.alpha.push(a);
            model.multiplicity.push(mult[k]);
        }
    }
    model.equality_residual = residual;
    Ok(model)
}

/// Trains on feature records, using `+1` for XM and `-1` for CBN.
pub fn train_records<F: Scalar>(
    records: &[FeatureRecord<F>],
    config: &SvmConfig<F>,
) -> Result<SvmModel<F>> {
    let x: Vec<Vec<F>> = records.iter().map(|r| r.features.clone()).collect();
    let y: Vec<i8> = records.iter().map(FeatureRecord::target).collect();
    train(&x, &y, config)
}

pub fn predict<F: Scalar>(model: &SvmModel<F>, x: &[F]) -> Result<(i8, F)> {
    let f = model.decision_value(x)?;
    Ok((if f >= F::zero() { 1 } else { -1 }, f))
}
