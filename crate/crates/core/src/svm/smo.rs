//! Two-variable dual solver for the box-constrained SVM quadratic program
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a
//! s.t.   y^T a = 0,  0 <= a_i <= U_i,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Each iteration picks the maximal violating index `i` and, among the
//! indices that can move against it, the `j` with the largest guaranteed
//! objective decrease under a second-order model. The pair is optimized
//! analytically and the gradient updated from two kernel rows.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::kernel::Kernel;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<F> {
    /// Stop once the maximal KKT violation `m(a) - M(a)` drops below this.
    pub tol: F,
    /// Hard cap on pair updates.
    pub max_iter: usize,
    /// Stop after this many consecutive pair updates that leave `a` unchanged.
    pub stall_limit: usize,
    /// Problems with at most this many rows keep the whole kernel matrix.
    pub cache_rows: usize,
}

impl<F: Scalar> SolverOptions<F> {
    /// Defaults for an `n`-variable problem.
    pub fn for_size(n: usize, tol: F) -> Self {
        SolverOptions {
            tol,
            max_iter: (100 * n).max(10_000_000),
            stall_limit: 10 * n.max(1),
            cache_rows: DEFAULT_CACHE_ROWS,
        }
    }
}

/// Full-matrix caching threshold: 8000 rows is 512 MB of `f64`.
pub const DEFAULT_CACHE_ROWS: usize = 8000;

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution<F> {
    pub alpha: Vec<F>,
    pub bias: F,
    /// Gradient of the minimization objective, `Q a - e`.
    pub gradient: Vec<F>,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub violation: F,
    pub converged: bool,
}

impl<F: Scalar> DualSolution<F> {
    /// Dual objective in maximization form, `sum(a) - 1/2 a^T Q a`.
    pub fn objective(&self) -> F {
        let half = F::lit(0.5);
        self.alpha
            .iter()
            .zip(&self.gradient)
            .map(|(&a, &g)| a * (F::one() - g))
            .sum::<F>()
            * half
    }
}

enum KernelRows<'a, F> {
    Full { matrix: Vec<F>, n: usize },
    OnDemand { x: &'a [Vec<F>], kernel: Kernel<F>, buf: [Vec<F>; 2] },
}

impl<'a, F: Scalar> KernelRows<'a, F> {
    fn new(x: &'a [Vec<F>], kernel: Kernel<F>, cache_rows: usize) -> Self {
        let n = x.len();
        if n <= cache_rows {
            let mut matrix = vec![F::zero(); n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = kernel.eval_unchecked(&x[i], &x[j]);
                    matrix[i * n + j] = v;
                    matrix[j * n + i] = v;
                }
            }
            KernelRows::Full { matrix, n }
        } else {
            KernelRows::OnDemand {
                x,
                kernel,
                buf: [vec![F::zero(); n], vec![F::zero(); n]],
            }
        }
    }

    /// Rows `i` and `j` of the kernel matrix.
    fn pair(&mut self, i: usize, j: usize) -> (&[F], &[F]) {
        match self {
            KernelRows::Full { matrix, n } => {
                let n = *n;
                (&matrix[i * n..(i + 1) * n], &matrix[j * n..(j + 1) * n])
            }
            KernelRows::OnDemand { x, kernel, buf } => {
                let [bi, bj] = buf;
                for (k, xk) in x.iter().enumerate() {
                    bi[k] = kernel.eval_unchecked(&x[i], xk);
                    bj[k] = kernel.eval_unchecked(&x[j], xk);
                }
                (bi.as_slice(), bj.as_slice())
            }
        }
    }
}

/// Solves the dual for inputs `x`, targets `y` in `{-1, +1}` and
/// per-variable upper bounds `upper`.
pub fn solve<F: Scalar>(
    x: &[Vec<F>],
    y: &[i8],
    upper: &[F],
    kernel: Kernel<F>,
    opts: &SolverOptions<F>,
) -> Result<DualSolution<F>> {
    let n = x.len();
    if y.len() != n || upper.len() != n {
        return Err(Error::Training(format!(
            "inconsistent problem: {n} inputs, {} targets, {} bounds",
            y.len(),
            upper.len()
        )));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::Training("both classes must be present".into()));
    }
    if y.iter().any(|&t| t != 1 && t != -1) {
        return Err(Error::Training("targets must be +1 or -1".into()));
    }
    if upper.iter().any(|&u| !(u > F::zero()) || !u.is_finite()) {
        return Err(Error::Training("upper bounds must be positive and finite".into()));
    }

    let diag: Vec<F> = x.iter().map(|xi| kernel.eval_unchecked(xi, xi)).collect();
    let mut rows = KernelRows::new(x, kernel, opts.cache_rows);
    let sign = |t: i8| if t > 0 { F::one() } else { -F::one() };
    let ys: Vec<F> = y.iter().map(|&t| sign(t)).collect();

    let mut alpha = vec![F::zero(); n];
    let mut grad = vec![-F::one(); n];
    let tau = F::lit(TAU);

    let mut iterations = 0usize;
    let mut stalled = 0usize;
    let mut violation;
    let converged;
    loop {
        let (sel, gap) = select_pair(&alpha, &grad, &ys, upper, &diag, &mut rows, tau);
        violation = gap;
        let Some((i, j)) = sel.filter(|_| gap >= opts.tol) else {
            converged = true;
            break;
        };
        if iterations >= opts.max_iter || stalled >= opts.stall_limit {
            converged = false;
            break;
        }
        iterations += 1;

        let (ki, kj) = rows.pair(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (upper[i], upper[j]);
        let kij = ki[j];
        let mut quad = diag[i] + diag[j] - kij - kij;
        if quad <= F::zero() {
            quad = tau;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if ys[i] != ys[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > F::zero() {
                if aj < F::zero() {
                    aj = F::zero();
                    ai = diff;
                }
            } else if ai < F::zero() {
                ai = F::zero();
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < F::zero() {
                aj = F::zero();
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < F::zero() {
                ai = F::zero();
                aj = sum;
            }
        }
        ai = ai.max(F::zero()).min(ci);
        aj = aj.max(F::zero()).min(cj);
        alpha[i] = ai;
        alpha[j] = aj;

        let di = (ai - old_i) * ys[i];
        let dj = (aj - old_j) * ys[j];
        if di == F::zero() && dj == F::zero() {
            stalled += 1;
            continue;
        }
        stalled = 0;
        for k in 0..n {
            grad[k] += ys[k] * (ki[k] * di + kj[k] * dj);
        }
    }

    let bias = compute_bias(&alpha, &grad, &ys, upper);
    Ok(DualSolution {
        alpha,
        bias,
        gradient: grad,
        iterations,
        violation,
        converged,
    })
}

fn in_up<F: Scalar>(a: F, y: F, u: F) -> bool {
    if y > F::zero() {
        a < u
    } else {
        a > F::zero()
    }
}

fn in_low<F: Scalar>(a: F, y: F, u: F) -> bool {
    if y > F::zero() {
        a > F::zero()
    } else {
        a < u
    }
}

/// Second-order working pair and the current maximal violation `m - M`.
fn select_pair<F: Scalar>(
    alpha: &[F],
    grad: &[F],
    ys: &[F],
    upper: &[F],
    diag: &[F],
    rows: &mut KernelRows<'_, F>,
    tau: F,
) -> (Option<(usize, usize)>, F) {
    let n = alpha.len();
    let mut gmax = F::neg_infinity();
    let mut i_sel = None;
    for t in 0..n {
        if in_up(alpha[t], ys[t], upper[t]) {
            let v = -ys[t] * grad[t];
            if v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
    }
    let Some(i) = i_sel else {
        return (None, F::zero());
    };

    let (ki, _) = rows.pair(i, i);
    let mut gmin = F::infinity();
    let mut best = F::infinity();
    let mut j_sel = None;
    for t in 0..n {
        if !in_low(alpha[t], ys[t], upper[t]) {
            continue;
        }
        let v = -ys[t] * grad[t];
        if v < gmin {
            gmin = v;
        }
        let b = gmax - v;
        if b > F::zero() {
            let mut a = diag[i] + diag[t] - ki[t] - ki[t];
            if a <= F::zero() {
                a = tau;
            }
            let score = -(b * b) / a;
            if score <= best {
                best = score;
                j_sel = Some(t);
            }
        }
    }
    let gap = if gmin.is_finite() { gmax - gmin } else { F::zero() };
    (j_sel.map(|j| (i, j)), gap)
}

/// Average over free variables of `-y_i G_i`, or the midpoint of the
/// feasible interval when every variable sits at a bound.
fn compute_bias<F: Scalar>(alpha: &[F], grad: &[F], ys: &[F], upper: &[F]) -> F {
    let mut ub = F::infinity();
    let mut lb = F::neg_infinity();
    let mut sum = F::zero();
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = ys[t] * grad[t];
        if alpha[t] >= upper[t] {
            if ys[t] < F::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= F::zero() {
            if ys[t] > F::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 {
        sum / F::count(free)
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) * F::lit(0.5)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    -rho
}
