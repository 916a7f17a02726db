//! Synthetic multivariate time series with rare strong events and
//! sliding-window slicing.
//!
//! Every event owns one "mother" series per parameter:
//!
//! ```text
//! z_t = delta * s(class) * amplitude(partition) * loading(param) + a_t + b_t
//! a_t = r * a_{t-1} + sqrt(1 - r^2) * e_t,   r = phi^(1 / stride)
//! e_t ~ N(0, (sigma * (1 + variance_signal * s(class)))^2)
//! b_t = b_{t-steps}                                              with prob. phi
//!     = shape_noise * sigma * (sqrt(1 - w) * g_t + sqrt(w) * (x_t - 1))  otherwise
//! ```
//!
//! with `g_t ~ N(0, 1)`, `x_t ~ Exp(1)` and `w = s(class) / max(s)`, reported
//! in raw units as `offset(param) + scale(param) * z_t`.
//!
//! `a` is stationary with the scale of `e`, and `phi` is its correlation
//! across one stride, i.e. between the same step of consecutive slices. `b`
//! has fixed variance and a skewness and kurtosis that grow with class
//! strength. Its values are independent inside any one window, and with
//! probability `phi` repeat the value one window length earlier, so
//! non-overlapping consecutive windows correlate at `phi` in both parts. The event's `k` slices are windows of the mother series
//! at offsets `j * stride`, so neighbouring slices share `steps - stride`
//! raw values and are further tied together through `phi`. Partitions hold
//! independent events and differ through their amplitude multiplier.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;
use crate::types::{ClassCounts, Dataset, FlareClass, MvtsSlice};

/// Fraction of cells the command-line generator masks as missing.
pub const DEFAULT_MISSING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub n_partitions: usize,
    /// Events per flare class in every partition.
    pub events_per_class: ClassCounts,
    pub n_params: usize,
    pub steps_per_slice: usize,
    pub slices_per_event: usize,
    /// Window hop; `steps_per_slice / 8` when `None`.
    pub stride: Option<usize>,
    /// Correlation of the event noise between consecutive slices, in `[0, 1)`.
    pub phi: f64,
    /// Class signal strengths in canonical order X, M, C, B, N.
    pub class_strength: [f64; 5],
    pub delta: f64,
    pub sigma: f64,
    /// Growth of the noise scale with class strength; 0 keeps the signal in
    /// the level only.
    pub variance_signal: f64,
    /// One multiplier per partition, cycled if shorter than `n_partitions`.
    pub amplitude: Vec<f64>,
    /// Scale of the observation noise, in units of `sigma`. Its shape
    /// moves from Gaussian (weakest class) to centred exponential
    /// (strongest class) at constant variance.
    pub shape_noise: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_partitions: 5,
            events_per_class: ClassCounts::new(4, 16, 80, 120, 180),
            n_params: 24,
            steps_per_slice: 60,
            slices_per_event: 8,
            stride: None,
            phi: 0.9,
            class_strength: [4.0, 3.0, 2.0, 1.0, 0.0],
            delta: 0.5,
            sigma: 1.0,
            variance_signal: 0.4,
            amplitude: vec![1.0, 1.3, 0.7, 0.5, 0.9],
            shape_noise: 2.0,
        }
    }
}

impl GenConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.steps_per_slice / 8)
    }

    /// Length of each event's mother series.
    pub fn mother_len(&self) -> usize {
        self.steps_per_slice + (self.slices_per_event - 1) * self.stride()
    }

    pub fn amplitude_of(&self, partition_id: u32) -> f64 {
        self.amplitude[(partition_id as usize - 1) % self.amplitude.len()]
    }

    pub fn param_names(&self) -> Vec<String> {
        (1..=self.n_params).map(|j| format!("P{j:02}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.stride() == 0 {
            return fail("stride must be at least 1");
        }
        if self.n_partitions == 0 || self.n_params == 0 || self.steps_per_slice == 0 {
            return fail("partitions, parameters and steps must be positive");
        }
        if self.slices_per_event == 0 {
            return fail("slices_per_event must be positive");
        }
        if !(0.0..1.0).contains(&self.phi) {
            return fail("phi must lie in [0, 1)");
        }
        if !(self.sigma > 0.0) || !self.delta.is_finite() || !(self.variance_signal >= 0.0) {
            return fail("sigma must be positive, delta finite, variance_signal non-negative");
        }
        if self.amplitude.is_empty() || self.amplitude.iter().any(|a| !a.is_finite()) {
            return fail("amplitude multipliers must be finite and non-empty");
        }
        if !(self.shape_noise >= 0.0) || !self.shape_noise.is_finite() {
            return fail("shape_noise must be finite and non-negative");
        }
        if self.class_strength.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return fail("class strengths must be finite and non-negative");
        }
        if self.events_per_class.total() == 0 {
            return fail("no events configured");
        }
        Ok(())
    }
}

/// Raw-unit offset and scale of one parameter, plus its signal loading.
#[derive(Debug, Clone, Copy)]
struct ParamUnits {
    offset: f64,
    scale: f64,
    loading: f64,
}

fn param_units(cfg: &GenConfig) -> Vec<ParamUnits> {
    let mut rng = rng_for(cfg.seed, &[0xFEED]);
    (0..cfg.n_params)
        .map(|_| ParamUnits {
            offset: rng.random_range(-50.0..50.0),
            scale: 10f64.powf(rng.random_range(-1.0..2.0)),
            loading: rng.random_range(0.6..1.4),
        })
        .collect()
}

/// Mother series of one event, `mother_len x n_params` row-major, raw units.
fn mother_series<R: Rng>(
    cfg: &GenConfig,
    units: &[ParamUnits],
    class: FlareClass,
    amplitude: f64,
    rng: &mut R,
) -> Vec<f64> {
    let len = cfg.mother_len();
    let strength = cfg.class_strength[class.index()];
    let scale = cfg.sigma * (1.0 + cfg.variance_signal * strength);
    let r = cfg.phi.powf(1.0 / cfg.stride() as f64);
    let eps = Normal::new(0.0, scale * (1.0 - r * r).sqrt()).expect("valid innovation scale");
    let start = Normal::new(0.0, scale).expect("positive noise scale");
    let max_strength = cfg.class_strength.iter().copied().fold(0.0, f64::max);
    let w = if max_strength > 0.0 { strength / max_strength } else { 0.0 };
    let (gauss_w, exp_w) = ((1.0 - w).sqrt(), w.sqrt());
    let shape = cfg.shape_noise * cfg.sigma;
    let steps = cfg.steps_per_slice;

    let mut out = vec![0.0; len * cfg.n_params];
    let mut b = vec![0.0; len];
    for (j, u) in units.iter().enumerate() {
        let level = cfg.delta * strength * amplitude * u.loading;
        let mut a = start.sample(rng);
        for t in 0..len {
            if t > 0 {
                a = r * a + eps.sample(rng);
            }
            let repeat = rng.random::<f64>() < cfg.phi;
            let g: f64 = StandardNormal.sample(rng);
            let x: f64 = Exp1.sample(rng);
            b[t] = if t >= steps && repeat {
                b[t - steps]
            } else {
                shape * (gauss_w * g + exp_w * (x - 1.0))
            };
            out[t * cfg.n_params + j] = u.offset + u.scale * (level + a + b[t]);
        }
    }
    out
}

/// Generates every partition. Deterministic in `cfg.seed`.
pub fn generate<F: Scalar>(cfg: &GenConfig) -> Result<Dataset<F>> {
    cfg.validate()?;
    let units = param_units(cfg);
    let (steps, n_params, stride) = (cfg.steps_per_slice, cfg.n_params, cfg.stride());

    let mut jobs = Vec::new();
    for p in 1..=cfg.n_partitions as u32 {
        let mut idx = 0usize;
        for (class, n) in cfg.events_per_class.iter() {
            for _ in 0..n {
                jobs.push((p, idx, class));
                idx += 1;
            }
        }
    }

    let events: Vec<(u32, Vec<MvtsSlice<F>>)> = jobs
        .par_iter()
        .map(|&(p, idx, class)| {
            let mut rng = rng_for(cfg.seed, &[u64::from(p), idx as u64]);
            let mother = mother_series(cfg, &units, class, cfg.amplitude_of(p), &mut rng);
            let event_id = format!("p{p}e{idx:05}");
            let slices = (0..cfg.slices_per_event)
                .map(|k| {
                    let start = k * stride * n_params;
                    let values = mother[start..start + steps * n_params]
                        .iter()
                        .map(|&v| F::lit(v))
                        .collect();
                    MvtsSlice::new(
                        event_id.clone(),
                        p,
                        k,
                        class,
                        steps,
                        n_params,
                        values,
                        vec![false; steps * n_params],
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((p, slices))
        })
        .collect::<Result<_>>()?;

    let mut partitions: Vec<(u32, Vec<MvtsSlice<F>>)> =
        (1..=cfg.n_partitions as u32).map(|p| (p, Vec::new())).collect();
    for (p, slices) in events {
        partitions[p as usize - 1].1.extend(slices);
    }
    Ok(Dataset {
        param_names: cfg.param_names(),
        steps_per_slice: steps,
        partitions,
    })
}

/// Marks each cell missing with probability `rate`, never masking every
/// cell of one (slice, parameter) series.
pub fn inject_missing<F: Scalar>(dataset: &mut Dataset<F>, rate: f64, seed: u64) -> Result<usize> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("missing rate {rate} outside [0, 1)")));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let mut total = 0;
    for (p, slices) in dataset.partitions.iter_mut() {
        let mut rng = rng_for(seed, &[0x5EED, u64::from(*p)]);
        for s in slices.iter_mut() {
            for j in 0..s.n_params {
                let mut masked = Vec::new();
                for t in 0..s.steps {
                    if rng.random_bool(rate) && !s.is_missing(t, j) {
                        masked.push(t);
                    }
                }
                let already = (0..s.steps).filter(|&t| s.is_missing(t, j)).count();
                if already + masked.len() >= s.steps {
                    masked.pop();
                }
                for t in masked {
                    // a masked cell carries no value; zero keeps files and
                    // in-memory slices in agreement
                    s.missing[t * s.n_params + j] = true;
                    s.values[t * s.n_params + j] = F::zero();
                    total += 1;
                }
            }
        }
    }
    Ok(total)
}
