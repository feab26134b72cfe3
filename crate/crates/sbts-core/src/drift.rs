//! Kernel-estimated bridge drift.
//!
//! The drift at time t in the grid interval [t_i, t_{i+1}) is a weighted
//! average over reference samples of the remaining displacement to each
//! sample's next grid value, divided by the time to go. Each sample's weight
//! is the product of a bridge factor F (how reachable the sample's next value
//! is from the current state) and a conditioning kernel product over the last
//! k recorded grid values. Everything is combined in log space.

use ndarray::ArrayView2;

use crate::data::{DriftConfig, Panel};
use crate::error::{Result, SbtsError};

/// Product-form quartic kernel with per-feature bandwidths:
/// prod_k (1/h_k) (1 - (u_k/h_k)^2)^2 on |u_k| < h_k, else 0.
pub fn quartic_kernel(u: &[f64], h: &[f64]) -> Result<f64> {
    if u.len() != h.len() {
        return Err(SbtsError::ShapeMismatch(format!(
            "kernel argument has {} features, bandwidths {}",
            u.len(),
            h.len()
        )));
    }
    let mut out = 1.0;
    for (uk, hk) in u.iter().zip(h) {
        if !(*hk > 0.0) {
            return Err(SbtsError::InvalidConfig(
                "nonpositive kernel bandwidth".into(),
            ));
        }
        let r = uk / hk;
        if r.abs() >= 1.0 {
            return Ok(0.0);
        }
        let w = 1.0 - r * r;
        out *= w * w / hk;
    }
    Ok(out)
}

/// log F_i for the bridge weight
/// F_i = exp{ -||x_next_ref - x||^2 / (2 (t_next - t))
///            + ||x_next_ref - x_i_ref||^2 / (2 (t_next - t_i)) }.
/// Returns the exponent itself; exponentiation is the caller's business.
pub fn bridge_log_weight(
    t: f64,
    x_i_ref: &[f64],
    x: &[f64],
    x_next_ref: &[f64],
    t_i: f64,
    t_next: f64,
) -> Result<f64> {
    if !(t < t_next) {
        return Err(SbtsError::BridgeSingularity { t, t_next });
    }
    let to_go = sq_dist(x_next_ref, x);
    let full = sq_dist(x_next_ref, x_i_ref);
    Ok(-to_go / (2.0 * (t_next - t)) + full / (2.0 * (t_next - t_i)))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of log kernel factors over the Markov window j in [max(1, i-k+1), i]
/// (1-based grid indices), comparing the generated prefix against reference
/// sample `m` of the panel. -inf if any factor has zero support.
pub fn markov_log_kernel_weight(
    prefix: ArrayView2<'_, f64>,
    reference: &Panel,
    m: usize,
    k: usize,
    h: &[f64],
) -> f64 {
    let i = prefix.nrows();
    let window = k.min(i);
    let d = h.len();
    let mut out = 0.0;
    let sample = reference.sample(m);
    for j in (i - window)..i {
        for f in 0..d {
            let r = (prefix[[j, f]] - sample[[j, f]]) / h[f];
            if r.abs() >= 1.0 {
                return f64::NEG_INFINITY;
            }
            let w = 1.0 - r * r;
            out += (w * w / h[f]).ln();
        }
    }
    out
}

/// A drift evaluation point inside interval i (1-based, i in [1, N-1]):
/// current state `x` at time `t` in [t_i, t_{i+1}), with the generated grid
/// values at t_1..t_i as conditioning prefix.
#[derive(Debug, Clone)]
pub struct DriftQuery<'a> {
    pub interval_index: usize,
    pub t: f64,
    pub x: &'a [f64],
    pub prefix: ArrayView2<'a, f64>,
}

/// Per-interval conditioning state, reusable across sub-steps: the prefix (and
/// hence the kernel product) is fixed inside an interval, only the bridge
/// factor moves with (t, x).
pub struct IntervalWeights {
    /// Reference sample indices with finite conditioning weight.
    pub active: Vec<usize>,
    /// log K~ + ||X_next - X_i||^2 / (2 dt) per active sample.
    base_log: Vec<f64>,
    /// Next grid value per active sample, row-major active x d.
    next_values: Vec<f64>,
    t_i: f64,
    t_next: f64,
    d: usize,
}

impl IntervalWeights {
    /// Precompute conditioning weights for interval `interval_index` given a
    /// prefix of recorded grid values. Returns Err(DegenerateWeights) when no
    /// reference sample has kernel support.
    pub fn prepare(
        prefix: ArrayView2<'_, f64>,
        reference: &Panel,
        cfg: &DriftConfig,
        interval_index: usize,
    ) -> Result<Self> {
        Self::prepare_inner(prefix, reference, cfg, interval_index, true)
    }

    /// Same but with the conditioning kernel disabled (K~ = 1): pure bridge
    /// weighting. Used as the terminal rung of the fallback ladder.
    pub fn prepare_unconditional(
        prefix: ArrayView2<'_, f64>,
        reference: &Panel,
        cfg: &DriftConfig,
        interval_index: usize,
    ) -> Result<Self> {
        Self::prepare_inner(prefix, reference, cfg, interval_index, false)
    }

    fn prepare_inner(
        prefix: ArrayView2<'_, f64>,
        reference: &Panel,
        cfg: &DriftConfig,
        interval_index: usize,
        conditioned: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = reference.num_times();
        let d = reference.num_features();
        if interval_index < 1 || interval_index >= n {
            return Err(SbtsError::InvalidConfig(format!(
                "interval index {interval_index} outside [1, {}]",
                n - 1
            )));
        }
        if prefix.nrows() != interval_index || prefix.ncols() != d {
            return Err(SbtsError::ShapeMismatch(format!(
                "prefix is {}x{}, expected {}x{}",
                prefix.nrows(),
                prefix.ncols(),
                interval_index,
                d
            )));
        }
        let i = interval_index;
        let times = reference.grid.times();
        let (t_i, t_next) = (times[i - 1], times[i]);
        let dt = t_next - t_i;
        let k = cfg.markov_order.window(i);
        let m_total = reference.num_samples();

        let mut active = Vec::new();
        let mut base_log = Vec::new();
        let mut next_values = Vec::new();
        for m in 0..m_total {
            let log_k = if conditioned {
                markov_log_kernel_weight(prefix, reference, m, k, &cfg.bandwidths)
            } else {
                0.0
            };
            if log_k == f64::NEG_INFINITY {
                continue;
            }
            let x_i_ref = reference.value(m, i - 1);
            let x_next_ref = reference.value(m, i);
            let full: f64 = x_i_ref
                .iter()
                .zip(x_next_ref.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            active.push(m);
            base_log.push(log_k + full / (2.0 * dt));
            next_values.extend(x_next_ref.iter().copied());
        }
        if active.is_empty() {
            return Err(SbtsError::DegenerateWeights);
        }
        Ok(Self {
            active,
            base_log,
            next_values,
            t_i,
            t_next,
            d,
        })
    }

    /// Drift at (t, x) inside this interval. Log-sum-exp stabilized; summation
    /// runs in reference index order for reproducibility.
    pub fn drift(&self, t: f64, x: &[f64], weight_floor: f64, out: &mut [f64]) -> Result<()> {
        if !(t < self.t_next) || t < self.t_i {
            return Err(SbtsError::BridgeSingularity {
                t,
                t_next: self.t_next,
            });
        }
        let d = self.d;
        let inv_two_to_go = 1.0 / (2.0 * (self.t_next - t));
        let n_active = self.active.len();

        // Pass 1: log weights and their max.
        let mut log_w = vec![0.0; n_active];
        let mut max_log = f64::NEG_INFINITY;
        for (a, lw) in log_w.iter_mut().enumerate() {
            let row = &self.next_values[a * d..(a + 1) * d];
            let to_go = sq_dist(row, x);
            let l = self.base_log[a] - to_go * inv_two_to_go;
            *lw = l;
            if l > max_log {
                max_log = l;
            }
        }
        if max_log == f64::NEG_INFINITY {
            return Err(SbtsError::DegenerateWeights);
        }

        // Pass 2: stabilized accumulation, fixed order.
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut den = 0.0;
        for a in 0..n_active {
            let w = (log_w[a] - max_log).exp();
            if w == 0.0 {
                continue;
            }
            den += w;
            let row = &self.next_values[a * d..(a + 1) * d];
            for f in 0..d {
                out[f] += w * (row[f] - x[f]);
            }
        }
        if !(den > weight_floor) || !den.is_finite() {
            return Err(SbtsError::DegenerateWeights);
        }
        let inv = 1.0 / ((self.t_next - t) * den);
        for v in out.iter_mut() {
            *v *= inv;
        }
        Ok(())
    }
}

/// One-shot drift evaluation of the kernel estimator: builds the interval
/// weights for the query's prefix and evaluates at (t, x).
pub fn estimate_drift(query: &DriftQuery<'_>, reference: &Panel, cfg: &DriftConfig) -> Result<Vec<f64>> {
    let weights = IntervalWeights::prepare(query.prefix, reference, cfg, query.interval_index)?;
    let mut out = vec![0.0; reference.num_features()];
    weights.drift(query.t, query.x, cfg.weight_floor, &mut out)?;
    Ok(out)
}
