//! Invertible per-feature data transforms: log-returns with variance
//! rescaling to the model's sqrt(dt) increment scale, standardization,
//! min-max, and base-one reconstruction.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::data::{Panel, TimeGrid};
use crate::error::{Result, SbtsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScalingTransform {
    Identity,
    /// Returns scaled per feature by sqrt(dt) / sigma, where sigma is the
    /// pooled (samples x times) empirical std of the returns.
    LogReturnRescale { sigmas: Vec<f64>, dt: f64 },
    Standardize { means: Vec<f64>, stds: Vec<f64> },
    MinMax { mins: Vec<f64>, maxs: Vec<f64> },
}

impl ScalingTransform {
    pub fn num_features(&self) -> Option<usize> {
        match self {
            ScalingTransform::Identity => None,
            ScalingTransform::LogReturnRescale { sigmas, .. } => Some(sigmas.len()),
            ScalingTransform::Standardize { means, .. } => Some(means.len()),
            ScalingTransform::MinMax { mins, .. } => Some(mins.len()),
        }
    }

    fn check_features(&self, d: usize) -> Result<()> {
        if let Some(td) = self.num_features() {
            if td != d {
                return Err(SbtsError::ShapeMismatch(format!(
                    "transform has {td} features, panel has {d}"
                )));
            }
        }
        Ok(())
    }

    /// Inverse map applied entrywise per feature.
    pub fn invert(&self, panel: &Panel) -> Result<Panel> {
        let d = panel.num_features();
        self.check_features(d)?;
        let data = match self {
            ScalingTransform::Identity => panel.data.clone(),
            ScalingTransform::LogReturnRescale { sigmas, dt } => {
                let root_dt = dt.sqrt();
                map_per_feature(&panel.data, |f, v| v * sigmas[f] / root_dt)
            }
            ScalingTransform::Standardize { means, stds } => {
                map_per_feature(&panel.data, |f, v| v * stds[f] + means[f])
            }
            ScalingTransform::MinMax { mins, maxs } => {
                map_per_feature(&panel.data, |f, v| v * (maxs[f] - mins[f]) + mins[f])
            }
        };
        Panel::new(data, panel.grid.clone())
    }

    /// Forward map (same statistics, no re-estimation).
    pub fn apply(&self, panel: &Panel) -> Result<Panel> {
        let d = panel.num_features();
        self.check_features(d)?;
        let data = match self {
            ScalingTransform::Identity => panel.data.clone(),
            ScalingTransform::LogReturnRescale { sigmas, dt } => {
                let root_dt = dt.sqrt();
                map_per_feature(&panel.data, |f, v| v * root_dt / sigmas[f])
            }
            ScalingTransform::Standardize { means, stds } => {
                map_per_feature(&panel.data, |f, v| (v - means[f]) / stds[f])
            }
            ScalingTransform::MinMax { mins, maxs } => {
                map_per_feature(&panel.data, |f, v| (v - mins[f]) / (maxs[f] - mins[f]))
            }
        };
        Panel::new(data, panel.grid.clone())
    }
}

fn map_per_feature<F: Fn(usize, f64) -> f64>(data: &Array3<f64>, f: F) -> Array3<f64> {
    let mut out = data.clone();
    for ((_, _, fi), v) in out.indexed_iter_mut() {
        *v = f(fi, *v);
    }
    out
}

/// Per-feature pooled mean and unbiased std over all samples and times.
fn pooled_stats(panel: &Panel) -> (Vec<f64>, Vec<f64>) {
    let (m, n, d) = (
        panel.num_samples(),
        panel.num_times(),
        panel.num_features(),
    );
    let count = (m * n) as f64;
    let mut means = vec![0.0; d];
    for ((_, _, f), v) in panel.data.indexed_iter() {
        means[f] += v;
    }
    for mu in &mut means {
        *mu /= count;
    }
    let mut vars = vec![0.0; d];
    for ((_, _, f), v) in panel.data.indexed_iter() {
        let r = v - means[f];
        vars[f] += r * r;
    }
    let stds = vars.iter().map(|v| (v / (count - 1.0)).sqrt()).collect();
    (means, stds)
}

/// Log-returns R_j = log(X_{j+1} / X_j) per feature; output grid drops the
/// first time.
pub fn to_log_returns(prices: &Panel) -> Result<Panel> {
    for ((m, i, f), v) in prices.data.indexed_iter() {
        if !(*v > 0.0) {
            return Err(SbtsError::Domain(format!(
                "nonpositive price at sample {m}, time index {i}, feature {f}: {v}"
            )));
        }
    }
    let (m, n, d) = (
        prices.num_samples(),
        prices.num_times(),
        prices.num_features(),
    );
    if n < 2 {
        return Err(SbtsError::InvalidPanel("need at least 2 times".into()));
    }
    let data = Array3::from_shape_fn((m, n - 1, d), |(mm, i, f)| {
        (prices.data[[mm, i + 1, f]] / prices.data[[mm, i, f]]).ln()
    });
    let grid = TimeGrid::new(
        prices.grid.times()[1..].to_vec(),
        prices.grid.substeps(),
    )?;
    Panel::new(data, grid)
}

/// Scale every feature so its pooled empirical std is exactly sqrt(dt).
pub fn rescale_returns(returns: &Panel, dt: f64) -> Result<(Panel, ScalingTransform)> {
    if !(dt > 0.0) {
        return Err(SbtsError::InvalidConfig("dt must be positive".into()));
    }
    let (_, stds) = pooled_stats(returns);
    for (f, s) in stds.iter().enumerate() {
        if !(*s > 0.0) {
            return Err(SbtsError::DegenerateFeature(f, "zero variance".into()));
        }
    }
    let transform = ScalingTransform::LogReturnRescale { sigmas: stds, dt };
    let scaled = transform.apply(returns)?;
    Ok((scaled, transform))
}

/// Scale level paths so the stochastic part of their one-step increments has
/// std sqrt(dt) per feature: the increment analogue of the return rescale for
/// data that is not a positive price (same linear transform, sigma measured
/// on differences). Keeps bridge weights on the Brownian scale the generator
/// assumes. The per-time cross-sample mean increment is removed before
/// measuring sigma, so a deterministic trend (which the estimated drift
/// reproduces on its own) does not inflate the diffusion scale.
pub fn rescale_increments(panel: &Panel, dt: f64) -> Result<(Panel, ScalingTransform)> {
    if !(dt > 0.0) {
        return Err(SbtsError::InvalidConfig("dt must be positive".into()));
    }
    let (m, n, d) = (panel.num_samples(), panel.num_times(), panel.num_features());
    if n < 2 {
        return Err(SbtsError::InvalidPanel("need at least 2 times".into()));
    }
    if m < 2 {
        return Err(SbtsError::InvalidPanel(
            "need at least 2 samples to separate trend from noise".into(),
        ));
    }
    let mut sigmas = vec![0.0; d];
    for f in 0..d {
        let mut ss = 0.0;
        for i in 0..n - 1 {
            let mut mean = 0.0;
            for mm in 0..m {
                mean += panel.data[[mm, i + 1, f]] - panel.data[[mm, i, f]];
            }
            mean /= m as f64;
            for mm in 0..m {
                let r = panel.data[[mm, i + 1, f]] - panel.data[[mm, i, f]] - mean;
                ss += r * r;
            }
        }
        // one mean per time index: (m - 1)(n - 1) degrees of freedom
        sigmas[f] = (ss / ((m - 1) as f64 * (n - 1) as f64)).sqrt();
        if !(sigmas[f] > 0.0) {
            return Err(SbtsError::DegenerateFeature(
                f,
                "zero increment variance".into(),
            ));
        }
    }
    let transform = ScalingTransform::LogReturnRescale { sigmas, dt };
    let scaled = transform.apply(panel)?;
    Ok((scaled, transform))
}

/// Inverse-rescale the returns, then rebuild price paths by cumulative
/// exponentiation, every feature starting at exactly 1. The output grid has
/// one extra leading time, extrapolated one step back.
pub fn returns_to_base_one(returns: &Panel, transform: &ScalingTransform) -> Result<Panel> {
    let raw = transform.invert(returns)?;
    let (m, n, d) = (raw.num_samples(), raw.num_times(), raw.num_features());
    let mut data = Array3::zeros((m, n + 1, d));
    for mm in 0..m {
        for f in 0..d {
            let mut acc = 0.0;
            data[[mm, 0, f]] = 1.0;
            for i in 0..n {
                acc += raw.data[[mm, i, f]];
                data[[mm, i + 1, f]] = acc.exp();
            }
        }
    }
    let times = raw.grid.times();
    let step = if times.len() >= 2 {
        times[1] - times[0]
    } else if let ScalingTransform::LogReturnRescale { dt, .. } = transform {
        *dt
    } else {
        1.0
    };
    let mut new_times = Vec::with_capacity(n + 1);
    new_times.push(times[0] - step);
    new_times.extend_from_slice(times);
    Panel::new(data, TimeGrid::new(new_times, raw.grid.substeps())?)
}

/// Min-max to [0, 1] per feature, pooled over samples and times.
pub fn min_max(panel: &Panel) -> Result<(Panel, ScalingTransform)> {
    let d = panel.num_features();
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for ((_, _, f), v) in panel.data.indexed_iter() {
        mins[f] = mins[f].min(*v);
        maxs[f] = maxs[f].max(*v);
    }
    for f in 0..d {
        if !(maxs[f] > mins[f]) {
            return Err(SbtsError::DegenerateFeature(f, "constant feature".into()));
        }
    }
    let transform = ScalingTransform::MinMax { mins, maxs };
    let scaled = transform.apply(panel)?;
    Ok((scaled, transform))
}

/// Zero-mean unit-std per feature, pooled over samples and times.
pub fn standardize(panel: &Panel) -> Result<(Panel, ScalingTransform)> {
    let (means, stds) = pooled_stats(panel);
    for (f, s) in stds.iter().enumerate() {
        if !(*s > 0.0) {
            return Err(SbtsError::DegenerateFeature(f, "zero variance".into()));
        }
    }
    let transform = ScalingTransform::Standardize { means, stds };
    let scaled = transform.apply(panel)?;
    Ok((scaled, transform))
}
