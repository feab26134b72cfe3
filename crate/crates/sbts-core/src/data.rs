//! Shared data model: time grids, observation panels, run configuration.

use ndarray::{Array3, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SbtsError};

/// Discrete observation times plus the Euler sub-step count used between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    substeps_per_interval: usize,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, substeps_per_interval: usize) -> Result<Self> {
        if times.len() < 2 {
            return Err(SbtsError::InvalidConfig(
                "grid needs at least two times".into(),
            ));
        }
        if substeps_per_interval == 0 {
            return Err(SbtsError::InvalidConfig(
                "substeps_per_interval must be >= 1".into(),
            ));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(SbtsError::NonIncreasingGrid(i + 1));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(SbtsError::InvalidConfig("non-finite grid time".into()));
        }
        Ok(Self {
            times,
            substeps_per_interval,
        })
    }

    /// Uniform grid t, t+dt, ..., with `n` points starting at `t0`.
    pub fn uniform(t0: f64, dt: f64, n: usize, substeps_per_interval: usize) -> Result<Self> {
        let times = (0..n).map(|i| t0 + dt * i as f64).collect();
        Self::new(times, substeps_per_interval)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn substeps(&self) -> usize {
        self.substeps_per_interval
    }

    pub fn is_uniform(&self, tol: f64) -> bool {
        let dt = self.times[1] - self.times[0];
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= tol * dt.abs())
    }

    /// Keep the first `n` times (shared sub-stepping).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.times[..n].to_vec(), self.substeps_per_interval)
    }
}

/// M samples of a d-dimensional series observed on a common grid.
/// Data is sample-major: `data[[m, i, f]]` is sample m, grid time i, feature f.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub data: Array3<f64>,
    pub grid: TimeGrid,
}

impl Panel {
    pub fn new(data: Array3<f64>, grid: TimeGrid) -> Result<Self> {
        let panel = Self { data, grid };
        validate_panel(&panel)?;
        Ok(panel)
    }

    pub fn num_samples(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn num_times(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn num_features(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn sample(&self, m: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), m)
    }

    pub fn value(&self, m: usize, i: usize) -> ArrayView1<'_, f64> {
        self.data.slice(ndarray::s![m, i, ..])
    }

    /// SHA-256 over grid times and raw data bits; used for provenance.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.grid.times() {
            hasher.update(t.to_le_bytes());
        }
        for v in self.data.iter() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Checks every Panel invariant, returning the first violation found.
pub fn validate_panel(panel: &Panel) -> Result<()> {
    let shape = panel.data.shape();
    let (m, n, d) = (shape[0], shape[1], shape[2]);
    if m < 1 || d < 1 {
        return Err(SbtsError::InvalidPanel(format!(
            "need at least one sample and one feature, got M={m}, d={d}"
        )));
    }
    if n != panel.grid.len() {
        return Err(SbtsError::InvalidPanel(format!(
            "panel has {n} time columns but grid has {} times",
            panel.grid.len()
        )));
    }
    for ((mi, ti, fi), v) in panel.data.indexed_iter() {
        if !v.is_finite() {
            return Err(SbtsError::NonFiniteEntry {
                sample: mi,
                t_index: ti,
                feature: fi,
            });
        }
    }
    Ok(())
}

/// Markov order of the conditioning kernel window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovOrder {
    Order(usize),
    Full,
}

impl MarkovOrder {
    /// Effective window size at interval index i (1-based, window over the last
    /// min(k, i) recorded grid points).
    pub fn window(&self, i: usize) -> usize {
        match self {
            MarkovOrder::Order(k) => (*k).min(i),
            MarkovOrder::Full => i,
        }
    }
}

/// Drift estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    /// Per-feature kernel bandwidths.
    pub bandwidths: Vec<f64>,
    pub markov_order: MarkovOrder,
    /// Total stabilized weight mass below this counts as zero.
    pub weight_floor: f64,
}

impl DriftConfig {
    pub fn new(bandwidths: Vec<f64>, markov_order: MarkovOrder) -> Result<Self> {
        let cfg = Self {
            bandwidths,
            markov_order,
            weight_floor: 1e-300,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scalar bandwidth applied to every feature.
    pub fn uniform(h: f64, d: usize, markov_order: MarkovOrder) -> Result<Self> {
        Self::new(vec![h; d], markov_order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(SbtsError::InvalidConfig("empty bandwidth vector".into()));
        }
        if self.bandwidths.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(SbtsError::InvalidConfig(
                "bandwidths must be positive and finite".into(),
            ));
        }
        if !(self.weight_floor > 0.0) {
            return Err(SbtsError::InvalidConfig(
                "weight_floor must be positive".into(),
            ));
        }
        if let MarkovOrder::Order(0) = self.markov_order {
            return Err(SbtsError::InvalidConfig("markov order must be >= 1".into()));
        }
        Ok(())
    }

    /// Copy with every bandwidth multiplied by `factor` (fallback ladder).
    pub fn scaled_bandwidths(&self, factor: f64) -> Self {
        let mut cfg = self.clone();
        for h in &mut cfg.bandwidths {
            *h *= factor;
        }
        cfg
    }
}

/// How generated paths choose their first grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// Start every path at the zero vector.
    Zeros,
    /// Start every path at the given vector.
    Fixed(Vec<f64>),
    /// Resample each path's start from the reference panel's first column.
    /// Approximates bridging from the origin through the first real marginal.
    ResampleFirstColumn,
}

/// Path-generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub num_paths: usize,
    pub seed: u64,
    /// 1 is the model's diffusion; 0 is a deterministic drift-only test mode.
    pub noise_scale: f64,
    pub start: StartPolicy,
}

impl GenerationConfig {
    pub fn new(num_paths: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            num_paths,
            seed,
            noise_scale: 1.0,
            start: StartPolicy::Zeros,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_paths < 1 {
            return Err(SbtsError::InvalidConfig("num_paths must be >= 1".into()));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(SbtsError::InvalidConfig(
                "noise_scale must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn with_noise_scale(mut self, s: f64) -> Self {
        self.noise_scale = s;
        self
    }

    pub fn with_start(mut self, start: StartPolicy) -> Self {
        self.start = start;
        self
    }
}

/// CSV round trip for panels. Long form: `sample,t_index,f0,...,f{d-1}`,
/// rows sorted by (sample, t_index). Grid times travel in run config.
pub fn write_panel_csv<W: std::io::Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = panel.num_features();
    let mut header = vec!["sample".to_string(), "t_index".to_string()];
    header.extend((0..d).map(|f| format!("f{f}")));
    w.write_record(&header)?;
    for m in 0..panel.num_samples() {
        for i in 0..panel.num_times() {
            let mut rec = vec![m.to_string(), i.to_string()];
            rec.extend((0..d).map(|f| format!("{}", panel.data[[m, i, f]])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: std::io::Read>(reader: R, grid: TimeGrid) -> Result<Panel> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "sample" || &headers[1] != "t_index" {
        return Err(SbtsError::InvalidPanel(
            "expected header sample,t_index,f0,...".into(),
        ));
    }
    let d = headers.len() - 2;
    let n = grid.len();
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let m: usize = rec[0]
            .parse()
            .map_err(|_| SbtsError::InvalidPanel(format!("bad sample id {:?}", &rec[0])))?;
        let i: usize = rec[1]
            .parse()
            .map_err(|_| SbtsError::InvalidPanel(format!("bad t_index {:?}", &rec[1])))?;
        let vals: Vec<f64> = (0..d)
            .map(|f| {
                rec[2 + f]
                    .parse()
                    .map_err(|_| SbtsError::InvalidPanel(format!("bad value {:?}", &rec[2 + f])))
            })
            .collect::<Result<_>>()?;
        rows.push((m, i, vals));
    }
    if rows.is_empty() {
        return Err(SbtsError::InvalidPanel("empty panel CSV".into()));
    }
    let num_samples = rows.iter().map(|(m, _, _)| m + 1).max().unwrap();
    if rows.len() != num_samples * n {
        return Err(SbtsError::InvalidPanel(format!(
            "expected {} rows for {} samples x {} times, got {}",
            num_samples * n,
            num_samples,
            n,
            rows.len()
        )));
    }
    let mut data = Array3::from_elem((num_samples, n, d), f64::NAN);
    for (m, i, vals) in rows {
        if i >= n {
            return Err(SbtsError::InvalidPanel(format!(
                "t_index {i} out of range for grid of length {n}"
            )));
        }
        for (f, v) in vals.into_iter().enumerate() {
            data[[m, i, f]] = v;
        }
    }
    Panel::new(data, grid)
}
