//! Joint bandwidth / Markov-order selection by grid search on the conditional
//! terminal mean-squared error: for each test series the generator is run over
//! the last interval conditioned on the real prefix, and the L-realization
//! terminal mean is compared against the held-out real terminal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DriftConfig, MarkovOrder, Panel};
use crate::error::{Result, SbtsError};
use crate::rng::derive;
use crate::sampler::generate_conditional_terminals;

/// A candidate bandwidth: one scalar shared by all features, or one value per
/// feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthCandidate {
    Scalar(f64),
    PerFeature(Vec<f64>),
}

impl BandwidthCandidate {
    pub fn resolve(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            BandwidthCandidate::Scalar(h) => Ok(vec![*h; d]),
            BandwidthCandidate::PerFeature(hs) => {
                if hs.len() != d {
                    return Err(SbtsError::InvalidConfig(format!(
                        "bandwidth candidate has {} entries for {} features",
                        hs.len(),
                        d
                    )));
                }
                Ok(hs.clone())
            }
        }
    }

    /// Representative magnitude used only for tie-breaking and display.
    pub fn magnitude(&self) -> f64 {
        match self {
            BandwidthCandidate::Scalar(h) => *h,
            BandwidthCandidate::PerFeature(hs) => {
                hs.iter().sum::<f64>() / hs.len().max(1) as f64
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub bandwidth_grid: Vec<BandwidthCandidate>,
    pub order_grid: Vec<MarkovOrder>,
    /// L: realizations averaged per test series and grid cell.
    pub realizations_per_test: usize,
    pub seed: u64,
    /// Diffusion multiplier passed through to the conditional generator;
    /// 1 for normal operation, 0 for deterministic diagnostics.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_noise_scale() -> f64 {
    1.0
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_grid.is_empty() || self.order_grid.is_empty() {
            return Err(SbtsError::InvalidConfig(
                "selection grids must be non-empty".into(),
            ));
        }
        for cand in &self.bandwidth_grid {
            let hs = match cand {
                BandwidthCandidate::Scalar(h) => std::slice::from_ref(h),
                BandwidthCandidate::PerFeature(hs) => hs.as_slice(),
            };
            if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0)) {
                return Err(SbtsError::InvalidConfig(
                    "bandwidth candidates must be positive".into(),
                ));
            }
        }
        if self.realizations_per_test == 0 {
            return Err(SbtsError::InvalidConfig(
                "realizations_per_test must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionCell {
    pub bandwidth: BandwidthCandidate,
    pub order: MarkovOrder,
    pub mse: f64,
    /// Fraction of conditional realizations that needed the fallback ladder.
    pub fallback_rate: f64,
    /// Fallback rate above one half: the kernel support barely covers the test
    /// prefixes and the cell's MSE is not trustworthy.
    pub unreliable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub cells: Vec<SelectionCell>,
    pub chosen_bandwidth: BandwidthCandidate,
    pub chosen_order: MarkovOrder,
    pub chosen_mse: f64,
}

fn order_rank(k: &MarkovOrder) -> usize {
    match k {
        MarkovOrder::Order(k) => *k,
        MarkovOrder::Full => usize::MAX,
    }
}

/// Grid-search (h, k) on the product grid. `train` supplies the reference
/// panel the generator conditions on; each series of `test` contributes one
/// squared terminal error.
pub fn select(train: &Panel, test: &Panel, cfg: &SelectionConfig) -> Result<SelectionReport> {
    cfg.validate()?;
    if train.grid.times() != test.grid.times() {
        return Err(SbtsError::InvalidConfig(
            "train and test panels must share the time grid".into(),
        ));
    }
    let d = train.num_features();
    if test.num_features() != d {
        return Err(SbtsError::ShapeMismatch(format!(
            "train has {} features, test has {}",
            d,
            test.num_features()
        )));
    }
    let n = train.num_times();
    let q_count = test.num_samples();
    let l = cfg.realizations_per_test;

    let jobs: Vec<(usize, usize)> = (0..cfg.bandwidth_grid.len())
        .flat_map(|hi| (0..cfg.order_grid.len()).map(move |ki| (hi, ki)))
        .collect();

    let cells: Result<Vec<SelectionCell>> = jobs
        .into_par_iter()
        .map(|(hi, ki)| {
            let bandwidth = cfg.bandwidth_grid[hi].clone();
            let order = cfg.order_grid[ki];
            let drift_cfg = DriftConfig::new(bandwidth.resolve(d)?, order)?;
            let mut sum_sq = 0.0;
            let mut fallbacks = 0usize;
            for q in 0..q_count {
                let prefix = test.data.slice(ndarray::s![q, ..n - 1, ..]);
                let cell_seed = derive(cfg.seed, &[hi as u64, ki as u64, q as u64]);
                let (terminals, fb) =
                    generate_conditional_terminals(
                        prefix,
                        train,
                        &drift_cfg,
                        l,
                        cell_seed,
                        cfg.noise_scale,
                    )?;
                fallbacks += fb;
                for f in 0..d {
                    let mean = terminals.column(f).sum() / l as f64;
                    let err = mean - test.data[[q, n - 1, f]];
                    sum_sq += err * err;
                }
            }
            let mse = sum_sq / q_count as f64;
            let fallback_rate = fallbacks as f64 / (q_count * l) as f64;
            Ok(SelectionCell {
                bandwidth,
                order,
                mse,
                fallback_rate,
                unreliable: fallback_rate > 0.5,
            })
        })
        .collect();
    let cells = cells?;

    // argmin with ties broken by smaller h, then smaller k
    let mut best = 0;
    for i in 1..cells.len() {
        let (a, b) = (&cells[i], &cells[best]);
        let better = a.mse < b.mse
            || (a.mse == b.mse
                && (a.bandwidth.magnitude() < b.bandwidth.magnitude()
                    || (a.bandwidth.magnitude() == b.bandwidth.magnitude()
                        && order_rank(&a.order) < order_rank(&b.order))));
        if better {
            best = i;
        }
    }
    let chosen = &cells[best];
    Ok(SelectionReport {
        chosen_bandwidth: chosen.bandwidth.clone(),
        chosen_order: chosen.order,
        chosen_mse: chosen.mse,
        cells,
    })
}

/// Full table as CSV: `h,k,mse,fallback_rate`.
pub fn write_selection_csv<W: std::io::Write>(report: &SelectionReport, w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["h", "k", "mse", "fallback_rate"])?;
    for cell in &report.cells {
        let h = match &cell.bandwidth {
            BandwidthCandidate::Scalar(h) => format!("{h}"),
            BandwidthCandidate::PerFeature(hs) => hs
                .iter()
                .map(|h| format!("{h}"))
                .collect::<Vec<_>>()
                .join("|"),
        };
        let k = match cell.order {
            MarkovOrder::Order(k) => format!("{k}"),
            MarkovOrder::Full => "full".to_string(),
        };
        writer.write_record([h, k, format!("{}", cell.mse), format!("{}", cell.fallback_rate)])?;
    }
    writer.flush()?;
    Ok(())
}
